//! `mms`: build spaces, check them, and run experiment suites.

mod config;
mod experiments;
mod report;
mod space;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{Config, ConfigError};
use experiments::{Ctx, REGISTRY};
use mms_core::io::{load_space, save_space};
use mms_core::space::validate_metric;
use mms_core::MmsError;
use rayon::prelude::*;
use report::Report;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mms", version, about = "Calculus, transport and curvature experiments on finite metric measure spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a space and write it to a file.
    Space {
        #[command(subcommand)]
        action: SpaceAction,
    },
    /// Validate a saved object.
    Check {
        #[command(subcommand)]
        what: CheckWhat,
    },
    /// Run one or more experiments.
    Run(RunArgs),
    /// List the available experiments.
    List,
}

#[derive(Subcommand)]
enum SpaceAction {
    Build {
        #[command(flatten)]
        space: SpaceFlags,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `section.key=value`, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CheckWhat {
    /// Metric axioms and positive masses of a space file.
    Metric { path: PathBuf },
}

#[derive(Args, Default)]
struct SpaceFlags {
    /// grid, model, sphere or file.
    #[arg(long)]
    kind: Option<String>,
    /// euclidean, sphere or hyperbolic.
    #[arg(long)]
    model: Option<String>,
    /// Lattice dimensions, e.g. 64x64.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    spacing: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    radius: Option<f64>,
    /// p:<p>, p:inf or poly:(x,y);…
    #[arg(long)]
    norm: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment names; defaults to `experiment` from the config file.
    names: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Defaults to MMS_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifacts go to `<out>/<experiment>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiments run at once.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    space: SpaceFlags,
    #[arg(long = "K", allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long = "N", allow_hyphen_values = true)]
    n: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

/// Exit 2 for anything the user can fix in the configuration.
fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ConfigError>()
            || c.is::<clap::Error>()
            || c.is::<std::io::Error>()
            || matches!(c.downcast_ref::<MmsError>(), Some(MmsError::InvalidInput(_) | MmsError::Domain(_) | MmsError::Parse { .. } | MmsError::Io(_)))
    })
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => {
            Config::parse(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?).with_context(|| format!("in {}", p.display()))?
        }
        None => Config::default(),
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

impl SpaceFlags {
    fn apply(&self, cfg: &mut Config) -> Result<(), ConfigError> {
        let pairs = [
            ("space.kind", self.kind.clone()),
            ("space.model", self.model.clone()),
            ("space.grid", self.grid.clone()),
            ("space.spacing", self.spacing.map(|v| v.to_string())),
            ("space.radius", self.radius.map(|v| v.to_string())),
            ("space.norm", self.norm.clone()),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        Ok(())
    }
}

fn run(args: RunArgs) -> Result<bool> {
    let mut cfg = load_config(args.config.as_deref(), &args.overrides)?;
    args.space.apply(&mut cfg)?;
    let params = [
        ("params.K", args.k.map(|v| v.to_string())),
        ("params.N", args.n.map(|v| v.to_string())),
        ("params.p", args.p.map(|v| v.to_string())),
        ("params.tau", args.tau.map(|v| v.to_string())),
        ("params.steps", args.steps.map(|v| v.to_string())),
        ("params.tol", args.tol.map(|v| v.to_string())),
        ("params.samples", args.samples.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("output.dir", args.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in params {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    if cfg.raw("seed").is_none() {
        if let Ok(env) = std::env::var("MMS_SEED") {
            cfg.set("seed", &env)?;
        }
    }
    let seed = cfg.get::<u64>("seed", "an unsigned integer")?;
    let names = if args.names.is_empty() {
        vec![cfg.raw("experiment").ok_or_else(|| ConfigError::Invalid("no experiment named on the command line or in the config".into()))?.to_string()]
    } else {
        args.names
    };
    let mut chosen = Vec::with_capacity(names.len());
    for name in &names {
        let e = experiments::find(name).ok_or_else(|| ConfigError::UnknownExperiment(name.clone()))?;
        if e.randomized && seed.is_none() {
            return Err(ConfigError::MissingSeed(name.clone()).into());
        }
        chosen.push(e);
    }
    // Where artifacts land is not part of the experiment, so it stays out of the hash.
    let out_root = PathBuf::from(cfg.remove("output.dir").unwrap_or_else(|| "mms-out".into()));
    let jobs = args.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().context("starting the worker pool")?;
    let results: Vec<Result<bool>> = pool.install(|| {
        chosen
            .par_iter()
            .map(|e| {
                let mut local = cfg.clone();
                local.set("experiment", e.name)?;
                let outcome = (e.run)(&Ctx { cfg: &local, seed }).with_context(|| format!("experiment {}", e.name))?;
                let (report, series) = Report::new(e.name, &local, seed, outcome);
                let dir = out_root.join(e.name);
                report.write(&series, &dir)?;
                for a in report.assertions.iter().filter(|a| a.asserted && !a.pass) {
                    eprintln!("{}: assertion failed: {} = {:e} (want {} {:e})", e.name, a.name, a.value, a.relation, a.bound);
                }
                println!("{} {} -> {}", if report.pass { "PASS" } else { "FAIL" }, e.name, dir.display());
                Ok(report.pass)
            })
            .collect()
    });
    let mut all = true;
    for r in results {
        all &= r?;
    }
    Ok(all)
}

fn main_inner(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::List => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            for e in REGISTRY {
                // A closed pipe (`mms list | head`) is not an error.
                if writeln!(out, "{:<14} {}", e.name, e.summary).is_err() {
                    break;
                }
            }
            Ok(true)
        }
        Command::Space { action: SpaceAction::Build { space, config, overrides, out } } => {
            let mut cfg = load_config(config.as_deref(), &overrides)?;
            space.apply(&mut cfg)?;
            let s = space::from_config(&cfg)?;
            save_space(&s, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} points to {}", s.n(), out.display());
            Ok(true)
        }
        Command::Check { what: CheckWhat::Metric { path } } => {
            let s = load_space(&path).with_context(|| format!("loading {}", path.display()))?;
            let r = validate_metric(&s);
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(r.pass)
        }
        Command::Run(args) => run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
