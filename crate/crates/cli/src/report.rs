use anyhow::{Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const TOOL: &str = "mms";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;

/// One named check. Reported-only checks never fail the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub value: f64,
    /// `"<="` or `">="`.
    pub relation: &'static str,
    pub bound: f64,
    pub asserted: bool,
    pub pass: bool,
}

impl Assertion {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Assertion { name: name.into(), value, relation: "<=", bound, asserted: true, pass: value <= bound }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Assertion { name: name.into(), value, relation: ">=", bound, asserted: true, pass: value >= bound }
    }

    pub fn reported(mut self) -> Self {
        self.asserted = false;
        self
    }
}

/// `label, lhs, rhs, slack` row for residuals.csv.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Two-column series for plotdata/<name>.dat.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub columns: [&'static str; 2],
    pub points: Vec<(f64, f64)>,
}

/// What an experiment hands back before it is stamped with provenance.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub assertions: Vec<Assertion>,
    pub residuals: Vec<Residual>,
    pub series: Vec<Series>,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn check(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn residual(&mut self, label: impl Into<String>, lhs: f64, rhs: f64) {
        self.residuals.push(Residual { label: label.into(), lhs, rhs, slack: rhs - lhs });
    }

    pub fn pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass || !a.asserted)
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub pass: bool,
    pub assertions: Vec<Assertion>,
    pub residuals: Vec<Residual>,
    pub plots: Vec<String>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str, config: &crate::config::Config, seed: Option<u64>, outcome: Outcome) -> (Self, Vec<Series>) {
        let report = Report {
            schema_version: SCHEMA_VERSION,
            tool: TOOL,
            version: VERSION,
            experiment: experiment.into(),
            config_hash: config.hash(),
            config: config.entries().clone(),
            seed,
            pass: outcome.pass(),
            assertions: outcome.assertions,
            residuals: outcome.residuals,
            plots: outcome.series.iter().map(|s| format!("plotdata/{}.dat", s.name)).collect(),
            notes: outcome.notes,
        };
        (report, outcome.series)
    }

    /// Writes report.json, residuals.csv and plotdata/*.dat under `dir`.
    pub fn write(&self, series: &[Series], dir: &Path) -> Result<()> {
        let plots = dir.join("plotdata");
        fs::create_dir_all(&plots).with_context(|| format!("creating {}", plots.display()))?;
        let json = serde_json::to_string_pretty(self)? + "\n";
        fs::write(dir.join("report.json"), json).context("writing report.json")?;
        fs::write(dir.join("residuals.csv"), residuals_csv(&self.residuals)).context("writing residuals.csv")?;
        for s in series {
            fs::write(plots.join(format!("{}.dat", s.name)), series_dat(s)).with_context(|| format!("writing plot {}", s.name))?;
        }
        Ok(())
    }
}

pub fn residuals_csv(rows: &[Residual]) -> String {
    let mut out = String::from("label,lhs,rhs,slack\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.17e},{:.17e},{:.17e}", r.label, r.lhs, r.rhs, r.slack);
    }
    out
}

pub fn series_dat(s: &Series) -> String {
    let mut out = format!("# {} {}\n", s.columns[0], s.columns[1]);
    for (x, y) in &s.points {
        let _ = writeln!(out, "{x:.17e} {y:.17e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_checks_do_not_fail_the_outcome() {
        let mut o = Outcome::default();
        o.check(Assertion::at_most("a", 1.0, 2.0));
        o.check(Assertion::at_least("b", -1.0, 0.0).reported());
        assert!(o.pass());
        o.check(Assertion::at_least("c", -1.0, 0.0));
        assert!(!o.pass());
    }

    #[test]
    fn csv_and_dat_are_round_trippable_text() {
        let csv = residuals_csv(&[Residual { label: "t=0.5".into(), lhs: 1.0, rhs: 1.5, slack: 0.5 }]);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 4);
        let dat = series_dat(&Series { name: "p".into(), columns: ["d", "Ld"], points: vec![(0.1, 2.0)] });
        let v: Vec<f64> = dat.lines().nth(1).unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v, vec![0.1, 2.0]);
    }
}
