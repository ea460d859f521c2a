//! Text formats for spaces and scalar fields.
//!
//! A space file is a header of `key = value` lines followed by sections:
//!
//! ```text
//! mms-space 1
//! n = 3
//! dim = 1
//! h = 1.0000000000000000e0
//! metric = normed kind=p:2
//! model = euclidean
//! lattice = 0.0000000000000000e0 | 1.0000000000000000e0 | 3
//! [points]
//! 0.0000000000000000e0
//! ...
//! [weights]
//! ...
//! [dist]        (dense metrics only; one row per line)
//! [edges]       (optional; `i j conductance`)
//! ```
//!
//! Floats are written with 17 significant digits, so a round trip is bit-exact.

use crate::error::{invalid, MmsError, Result};
use crate::normed::NormSpec;
use crate::space::{FiniteMms, Lattice, Metric, ModelTag};
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "mms-space 1";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(vals: impl Iterator<Item = f64>) -> String {
    vals.map(num).collect::<Vec<_>>().join(" ")
}

fn metric_text(m: &Metric) -> String {
    match m {
        Metric::Dense(_) => "dense".into(),
        Metric::Normed(ns) => format!("normed {ns}"),
        Metric::GreatCircle => "great-circle".into(),
        Metric::StereographicSphere => "stereographic-sphere".into(),
        Metric::PoincareDisk => "poincare-disk".into(),
    }
}

fn model_text(m: &ModelTag) -> String {
    match m {
        ModelTag::Euclidean => "euclidean".into(),
        ModelTag::Normed(ns) => format!("normed {ns}"),
        ModelTag::Sphere { k, n } => format!("sphere {} {}", num(*k), num(*n)),
        ModelTag::Hyperbolic { k, n } => format!("hyperbolic {} {}", num(*k), num(*n)),
    }
}

pub fn write_space(space: &FiniteMms) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "n = {}", space.n());
    let _ = writeln!(out, "dim = {}", space.dim());
    let _ = writeln!(out, "h = {}", num(space.h()));
    let _ = writeln!(out, "metric = {}", metric_text(space.metric()));
    if let Some(m) = space.model() {
        let _ = writeln!(out, "model = {}", model_text(m));
    }
    if let Some(l) = space.lattice() {
        let dims: Vec<String> = l.dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "lattice = {} | {} | {}", join(l.origin.iter().copied()), num(l.spacing), dims.join(" "));
    }
    if space.has_coords() {
        out.push_str("[points]\n");
        for i in 0..space.n() {
            let _ = writeln!(out, "{}", join(space.coord(i).iter().copied()));
        }
    }
    out.push_str("[weights]\n");
    for w in space.weights() {
        let _ = writeln!(out, "{}", num(*w));
    }
    if let Metric::Dense(d) = space.metric() {
        out.push_str("[dist]\n");
        for row in d.chunks(space.n()) {
            let _ = writeln!(out, "{}", join(row.iter().copied()));
        }
    }
    if let Some(edges) = space.conductances() {
        out.push_str("[edges]\n");
        for &(i, j, c) in edges {
            let _ = writeln!(out, "{i} {j} {}", num(c));
        }
    }
    out
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| MmsError::Parse { line, msg: format!("bad number {s:?}: {e}") })
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|e| MmsError::Parse { line, msg: format!("bad integer {s:?}: {e}") })
}

fn parse_row(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace().map(|t| parse_f64(t, line)).collect()
}

pub fn read_space(text: &str) -> Result<FiniteMms> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((no, _)) => return Err(MmsError::Parse { line: no, msg: format!("expected {MAGIC:?}") }),
        None => return Err(MmsError::Parse { line: 0, msg: "empty input".into() }),
    }
    let (mut n, mut dim, mut h) = (None, None, None);
    let mut metric_line: Option<(usize, String)> = None;
    let mut model_line: Option<(usize, String)> = None;
    let mut lattice_line: Option<(usize, String)> = None;
    let mut section = String::new();
    let (mut points, mut weights, mut dist, mut edges) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (no, l) in lines {
        if l.starts_with('[') {
            section = l.trim_matches(|c| c == '[' || c == ']').to_string();
            if !matches!(section.as_str(), "points" | "weights" | "dist" | "edges") {
                return Err(MmsError::Parse { line: no, msg: format!("unknown section {l}") });
            }
            continue;
        }
        match section.as_str() {
            "" => {
                let (key, value) = l.split_once('=').ok_or(MmsError::Parse { line: no, msg: "expected key = value".into() })?;
                let value = value.trim().to_string();
                match key.trim() {
                    "n" => n = Some(parse_usize(&value, no)?),
                    "dim" => dim = Some(parse_usize(&value, no)?),
                    "h" => h = Some(parse_f64(&value, no)?),
                    "metric" => metric_line = Some((no, value)),
                    "model" => model_line = Some((no, value)),
                    "lattice" => lattice_line = Some((no, value)),
                    other => return Err(MmsError::Parse { line: no, msg: format!("unknown key {other:?}") }),
                }
            }
            "points" => points.push(parse_row(l, no)?),
            "weights" => weights.push(parse_f64(l, no)?),
            "dist" => dist.push(parse_row(l, no)?),
            "edges" => {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(MmsError::Parse { line: no, msg: "edge lines are `i j c`".into() });
                }
                edges.push((parse_usize(t[0], no)?, parse_usize(t[1], no)?, parse_f64(t[2], no)?));
            }
            _ => unreachable!(),
        }
    }
    let missing = |k: &str| MmsError::Parse { line: 0, msg: format!("missing header {k}") };
    let n = n.ok_or_else(|| missing("n"))?;
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let h = h.ok_or_else(|| missing("h"))?;
    let (mline, mtext) = metric_line.ok_or_else(|| missing("metric"))?;
    if weights.len() != n {
        return Err(MmsError::Parse { line: 0, msg: format!("expected {n} weights, found {}", weights.len()) });
    }
    let mut space = if mtext == "dense" {
        if dist.len() != n || dist.iter().any(|r| r.len() != n) {
            return Err(MmsError::Parse { line: mline, msg: format!("dense metric needs an {n}x{n} [dist] section") });
        }
        FiniteMms::from_dense(dist, weights, h)?
    } else {
        let metric = match mtext.as_str() {
            "great-circle" => Metric::GreatCircle,
            "stereographic-sphere" => Metric::StereographicSphere,
            "poincare-disk" => Metric::PoincareDisk,
            t => match t.strip_prefix("normed ") {
                Some(spec) => Metric::Normed(NormSpec::parse(spec, dim)?),
                None => return Err(MmsError::Parse { line: mline, msg: format!("unknown metric {t:?}") }),
            },
        };
        if points.len() != n || points.iter().any(|p| p.len() != dim) {
            return Err(MmsError::Parse { line: mline, msg: format!("expected {n} points of dimension {dim}") });
        }
        FiniteMms::from_coords(points.concat(), dim, weights, h, metric)?
    };
    if let Some((no, text)) = model_line {
        let t: Vec<&str> = text.splitn(2, ' ').collect();
        let model = match (t[0], t.get(1)) {
            ("euclidean", None) => ModelTag::Euclidean,
            ("normed", Some(spec)) => ModelTag::Normed(NormSpec::parse(spec, dim)?),
            (kind @ ("sphere" | "hyperbolic"), Some(rest)) => {
                let v = parse_row(rest, no)?;
                if v.len() != 2 {
                    return Err(MmsError::Parse { line: no, msg: "model needs K and N".into() });
                }
                if kind == "sphere" {
                    ModelTag::Sphere { k: v[0], n: v[1] }
                } else {
                    ModelTag::Hyperbolic { k: v[0], n: v[1] }
                }
            }
            _ => return Err(MmsError::Parse { line: no, msg: format!("unknown model {text:?}") }),
        };
        space = space.with_model(model);
    }
    if let Some((no, text)) = lattice_line {
        let parts: Vec<&str> = text.split('|').collect();
        if parts.len() != 3 {
            return Err(MmsError::Parse { line: no, msg: "lattice = origin | spacing | dims".into() });
        }
        let lattice = Lattice {
            origin: parse_row(parts[0], no)?,
            spacing: parse_f64(parts[1], no)?,
            dims: parts[2].split_whitespace().map(|d| parse_usize(d, no)).collect::<Result<_>>()?,
        };
        space = space.with_lattice(lattice)?;
    }
    if !edges.is_empty() {
        space = space.with_conductances(edges)?;
    }
    Ok(space)
}

pub fn save_space(space: &FiniteMms, path: &Path) -> Result<()> {
    std::fs::write(path, write_space(space))?;
    Ok(())
}

pub fn load_space(path: &Path) -> Result<FiniteMms> {
    read_space(&std::fs::read_to_string(path)?)
}

/// One value per line.
pub fn write_field(f: &[f64]) -> String {
    let mut out = String::with_capacity(f.len() * 24);
    for v in f {
        let _ = writeln!(out, "{}", num(*v));
    }
    out
}

pub fn read_field(text: &str) -> Result<Vec<f64>> {
    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, l)| parse_f64(l, i + 1)).collect()
}

/// A field read from text must match the space it is used on.
pub fn read_field_for(space: &FiniteMms, text: &str) -> Result<Vec<f64>> {
    let f = read_field(text)?;
    if f.len() != space.n() {
        return invalid(format!("field has {} values, space has {} points", f.len(), space.n()));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_euclidean_grid, build_model_patch, Surface};

    #[test]
    fn dense_round_trip() {
        let s = FiniteMms::from_dense(vec![vec![0.0, 0.1], vec![0.1, 0.0]], vec![1.0 / 3.0, 2.0], 0.2).unwrap();
        let back = read_space(&write_space(&s)).unwrap();
        assert_eq!(back.dist(0, 1), 0.1);
        assert_eq!(back.weights(), s.weights());
        assert_eq!(write_space(&back), write_space(&s));
    }

    #[test]
    fn coordinate_round_trip() {
        let s = build_model_patch(Surface::Hyperbolic, 0.3, 0.1).unwrap();
        let text = write_space(&s);
        assert!(!text.contains("[dist]"));
        let back = read_space(&text).unwrap();
        assert_eq!(write_space(&back), text);
        assert_eq!(back.lattice(), s.lattice());
        let g = build_euclidean_grid(&[4, 3], 0.25, None).unwrap();
        assert_eq!(write_space(&read_space(&write_space(&g)).unwrap()), write_space(&g));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = read_space("mms-space 1\nn = x\n").unwrap_err();
        assert!(matches!(err, MmsError::Parse { line: 2, .. }));
        assert!(read_space("nope").is_err());
    }

    #[test]
    fn field_round_trip() {
        let f = vec![0.1, -2.5e-300, 1.0 / 7.0];
        assert_eq!(read_field(&write_field(&f)).unwrap(), f);
    }
}
