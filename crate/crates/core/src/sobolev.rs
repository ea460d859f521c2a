//! Scale-`h` slopes, discrete upper gradients and Cheeger energies.

use crate::error::{invalid, MmsError, Result};
use crate::space::FiniteMms;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlopeVariant {
    Full,
    Ascending,
    Descending,
}

pub(crate) fn check_len(space: &FiniteMms, f: &[f64]) -> Result<()> {
    if f.len() != space.n() {
        return invalid(format!("field has {} entries, space has {} points", f.len(), space.n()));
    }
    Ok(())
}

/// Largest difference quotient to a neighbor within `h`; zero at isolated points.
pub fn local_slope(space: &FiniteMms, f: &[f64], variant: SlopeVariant) -> Vec<f64> {
    let g = space.neighborhood();
    (0..space.n())
        .map(|x| {
            g.neighbors(x)
                .map(|(y, d)| {
                    let diff = f[y] - f[x];
                    let v = match variant {
                        SlopeVariant::Full => diff.abs(),
                        SlopeVariant::Ascending => diff.max(0.0),
                        SlopeVariant::Descending => (-diff).max(0.0),
                    };
                    v / d
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperGradientCheck {
    pub holds: bool,
    /// `Σ max(G(a),G(b))·d(a,b) − |f(end) − f(start)|`.
    pub slack: f64,
}

/// Discrete upper-gradient inequality along a path of neighbors.
pub fn upper_gradient_check(space: &FiniteMms, f: &[f64], grad: &[f64], path: &[usize]) -> Result<UpperGradientCheck> {
    check_len(space, f)?;
    check_len(space, grad)?;
    if path.is_empty() {
        return invalid("empty path");
    }
    let mut integral = 0.0;
    for w in path.windows(2) {
        let d = space.dist(w[0], w[1]);
        if d > space.h() {
            return invalid(format!("path step {} -> {} exceeds the scale", w[0], w[1]));
        }
        integral += grad[w[0]].max(grad[w[1]]) * d;
    }
    let jump = (f[path[path.len() - 1]] - f[path[0]]).abs();
    Ok(UpperGradientCheck { holds: jump <= integral + 1e-12, slack: integral - jump })
}

/// `(1/p)·Σ slope(x)^p·m(x)`.
pub fn cheeger_energy(space: &FiniteMms, f: &[f64], p: f64) -> Result<f64> {
    check_len(space, f)?;
    if !(p > 1.0 && p.is_finite()) {
        return invalid("Cheeger energy needs 1 < p < ∞");
    }
    let s = local_slope(space, f, SlopeVariant::Full);
    Ok(s.iter().zip(space.weights()).map(|(v, w)| v.powf(p) * w).sum::<f64>() / p)
}

/// Edge form `Σ_{i<j} c(i,j)(f(i)−f(j))(g(i)−g(j))`, i.e. half the sum over
/// the symmetric edge list.
pub fn dirichlet_form(space: &FiniteMms, f: &[f64], g: &[f64]) -> Result<f64> {
    check_len(space, f)?;
    check_len(space, g)?;
    let edges = space.conductances().ok_or_else(|| MmsError::InvalidInput("space has no edge conductances".into()))?;
    Ok(edges.iter().map(|&(i, j, c)| c * (f[i] - f[j]) * (g[i] - g[j])).sum())
}

/// Points whose closed `h`-ball stays inside the lattice box. Spaces without
/// a lattice treat every point as interior.
pub fn interior_points(space: &FiniteMms) -> Vec<bool> {
    match space.lattice() {
        None => vec![true; space.n()],
        Some(l) => {
            let reach = (space.h() / l.spacing).floor() as usize + 1;
            (0..space.n()).map(|i| l.multi_index(i).iter().zip(&l.dims).all(|(&m, &d)| m >= reach && m + reach < d)).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEqualityReport {
    pub points: usize,
    pub max_asc_desc_gap: f64,
    pub mean_asc_desc_gap: f64,
    pub max_full_gap: f64,
    pub mean_full_gap: f64,
    /// Interior points where ascending and descending slopes differ by more than `1e-9`.
    pub split_points: Vec<usize>,
}

/// Compare ascending, descending and full slopes over interior points.
pub fn slope_equality_report(space: &FiniteMms, f: &[f64]) -> Result<SlopeEqualityReport> {
    check_len(space, f)?;
    let full = local_slope(space, f, SlopeVariant::Full);
    let asc = local_slope(space, f, SlopeVariant::Ascending);
    let desc = local_slope(space, f, SlopeVariant::Descending);
    let interior = interior_points(space);
    let mut r =
        SlopeEqualityReport { points: 0, max_asc_desc_gap: 0.0, mean_asc_desc_gap: 0.0, max_full_gap: 0.0, mean_full_gap: 0.0, split_points: Vec::new() };
    for x in (0..space.n()).filter(|&x| interior[x]) {
        let a = (asc[x] - desc[x]).abs();
        let b = (full[x] - asc[x].max(desc[x])).abs();
        r.points += 1;
        r.max_asc_desc_gap = r.max_asc_desc_gap.max(a);
        r.max_full_gap = r.max_full_gap.max(b);
        r.mean_asc_desc_gap += a;
        r.mean_full_gap += b;
        if a > 1e-9 {
            r.split_points.push(x);
        }
    }
    if r.points > 0 {
        r.mean_asc_desc_gap /= r.points as f64;
        r.mean_full_gap /= r.points as f64;
    }
    Ok(r)
}
