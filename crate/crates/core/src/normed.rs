//! Calculus on flat normed spaces: dual norms, the multivalued duality map and
//! the one-sided pairing `D±f(∇g)` computed from gradient sets and from
//! difference quotients of the squared dual norm.

use crate::error::{invalid, MmsError, Result};
use crate::Side;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Relative slack under which two linear values count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    /// `p` in `[1, ∞]`; `f64::INFINITY` is the max norm.
    P(f64),
    /// Vertices of a centrally symmetric convex polygon, counter-clockwise.
    Polygon(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    kind: NormKind,
    dim: usize,
}

impl NormSpec {
    pub fn euclidean(dim: usize) -> Self {
        NormSpec { kind: NormKind::P(2.0), dim }
    }

    pub fn lp(p: f64, dim: usize) -> Result<Self> {
        if !(p >= 1.0) || dim == 0 {
            return invalid(format!("p-norm needs p >= 1 and dim >= 1, got p={p}, dim={dim}"));
        }
        Ok(NormSpec { kind: NormKind::P(p), dim })
    }

    pub fn max_norm(dim: usize) -> Self {
        NormSpec { kind: NormKind::P(f64::INFINITY), dim }
    }

    /// Planar norm whose unit ball is the convex hull of `vertices`.
    ///
    /// The vertex list must be closed under `v ↦ -v`.
    pub fn polygon(vertices: &[[f64; 2]]) -> Result<Self> {
        if vertices.len() < 4 {
            return invalid("a symmetric polygon needs at least 4 vertices");
        }
        let mut vs: Vec<[f64; 2]> = vertices.to_vec();
        for v in &vs {
            if !(v[0].is_finite() && v[1].is_finite()) || v[0].hypot(v[1]) == 0.0 {
                return invalid("polygon vertices must be finite and nonzero");
            }
            let scale = v[0].hypot(v[1]);
            if !vs.iter().any(|w| (w[0] + v[0]).hypot(w[1] + v[1]) <= 1e-12 * scale) {
                return invalid(format!("polygon is not symmetric: -({}, {}) missing", v[0], v[1]));
            }
        }
        vs.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
        vs.dedup_by(|a, b| (a[0] - b[0]).hypot(a[1] - b[1]) <= 1e-14);
        let m = vs.len();
        for k in 0..m {
            let a = vs[k];
            let b = vs[(k + 1) % m];
            let c = vs[(k + 2) % m];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross <= 1e-12 {
                return invalid("polygon vertices must be in strictly convex position");
            }
        }
        Ok(NormSpec { kind: NormKind::Polygon(vs), dim: 2 })
    }

    /// Parse `kind=p:<p>` or `kind=poly:(x1,y1);(x2,y2);...`. The leading
    /// `kind=` is optional. Polygons fix the dimension to 2.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let t = text.trim();
        let t = t.strip_prefix("kind=").unwrap_or(t).trim();
        if let Some(p) = t.strip_prefix("p:") {
            let p = p.trim();
            let p = match p {
                "inf" | "infinity" | "∞" => f64::INFINITY,
                _ => p.parse::<f64>().map_err(|e| MmsError::InvalidInput(format!("bad exponent {p:?}: {e}")))?,
            };
            return NormSpec::lp(p, dim);
        }
        if let Some(body) = t.strip_prefix("poly:") {
            let mut vs = Vec::new();
            for part in body.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let inner = part.strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or_else(|| MmsError::InvalidInput(format!("bad vertex {part:?}")))?;
                let xy: Vec<f64> = inner
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| MmsError::InvalidInput(format!("bad vertex {part:?}: {e}")))?;
                if xy.len() != 2 {
                    return invalid(format!("vertex {part:?} is not planar"));
                }
                vs.push([xy[0], xy[1]]);
            }
            return NormSpec::polygon(&vs);
        }
        invalid(format!("unknown norm spec {text:?}"))
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        match self.kind {
            NormKind::P(p) => NormSpec::lp(p, dim),
            NormKind::Polygon(_) if dim == 2 => Ok(self.clone()),
            NormKind::Polygon(_) => invalid("polygonal norms are planar"),
        }
    }

    /// True when the unit sphere contains no segment, so `Dual⁻¹` is single valued.
    pub fn is_strictly_convex(&self) -> bool {
        match self.kind {
            NormKind::P(p) => (p > 1.0 && p.is_finite()) || self.dim == 1,
            NormKind::Polygon(_) => false,
        }
    }

    /// Largest ratio `|x|₂ / ‖x‖`.
    pub fn euclidean_bound(&self) -> f64 {
        match &self.kind {
            NormKind::P(p) => {
                let d = self.dim as f64;
                if *p >= 2.0 {
                    d.powf(0.5 - 1.0 / p)
                } else {
                    1.0
                }
            }
            NormKind::Polygon(vs) => vs.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max),
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        match &self.kind {
            NormKind::P(p) => lp_norm(x, *p),
            NormKind::Polygon(vs) => {
                let m = vs.len();
                (0..m)
                    .map(|k| {
                        let a = vs[k];
                        let b = vs[(k + 1) % m];
                        let n = [b[1] - a[1], a[0] - b[0]];
                        let s = n[0] * a[0] + n[1] * a[1];
                        (n[0] * x[0] + n[1] * x[1]) / s
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Dual norm `sup_{‖v‖≤1} ω(v)`.
    pub fn dual_norm(&self, omega: &[f64]) -> f64 {
        match &self.kind {
            NormKind::P(p) => lp_norm(omega, conjugate(*p)),
            NormKind::Polygon(vs) => vs.iter().map(|v| v[0] * omega[0] + v[1] * omega[1]).fold(f64::MIN, f64::max),
        }
    }

    /// `‖ω+δ‖* − ‖ω‖*` evaluated without forming `ω+δ` where that would
    /// cancel, so tiny `δ` keep full relative accuracy.
    pub fn dual_norm_increment(&self, omega: &[f64], delta: &[f64]) -> f64 {
        match &self.kind {
            NormKind::P(p) => {
                let r = conjugate(*p);
                if r == 1.0 {
                    omega.iter().zip(delta).map(|(&a, &d)| abs_increment(a, d)).sum()
                } else if r.is_infinite() {
                    let m = omega.iter().fold(0.0_f64, |acc, a| acc.max(a.abs()));
                    omega.iter().zip(delta).map(|(&a, &d)| abs_increment(a, d) + (a.abs() - m)).fold(f64::MIN, f64::max)
                } else {
                    let s0: f64 = omega.iter().map(|a| a.abs().powf(r)).sum();
                    if s0 == 0.0 {
                        return lp_norm(delta, r);
                    }
                    let ds: f64 = omega.iter().zip(delta).map(|(&a, &d)| pow_increment(a, d, r)).sum();
                    s0.powf(1.0 / r) * ((ds / s0).ln_1p() / r).exp_m1()
                }
            }
            NormKind::Polygon(vs) => {
                let m = self.dual_norm(omega);
                vs.iter().map(|v| (v[0] * omega[0] + v[1] * omega[1] - m) + (v[0] * delta[0] + v[1] * delta[1])).fold(f64::MIN, f64::max)
            }
        }
    }

    /// `Dual⁻¹(ω)`: vectors `v` with `ω(v) = ‖ω‖*²` and `‖v‖ = ‖ω‖*`.
    pub fn duality_map_inverse(&self, omega: &[f64]) -> GradientSet {
        let n = self.dual_norm(omega);
        if n == 0.0 {
            return GradientSet { vertices: vec![vec![0.0; self.dim]] };
        }
        let vertices = match &self.kind {
            NormKind::P(p) => {
                let r = conjugate(*p);
                if r.is_infinite() {
                    // primal ℓ¹: face spanned by the coordinate axes attaining the max
                    let m = n;
                    omega
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| a.abs() >= m * (1.0 - TIE_TOL))
                        .map(|(i, a)| {
                            let mut v = vec![0.0; self.dim];
                            v[i] = m * a.signum();
                            v
                        })
                        .collect()
                } else if r == 1.0 {
                    // primal ℓ∞: a box face, free coordinates where ω vanishes
                    let scale = omega.iter().fold(0.0_f64, |acc, a| acc.max(a.abs()));
                    let free: Vec<usize> = (0..self.dim).filter(|&i| omega[i].abs() <= TIE_TOL * scale).collect();
                    let base: Vec<f64> = omega.iter().map(|a| if a.abs() <= TIE_TOL * scale { 0.0 } else { n * a.signum() }).collect();
                    (0..1usize << free.len())
                        .map(|mask| {
                            let mut v = base.clone();
                            for (b, &i) in free.iter().enumerate() {
                                v[i] = if mask >> b & 1 == 1 { n } else { -n };
                            }
                            v
                        })
                        .collect()
                } else {
                    let scale = n.powf(2.0 - r);
                    vec![omega.iter().map(|a| scale * a.abs().powf(r - 1.0) * a.signum()).collect()]
                }
            }
            NormKind::Polygon(vs) => vs.iter().filter(|v| v[0] * omega[0] + v[1] * omega[1] >= n * (1.0 - TIE_TOL)).map(|v| vec![n * v[0], n * v[1]]).collect(),
        };
        GradientSet { vertices }
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NormKind::P(p) if p.is_infinite() => write!(f, "kind=p:inf"),
            NormKind::P(p) => write!(f, "kind=p:{p}"),
            NormKind::Polygon(vs) => {
                let parts: Vec<String> = vs.iter().map(|v| format!("({},{})", v[0], v[1])).collect();
                write!(f, "kind=poly:{}", parts.join(";"))
            }
        }
    }
}

impl FromStr for NormSpec {
    type Err = MmsError;
    fn from_str(s: &str) -> Result<Self> {
        NormSpec::parse(s, 2)
    }
}

fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn lp_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0_f64, |acc, a| acc.max(a.abs()));
    if m == 0.0 || p.is_infinite() {
        return m;
    }
    if p == 1.0 {
        return x.iter().map(|a| a.abs()).sum();
    }
    m * x.iter().map(|a| (a.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `|a+d| − |a|`.
fn abs_increment(a: f64, d: f64) -> f64 {
    if a > 0.0 && d >= -a {
        d
    } else if a < 0.0 && d <= -a {
        -d
    } else {
        (a + d).abs() - a.abs()
    }
}

/// `|a+d|^r − |a|^r`.
fn pow_increment(a: f64, d: f64, r: f64) -> f64 {
    if a != 0.0 && d / a > -1.0 {
        a.abs().powf(r) * (r * (d / a).ln_1p()).exp_m1()
    } else {
        (a + d).abs().powf(r) - a.abs().powf(r)
    }
}

/// Finite description of `∇g(x) = Dual⁻¹(Dg)`: the set is the convex hull of
/// `vertices` (a single vertex for strictly convex norms).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub vertices: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn is_single(&self) -> bool {
        self.vertices.len() == 1
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max` (Plus) or `min` (Minus) of `Df(v)` over `v ∈ ∇g`.
pub fn d_pm_via_gradient_set(norm: &NormSpec, df: &[f64], dg: &[f64], side: Side) -> f64 {
    let set = norm.duality_map_inverse(dg);
    let vals = set.vertices.iter().map(|v| dot(df, v));
    match side {
        Side::Plus => vals.fold(f64::MIN, f64::max),
        Side::Minus => vals.fold(f64::MAX, f64::min),
    }
}

/// `{2^-k : k = 1..=40}`.
pub fn default_eps_grid() -> Vec<f64> {
    (1..=40).map(|k| (-(k as f64)).exp2()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuotientEstimate {
    /// Infimum (Plus) or supremum (Minus) over the grid.
    pub value: f64,
    /// All quotients in grid order.
    pub quotients: Vec<f64>,
    /// Change between the last two quotients.
    pub last_step_change: f64,
}

/// `inf_ε (‖Dg+εDf‖*² − ‖Dg‖*²)/(2ε)` for Plus and the mirrored supremum
/// for Minus, over a decreasing `eps_grid`.
pub fn d_pm_via_difference_quotient(norm: &NormSpec, df: &[f64], dg: &[f64], side: Side, eps_grid: &[f64]) -> Result<QuotientEstimate> {
    if eps_grid.is_empty() {
        return invalid("empty epsilon grid");
    }
    if eps_grid.windows(2).any(|w| !(w[1] < w[0])) || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return invalid("epsilon grid must be positive and strictly decreasing");
    }
    let n0 = norm.dual_norm(dg);
    let sgn = match side {
        Side::Plus => 1.0,
        Side::Minus => -1.0,
    };
    let quotients: Vec<f64> = eps_grid
        .iter()
        .map(|&eps| {
            let delta: Vec<f64> = df.iter().map(|v| sgn * eps * v).collect();
            let inc = norm.dual_norm_increment(dg, &delta);
            sgn * inc * (2.0 * n0 + inc) / (2.0 * eps)
        })
        .collect();
    let scale = 1.0 + n0 * norm.dual_norm(df);
    for (k, w) in quotients.windows(2).enumerate() {
        let jump = sgn * (w[1] - w[0]);
        if jump > 1e-10 * scale {
            return Err(MmsError::NonMonotone { step: k + 1, jump });
        }
    }
    let value = match side {
        Side::Plus => quotients.iter().copied().fold(f64::MAX, f64::min),
        Side::Minus => quotients.iter().copied().fold(f64::MIN, f64::max),
    };
    let last_step_change = if quotients.len() > 1 { (quotients[quotients.len() - 1] - quotients[quotients.len() - 2]).abs() } else { f64::INFINITY };
    Ok(QuotientEstimate { value, quotients, last_step_change })
}

/// `‖ω‖*²/2 + ‖v‖²/2 − ω(v)`, nonnegative, zero exactly on `Dual⁻¹(ω)`.
pub fn young_gap(norm: &NormSpec, omega: &[f64], v: &[f64]) -> f64 {
    let a = norm.dual_norm(omega);
    let b = norm.norm(v);
    0.5 * a * a + 0.5 * b * b - dot(omega, v)
}

/// Closed-form fields with analytic differentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SmoothField {
    Zero,
    Affine {
        coeffs: Vec<f64>,
        offset: f64,
    },
    /// `scale·|x|²/2`.
    HalfSquare {
        scale: f64,
    },
    /// `amplitude·(1 − |x−c|²/r²)³` inside the ball, zero outside.
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
}

impl SmoothField {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            SmoothField::Zero => 0.0,
            SmoothField::Affine { coeffs, offset } => offset + dot(coeffs, x),
            SmoothField::HalfSquare { scale } => 0.5 * scale * dot(x, x),
            SmoothField::Bump { center, radius, amplitude } => {
                let s = 1.0 - sq_dist(x, center) / (radius * radius);
                if s > 0.0 {
                    amplitude * s * s * s
                } else {
                    0.0
                }
            }
            SmoothField::Gaussian { center, width, amplitude } => amplitude * (-sq_dist(x, center) / (2.0 * width * width)).exp(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SmoothField::Zero => vec![0.0; x.len()],
            SmoothField::Affine { coeffs, .. } => coeffs.clone(),
            SmoothField::HalfSquare { scale } => x.iter().map(|v| scale * v).collect(),
            SmoothField::Bump { center, radius, amplitude } => {
                let r2 = radius * radius;
                let s = 1.0 - sq_dist(x, center) / r2;
                if s > 0.0 {
                    let c = -6.0 * amplitude * s * s / r2;
                    x.iter().zip(center).map(|(a, b)| c * (a - b)).collect()
                } else {
                    vec![0.0; x.len()]
                }
            }
            SmoothField::Gaussian { center, width, amplitude } => {
                let w2 = width * width;
                let v = amplitude * (-sq_dist(x, center) / (2.0 * w2)).exp();
                x.iter().zip(center).map(|(a, b)| -v * (a - b) / w2).collect()
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Midpoint quadrature over a box split into equal cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub lower: Vec<f64>,
    pub spacing: f64,
    pub cells: Vec<usize>,
}

impl QuadratureGrid {
    fn for_each_cell(&self, mut visit: impl FnMut(&[f64], bool)) {
        let d = self.cells.len();
        let total: usize = self.cells.iter().product();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        for _ in 0..total {
            let mut boundary = false;
            for k in 0..d {
                x[k] = self.lower[k] + (idx[k] as f64 + 0.5) * self.spacing;
                boundary |= idx[k] == 0 || idx[k] + 1 == self.cells[k];
            }
            visit(&x, boundary);
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < self.cells[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// `(−∫D⁺f(∇g), −∫D⁻f(∇g))` by midpoint quadrature.
pub fn laplacian_interval_normed(norm: &NormSpec, g: &SmoothField, f: &SmoothField, grid: &QuadratureGrid) -> Result<(f64, f64)> {
    if grid.lower.len() != norm.dim() || grid.cells.len() != norm.dim() {
        return invalid("quadrature grid dimension does not match the norm");
    }
    let vol = grid.spacing.powi(norm.dim() as i32);
    let mut lower = 0.0;
    let mut upper = 0.0;
    let mut leak = None;
    let mut count = 0usize;
    grid.for_each_cell(|x, boundary| {
        if boundary && f.value(x) != 0.0 && leak.is_none() {
            leak = Some(count);
        }
        count += 1;
        let df = f.gradient(x);
        let dg = g.gradient(x);
        lower -= d_pm_via_gradient_set(norm, &df, &dg, Side::Plus) * vol;
        upper -= d_pm_via_gradient_set(norm, &df, &dg, Side::Minus) * vol;
    });
    if let Some(point) = leak {
        return Err(MmsError::SupportLeak { point });
    }
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_norm_examples() {
        assert_eq!(NormSpec::euclidean(2).dual_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(NormSpec::max_norm(2).dual_norm(&[1.0, 1.0]), 2.0);
        assert_eq!(NormSpec::lp(1.0, 2).unwrap().dual_norm(&[2.0, -5.0]), 5.0);
    }

    #[test]
    fn max_norm_gradient_set_is_a_segment() {
        let set = NormSpec::max_norm(2).duality_map_inverse(&[1.0, 0.0]);
        let mut vs = set.vertices.clone();
        vs.sort_by(|a, b| a[1].total_cmp(&b[1]));
        assert_eq!(vs, vec![vec![1.0, -1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn zero_covector_has_zero_gradient() {
        for n in [NormSpec::euclidean(3), NormSpec::max_norm(2), NormSpec::lp(1.0, 2).unwrap()] {
            let set = n.duality_map_inverse(&vec![0.0; n.dim()]);
            assert_eq!(set.vertices, vec![vec![0.0; n.dim()]]);
        }
    }

    #[test]
    fn max_norm_pairing_closed_form() {
        let n = NormSpec::max_norm(2);
        let (a, b) = (0.7, -1.3);
        assert!((d_pm_via_gradient_set(&n, &[a, b], &[1.0, 0.0], Side::Plus) - (a + b.abs())).abs() < 1e-15);
        assert!((d_pm_via_gradient_set(&n, &[a, b], &[1.0, 0.0], Side::Minus) - (a - b.abs())).abs() < 1e-15);
    }

    #[test]
    fn hilbert_pairing_is_inner_product() {
        let n = NormSpec::euclidean(2);
        for side in [Side::Plus, Side::Minus] {
            assert_eq!(d_pm_via_gradient_set(&n, &[1.0, 2.0], &[3.0, 0.0], side), 3.0);
        }
    }

    #[test]
    fn quotient_zero_direction() {
        let n = NormSpec::lp(4.0, 3).unwrap();
        let q = d_pm_via_difference_quotient(&n, &[0.0; 3], &[1.0, -2.0, 0.5], Side::Plus, &default_eps_grid()).unwrap();
        assert_eq!(q.value, 0.0);
    }

    #[test]
    fn parse_round_trip() {
        let n = NormSpec::parse("kind=poly:(1,0);(0,1);(-1,0);(0,-1)", 2).unwrap();
        assert_eq!(NormSpec::parse(&n.to_string(), 2).unwrap(), n);
        assert!((n.norm(&[0.5, 0.5]) - 1.0).abs() < 1e-15);
        assert!((n.dual_norm(&[2.0, -5.0]) - 5.0).abs() < 1e-15);
        assert_eq!(NormSpec::parse("kind=p:inf", 3).unwrap(), NormSpec::max_norm(3));
        assert!(NormSpec::parse("kind=poly:(1,0);(0,1);(-1,0)", 2).is_err());
    }

    #[test]
    fn interval_of_zero_test_function() {
        let grid = QuadratureGrid { lower: vec![-1.0, -1.0], spacing: 0.1, cells: vec![20, 20] };
        let g = SmoothField::HalfSquare { scale: 1.0 };
        let (lo, hi) = laplacian_interval_normed(&NormSpec::euclidean(2), &g, &SmoothField::Zero, &grid).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn leak_is_detected() {
        let grid = QuadratureGrid { lower: vec![-1.0, -1.0], spacing: 0.1, cells: vec![20, 20] };
        let g = SmoothField::HalfSquare { scale: 1.0 };
        let f = SmoothField::Bump { center: vec![0.9, 0.0], radius: 0.5, amplitude: 1.0 };
        assert!(matches!(laplacian_interval_normed(&NormSpec::euclidean(2), &g, &f, &grid), Err(MmsError::SupportLeak { .. })));
    }
}
