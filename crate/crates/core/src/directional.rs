//! Exact one-sided pairings `D±f(∇g)` on a finite space and the calculus
//! rules they obey.
//!
//! At a point `x` the slope of `g + εf` is `max_i |a_i + ε b_i| / d_i` over
//! the neighbors, a convex piecewise-linear function of `ε`. Its one-sided
//! derivatives at zero come from the active neighbors only; multiplying by
//! `slope(g)(x)` gives `D±f(∇g)(x)`, which does not depend on `p`.

use crate::error::{invalid, MmsError, Result};
use crate::sobolev::{check_len, local_slope, SlopeVariant};
use crate::space::FiniteMms;
use crate::Side;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Relative slack for membership in the active set.
pub const ACTIVE_TOL: f64 = 1e-12;
/// Slopes below this count as zero.
pub const SLOPE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalField {
    pub dplus: Vec<f64>,
    pub dminus: Vec<f64>,
}

impl DirectionalField {
    /// `D±f(∇g)·slope(g)^(p−2)`.
    pub fn p_form(&self, slope_g: &[f64], p: f64) -> DirectionalField {
        let scale: Vec<f64> = slope_g.iter().map(|&s| if s > SLOPE_FLOOR { s.powf(p - 2.0) } else { 0.0 }).collect();
        DirectionalField {
            dplus: self.dplus.iter().zip(&scale).map(|(a, b)| a * b).collect(),
            dminus: self.dminus.iter().zip(&scale).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn get(&self, side: Side) -> &[f64] {
        match side {
            Side::Plus => &self.dplus,
            Side::Minus => &self.dminus,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,dplus,dminus\n");
        for (i, (a, b)) in self.dplus.iter().zip(&self.dminus).enumerate() {
            let _ = writeln!(out, "{i},{a:.17e},{b:.17e}");
        }
        out
    }
}

/// Active neighbors of `g` at every point: `(y, sign(a)/d)`.
#[derive(Clone, Debug)]
pub struct ActiveSets {
    slope: Vec<f64>,
    active: Vec<Vec<(usize, f64)>>,
}

impl ActiveSets {
    pub fn new(space: &FiniteMms, g: &[f64]) -> Self {
        let graph = space.neighborhood();
        let mut slope = vec![0.0; space.n()];
        let mut active = vec![Vec::new(); space.n()];
        for x in 0..space.n() {
            let s = graph.neighbors(x).map(|(y, d)| (g[y] - g[x]).abs() / d).fold(0.0, f64::max);
            slope[x] = s;
            if s <= SLOPE_FLOOR {
                continue;
            }
            active[x] = graph
                .neighbors(x)
                .filter_map(|(y, d)| {
                    let a = g[y] - g[x];
                    (a.abs() / d >= s * (1.0 - ACTIVE_TOL)).then(|| (y, a.signum() / d))
                })
                .collect();
        }
        ActiveSets { slope, active }
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope
    }

    /// One-sided derivative of the slope along increments `b(y)` at `x`,
    /// multiplied by the slope.
    pub fn pairing_at(&self, x: usize, side: Side, mut b: impl FnMut(usize) -> f64) -> f64 {
        if self.active[x].is_empty() {
            return 0.0;
        }
        let vals = self.active[x].iter().map(|&(y, w)| w * b(y));
        let ext = match side {
            Side::Plus => vals.fold(f64::MIN, f64::max),
            Side::Minus => vals.fold(f64::MAX, f64::min),
        };
        self.slope[x] * ext
    }

    pub fn pairing(&self, f: &[f64]) -> DirectionalField {
        let n = self.slope.len();
        DirectionalField {
            dplus: (0..n).map(|x| self.pairing_at(x, Side::Plus, |y| f[y] - f[x])).collect(),
            dminus: (0..n).map(|x| self.pairing_at(x, Side::Minus, |y| f[y] - f[x])).collect(),
        }
    }

    pub fn active_count(&self, x: usize) -> usize {
        self.active[x].len()
    }
}

/// `D±f(∇g)` from the active sets of `g`.
pub fn d_pm_exact(space: &FiniteMms, f: &[f64], g: &[f64]) -> Result<DirectionalField> {
    check_len(space, f)?;
    check_len(space, g)?;
    Ok(ActiveSets::new(space, g).pairing(f))
}

/// `|a+d| − |a|` without cancellation when the sign is kept.
fn abs_increment(a: f64, d: f64) -> f64 {
    if a > 0.0 && d >= -a {
        d
    } else if a < 0.0 && d <= -a {
        -d
    } else {
        (a + d).abs() - a.abs()
    }
}

/// `slope(g+εf)(x) − slope(g)(x)`.
fn slope_increment(space: &FiniteMms, f: &[f64], g: &[f64], x: usize, s: f64, eps: f64) -> f64 {
    space
        .neighborhood()
        .neighbors(x)
        .map(|(y, d)| {
            let a = g[y] - g[x];
            let b = f[y] - f[x];
            abs_increment(a, eps * b) / d + (a.abs() / d - s)
        })
        .fold(f64::MIN, f64::max)
        .max(-s)
}

/// Difference quotients `(slope(g+εf)^p − slope(g)^p)/(pε)` over a decreasing
/// grid, divided back by `slope(g)^(p−2)` so the result is comparable with
/// [`d_pm_exact`]. Points where `g` has zero slope report zero.
pub fn d_pm_sweep(space: &FiniteMms, f: &[f64], g: &[f64], p: f64, eps_grid: &[f64]) -> Result<DirectionalField> {
    check_len(space, f)?;
    check_len(space, g)?;
    if !(p > 1.0 && p.is_finite()) {
        return invalid("need 1 < p < ∞");
    }
    if eps_grid.is_empty() || eps_grid.windows(2).any(|w| !(w[1] < w[0])) || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return invalid("epsilon grid must be positive and strictly decreasing");
    }
    let slope = local_slope(space, g, SlopeVariant::Full);
    let n = space.n();
    let mut out = DirectionalField { dplus: vec![0.0; n], dminus: vec![0.0; n] };
    for x in 0..n {
        let s = slope[x];
        if s <= SLOPE_FLOOR {
            continue;
        }
        let scale = 1.0 + s * s + s * local_scale(space, f, x);
        for (side, sgn) in [(Side::Plus, 1.0), (Side::Minus, -1.0)] {
            let mut prev: Option<f64> = None;
            let mut best = sgn * f64::INFINITY;
            for (k, &eps) in eps_grid.iter().enumerate() {
                let inc = slope_increment(space, f, g, x, s, sgn * eps);
                let q = sgn * s.powf(p) * (p * (inc / s).ln_1p()).exp_m1() / (p * eps) / s.powf(p - 2.0);
                if let Some(pq) = prev {
                    let jump = sgn * (q - pq);
                    if jump > 1e-10 * scale {
                        return Err(MmsError::NonMonotone { step: k, jump });
                    }
                }
                prev = Some(q);
                best = if sgn > 0.0 { best.min(q) } else { best.max(q) };
            }
            match side {
                Side::Plus => out.dplus[x] = best,
                Side::Minus => out.dminus[x] = best,
            }
        }
    }
    Ok(out)
}

fn local_scale(space: &FiniteMms, f: &[f64], x: usize) -> f64 {
    space.neighborhood().neighbors(x).map(|(y, d)| (f[y] - f[x]).abs() / d).fold(0.0, f64::max)
}

/// Continuous piecewise-affine map of the real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffine {
    /// Strictly increasing breakpoints.
    pub breaks: Vec<f64>,
    /// One slope per piece, `breaks.len() + 1` in total.
    pub slopes: Vec<f64>,
    /// Value at zero.
    pub value_at_zero: f64,
}

impl PiecewiseAffine {
    pub fn new(breaks: Vec<f64>, slopes: Vec<f64>, value_at_zero: f64) -> Result<Self> {
        if slopes.len() != breaks.len() + 1 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return invalid("piecewise-affine map needs increasing breaks and one more slope");
        }
        Ok(PiecewiseAffine { breaks, slopes, value_at_zero })
    }

    pub fn linear(slope: f64) -> Self {
        PiecewiseAffine { breaks: vec![], slopes: vec![slope], value_at_zero: 0.0 }
    }

    pub fn piece(&self, z: f64) -> usize {
        self.breaks.partition_point(|&b| b < z)
    }

    pub fn derivative(&self, z: f64) -> f64 {
        self.slopes[self.piece(z)]
    }

    fn primitive(&self, z: f64) -> f64 {
        // ∫_0^z φ'
        let (lo, hi, sign) = if z >= 0.0 { (0.0, z, 1.0) } else { (z, 0.0, -1.0) };
        let mut total = 0.0;
        let mut left = lo;
        let mut k = self.piece(lo);
        loop {
            let right = if k < self.breaks.len() { self.breaks[k].min(hi) } else { hi };
            if right > left {
                total += self.slopes[k] * (right - left);
                left = right;
            }
            if left >= hi || k >= self.breaks.len() {
                if left < hi {
                    total += self.slopes[k] * (hi - left);
                }
                break;
            }
            k += 1;
        }
        sign * total
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.value_at_zero + self.primitive(z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainSide {
    /// `D±(φ∘f)(∇g)`.
    Inner,
    /// `D±f(∇(φ∘g))`.
    Outer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub max_residual: f64,
    pub checked: usize,
    pub excluded: Vec<usize>,
}

/// Whether all values of `v` on the closed `h`-ball of `x` sit in one affine
/// piece of `phi`, at least `1e-9` away from every breakpoint.
fn same_piece(space: &FiniteMms, phi: &PiecewiseAffine, v: &[f64], x: usize) -> bool {
    let clear = |z: f64| phi.breaks.iter().all(|b| (z - b).abs() >= 1e-9);
    let k = phi.piece(v[x]);
    clear(v[x]) && space.neighborhood().neighbors(x).all(|(y, _)| phi.piece(v[y]) == k && clear(v[y]))
}

/// Chain rules for a piecewise-affine `phi`, compared pointwise away from
/// the breakpoints.
pub fn chain_rule_check(space: &FiniteMms, f: &[f64], g: &[f64], phi: &PiecewiseAffine, side: ChainSide) -> Result<RuleReport> {
    check_len(space, f)?;
    check_len(space, g)?;
    let base = ActiveSets::new(space, g);
    let plain = base.pairing(f);
    let (lhs, probe) = match side {
        ChainSide::Inner => {
            let pf: Vec<f64> = f.iter().map(|&z| phi.eval(z)).collect();
            (base.pairing(&pf), f)
        }
        ChainSide::Outer => {
            let pg: Vec<f64> = g.iter().map(|&z| phi.eval(z)).collect();
            (ActiveSets::new(space, &pg).pairing(f), g)
        }
    };
    let mut report = RuleReport { max_residual: 0.0, checked: 0, excluded: Vec::new() };
    for x in 0..space.n() {
        if !same_piece(space, phi, probe, x) {
            report.excluded.push(x);
            continue;
        }
        let k = phi.derivative(probe[x]);
        for s in [Side::Plus, Side::Minus] {
            let rhs_side = if k >= 0.0 { s } else { s.flip() };
            let rhs = k * plain.get(rhs_side)[x];
            let scale = 1.0 + lhs.get(s)[x].abs().max(rhs.abs());
            report.max_residual = report.max_residual.max((lhs.get(s)[x] - rhs).abs() / scale);
        }
        report.checked += 1;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeibnizReport {
    /// Smallest `RHS − LHS` of the upper inequality, without the remainder.
    pub min_raw_slack_plus: f64,
    /// Smallest `LHS − RHS` of the lower inequality, without the remainder.
    pub min_raw_slack_minus: f64,
    /// Same slacks after adding the second-order increment `Δf₁·Δf₂`.
    pub min_slack_plus: f64,
    pub min_slack_minus: f64,
    /// Largest size of the second-order remainder.
    pub max_remainder: f64,
    pub pass: bool,
}

/// Leibniz inequalities for `D±(f₁f₂)(∇g)`.
///
/// On a finite space the product increment carries a term `Δf₁·Δf₂` with no
/// continuum counterpart; sublinearity of the pairing makes the inequality
/// exact once its one-sided pairing is added. Pass means the exact form
/// holds to `1e-10`.
pub fn leibniz_check(space: &FiniteMms, f1: &[f64], f2: &[f64], g: &[f64]) -> Result<LeibnizReport> {
    check_len(space, f1)?;
    check_len(space, f2)?;
    check_len(space, g)?;
    let act = ActiveSets::new(space, g);
    let prod: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a * b).collect();
    let dprod = act.pairing(&prod);
    let d1 = act.pairing(f1);
    let d2 = act.pairing(f2);
    let mut r = LeibnizReport {
        min_raw_slack_plus: f64::INFINITY,
        min_raw_slack_minus: f64::INFINITY,
        min_slack_plus: f64::INFINITY,
        min_slack_minus: f64::INFINITY,
        max_remainder: 0.0,
        pass: true,
    };
    for x in 0..space.n() {
        let pick = |d: &DirectionalField, coef: f64, side: Side| {
            let s = if coef >= 0.0 { side } else { side.flip() };
            coef * d.get(s)[x]
        };
        let cross = |y: usize| (f1[y] - f1[x]) * (f2[y] - f2[x]);
        let rem_plus = act.pairing_at(x, Side::Plus, cross);
        let rem_minus = act.pairing_at(x, Side::Minus, cross);
        let upper = pick(&d2, f1[x], Side::Plus) + pick(&d1, f2[x], Side::Plus);
        let lower = pick(&d2, f1[x], Side::Minus) + pick(&d1, f2[x], Side::Minus);
        let raw_plus = upper - dprod.dplus[x];
        let raw_minus = dprod.dminus[x] - lower;
        r.min_raw_slack_plus = r.min_raw_slack_plus.min(raw_plus);
        r.min_raw_slack_minus = r.min_raw_slack_minus.min(raw_minus);
        r.min_slack_plus = r.min_slack_plus.min(raw_plus + rem_plus);
        r.min_slack_minus = r.min_slack_minus.min(raw_minus - rem_minus);
        r.max_remainder = r.max_remainder.max(rem_plus.abs()).max(rem_minus.abs());
    }
    r.pass = r.min_slack_plus >= -1e-10 && r.min_slack_minus >= -1e-10;
    Ok(r)
}

/// Random smooth field on a space with coordinates, or i.i.d. values otherwise.
pub fn random_field<R: Rng>(space: &FiniteMms, rng: &mut R, modes: usize, max_freq: f64) -> Vec<f64> {
    if space.has_coords() {
        let t = crate::rng::TrigField::sample(rng, space.dim(), modes, max_freq);
        (0..space.n()).map(|i| t.eval(space.coord(i))).collect()
    } else {
        (0..space.n()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

/// Mass fraction of points where `D⁺ − D⁻ > 1e-9`, pooled over random pairs.
pub fn strict_convexity_probe(space: &FiniteMms, sample_count: usize, seed: u64) -> Result<f64> {
    if sample_count == 0 {
        return invalid("need at least one sample");
    }
    let mut rng = crate::rng::seeded(seed);
    let total = space.total_mass() * sample_count as f64;
    let mut split = 0.0;
    for _ in 0..sample_count {
        let f = random_field(space, &mut rng, 3, 4.0);
        let g = random_field(space, &mut rng, 3, 4.0);
        let d = d_pm_exact(space, &f, &g)?;
        for x in 0..space.n() {
            if d.dplus[x] - d.dminus[x] > 1e-9 {
                split += space.weight(x);
            }
        }
    }
    Ok(split / total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub admissible: usize,
    pub max_residual: f64,
    /// Smallest `D⁺f₁ + D⁺f₂ − D⁺(f₁+f₂)` (scaled) at points where some pairing is two-valued.
    pub min_convexity_slack: f64,
}

/// Linearity of `f ↦ Df(∇g)` where all pairings are single valued; convexity elsewhere.
pub fn linearity_check(space: &FiniteMms, f1: &[f64], f2: &[f64], g: &[f64], alpha: f64, beta: f64) -> Result<LinearityReport> {
    check_len(space, f1)?;
    check_len(space, f2)?;
    let act = ActiveSets::new(space, g);
    let comb: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| alpha * a + beta * b).collect();
    let (d1, d2, dc) = (act.pairing(f1), act.pairing(f2), act.pairing(&comb));
    let a1: Vec<f64> = f1.iter().map(|v| alpha * v).collect();
    let b2: Vec<f64> = f2.iter().map(|v| beta * v).collect();
    let (da, db) = (act.pairing(&a1), act.pairing(&b2));
    let mut r = LinearityReport { admissible: 0, max_residual: 0.0, min_convexity_slack: f64::INFINITY };
    for x in 0..space.n() {
        let single = |d: &DirectionalField| d.dplus[x] - d.dminus[x] <= 1e-9;
        if single(&d1) && single(&d2) && single(&dc) {
            r.admissible += 1;
            let res = (dc.dplus[x] - alpha * d1.dplus[x] - beta * d2.dplus[x]).abs();
            r.max_residual = r.max_residual.max(res);
        } else {
            r.min_convexity_slack = r.min_convexity_slack.min(da.dplus[x] + db.dplus[x] - dc.dplus[x]);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::build_euclidean_grid;

    #[test]
    fn self_pairing_is_squared_slope() {
        let s = build_euclidean_grid(&[7, 6], 0.2, None).unwrap();
        let mut rng = crate::rng::seeded(3);
        let g = random_field(&s, &mut rng, 3, 3.0);
        let slope = local_slope(&s, &g, SlopeVariant::Full);
        let d = d_pm_exact(&s, &g, &g).unwrap();
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let dn = d_pm_exact(&s, &neg, &g).unwrap();
        for x in 0..s.n() {
            assert!((d.dplus[x] - slope[x] * slope[x]).abs() < 1e-12);
            assert!((d.dminus[x] - slope[x] * slope[x]).abs() < 1e-12);
            assert!((dn.dplus[x] + slope[x] * slope[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_field_ties_both_neighbors() {
        let s = build_euclidean_grid(&[8], 1.0, None).unwrap();
        let g: Vec<f64> = (0..8).map(|i| s.dist(i, 0)).collect();
        let f = [0.3, -1.0, 2.0, 0.5, 0.7, 4.0, -2.0, 1.0];
        let d = d_pm_exact(&s, &f, &g).unwrap();
        for x in 1..7 {
            let fwd = f[x + 1] - f[x];
            let bwd = f[x] - f[x - 1];
            assert!((d.dplus[x] - fwd.max(bwd)).abs() < 1e-12, "x={x}");
            assert!((d.dminus[x] - fwd.min(bwd)).abs() < 1e-12);
        }
        assert!((d.dplus[0] - (f[1] - f[0])).abs() < 1e-12);
    }

    #[test]
    fn sweep_with_one_term_bounds_from_above() {
        let s = build_euclidean_grid(&[6, 6], 0.2, None).unwrap();
        let mut rng = crate::rng::seeded(11);
        let f = random_field(&s, &mut rng, 3, 3.0);
        let g = random_field(&s, &mut rng, 3, 3.0);
        let exact = d_pm_exact(&s, &f, &g).unwrap();
        let one = d_pm_sweep(&s, &f, &g, 2.0, &[1.0]).unwrap();
        for x in 0..s.n() {
            assert!(one.dplus[x] >= exact.dplus[x] - 1e-12);
        }
        let zero = d_pm_sweep(&s, &vec![0.0; s.n()], &g, 2.0, &crate::normed::default_eps_grid()).unwrap();
        assert!(zero.dplus.iter().chain(&zero.dminus).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn piecewise_affine_eval() {
        let phi = PiecewiseAffine::new(vec![0.0], vec![-1.0, 1.0], 0.0).unwrap();
        for z in [-2.0, -0.5, 0.0, 0.25, 3.0] {
            assert!((phi.eval(z) - f64::abs(z)).abs() < 1e-15);
        }
        let psi = PiecewiseAffine::new(vec![-1.0, 2.0], vec![2.0, 0.5, -1.0], 1.0).unwrap();
        assert!((psi.eval(3.0) - (1.0 + 0.5 * 2.0 - 1.0)).abs() < 1e-15);
        assert!((psi.eval(-2.0) - (1.0 - 0.5 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn unit_factor_makes_leibniz_tight() {
        let s = build_euclidean_grid(&[6, 6], 0.2, None).unwrap();
        let mut rng = crate::rng::seeded(5);
        let f = random_field(&s, &mut rng, 3, 3.0);
        let g = random_field(&s, &mut rng, 3, 3.0);
        let r = leibniz_check(&s, &f, &vec![1.0; s.n()], &g).unwrap();
        assert!(r.pass);
        assert!(r.min_raw_slack_plus.abs() < 1e-12 && r.max_remainder == 0.0);
    }
}
