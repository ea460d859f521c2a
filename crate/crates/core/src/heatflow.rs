//! Discrete heat flows: implicit Euler for the edge form, proximal steps for
//! `p`-energies, entropy and speed diagnostics, and the exact semigroup.

use crate::error::{invalid, MmsError, Result};
use crate::laplacian::{graph_laplacian, LinearLaplacian};
use crate::sobolev::{check_len, local_slope, SlopeVariant};
use crate::space::FiniteMms;
use crate::transport::{wq_distance, ProbabilityVector};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const DENSE_SEMIGROUP_LIMIT: usize = 2000;
const CG_TOL: f64 = 1e-13;

/// Jacobi-preconditioned conjugate gradients for a symmetric positive definite operator.
pub(crate) fn conjugate_gradient(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], diag: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(MmsError::Solver("operator is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    Err(MmsError::Solver(format!("conjugate gradients stalled at relative residual {res:.3e}")))
}

fn stiffness_diag(lap: &LinearLaplacian) -> Vec<f64> {
    (0..lap.n()).map(|x| lap.row(x).map(|(_, c)| c).sum()).collect()
}

/// Increment `d = f⁺ − f` of one implicit Euler step, mass-corrected.
fn implicit_increment(lap: &LinearLaplacian, f: &[f64], tau: f64) -> Result<Vec<f64>> {
    let w = lap.weights();
    let kdiag = stiffness_diag(lap);
    let diag: Vec<f64> = w.iter().zip(&kdiag).map(|(a, k)| a + tau * k).collect();
    let rhs: Vec<f64> = lap.apply_stiffness(f).iter().map(|v| tau * v).collect();
    let apply = |d: &[f64]| -> Vec<f64> {
        let kd = lap.apply_stiffness(d);
        (0..d.len()).map(|i| w[i] * d[i] - tau * kd[i]).collect()
    };
    let mut d = conjugate_gradient(apply, &rhs, &diag, CG_TOL, 20 * f.len() + 100)?;
    let total: f64 = w.iter().sum();
    let drift: f64 = d.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    d.iter_mut().for_each(|v| *v -= drift);
    Ok(d)
}

/// One implicit Euler step `(I − τL)f⁺ = f`.
pub fn heat_step_p2(space: &FiniteMms, f: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_len(space, f)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid("time step must be positive");
    }
    let lap = graph_laplacian(space)?;
    let d = implicit_increment(&lap, f, tau)?;
    Ok(f.iter().zip(&d).map(|(a, b)| a + b).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stepper {
    ImplicitP2,
    ProximalP,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub p: f64,
    pub stepper: Stepper,
}

impl FlowTrajectory {
    /// Long format `t,point,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,point,value\n");
        for (t, s) in self.times.iter().zip(&self.states) {
            for (i, v) in s.iter().enumerate() {
                let _ = writeln!(out, "{t:.17e},{i},{v:.17e}");
            }
        }
        out
    }

    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// Implicit Euler trajectory for the edge form.
pub fn heat_flow_p2(space: &FiniteMms, f: &[f64], tau: f64, steps: usize) -> Result<FlowTrajectory> {
    check_len(space, f)?;
    let lap = graph_laplacian(space)?;
    let mut states = vec![f.to_vec()];
    for _ in 0..steps {
        let cur = states.last().unwrap();
        let d = implicit_increment(&lap, cur, tau)?;
        states.push(cur.iter().zip(&d).map(|(a, b)| a + b).collect());
    }
    Ok(FlowTrajectory { times: (0..=steps).map(|k| k as f64 * tau).collect(), states, p: 2.0, stepper: Stepper::ImplicitP2 })
}

/// Regularization of `Γ` inside `Γ^{p/2}` for `p < 2`.
pub const P_ENERGY_DELTA: f64 = 1e-12;

/// `(1/p)·Σ m(x)·Γ(u,u)(x)^{p/2}`.
pub fn p_energy(lap: &LinearLaplacian, u: &[f64], p: f64) -> f64 {
    let delta = if p < 2.0 { P_ENERGY_DELTA } else { 0.0 };
    let gam = lap.gamma(u, u);
    gam.iter().zip(lap.weights()).map(|(g, w)| w * (g + delta).powf(p / 2.0)).sum::<f64>() / p
}

struct ProxProblem<'a> {
    lap: &'a LinearLaplacian,
    f: &'a [f64],
    tau: f64,
    p: f64,
    delta: f64,
}

impl ProxProblem<'_> {
    fn objective(&self, u: &[f64]) -> f64 {
        let w = self.lap.weights();
        let fid: f64 = (0..u.len()).map(|i| w[i] * (u[i] - self.f[i]).powi(2)).sum::<f64>() / (2.0 * self.tau);
        p_energy(self.lap, u, self.p) + fid
    }

    /// `a(x) = (Γ_x + δ)^{(p−2)/2}` and `b(x) = a'(G_x)/4` with `G_x = 2m(x)Γ_x`.
    fn coefficients(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w = self.lap.weights();
        let gam = self.lap.gamma(u, u);
        let e = (self.p - 2.0) / 2.0;
        let a = gam.iter().map(|g| if e == 0.0 { 1.0 } else { (g + self.delta).powf(e) }).collect();
        let b = gam.iter().zip(w).map(|(g, wx)| if e == 0.0 { 0.0 } else { e * (g + self.delta).powf(e - 1.0) / (2.0 * wx) / 4.0 }).collect();
        (a, b)
    }

    fn gradient(&self, u: &[f64], a: &[f64]) -> Vec<f64> {
        let w = self.lap.weights();
        (0..u.len())
            .map(|k| {
                let e: f64 = self.lap.row(k).map(|(y, c)| c * 0.5 * (a[k] + a[y]) * (u[y] - u[k])).sum();
                -e + w[k] * (u[k] - self.f[k]) / self.tau
            })
            .collect()
    }

    fn hess_vec(&self, u: &[f64], a: &[f64], b: &[f64], v: &[f64]) -> Vec<f64> {
        let w = self.lap.weights();
        let n = u.len();
        let mut out: Vec<f64> = (0..n)
            .map(|k| {
                let e: f64 = self.lap.row(k).map(|(y, c)| c * 0.5 * (a[k] + a[y]) * (v[y] - v[k])).sum();
                -e + w[k] * v[k] / self.tau
            })
            .collect();
        if b.iter().any(|x| *x != 0.0) {
            for x in 0..n {
                let s: f64 = 2.0 * self.lap.row(x).map(|(y, c)| c * (u[y] - u[x]) * (v[y] - v[x])).sum::<f64>();
                let coef = b[x] * s * 2.0;
                for (y, c) in self.lap.row(x) {
                    let g = c * (u[y] - u[x]);
                    out[y] += coef * g;
                    out[x] -= coef * g;
                }
            }
        }
        out
    }

    fn hess_diag(&self, a: &[f64]) -> Vec<f64> {
        let w = self.lap.weights();
        (0..a.len()).map(|k| self.lap.row(k).map(|(y, c)| c * 0.5 * (a[k] + a[y])).sum::<f64>() + w[k] / self.tau).collect()
    }
}

/// One proximal step `argmin C_p(u) + (1/2τ)Σ(u−f)²m` by damped Newton.
pub fn proximal_step(lap: &LinearLaplacian, f: &[f64], p: f64, tau: f64) -> Result<Vec<f64>> {
    let prob = ProxProblem { lap, f, tau, p, delta: if p < 2.0 { P_ENERGY_DELTA } else { 0.0 } };
    let w = lap.weights();
    let mut u = f.to_vec();
    for _ in 0..200 {
        let (a, b) = prob.coefficients(&u);
        let g = prob.gradient(&u, &a);
        let gnorm = g.iter().zip(w).map(|(x, wx)| (x / wx).abs()).fold(0.0, f64::max);
        if gnorm <= 1e-8 {
            return Ok(u);
        }
        let diag = prob.hess_diag(&a);
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let step = conjugate_gradient(|v| prob.hess_vec(&u, &a, &b, v), &neg, &diag, 1e-12, 20 * u.len() + 100)?;
        let j0 = prob.objective(&u);
        let slope: f64 = g.iter().zip(&step).map(|(x, s)| x * s).sum();
        // Below the objective's rounding level the Armijo test is noise; take the full step.
        let resolved = slope.abs() <= 1e-13 * (1.0 + j0.abs());
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(x, s)| x + t * s).collect();
            let j1 = prob.objective(&trial);
            if resolved || j1 <= j0 + 1e-4 * t * slope || t < 1e-12 {
                u = trial;
                break;
            }
            t *= 0.5;
        }
    }
    Err(MmsError::Solver("proximal Newton iteration stalled".into()))
}

/// Proximal trajectory for `C_p`; at `p = 2` it coincides with implicit Euler.
pub fn heat_flow_p(space: &FiniteMms, f: &[f64], p: f64, tau: f64, steps: usize) -> Result<FlowTrajectory> {
    check_len(space, f)?;
    if !(p > 1.0 && p.is_finite()) {
        return invalid("p must lie in (1, ∞)");
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid("time step must be positive");
    }
    if f.iter().any(|v| !v.is_finite()) {
        return invalid("initial datum must be finite");
    }
    let lap = graph_laplacian(space)?;
    let mut states = vec![f.to_vec()];
    for _ in 0..steps {
        let next = proximal_step(&lap, states.last().unwrap(), p, tau)?;
        states.push(next);
    }
    Ok(FlowTrajectory { times: (0..=steps).map(|k| k as f64 * tau).collect(), states, p, stepper: Stepper::ProximalP })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EntropyFunction {
    /// `−z^{1−1/N}`.
    Power {
        n: f64,
    },
    /// `(z^{3−q} − (3−q)z)/((3−q)(2−q))`, with `z log z − z` at `q = 2` and `z − log z` at `q = 3`.
    Uq {
        q: f64,
    },
    /// `z²/2`.
    Quadratic,
    Affine {
        slope: f64,
        offset: f64,
    },
}

impl EntropyFunction {
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            EntropyFunction::Power { n } => -z.powf(1.0 - 1.0 / n),
            EntropyFunction::Uq { q } if q == 2.0 => z * z.ln() - z,
            EntropyFunction::Uq { q } if q == 3.0 => z - z.ln(),
            EntropyFunction::Uq { q } => (z.powf(3.0 - q) - (3.0 - q) * z) / ((3.0 - q) * (2.0 - q)),
            EntropyFunction::Quadratic => 0.5 * z * z,
            EntropyFunction::Affine { slope, offset } => slope * z + offset,
        }
    }

    pub fn d1(&self, z: f64) -> f64 {
        match *self {
            EntropyFunction::Power { n } => -(1.0 - 1.0 / n) * z.powf(-1.0 / n),
            EntropyFunction::Uq { q } if q == 2.0 => z.ln(),
            EntropyFunction::Uq { q } if q == 3.0 => 1.0 - 1.0 / z,
            EntropyFunction::Uq { q } => (z.powf(2.0 - q) - 1.0) / (2.0 - q),
            EntropyFunction::Quadratic => z,
            EntropyFunction::Affine { slope, .. } => slope,
        }
    }

    pub fn d2(&self, z: f64) -> f64 {
        match *self {
            EntropyFunction::Power { n } => (1.0 - 1.0 / n) / n * z.powf(-1.0 - 1.0 / n),
            EntropyFunction::Uq { q } => z.powf(1.0 - q),
            EntropyFunction::Quadratic => 1.0,
            EntropyFunction::Affine { .. } => 0.0,
        }
    }

    /// `u(z + d) − u(z)` without cancellation.
    pub fn increment(&self, z: f64, d: f64) -> f64 {
        let r = d / z;
        match *self {
            EntropyFunction::Power { n } => {
                let a = 1.0 - 1.0 / n;
                -z.powf(a) * (a * r.ln_1p()).exp_m1()
            }
            EntropyFunction::Uq { q } if q == 2.0 => z * r.ln_1p() + d * (z + d).ln() - d,
            EntropyFunction::Uq { q } if q == 3.0 => d - r.ln_1p(),
            EntropyFunction::Uq { q } => {
                let b = 3.0 - q;
                (z.powf(b) * (b * r.ln_1p()).exp_m1() - b * d) / (b * (2.0 - q))
            }
            EntropyFunction::Quadratic => d * (z + 0.5 * d),
            EntropyFunction::Affine { slope, .. } => slope * d,
        }
    }

    /// `u'' ≥ 0` on a logarithmic sample of `(0, ∞)`.
    pub fn is_convex_on_samples(&self) -> bool {
        (-40..=40).map(|k| 10f64.powf(k as f64 / 8.0)).all(|z| self.d2(z) >= 0.0)
    }
}

fn gamma_power(lap: &LinearLaplacian, f: &[f64], p: f64) -> Vec<f64> {
    lap.gamma(f, f).into_iter().map(|g| g.max(0.0).powf(p / 2.0)).collect()
}

/// `−∫u''(f)·|Df|^p dm` with `|Df|² = Γ(f,f)`.
pub fn dissipation_rhs(lap: &LinearLaplacian, f: &[f64], u: EntropyFunction, p: f64) -> f64 {
    let gp = gamma_power(lap, f, p);
    -(0..f.len()).map(|x| lap.weights()[x] * u.d2(f[x]) * gp[x]).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationStep {
    pub t: f64,
    /// `Δ∫u(f)/τ`.
    pub lhs: f64,
    /// `−∫u''(f_t)|Df_t|^p dm`.
    pub rhs: f64,
    pub relative_residual: f64,
}

/// Per-step comparison of the entropy rate with its dissipation.
pub fn entropy_dissipation_check(space: &FiniteMms, traj: &FlowTrajectory, u: EntropyFunction, bounds: (f64, f64)) -> Result<Vec<DissipationStep>> {
    let lap = graph_laplacian(space)?;
    let (c, big_c) = bounds;
    for (k, s) in traj.states.iter().enumerate() {
        if let Some(x) = s.iter().position(|v| *v < c || *v > big_c) {
            return Err(MmsError::Domain(format!("state {k} leaves [{c}, {big_c}] at point {x} with value {}", s[x])));
        }
    }
    let w = lap.weights();
    let mut out = Vec::new();
    for k in 0..traj.states.len().saturating_sub(1) {
        let (a, b) = (&traj.states[k], &traj.states[k + 1]);
        let tau = traj.times[k + 1] - traj.times[k];
        let lhs = (0..a.len()).map(|x| w[x] * u.increment(a[x], b[x] - a[x])).sum::<f64>() / tau;
        let rhs = dissipation_rhs(&lap, a, u, traj.p);
        let relative_residual = (lhs - rhs).abs() / rhs.abs().max(1e-300);
        out.push(DissipationStep { t: traj.times[k], lhs, rhs, relative_residual });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationExtrapolation {
    pub taus: Vec<f64>,
    pub quotients: Vec<f64>,
    pub extrapolated: f64,
    pub rhs: f64,
    pub relative_residual: f64,
}

/// Entropy rate at `t = 0` from single implicit steps of size `τ₀, τ₀/2, τ₀/4`,
/// extrapolated to `τ → 0`.
pub fn dissipation_at_zero(space: &FiniteMms, f: &[f64], u: EntropyFunction, tau0: f64) -> Result<DissipationExtrapolation> {
    check_len(space, f)?;
    let lap = graph_laplacian(space)?;
    let w = lap.weights();
    let taus = vec![tau0, tau0 / 2.0, tau0 / 4.0];
    let mut quotients = Vec::new();
    for &tau in &taus {
        let d = implicit_increment(&lap, f, tau)?;
        quotients.push((0..f.len()).map(|x| w[x] * u.increment(f[x], d[x])).sum::<f64>() / tau);
    }
    let r1 = [2.0 * quotients[1] - quotients[0], 2.0 * quotients[2] - quotients[1]];
    let extrapolated = (4.0 * r1[1] - r1[0]) / 3.0;
    let rhs = dissipation_rhs(&lap, f, u, 2.0);
    let relative_residual = (extrapolated - rhs).abs() / rhs.abs().max(1e-300);
    Ok(DissipationExtrapolation { taus, quotients, extrapolated, rhs, relative_residual })
}

/// How `W_q` between consecutive states is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedMetric {
    /// Exact transport between point masses.
    PointMass,
    /// Piecewise-constant densities on the cells of a 1-D lattice.
    CellQuantile,
}

/// `W_q` between two piecewise-constant densities on consecutive cells of
/// width `spacing` starting at `lower`, via quantile functions.
pub fn cell_quantile_wq(lower: f64, spacing: f64, a: &[f64], b: &[f64], q: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return invalid("cell masses must have equal nonzero length");
    }
    let cum = |m: &[f64]| {
        let total: f64 = m.iter().sum();
        let mut c = vec![0.0];
        let mut acc = 0.0;
        for v in m {
            acc += v / total;
            c.push(acc);
        }
        *c.last_mut().unwrap() = 1.0;
        c
    };
    let (ca, cb) = (cum(a), cum(b));
    let quantile = |c: &[f64], k: usize, s: f64| -> f64 {
        let width = c[k + 1] - c[k];
        let frac = if width > 0.0 { ((s - c[k]) / width).clamp(0.0, 1.0) } else { 0.0 };
        lower + spacing * (k as f64 + frac)
    };
    let (mut i, mut j) = (0usize, 0usize);
    let mut s = 0.0;
    let mut total = 0.0;
    let nodes = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    let weights = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
    while i < a.len() && j < b.len() {
        let end = ca[i + 1].min(cb[j + 1]);
        if end > s {
            let (mid, half) = (0.5 * (s + end), 0.5 * (end - s));
            if q == 2.0 {
                let d0 = quantile(&ca, i, s) - quantile(&cb, j, s);
                let d1 = quantile(&ca, i, end) - quantile(&cb, j, end);
                total += (end - s) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
            } else {
                for (x, wt) in nodes.iter().zip(&weights) {
                    let u = mid + half * x;
                    total += half * wt * (quantile(&ca, i, u) - quantile(&cb, j, u)).abs().powf(q);
                }
            }
            s = end;
        }
        if ca[i + 1] <= end {
            i += 1;
        }
        if j < b.len() && cb[j + 1] <= end {
            j += 1;
        }
    }
    Ok(total.powf(1.0 / q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedStep {
    pub t: f64,
    /// `W_q(μ_t, μ_{t+τ})^q / τ^q`.
    pub lhs: f64,
    /// `∫|Df_t|^p / f_t^{q−1} dm`.
    pub rhs: f64,
    pub slack: f64,
}

/// Metric speed of the flow against its Fisher-type bound, per step.
pub fn wasserstein_speed_check(space: &FiniteMms, traj: &FlowTrajectory, q: f64, metric: SpeedMetric) -> Result<Vec<SpeedStep>> {
    if !(q > 1.0 && q.is_finite()) {
        return invalid("q must lie in (1, ∞)");
    }
    let lap = graph_laplacian(space)?;
    let w = lap.weights();
    let p = q / (q - 1.0);
    for (k, s) in traj.states.iter().enumerate() {
        let mass: f64 = s.iter().zip(w).map(|(a, b)| a * b).sum();
        if s.iter().any(|v| *v <= 0.0) || (mass - 1.0).abs() > 1e-9 {
            return invalid(format!("state {k} is not a positive probability density"));
        }
    }
    let lattice = match metric {
        SpeedMetric::CellQuantile => {
            let l = space.lattice().filter(|l| l.dims.len() == 1).ok_or_else(|| MmsError::InvalidInput("cell quantiles need a 1-D lattice".into()))?;
            Some((l.origin[0] - 0.5 * l.spacing, l.spacing))
        }
        SpeedMetric::PointMass => None,
    };
    let mut out = Vec::new();
    for k in 0..traj.states.len().saturating_sub(1) {
        let (a, b) = (&traj.states[k], &traj.states[k + 1]);
        let tau = traj.times[k + 1] - traj.times[k];
        let ma: Vec<f64> = a.iter().zip(w).map(|(x, y)| x * y).collect();
        let mb: Vec<f64> = b.iter().zip(w).map(|(x, y)| x * y).collect();
        let wq = match lattice {
            Some((lower, spacing)) => cell_quantile_wq(lower, spacing, &ma, &mb, q)?,
            None => wq_distance(space, &ProbabilityVector::normalized(ma)?, &ProbabilityVector::normalized(mb)?, q)?.value,
        };
        let lhs = (wq / tau).powf(q);
        let gp = gamma_power(&lap, a, p);
        let rhs: f64 = (0..a.len()).map(|x| w[x] * gp[x] / a[x].powf(q - 1.0)).sum();
        out.push(SpeedStep { t: traj.times[k], lhs, rhs, slack: rhs - lhs });
    }
    Ok(out)
}

/// `H_t = exp(tL)` from the symmetric eigendecomposition of `m^{-1/2}·K·m^{-1/2}`.
#[derive(Clone, Debug)]
pub struct Semigroup {
    lap: LinearLaplacian,
    sqrt_w: Vec<f64>,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl Semigroup {
    pub fn new(space: &FiniteMms) -> Result<Self> {
        let lap = graph_laplacian(space)?;
        let n = lap.n();
        if n > DENSE_SEMIGROUP_LIMIT {
            return invalid(format!("dense semigroup limited to {DENSE_SEMIGROUP_LIMIT} points, got {n}"));
        }
        let sqrt_w: Vec<f64> = lap.weights().iter().map(|w| w.sqrt()).collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for x in 0..n {
            for (y, c) in lap.row(x) {
                s[(x, y)] -= c / (sqrt_w[x] * sqrt_w[y]);
                s[(x, x)] += c / (sqrt_w[x] * sqrt_w[x]);
            }
        }
        let eig = SymmetricEigen::new(s);
        let eigenvalues = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        Ok(Semigroup { lap, sqrt_w, eigenvalues, vectors: eig.eigenvectors })
    }

    pub fn laplacian(&self) -> &LinearLaplacian {
        &self.lap
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn spectral(&self, f: &[f64], mult: impl Fn(f64) -> f64) -> Vec<f64> {
        let g = DVector::from_iterator(f.len(), f.iter().zip(&self.sqrt_w).map(|(a, s)| a * s));
        let mut coef = self.vectors.tr_mul(&g);
        for (c, l) in coef.iter_mut().zip(&self.eigenvalues) {
            *c *= mult(*l);
        }
        let out = &self.vectors * coef;
        out.iter().zip(&self.sqrt_w).map(|(a, s)| a / s).collect()
    }

    /// `H_t f`.
    pub fn apply(&self, t: f64, f: &[f64]) -> Vec<f64> {
        if t == 0.0 {
            return f.to_vec();
        }
        self.spectral(f, |l| (-t * l).exp())
    }

    /// `(H_t f − f)/t`, free of cancellation.
    pub fn difference_quotient(&self, t: f64, f: &[f64]) -> Vec<f64> {
        self.spectral(f, |l| (-t * l).exp_m1() / t)
    }

    /// Masses of `H̃_t μ`: the adjoint action on a measure.
    pub fn apply_to_measure(&self, t: f64, mu: &[f64]) -> Vec<f64> {
        let dens: Vec<f64> = mu.iter().zip(self.lap.weights()).map(|(m, w)| m / w).collect();
        self.apply(t, &dens).iter().zip(self.lap.weights()).map(|(d, w)| d * w).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEntry {
    pub t: f64,
    pub self_adjointness: f64,
    pub commutation: f64,
    pub semigroup_property: f64,
    pub doubling_check: f64,
    /// Largest scale-`h` slope of `H_t f`.
    pub lipschitz: f64,
    /// `‖f‖_∞/√(2t)`.
    pub lipschitz_bound: f64,
    /// `min_x H_tΓ(f)(x) − Γ(H_t f)(x)`.
    pub bakry_emery_slack: f64,
}

fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |a, b| a.max(b.abs()))
}

/// Self-adjointness, commutation with `L`, the semigroup law and the
/// curvature-free regularization bounds, per time.
pub fn semigroup_identities(space: &FiniteMms, t_list: &[f64], f: &[f64], g: &[f64], rho: &[f64]) -> Result<Vec<SemigroupEntry>> {
    check_len(space, f)?;
    check_len(space, g)?;
    check_len(space, rho)?;
    let sg = Semigroup::new(space)?;
    let lap = sg.laplacian();
    let w = lap.weights();
    let mu: Vec<f64> = rho.iter().zip(w).map(|(r, wx)| r * wx).collect();
    let inner = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let fnorm = max_abs(f.iter().copied());
    let slope_f = lap.gamma(f, f);
    let mut out = Vec::new();
    for &t in t_list {
        let htf = sg.apply(t, f);
        let lhs = inner(f, &sg.apply_to_measure(t, &mu));
        let rhs = inner(&htf, &mu);
        let self_adjointness = (lhs - rhs).abs() / (1.0 + lhs.abs());
        let lhtg = lap.apply(&sg.apply(t, g));
        let htlg = sg.apply(t, &lap.apply(g));
        let scale = 1.0 + max_abs(lhtg.iter().copied());
        let commutation = max_abs(lhtg.iter().zip(&htlg).map(|(a, b)| a - b)) / scale;
        let half = sg.apply(t / 2.0, &sg.apply(t / 2.0, f));
        let semigroup_property = max_abs(half.iter().zip(&htf).map(|(a, b)| a - b)) / (1.0 + fnorm);
        let quarter = (0..4).fold(f.to_vec(), |acc, _| sg.apply(t / 4.0, &acc));
        let doubling_check = max_abs(quarter.iter().zip(&htf).map(|(a, b)| a - b)) / (1.0 + fnorm);
        if doubling_check > 1e-9 {
            return Err(MmsError::Solver(format!("exponential accuracy check failed at t = {t}: {doubling_check:.3e}")));
        }
        let lipschitz = local_slope(space, &htf, SlopeVariant::Full).into_iter().fold(0.0, f64::max);
        let lipschitz_bound = if t > 0.0 { fnorm / (2.0 * t).sqrt() } else { f64::INFINITY };
        let ht_gamma = sg.apply(t, &slope_f);
        let gamma_ht = lap.gamma(&htf, &htf);
        let bakry_emery_slack = ht_gamma.iter().zip(&gamma_ht).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
        out.push(SemigroupEntry { t, self_adjointness, commutation, semigroup_property, doubling_check, lipschitz, lipschitz_bound, bakry_emery_slack });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatLaplacianEstimate {
    pub times: Vec<f64>,
    pub quotients: Vec<f64>,
    pub extrapolated: f64,
    /// `⟨f, Lg⟩_m`.
    pub direct: f64,
    pub relative_error: f64,
}

/// `∫f(H_t g − g)/t dm` along `t_grid`, Richardson-extrapolated over the
/// last three entries (assumed to halve successively).
pub fn heat_laplacian_variant(space: &FiniteMms, g: &[f64], f: &[f64], t_grid: &[f64]) -> Result<HeatLaplacianEstimate> {
    check_len(space, f)?;
    check_len(space, g)?;
    heat_laplacian_variant_with(&Semigroup::new(space)?, g, f, t_grid)
}

/// [`heat_laplacian_variant`] reusing a decomposed semigroup.
pub fn heat_laplacian_variant_with(sg: &Semigroup, g: &[f64], f: &[f64], t_grid: &[f64]) -> Result<HeatLaplacianEstimate> {
    let w = sg.laplacian().weights();
    if f.len() != w.len() || g.len() != w.len() {
        return invalid("field length does not match the semigroup");
    }
    if t_grid.len() < 3 || t_grid.iter().any(|t| *t <= 0.0) {
        return invalid("need at least three positive times");
    }
    let quotients: Vec<f64> = t_grid.iter().map(|&t| sg.difference_quotient(t, g).iter().zip(f).zip(w).map(|((a, b), c)| a * b * c).sum()).collect();
    let k = quotients.len();
    let (q0, q1, q2) = (quotients[k - 3], quotients[k - 2], quotients[k - 1]);
    let r1 = [2.0 * q1 - q0, 2.0 * q2 - q1];
    let extrapolated = (4.0 * r1[1] - r1[0]) / 3.0;
    let lg = sg.laplacian().apply(g);
    let direct: f64 = lg.iter().zip(f).zip(w).map(|((a, b), c)| a * b * c).sum();
    let scale = direct.abs().max(1e-300);
    Ok(HeatLaplacianEstimate { times: t_grid.to_vec(), quotients, extrapolated, direct, relative_error: (extrapolated - direct).abs() / scale })
}
