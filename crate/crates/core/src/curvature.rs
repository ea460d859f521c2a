//! Distortion coefficients, internal energies and the curvature checks built
//! on them: convexity along interpolations, volume growth, the Laplacian
//! comparison chain and Busemann functions.

use crate::directional::d_pm_exact;
use crate::error::{invalid, MmsError, Result};
use crate::laplacian::{check_support, graph_laplacian, laplacian_interval, Calculus};
use crate::sobolev::{check_len, interior_points, local_slope, SlopeVariant};
use crate::space::{ball_volume, FiniteMms, Lattice, Metric};
use crate::transport::{c_transform_lattice, displacement_interpolation, wq_distance, ProbabilityVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionParams {
    pub k: f64,
    pub n: f64,
    pub t: f64,
    pub theta: f64,
}

impl DistortionParams {
    pub fn new(k: f64, n: f64, t: f64, theta: f64) -> Result<Self> {
        if !(n > 1.0) || !(0.0..=1.0).contains(&t) || !(theta >= 0.0) || !k.is_finite() {
            return invalid(format!("bad distortion parameters K={k}, N={n}, t={t}, θ={theta}"));
        }
        Ok(DistortionParams { k, n, t, theta })
    }

    pub fn tau(&self) -> f64 {
        tau(self.k, self.n, self.t, self.theta)
    }

    pub fn sigma(&self) -> f64 {
        sigma(self.k, self.n, self.t, self.theta)
    }
}

/// `ln(sin(tα)/sin(α))` or `ln(sinh(tα)/sinh(α))`.
fn log_sine_ratio(positive: bool, t: f64, a: f64) -> f64 {
    if positive {
        ((t * a).sin() / a.sin()).ln()
    } else if a > 20.0 {
        -(1.0 - t) * a + (-(-2.0 * t * a).exp()).ln_1p() - (-(-2.0 * a).exp()).ln_1p()
    } else {
        ((t * a).sinh() / a.sinh()).ln()
    }
}

fn sine_ratio(positive: bool, t: f64, a: f64) -> f64 {
    if positive || a <= 20.0 {
        if positive {
            (t * a).sin() / a.sin()
        } else {
            (t * a).sinh() / a.sinh()
        }
    } else {
        log_sine_ratio(false, t, a).exp()
    }
}

/// `σ^{(t)}_{K,N}(θ)`; `+∞` once `Kθ² ≥ Nπ²`.
pub fn sigma(k: f64, n: f64, t: f64, theta: f64) -> f64 {
    let kt = k * theta * theta;
    if kt >= n * PI * PI {
        f64::INFINITY
    } else if kt == 0.0 {
        t
    } else if kt > 0.0 {
        sine_ratio(true, t, theta * (k / n).sqrt())
    } else {
        sine_ratio(false, t, theta * (-k / n).sqrt())
    }
}

/// `τ^{(t)}_{K,N}(θ)`; `+∞` once `Kθ² ≥ (N−1)π²`.
pub fn tau(k: f64, n: f64, t: f64, theta: f64) -> f64 {
    let kt = k * theta * theta;
    if kt >= (n - 1.0) * PI * PI {
        return f64::INFINITY;
    }
    if kt == 0.0 {
        return t;
    }
    let a = theta * (k.abs() / (n - 1.0)).sqrt();
    if t == 0.0 {
        return 0.0;
    }
    if kt < 0.0 && a > 20.0 {
        return (t.ln() / n + (1.0 - 1.0 / n) * log_sine_ratio(false, t, a)).exp();
    }
    t.powf(1.0 / n) * sine_ratio(kt > 0.0, t, a).powf(1.0 - 1.0 / n)
}

/// Largest relative gap between `τ^{(t)}_{K,N}` and `t^{1/N}(σ^{(t)}_{K,N−1})^{1−1/N}` over the finite regime.
pub fn tau_sigma_relation_check(k: f64, n: f64, ts: &[f64], thetas: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for &t in ts {
        for &th in thetas {
            let a = tau(k, n, t, th);
            let b = t.powf(1.0 / n) * sigma(k, n - 1.0, t, th).powf(1.0 - 1.0 / n);
            if a.is_finite() && b.is_finite() {
                worst = worst.max((a - b).abs() / a.abs().max(1e-300));
            }
        }
    }
    worst
}

/// `α·cot α` or `α·coth α`, equal to 1 at 0.
fn cot_term(positive: bool, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else if positive {
        a * a.cos() / a.sin()
    } else {
        a / a.tanh()
    }
}

/// `τ̃_{K,N}(θ)`, the derivative of `τ^{(s)}` at `s = 1`.
pub fn tau_tilde(k: f64, n: f64, theta: f64) -> Result<f64> {
    if !(n > 1.0) || !(theta >= 0.0) {
        return invalid("τ̃ needs N > 1 and θ ≥ 0");
    }
    if k > 0.0 && k * theta * theta >= (n - 1.0) * PI * PI {
        return Err(MmsError::Domain(format!("Kθ² = {} reaches the diameter bound", k * theta * theta)));
    }
    if k == 0.0 {
        return Ok(1.0);
    }
    let a = theta * (k.abs() / (n - 1.0)).sqrt();
    Ok((1.0 + (n - 1.0) * cot_term(k > 0.0, a)) / n)
}

/// `σ̃_{K,N}(θ)`, the derivative of `σ^{(s)}` at `s = 1`.
pub fn sigma_tilde(k: f64, n: f64, theta: f64) -> Result<f64> {
    if !(n > 0.0) || !(theta >= 0.0) {
        return invalid("σ̃ needs N > 0 and θ ≥ 0");
    }
    if k > 0.0 && k * theta * theta >= n * PI * PI {
        return Err(MmsError::Domain(format!("Kθ² = {} reaches the diameter bound", k * theta * theta)));
    }
    if k == 0.0 {
        return Ok(1.0);
    }
    Ok(cot_term(k > 0.0, theta * (k.abs() / n).sqrt()))
}

/// `p_N(z) = z^{1−1/N}/N`.
pub fn pressure(z: f64, n: f64) -> f64 {
    z.powf(1.0 - 1.0 / n) / n
}

/// `u_N(z) = −z^{1−1/N}`.
pub fn u_n(z: f64, n: f64) -> f64 {
    -z.powf(1.0 - 1.0 / n)
}

/// `U_N(μ) = Σ u_N(ρ)·m` with `ρ = μ/m`.
pub fn internal_energy(space: &FiniteMms, mu: &ProbabilityVector, n: f64) -> Result<f64> {
    if mu.len() != space.n() {
        return invalid("measure length does not match the space");
    }
    if !(n > 1.0) {
        return invalid("N must exceed 1");
    }
    Ok(mu.mass().iter().zip(space.weights()).filter(|(m, _)| **m > 0.0).map(|(m, w)| w * u_n(m / w, n)).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; the row passes when `slack ≥ −tol`.
    pub slack: f64,
    pub tol: f64,
    pub checked: bool,
}

impl ResidualRow {
    pub fn new(label: impl Into<String>, lhs: f64, rhs: f64, tol: f64, checked: bool) -> Self {
        ResidualRow { label: label.into(), lhs, rhs, slack: rhs - lhs, tol, checked }
    }

    pub fn passes(&self) -> bool {
        !self.checked || self.slack >= -self.tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub experiment: String,
    pub rows: Vec<ResidualRow>,
    pub pass: bool,
    pub spacing: Option<f64>,
    pub h: f64,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    fn new(experiment: &str, space: &FiniteMms, rows: Vec<ResidualRow>, notes: Vec<String>) -> Self {
        let pass = rows.iter().all(ResidualRow::passes);
        ComparisonReport { experiment: experiment.into(), rows, pass, spacing: space.lattice().map(|l| l.spacing), h: space.h(), notes }
    }

    pub fn min_slack(&self) -> f64 {
        self.rows.iter().filter(|r| r.checked).map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,lhs,rhs,slack,tol,checked\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.17e},{:.17e},{:.17e},{:.3e},{}", r.label, r.lhs, r.rhs, r.slack, r.tol, r.checked);
        }
        out
    }
}

/// Exponents checked in place of "every `N′ ≥ N`".
pub fn n_prime_grid(n: f64) -> [f64; 3] {
    [n, n + 1.0, 2.0 * n]
}

/// Convexity of `U_{N′}` along the snapped displacement interpolation
/// against the distorted right side, for each `N′` and `t`.
/// Interior times pass within `rel_tol·|LHS|`; endpoints within `1e-12` relative.
pub fn cd_check(space: &FiniteMms, mu: &ProbabilityVector, nu: &ProbabilityVector, k: f64, n: f64, t_grid: &[f64], rel_tol: f64) -> Result<ComparisonReport> {
    let interp = displacement_interpolation(space, mu, nu, t_grid)?;
    let plan = wq_distance(space, mu, nu, 2.0)?.coupling;
    let w = space.weights();
    let mut rows = Vec::new();
    for np in n_prime_grid(n) {
        for (t, mt) in interp.times.iter().zip(&interp.measures) {
            let lhs = internal_energy(space, mt, np)?;
            let rhs: f64 = -plan
                .entries
                .iter()
                .map(|&(x, y, m)| {
                    let d = space.dist(x, y);
                    let a = tau(k, np, 1.0 - t, d);
                    let b = tau(k, np, *t, d);
                    let ra = (mu.mass()[x] / w[x]).powf(-1.0 / np);
                    let rb = (nu.mass()[y] / w[y]).powf(-1.0 / np);
                    m * (if a == 0.0 { 0.0 } else { a * ra } + if b == 0.0 { 0.0 } else { b * rb })
                })
                .sum::<f64>();
            let endpoint = *t == 0.0 || *t == 1.0;
            let tol = if endpoint { 1e-12 * lhs.abs() } else { rel_tol * lhs.abs() };
            rows.push(ResidualRow::new(format!("N'={np} t={t}"), lhs, rhs, tol, true));
        }
    }
    let mut notes = Vec::new();
    if interp.cut_pairs > 0 {
        notes.push(format!("{} coupled pairs sit on the cut locus", interp.cut_pairs));
    }
    Ok(ComparisonReport::new("cd-check", space, rows, notes))
}

/// Contraction toward `δ_{x₀}`; times above `0.9` are reported only.
pub fn mcp_variant(space: &FiniteMms, mu: &ProbabilityVector, x0: usize, k: f64, n: f64, t_grid: &[f64], rel_tol: f64) -> Result<ComparisonReport> {
    let target = ProbabilityVector::dirac(space.n(), x0)?;
    let interp = displacement_interpolation(space, mu, &target, t_grid)?;
    let w = space.weights();
    let mut rows = Vec::new();
    for (t, mt) in interp.times.iter().zip(&interp.measures) {
        // The Dirac endpoint is singular and carries no internal energy.
        let lhs = if *t == 1.0 { 0.0 } else { internal_energy(space, mt, n)? };
        let rhs: f64 = -(0..space.n())
            .filter(|&x| mu.mass()[x] > 0.0)
            .map(|x| {
                let a = tau(k, n, 1.0 - t, space.dist(x, x0));
                if a == 0.0 {
                    0.0
                } else {
                    mu.mass()[x] * a * (mu.mass()[x] / w[x]).powf(-1.0 / n)
                }
            })
            .sum::<f64>();
        let tol = if *t == 0.0 { 1e-12 * lhs.abs() } else { rel_tol * lhs.abs() };
        rows.push(ResidualRow::new(format!("t={t}"), lhs, rhs, tol, *t <= 0.9));
    }
    Ok(ComparisonReport::new("mcp", space, rows, vec![]))
}

/// `∫₀^r s_κ(ρ)^{N−1} dρ` with `κ = K/(N−1)`, by composite Gauss-Legendre.
pub fn model_volume(k: f64, n: f64, r: f64) -> f64 {
    const NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
    const WEIGHTS: [f64; 5] = [0.236_926_885_056_189_1, 0.478_628_670_499_366_5, 0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];
    let kappa = k / (n - 1.0);
    let s = |x: f64| -> f64 {
        if kappa > 0.0 {
            (kappa.sqrt() * x).sin() / kappa.sqrt()
        } else if kappa < 0.0 {
            ((-kappa).sqrt() * x).sinh() / (-kappa).sqrt()
        } else {
            x
        }
    };
    let panels = 256;
    let hstep = r / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * hstep;
        for (x, wt) in NODES.iter().zip(&WEIGHTS) {
            total += 0.5 * hstep * wt * s(mid + 0.5 * hstep * x).max(0.0).powf(n - 1.0);
        }
    }
    total
}

/// `m(B_r(x))/m(B_R(x))` against the model ratio, which it must dominate.
pub fn bishop_gromov_check(space: &FiniteMms, x: usize, r_grid: &[f64], big_r: f64, k: f64, n: f64, rel_tol: f64) -> Result<ComparisonReport> {
    if x >= space.n() {
        return invalid(format!("point {x} outside the space"));
    }
    if k > 0.0 && big_r > PI * ((n - 1.0) / k).sqrt() {
        return Err(MmsError::Domain("R exceeds the diameter bound".into()));
    }
    let vr = ball_volume(space, x, big_r);
    let mr = model_volume(k, n, big_r);
    let mut rows = Vec::new();
    for &r in r_grid {
        if !(r > 0.0 && r <= big_r) {
            return invalid(format!("radius {r} outside (0, R]"));
        }
        let measured = ball_volume(space, x, r) / vr;
        let model = model_volume(k, n, r) / mr;
        rows.push(ResidualRow::new(format!("r={r}"), model, measured, rel_tol * model, true));
    }
    Ok(ComparisonReport::new("bishop-gromov", space, rows, vec![]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceLaplacianProfile {
    pub points: usize,
    /// Largest `|Ld − bound|/bound` over the annulus.
    pub max_rel_deviation: f64,
    /// Largest `(Ld − bound)/bound`.
    pub max_rel_excess: f64,
    /// `(d, Ld, bound)` per annulus point.
    pub rows: Vec<(f64, f64, f64)>,
}

/// Graph Laplacian of `d(·, x₀)` on the annulus `lo ≤ d ≤ hi` against `(Nτ̃_{K,N}(d) − 1)/d`.
pub fn distance_laplacian_profile(space: &FiniteMms, x0: usize, k: f64, n: f64, lo: f64, hi: f64) -> Result<DistanceLaplacianProfile> {
    let lap = graph_laplacian(space)?;
    let d = space.dist_row(x0);
    let ld = lap.apply(&d);
    let interior = interior_points(space);
    let mut p = DistanceLaplacianProfile { points: 0, max_rel_deviation: 0.0, max_rel_excess: f64::NEG_INFINITY, rows: Vec::new() };
    for x in 0..space.n() {
        if !interior[x] || d[x] < lo || d[x] > hi {
            continue;
        }
        let bound = (n * tau_tilde(k, n, d[x])? - 1.0) / d[x];
        let rel = (ld[x] - bound) / bound.abs();
        p.points += 1;
        p.max_rel_deviation = p.max_rel_deviation.max(rel.abs());
        p.max_rel_excess = p.max_rel_excess.max(rel);
        p.rows.push((d[x], ld[x], bound));
    }
    if p.points == 0 {
        return invalid("annulus contains no interior points");
    }
    Ok(p)
}

/// `U_N` of `ρ·m` pushed along the model geodesics toward `x₀` up to time
/// `t`, with each cell's volume change computed from its mapped corners.
pub fn lagrangian_contraction_energy(space: &FiniteMms, rho: &[f64], x0: usize, t: f64, n: f64) -> Result<f64> {
    check_len(space, rho)?;
    let lattice = space.lattice().ok_or_else(|| MmsError::InvalidInput("Lagrangian energies need a lattice".into()))?;
    let dim = lattice.dims.len();
    if !(dim == 1 || dim == 2) || space.chart_density(space.coord(0)).is_none() {
        return invalid("Lagrangian energies need a flat or conformal chart of dimension 1 or 2");
    }
    let cs = lattice.spacing;
    let target = space.coord(x0).to_vec();
    let map = |p: &[f64]| -> Result<Vec<f64>> { Ok(space.geodesic_between(p, &target, t)?.0) };
    let mut total = 0.0;
    for x in 0..space.n() {
        if rho[x] <= 0.0 {
            continue;
        }
        let c = space.coord(x);
        let jac = if t == 0.0 {
            1.0
        } else {
            let image_center = map(c)?;
            let size = if dim == 1 {
                let a = map(&[c[0] - cs / 2.0])?;
                let b = map(&[c[0] + cs / 2.0])?;
                (b[0] - a[0]).abs()
            } else {
                let h = cs / 2.0;
                let corners = [[c[0] - h, c[1] - h], [c[0] + h, c[1] - h], [c[0] + h, c[1] + h], [c[0] - h, c[1] + h]];
                let img: Vec<Vec<f64>> = corners.iter().map(|q| map(q)).collect::<Result<_>>()?;
                let mut area = 0.0;
                for i in 0..4 {
                    let (p, q) = (&img[i], &img[(i + 1) % 4]);
                    area += p[0] * q[1] - q[0] * p[1];
                }
                0.5 * area.abs()
            };
            let dens = |p: &[f64]| space.chart_density(p).unwrap_or(1.0);
            size * dens(&image_center) / (cs.powi(dim as i32) * dens(c))
        };
        total += space.weight(x) * rho[x].powf(1.0 - 1.0 / n) * jac.powf(1.0 / n);
    }
    Ok(-total)
}

/// The three-way comparison for `φ = d²(·,x₀)/2` and a density `ρ₀`:
/// (a) `−∫D⁺(p_N(ρ₀))(∇φ) dm`, (b) the derivative of `U_N` along the
/// contraction toward `x₀`, (c) `∫ρ₀^{1−1/N} τ̃_{K,N}(d) dm`; plus the
/// integrated bounds for `Δ(d²/2)` and `Δd` tested against `ρ₀`.
pub fn laplacian_comparison_experiment(space: &FiniteMms, x0: usize, k: f64, n: f64, rho0: &[f64], rel_tol: f64) -> Result<ComparisonReport> {
    check_len(space, rho0)?;
    check_support(space, rho0)?;
    if rho0[x0] != 0.0 || rho0.iter().any(|v| *v < 0.0) {
        return invalid("ρ₀ must be nonnegative and vanish at the base point");
    }
    let w = space.weights();
    let mass: f64 = rho0.iter().zip(w).map(|(a, b)| a * b).sum();
    let rho: Vec<f64> = rho0.iter().map(|v| v / mass).collect();
    let d = space.dist_row(x0);
    let phi: Vec<f64> = d.iter().map(|v| 0.5 * v * v).collect();
    let pn: Vec<f64> = rho.iter().map(|&z| pressure(z, n)).collect();

    let dp = d_pm_exact(space, &pn, &phi)?;
    let a = -dp.dplus.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();

    let u0 = lagrangian_contraction_energy(space, &rho, x0, 0.0, n)?;
    let delta = 1e-4;
    let q1 = (lagrangian_contraction_energy(space, &rho, x0, delta, n)? - u0) / delta;
    let q2 = (lagrangian_contraction_energy(space, &rho, x0, delta / 2.0, n)? - u0) / (delta / 2.0);
    let b = 2.0 * q2 - q1;

    let tt: Vec<f64> = d.iter().map(|&v| tau_tilde(k, n, v)).collect::<Result<_>>()?;
    let c: f64 = (0..space.n()).map(|x| w[x] * rho[x].powf(1.0 - 1.0 / n) * tt[x]).sum();
    let tol = rel_tol * c.abs();

    let lap = graph_laplacian(space)?;
    let hilbert = Calculus::Hilbert(&lap);
    let up_phi = laplacian_interval(space, &phi, &rho, hilbert)?.upper;
    let bound_phi: f64 = (0..space.n()).map(|x| w[x] * rho[x] * n * tt[x]).sum();
    let up_d = laplacian_interval(space, &d, &rho, hilbert)?.upper;
    let bound_d: f64 = (0..space.n()).filter(|&x| rho[x] > 0.0).map(|x| w[x] * rho[x] * (n * tt[x] - 1.0) / d[x]).sum();

    let rows = vec![
        ResidualRow::new("(a) <= (b)", a, b, tol, true),
        ResidualRow::new("(b) <= (c)", b, c, tol, true),
        ResidualRow::new("Laplacian of d^2/2", up_phi, bound_phi, rel_tol * bound_phi.abs(), true),
        ResidualRow::new("Laplacian of d", up_d, bound_d, rel_tol * bound_d.abs(), true),
    ];
    Ok(ComparisonReport::new("comparison", space, rows, vec![format!("(a)={a:.9e} (b)={b:.9e} (c)={c:.9e}")]))
}

/// Axis-aligned ray `t ↦ origin + t·e` on a Euclidean lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec<f64>,
    pub axis: usize,
    pub positive: bool,
}

impl Ray {
    fn direction(&self, dim: usize) -> Vec<f64> {
        let mut e = vec![0.0; dim];
        e[self.axis] = if self.positive { 1.0 } else { -1.0 };
        e
    }
}

/// `b_t(x) = d(x, γ_t) − t`, written to avoid cancellation for huge `t`.
pub fn busemann_approximant(space: &FiniteMms, ray: &Ray, t: f64) -> Vec<f64> {
    let e = ray.direction(space.dim());
    (0..space.n())
        .map(|x| {
            let y: Vec<f64> = space.coord(x).iter().zip(&ray.origin).map(|(a, b)| a - b).collect();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let ey: f64 = y.iter().zip(&e).map(|(a, b)| a * b).sum();
            let dist = (yy - 2.0 * t * ey + t * t).max(0.0).sqrt();
            (yy - 2.0 * t * ey) / (dist + t)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusemannReport {
    /// `min_x b_{t_k}(x) − b_{t_{k+1}}(x)` over consecutive times.
    pub monotonicity_slack: f64,
    pub max_slope: f64,
    /// Largest `|slope⁻b − 1|` over interior points.
    pub descending_slope_deviation: f64,
    /// `‖b_{t_max} − b_{t_max/2}‖_∞`.
    pub stabilization: f64,
    /// `‖b − (−e·x + c)‖_∞` for the best constant.
    pub linear_residual: f64,
    /// `‖b^{cc} − b‖_∞` on the lattice.
    pub cc_gap: f64,
    /// Largest upper interval endpoint over the supplied nonnegative bumps, per unit sup norm.
    pub max_upper_endpoint: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusemannResult {
    pub approximants: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub report: BusemannReport,
}

/// Busemann function of an axis ray on a Euclidean lattice. The double
/// `c`-transform pairs the lattice with its unit translate along the ray.
pub fn busemann(space: &FiniteMms, ray: &Ray, t_list: &[f64], bumps: &[Vec<f64>]) -> Result<BusemannResult> {
    let lattice = space.lattice().ok_or_else(|| MmsError::InvalidInput("Busemann functions need a lattice".into()))?.clone();
    if !matches!(space.metric(), Metric::Normed(ns) if ns.is_strictly_convex() && ns.dim() == space.dim()) {
        return invalid("Busemann functions need a Euclidean lattice");
    }
    if ray.axis >= space.dim() || ray.origin.len() != space.dim() {
        return invalid("ray does not match the lattice");
    }
    if t_list.is_empty() || t_list.windows(2).any(|w| w[1] <= w[0]) || t_list[0] <= 0.0 {
        return invalid("times must be positive and increasing");
    }
    let t_max = *t_list.last().unwrap();
    let approximants: Vec<Vec<f64>> = t_list.iter().map(|&t| busemann_approximant(space, ray, t)).collect();
    let b = approximants.last().unwrap().clone();
    let half = busemann_approximant(space, ray, t_max / 2.0);
    let stabilization = b.iter().zip(&half).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if stabilization > 1e-8 {
        return Err(MmsError::Domain(format!("b_t has not stabilized: ‖b_T − b_(T/2)‖ = {stabilization:.3e}")));
    }
    let mut monotonicity_slack = f64::INFINITY;
    for w in approximants.windows(2) {
        for (a, c) in w[0].iter().zip(&w[1]) {
            monotonicity_slack = monotonicity_slack.min(a - c);
        }
    }
    let max_slope = local_slope(space, &b, SlopeVariant::Full).into_iter().fold(0.0, f64::max);
    let desc = local_slope(space, &b, SlopeVariant::Descending);
    let interior = interior_points(space);
    let descending_slope_deviation = (0..space.n()).filter(|&x| interior[x]).map(|x| (desc[x] - 1.0).abs()).fold(0.0, f64::max);

    let e = ray.direction(space.dim());
    let lin: Vec<f64> = (0..space.n()).map(|x| -space.coord(x).iter().zip(&e).map(|(a, b)| a * b).sum::<f64>()).collect();
    let offsets: Vec<f64> = b.iter().zip(&lin).map(|(a, c)| a - c).collect();
    let (lo, hi) = offsets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let linear_residual = 0.5 * (hi - lo);

    let cc_gap = double_c_transform_gap(&lattice, ray, &b)?;

    let lap = graph_laplacian(space)?;
    let mut max_upper_endpoint = f64::NEG_INFINITY;
    for f in bumps {
        if f.iter().any(|v| *v < 0.0) {
            return invalid("bumps must be nonnegative");
        }
        let sup = f.iter().fold(0.0_f64, |a, v| a.max(*v));
        let up = laplacian_interval(space, &b, f, Calculus::Hilbert(&lap))?.upper;
        max_upper_endpoint = max_upper_endpoint.max(up / sup.max(1e-300));
    }
    Ok(BusemannResult {
        approximants,
        b,
        report: BusemannReport { monotonicity_slack, max_slope, descending_slope_deviation, stabilization, linear_residual, cc_gap, max_upper_endpoint },
    })
}

fn double_c_transform_gap(lattice: &Lattice, ray: &Ray, b: &[f64]) -> Result<f64> {
    let extra = (1.0 / lattice.spacing).round() as usize;
    let mut dims = lattice.dims.clone();
    dims[ray.axis] += extra;
    let mut origin = lattice.origin.clone();
    if !ray.positive {
        origin[ray.axis] -= extra as f64 * lattice.spacing;
    }
    let big = Lattice { origin, spacing: lattice.spacing, dims };
    let shift = if ray.positive { 0 } else { extra };
    let home: Vec<usize> = (0..lattice.len())
        .map(|x| {
            let mut m = lattice.multi_index(x);
            m[ray.axis] += shift;
            big.index(&m)
        })
        .collect();
    let mut phi = vec![f64::NEG_INFINITY; big.len()];
    for (x, &i) in home.iter().enumerate() {
        phi[i] = b[x];
    }
    let bc = c_transform_lattice(&big, &phi)?;
    let bcc = c_transform_lattice(&big, &bc)?;
    Ok(home.iter().zip(b).map(|(&i, y)| (bcc[i] - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::build_euclidean_grid;

    #[test]
    fn coefficient_examples() {
        assert_eq!(tau(0.0, 3.0, 0.3, 5.0), 0.3);
        assert!((tau(-2.0, 3.0, 1.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((tau(1.0, 2.0, 0.5, PI / 2.0) - 2f64.powf(-0.75)).abs() < 1e-15);
        assert_eq!(tau(1.0, 2.0, 0.5, PI), f64::INFINITY);
        assert_eq!(tau_tilde(0.0, 4.0, 1.0).unwrap(), 1.0);
        assert!((tau_tilde(-1.0, 2.0, 1.0).unwrap() - 0.5 * (1.0 + 1.0 / 1f64.tanh())).abs() < 1e-15);
        assert!(tau_tilde(1.0, 2.0, PI).is_err());
    }

    #[test]
    fn huge_hyperbolic_arguments_stay_finite() {
        let v = tau(-1.0, 2.0, 0.5, 2000.0);
        assert!(v.is_finite() && v > 0.0);
        assert!((sigma(-1.0, 1.0, 0.5, 2000.0) - (-1000.0f64).exp()).abs() < 1e-300);
    }

    #[test]
    fn energies() {
        assert_eq!(u_n(1.0, 3.0), -1.0);
        assert_eq!(pressure(1.0, 4.0), 0.25);
        let s = build_euclidean_grid(&[5], 1.0, None).unwrap();
        let mu = ProbabilityVector::normalized(vec![1.0; 5]).unwrap();
        assert!((internal_energy(&s, &mu, 2.0).unwrap() + 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn model_volume_closed_forms() {
        assert!((model_volume(0.0, 3.0, 2.0) - 8.0 / 3.0).abs() < 1e-12);
        assert!((model_volume(1.0, 2.0, PI / 2.0) / model_volume(1.0, 2.0, PI) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn busemann_of_small_grid() {
        let s = build_euclidean_grid(&[11, 11], 0.1, None).unwrap();
        let ray = Ray { origin: vec![0.0, 0.0], axis: 0, positive: true };
        let r = busemann(&s, &ray, &[1e2, 1e6, 1e12], &[]).unwrap();
        assert!(r.report.linear_residual < 1e-10);
        assert!(r.report.cc_gap < 1e-9, "{:?}", r.report);
        assert!(r.report.monotonicity_slack > -1e-12);
    }
}
