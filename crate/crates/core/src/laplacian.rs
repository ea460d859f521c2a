//! Interval-valued Laplacians by integration by parts, the linear generator
//! of the edge form, and carré du champ diagnostics.

use crate::directional::ActiveSets;
use crate::error::{invalid, MmsError, Result};
use crate::sobolev::{check_len, interior_points};
use crate::space::FiniteMms;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Which first-order structure pairs differentials with gradients.
#[derive(Clone, Copy, Debug)]
pub enum Calculus<'a> {
    /// Scale-`h` slopes; possibly two-valued pairings.
    Slope,
    /// Quadratic edge form; the pairing is the carré du champ.
    Hilbert(&'a LinearLaplacian),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacianInterval {
    pub lower: f64,
    pub upper: f64,
}

impl LaplacianInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Reject test functions that do not vanish within `h` of the lattice boundary.
pub fn check_support(space: &FiniteMms, f: &[f64]) -> Result<()> {
    let interior = interior_points(space);
    match (0..space.n()).find(|&x| !interior[x] && f[x] != 0.0) {
        Some(point) => Err(MmsError::SupportLeak { point }),
        None => Ok(()),
    }
}

/// Pointwise `(D⁺f(∇g), D⁻f(∇g))` under the chosen calculus.
pub fn pairings(space: &FiniteMms, f: &[f64], g: &[f64], calculus: Calculus<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(space, f)?;
    check_len(space, g)?;
    Ok(match calculus {
        Calculus::Slope => {
            let d = ActiveSets::new(space, g).pairing(f);
            (d.dplus, d.dminus)
        }
        Calculus::Hilbert(lap) => {
            let gam = lap.gamma(f, g);
            (gam.clone(), gam)
        }
    })
}

/// `(−Σ D⁺f(∇g)·m, −Σ D⁻f(∇g)·m)`.
pub fn laplacian_interval(space: &FiniteMms, g: &[f64], f: &[f64], calculus: Calculus<'_>) -> Result<LaplacianInterval> {
    check_len(space, f)?;
    check_support(space, f)?;
    let (dp, dm) = pairings(space, f, g, calculus)?;
    let w = space.weights();
    Ok(LaplacianInterval { lower: -dp.iter().zip(w).map(|(a, b)| a * b).sum::<f64>(), upper: -dm.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() })
}

/// `L g(x) = (1/m(x))·Σ_y c(x,y)(g(y) − g(x))`, stored as symmetric rows of
/// conductances.
#[derive(Clone, Debug)]
pub struct LinearLaplacian {
    weight: Vec<f64>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    cond: Vec<f64>,
}

impl LinearLaplacian {
    pub fn from_edges(weight: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = weight.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, c) in edges {
            if i >= n || j >= n || i == j {
                return invalid(format!("bad edge ({i}, {j})"));
            }
            rows[i].push((j, c));
            rows[j].push((i, c));
        }
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut cond = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (j, c) in r {
                targets.push(j);
                cond.push(c);
            }
            offsets.push(targets.len());
        }
        Ok(LinearLaplacian { weight, offsets, targets, cond })
    }

    pub fn n(&self) -> usize {
        self.weight.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[x]..self.offsets[x + 1];
        self.targets[r.clone()].iter().copied().zip(self.cond[r].iter().copied())
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|x| self.row(x).map(|(y, c)| c * (g[y] - g[x])).sum::<f64>() / self.weight[x]).collect()
    }

    /// `m(x)·(Lg)(x)`, the symmetric stiffness action.
    pub fn apply_stiffness(&self, g: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|x| self.row(x).map(|(y, c)| c * (g[y] - g[x])).sum::<f64>()).collect()
    }

    /// `Γ(f,g)(x) = (1/(2m(x)))·Σ_y c(x,y)(f(y)−f(x))(g(y)−g(x))`.
    pub fn gamma(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|x| self.row(x).map(|(y, c)| c * (f[y] - f[x]) * (g[y] - g[x])).sum::<f64>() / (2.0 * self.weight[x])).collect()
    }

    /// Dense copy of `L` (row-major).
    pub fn dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n * n];
        for x in 0..n {
            for (y, c) in self.row(x) {
                m[x * n + y] += c / self.weight[x];
                m[x * n + x] -= c / self.weight[x];
            }
        }
        m
    }

    /// Coordinate text `row col value`, diagonal first within each row.
    pub fn to_coo_text(&self) -> String {
        let mut out = String::new();
        for x in 0..self.n() {
            let diag: f64 = -self.row(x).map(|(_, c)| c).sum::<f64>() / self.weight[x];
            let _ = writeln!(out, "{x} {x} {diag:.17e}");
            for (y, c) in self.row(x) {
                let _ = writeln!(out, "{x} {y} {:.17e}", c / self.weight[x]);
            }
        }
        out
    }
}

pub fn graph_laplacian(space: &FiniteMms) -> Result<LinearLaplacian> {
    let edges = space.conductances().ok_or_else(|| MmsError::InvalidInput("space has no edge conductances".into()))?;
    LinearLaplacian::from_edges(space.weights().to_vec(), edges)
}

pub fn inner_m(space_weights: &[f64], f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).zip(space_weights).map(|((a, b), w)| a * b * w).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub holds: bool,
    /// Smallest distance of `⟨f,μ⟩` inside its interval over the basis (negative when outside).
    pub worst_slack: f64,
    pub homogeneity_holds: bool,
}

/// Check `lower(f) ≤ ⟨f,μ⟩ ≤ upper(f)` over a basis of test functions,
/// together with `λμ ∈ Δ(λg)` for a few `λ`.
pub fn membership_check(space: &FiniteMms, g: &[f64], mu: &[f64], basis: &[Vec<f64>], calculus: Calculus<'_>) -> Result<MembershipReport> {
    check_len(space, mu)?;
    let worst = |g: &[f64], mu: &[f64]| -> Result<f64> {
        let mut worst = f64::INFINITY;
        for f in basis {
            let iv = laplacian_interval(space, g, f, calculus)?;
            let pair: f64 = f.iter().zip(mu).map(|(a, b)| a * b).sum();
            worst = worst.min(pair - iv.lower).min(iv.upper - pair);
        }
        Ok(worst)
    };
    let worst_slack = worst(g, mu)?;
    let mut homogeneity_holds = true;
    for lambda in [2.0, 0.5, -1.0] {
        let lg: Vec<f64> = g.iter().map(|v| lambda * v).collect();
        let lmu: Vec<f64> = mu.iter().map(|v| lambda * v).collect();
        homogeneity_holds &= (worst(&lg, &lmu)? >= -1e-9) == (worst_slack >= -1e-9);
    }
    Ok(MembershipReport { holds: worst_slack >= -1e-9, worst_slack, homogeneity_holds })
}

/// Scalar maps with closed-form first and second derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScalarMap {
    Affine {
        slope: f64,
        offset: f64,
    },
    Square,
    /// `√(2z)`, turning `d²/2` back into `d`.
    SqrtTwice,
    Exp,
}

impl ScalarMap {
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            ScalarMap::Affine { slope, offset } => slope * z + offset,
            ScalarMap::Square => z * z,
            ScalarMap::SqrtTwice => (2.0 * z).sqrt(),
            ScalarMap::Exp => z.exp(),
        }
    }
    pub fn d1(&self, z: f64) -> f64 {
        match *self {
            ScalarMap::Affine { slope, .. } => slope,
            ScalarMap::Square => 2.0 * z,
            ScalarMap::SqrtTwice => 1.0 / (2.0 * z).sqrt(),
            ScalarMap::Exp => z.exp(),
        }
    }
    pub fn d2(&self, z: f64) -> f64 {
        match *self {
            ScalarMap::Affine { .. } => 0.0,
            ScalarMap::Square => 2.0,
            ScalarMap::SqrtTwice => -(2.0 * z).powf(-1.5),
            ScalarMap::Exp => z.exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLaplacianReport {
    /// Largest `|L(φ∘g) − φ'(g)Lg − φ''(g)Γ(g,g)|` over interior points.
    pub max_residual: f64,
    /// Same, relative to `|L(φ∘g)|` at that point.
    pub max_relative: f64,
    pub points: usize,
}

/// Chain rule for the linear Laplacian, restricted to `mask` (interior points by default).
pub fn chain_rule_laplacian_check(space: &FiniteMms, g: &[f64], phi: ScalarMap, mask: Option<&[bool]>) -> Result<ChainLaplacianReport> {
    check_len(space, g)?;
    let lap = graph_laplacian(space)?;
    let pg: Vec<f64> = g.iter().map(|&z| phi.value(z)).collect();
    let lhs = lap.apply(&pg);
    let lg = lap.apply(g);
    let gam = lap.gamma(g, g);
    let interior = match mask {
        Some(m) => m.to_vec(),
        None => interior_points(space),
    };
    let mut r = ChainLaplacianReport { max_residual: 0.0, max_relative: 0.0, points: 0 };
    for x in (0..space.n()).filter(|&x| interior[x]) {
        let rhs = phi.d1(g[x]) * lg[x] + phi.d2(g[x]) * gam[x];
        let res = (lhs[x] - rhs).abs();
        r.max_residual = r.max_residual.max(res);
        r.max_relative = r.max_relative.max(res / lhs[x].abs().max(1e-300));
        r.points += 1;
    }
    Ok(r)
}

/// Largest `|L(g₁g₂) − g₁Lg₂ − g₂Lg₁ − 2Γ(g₁,g₂)|`, and the asymmetry of Γ.
pub fn leibniz_laplacian_check(space: &FiniteMms, g1: &[f64], g2: &[f64]) -> Result<(f64, f64)> {
    check_len(space, g1)?;
    check_len(space, g2)?;
    let lap = graph_laplacian(space)?;
    let prod: Vec<f64> = g1.iter().zip(g2).map(|(a, b)| a * b).collect();
    let (lp, l1, l2) = (lap.apply(&prod), lap.apply(g1), lap.apply(g2));
    let gam = lap.gamma(g1, g2);
    let gam_t = lap.gamma(g2, g1);
    let mut res = 0.0_f64;
    let mut asym = 0.0_f64;
    for x in 0..space.n() {
        let scale = 1.0 + lp[x].abs() + (g1[x] * l2[x]).abs() + (g2[x] * l1[x]).abs();
        res = res.max((lp[x] - g1[x] * l2[x] - g2[x] * l1[x] - 2.0 * gam[x]).abs() / scale);
        asym = asym.max((gam[x] - gam_t[x]).abs());
    }
    Ok((res, asym))
}

/// `Γ(f,g)` from the edge form.
pub fn gamma(space: &FiniteMms, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    check_len(space, f)?;
    check_len(space, g)?;
    Ok(graph_laplacian(space)?.gamma(f, g))
}

/// `Γ₂(f) = ½(LΓ(f,f) − 2Γ(f,Lf))`.
pub fn gamma2(space: &FiniteMms, f: &[f64]) -> Result<Vec<f64>> {
    check_len(space, f)?;
    let lap = graph_laplacian(space)?;
    Ok(gamma2_with(&lap, f))
}

pub fn gamma2_with(lap: &LinearLaplacian, f: &[f64]) -> Vec<f64> {
    let gff = lap.gamma(f, f);
    let lgff = lap.apply(&gff);
    let lf = lap.apply(f);
    let gflf = lap.gamma(f, &lf);
    lgff.iter().zip(&gflf).map(|(a, b)| 0.5 * (a - 2.0 * b)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BochnerReport {
    /// `min_x Γ₂(f)(x) − K·Γ(f,f)(x)`.
    pub min_slack: f64,
    pub argmin: usize,
}

pub fn bochner_diagnostic(space: &FiniteMms, f: &[f64], k: f64) -> Result<BochnerReport> {
    check_len(space, f)?;
    let lap = graph_laplacian(space)?;
    let g2 = gamma2_with(&lap, f);
    let g1 = lap.gamma(f, f);
    let mut r = BochnerReport { min_slack: f64::INFINITY, argmin: 0 };
    for x in 0..space.n() {
        let s = g2[x] - k * g1[x];
        if s < r.min_slack {
            r = BochnerReport { min_slack: s, argmin: x };
        }
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfMeasureReport {
    /// Largest `|L'g − (Lg − Γ(V,g))|` over interior points, as densities.
    pub max_density_residual: f64,
    /// `|⟨f,μ'⟩ − ⟨f, e^{−V}(Lg − Γ(V,g))m⟩|` for the supplied test function.
    pub pairing_residual: f64,
}

/// Reweight the space by `e^{−V}` (masses at points, geometric means on
/// edges) and compare its Laplacian with `e^{−V}μ − Γ(V,g)e^{−V}m`.
pub fn change_of_measure_check(space: &FiniteMms, g: &[f64], v: &[f64], f: &[f64]) -> Result<ChangeOfMeasureReport> {
    check_len(space, g)?;
    check_len(space, v)?;
    check_len(space, f)?;
    let lap = graph_laplacian(space)?;
    let edges = space.conductances().unwrap_or_default();
    let w2: Vec<f64> = space.weights().iter().zip(v).map(|(w, vv)| w * (-vv).exp()).collect();
    let e2: Vec<(usize, usize, f64)> = edges.iter().map(|&(i, j, c)| (i, j, c * (-(v[i] + v[j]) / 2.0).exp())).collect();
    let lap2 = LinearLaplacian::from_edges(w2.clone(), &e2)?;
    let lg = lap.apply(g);
    let gvg = lap.gamma(v, g);
    let lg2 = lap2.apply(g);
    let interior = interior_points(space);
    let mut max_density_residual = 0.0_f64;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for x in 0..space.n() {
        let formula = lg[x] - gvg[x];
        if interior[x] {
            max_density_residual = max_density_residual.max((lg2[x] - formula).abs());
        }
        lhs += f[x] * lg2[x] * w2[x];
        rhs += f[x] * formula * w2[x];
    }
    Ok(ChangeOfMeasureReport { max_density_residual, pairing_residual: (lhs - rhs).abs() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    /// Largest pairing difference between a part and the whole at points
    /// whose `h`-ball stays inside the part.
    pub max_overlap_discrepancy: f64,
    /// Interval endpoints for each `g_n` minus those for `g`, per test function.
    pub endpoint_drift: Vec<f64>,
}

/// Locality of pairings under restriction to parts, and stability of
/// interval endpoints along `g_sequence → g`.
pub fn locality_and_stability_checks(
    space: &FiniteMms,
    g: &[f64],
    parts: &[Vec<usize>],
    g_sequence: &[Vec<f64>],
    tests: &[Vec<f64>],
) -> Result<LocalityReport> {
    check_len(space, g)?;
    let whole = ActiveSets::new(space, g);
    let mut max_disc = 0.0_f64;
    let graph = space.neighborhood();
    for part in parts {
        let sub = space.restrict(part)?;
        let gs: Vec<f64> = part.iter().map(|&i| g[i]).collect();
        let mut inside = vec![false; space.n()];
        for &i in part {
            inside[i] = true;
        }
        let sub_act = ActiveSets::new(&sub, &gs);
        for f in tests {
            let fs: Vec<f64> = part.iter().map(|&i| f[i]).collect();
            let dw = whole.pairing(f);
            let ds = sub_act.pairing(&fs);
            for (k, &i) in part.iter().enumerate() {
                if graph.neighbors(i).all(|(y, _)| inside[y]) {
                    max_disc = max_disc.max((dw.dplus[i] - ds.dplus[k]).abs()).max((dw.dminus[i] - ds.dminus[k]).abs());
                }
            }
        }
    }
    let mut endpoint_drift = Vec::new();
    for f in tests {
        let base = laplacian_interval(space, g, f, Calculus::Slope)?;
        for gn in g_sequence {
            let iv = laplacian_interval(space, gn, f, Calculus::Slope)?;
            endpoint_drift.push((iv.lower - base.lower).abs().max((iv.upper - base.upper).abs()));
        }
    }
    Ok(LocalityReport { max_overlap_discrepancy: max_disc, endpoint_drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_euclidean_grid, FiniteMms};

    fn path3() -> FiniteMms {
        FiniteMms::from_dense(vec![vec![0., 1., 2.], vec![1., 0., 1.], vec![2., 1., 0.]], vec![1.; 3], 1.0)
            .unwrap()
            .with_conductances(vec![(0, 1, 1.0), (1, 2, 1.0)])
            .unwrap()
    }

    pub(crate) fn k2() -> FiniteMms {
        FiniteMms::from_dense(vec![vec![0., 1.], vec![1., 0.]], vec![1.; 2], 1.0).unwrap().with_conductances(vec![(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn path_stencil() {
        let lap = graph_laplacian(&path3()).unwrap();
        assert_eq!(lap.apply(&[0.0, 1.0, 4.0])[1], 2.0);
        assert!(lap.apply(&[3.0; 3]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_has_unit_laplacian() {
        let s = build_euclidean_grid(&[11], 0.1, None).unwrap();
        let g: Vec<f64> = (0..11).map(|i| 0.5 * s.coord(i)[0].powi(2)).collect();
        let lg = graph_laplacian(&s).unwrap().apply(&g);
        for v in &lg[1..10] {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn two_node_gamma() {
        let s = k2();
        assert_eq!(gamma(&s, &[0.0, 1.0], &[0.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        let c = gamma2(&s, &[2.0, 2.0]).unwrap();
        assert!(c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn coo_export_lists_rows() {
        let text = graph_laplacian(&path3()).unwrap().to_coo_text();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("0 0 -1"));
    }

    #[test]
    fn constant_potential_rescales() {
        let s = build_euclidean_grid(&[8, 8], 0.1, None).unwrap();
        let g: Vec<f64> = (0..s.n()).map(|i| s.coord(i)[0].sin() + s.coord(i)[1].powi(2)).collect();
        let f = vec![0.0; s.n()];
        let r = change_of_measure_check(&s, &g, &vec![0.0; s.n()], &f).unwrap();
        assert_eq!(r.max_density_residual, 0.0);
        let r = change_of_measure_check(&s, &g, &vec![0.7; s.n()], &f).unwrap();
        assert!(r.max_density_residual < 1e-12);
    }
}
