//! Exact optimal transport between finitely supported measures, c-transforms
//! for the cost `d²/2`, displacement interpolation and the metric Brenier check.

use crate::error::{invalid, MmsError, Result};
use crate::sobolev::{check_len, local_slope, SlopeVariant};
use crate::space::{FiniteMms, Lattice};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const MASS_TOL: f64 = 1e-12;
const MAX_CELLS: usize = 50_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if let Some(i) = mass.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return invalid(format!("mass at {i} is negative or not finite"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return invalid(format!("masses sum to {total}"));
        }
        Ok(ProbabilityVector(mass))
    }

    /// Divide a nonnegative vector by its total.
    pub fn normalized(mass: Vec<f64>) -> Result<Self> {
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return invalid("masses must be finite and nonnegative");
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return invalid("zero total mass");
        }
        Ok(ProbabilityVector(mass.into_iter().map(|m| m / total).collect()))
    }

    pub fn dirac(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return invalid(format!("point {i} outside a space of {n} points"));
        }
        let mut m = vec![0.0; n];
        m[i] = 1.0;
        Ok(ProbabilityVector(m))
    }

    /// Density `ρ` against the reference weights, normalized.
    pub fn from_density(space: &FiniteMms, rho: &[f64]) -> Result<Self> {
        check_len(space, rho)?;
        Self::normalized(rho.iter().zip(space.weights()).map(|(r, w)| r * w).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.0
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }

    /// `m(x)/w(x)`.
    pub fn density(&self, space: &FiniteMms) -> Vec<f64> {
        self.0.iter().zip(space.weights()).map(|(m, w)| m / w).collect()
    }
}

/// Sparse transport plan on an `n`-point space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Coupling {
    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        for &(i, _, m) in &self.entries {
            r[i] += m;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n];
        for &(_, j, m) in &self.entries {
            c[j] += m;
        }
        c
    }

    pub fn marginal_error(&self, mu: &ProbabilityVector, nu: &ProbabilityVector) -> f64 {
        let r = self.row_sums();
        let c = self.col_sums();
        let a = r.iter().zip(mu.mass()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        c.iter().zip(nu.mass()).map(|(x, y)| (x - y).abs()).fold(a, f64::max)
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for &(i, j, v) in &self.entries {
            m[i][j] += v;
        }
        m
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,mass\n");
        for &(i, j, m) in &self.entries {
            let _ = writeln!(out, "{i},{j},{m:.17e}");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexSolution {
    /// Basic cells `(row, col, flow)`, degenerate zeros included.
    pub flows: Vec<(usize, usize, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub min_reduced_cost: f64,
    pub pivots: usize,
}

struct Tree {
    m: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Tree {
    fn ends(&self, k: usize) -> (usize, usize) {
        let (i, j) = self.cells[k];
        (i, self.m + j)
    }

    fn other(&self, k: usize, node: usize) -> usize {
        let (a, b) = self.ends(k);
        if node == a {
            b
        } else {
            a
        }
    }

    fn duals(&self, cost: &[f64], n: usize, u: &mut [f64], v: &mut [f64]) {
        let m = self.m;
        let mut seen = vec![false; m + n];
        let mut stack = vec![0usize];
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &k in &self.adj[node] {
                let next = self.other(k, node);
                if seen[next] {
                    continue;
                }
                let (i, j) = self.cells[k];
                let c = cost[i * n + j];
                if next >= m {
                    v[j] = c - u[i];
                } else {
                    u[i] = c - v[j];
                }
                seen[next] = true;
                stack.push(next);
            }
        }
    }

    /// Cells on the tree path from `to` back to `root`.
    fn path(&self, root: usize, to: usize) -> Vec<usize> {
        let mut parent = vec![usize::MAX; self.adj.len()];
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(node) = stack.pop() {
            if node == to {
                break;
            }
            for &k in &self.adj[node] {
                let next = self.other(k, node);
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = k;
                    stack.push(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = to;
        while node != root {
            let k = parent[node];
            out.push(k);
            node = self.other(k, node);
        }
        out
    }
}

/// Transportation simplex: northwest-corner start, block-search pricing,
/// Bland's rule after a run of degenerate pivots.
pub fn transportation_simplex(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<SimplexSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return invalid("empty marginal");
    }
    if m.saturating_mul(n) > MAX_CELLS {
        return invalid(format!("{m}x{n} cost matrix is too large"));
    }
    if cost.len() != m * n || cost.iter().any(|c| !c.is_finite()) {
        return invalid("cost matrix has the wrong size or non-finite entries");
    }
    if supply.iter().chain(demand).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return invalid("marginals must be finite and nonnegative");
    }
    let sa: f64 = supply.iter().sum();
    let sb: f64 = demand.iter().sum();
    if (sa - sb).abs() > 1e-10 || sa <= 0.0 {
        return invalid(format!("mass mismatch: {sa} vs {sb}"));
    }
    let demand: Vec<f64> = demand.iter().map(|b| b * sa / sb).collect();

    let mut tree = Tree { m, cells: Vec::with_capacity(m + n - 1), flow: Vec::new(), adj: vec![Vec::new(); m + n] };
    let (mut ra, mut rb) = (supply.to_vec(), demand.clone());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = ra[i].min(rb[j]);
        ra[i] -= x;
        rb[j] -= x;
        let k = tree.cells.len();
        tree.cells.push((i, j));
        tree.flow.push(x);
        tree.adj[i].push(k);
        tree.adj[m + j].push(k);
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && ra[i] <= rb[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let scale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
    let tol = 1e-11 * scale;
    let total = m * n;
    let block = ((total as f64).sqrt().ceil() as usize).clamp(1, total);
    let (mut u, mut v) = (vec![0.0; m], vec![0.0; n]);
    let mut cursor = 0usize;
    let mut degenerate_run = 0usize;
    let mut bland = false;
    let mut pivots = 0usize;
    let cap = 100 * (m + n) * (m + n) + 10_000;
    loop {
        tree.duals(cost, n, &mut u, &mut v);
        let reduced = |idx: usize| cost[idx] - u[idx / n] - v[idx % n];
        let entering = if bland {
            (0..total).find(|&idx| reduced(idx) < -tol)
        } else {
            let mut best: Option<(usize, f64)> = None;
            let mut scanned = 0;
            while scanned < total {
                let stop = (scanned + block).min(total);
                while scanned < stop {
                    let r = reduced(cursor);
                    if r < -tol && best.is_none_or(|(_, b)| r < b) {
                        best = Some((cursor, r));
                    }
                    cursor = (cursor + 1) % total;
                    scanned += 1;
                }
                if best.is_some() {
                    break;
                }
            }
            best.map(|(idx, _)| idx)
        };
        let Some(idx) = entering else { break };
        let (ei, ej) = (idx / n, idx % n);
        let path = tree.path(ei, m + ej);
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 1 {
                continue;
            }
            let f = tree.flow[k];
            let better = f < theta
                || (bland && f == theta && {
                    let (a, b) = tree.cells[k];
                    let (c, d) = tree.cells[leave];
                    a * n + b < c * n + d
                });
            if better {
                theta = f;
                leave = k;
            }
        }
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                tree.flow[k] = (tree.flow[k] - theta).max(0.0);
            } else {
                tree.flow[k] += theta;
            }
        }
        let (li, lj) = tree.cells[leave];
        tree.adj[li].retain(|&k| k != leave);
        tree.adj[m + lj].retain(|&k| k != leave);
        tree.cells[leave] = (ei, ej);
        tree.flow[leave] = theta;
        tree.adj[ei].push(leave);
        tree.adj[m + ej].push(leave);

        if theta > 0.0 {
            degenerate_run = 0;
            bland = false;
        } else {
            degenerate_run += 1;
            if degenerate_run > 2 * (m + n) {
                bland = true;
            }
        }
        pivots += 1;
        if pivots > cap {
            return Err(MmsError::Solver(format!("no convergence after {pivots} pivots")));
        }
    }
    tree.duals(cost, n, &mut u, &mut v);
    let min_reduced_cost = (0..total).map(|idx| cost[idx] - u[idx / n] - v[idx % n]).fold(f64::INFINITY, f64::min);
    let flows: Vec<(usize, usize, f64)> = tree.cells.iter().zip(&tree.flow).map(|(&(i, j), &f)| (i, j, f)).collect();
    let primal = flows.iter().map(|&(i, j, f)| f * cost[i * n + j]).sum();
    let dual = supply.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() + demand.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    Ok(SimplexSolution { flows, u, v, primal, dual, min_reduced_cost, pivots })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub duality_gap: f64,
    pub min_reduced_cost: f64,
    pub marginal_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transport {
    /// `W_q`.
    pub value: f64,
    /// Optimal total cost.
    pub cost: f64,
    pub coupling: Coupling,
    pub source_support: Vec<usize>,
    pub target_support: Vec<usize>,
    /// Dual variables on the two supports.
    pub source_dual: Vec<f64>,
    pub target_dual: Vec<f64>,
    pub certificate: Certificate,
}

fn solve_on_space(space: &FiniteMms, mu: &ProbabilityVector, nu: &ProbabilityVector, cost_of: impl Fn(f64) -> f64 + Sync) -> Result<Transport> {
    if mu.len() != space.n() || nu.len() != space.n() {
        return invalid("measure length does not match the space");
    }
    let sa = mu.support();
    let sb = nu.support();
    let cost: Vec<f64> = sa.par_iter().flat_map_iter(|&x| sb.iter().map(|&y| cost_of(space.dist(x, y))).collect::<Vec<_>>()).collect();
    let a: Vec<f64> = sa.iter().map(|&x| mu.mass()[x]).collect();
    let b: Vec<f64> = sb.iter().map(|&y| nu.mass()[y]).collect();
    let sol = transportation_simplex(&a, &b, &cost)?;
    let coupling = Coupling { n: space.n(), entries: sol.flows.iter().filter(|f| f.2 > 0.0).map(|&(i, j, f)| (sa[i], sb[j], f)).collect() };
    let scale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
    let certificate =
        Certificate { duality_gap: (sol.primal - sol.dual).abs(), min_reduced_cost: sol.min_reduced_cost, marginal_error: coupling.marginal_error(mu, nu) };
    if certificate.duality_gap > 1e-9 * scale || certificate.min_reduced_cost < -1e-9 * scale || certificate.marginal_error > 1e-10 {
        return Err(MmsError::Solver(format!(
            "optimality certificate failed: gap {:.3e}, reduced cost {:.3e}, marginals {:.3e}",
            certificate.duality_gap, certificate.min_reduced_cost, certificate.marginal_error
        )));
    }
    Ok(Transport { value: sol.primal, cost: sol.primal, coupling, source_support: sa, target_support: sb, source_dual: sol.u, target_dual: sol.v, certificate })
}

/// Exact `W_q(μ, ν)` with cost `d^q`.
pub fn wq_distance(space: &FiniteMms, mu: &ProbabilityVector, nu: &ProbabilityVector, q: f64) -> Result<Transport> {
    if !(q > 1.0 && q.is_finite()) {
        return invalid("q must lie in (1, ∞)");
    }
    let mut t = solve_on_space(space, mu, nu, |d| d.powf(q))?;
    t.value = t.cost.max(0.0).powf(1.0 / q);
    Ok(t)
}

/// `φ^c(y) = min_x d²(x,y)/2 − φ(x)` by a full scan.
pub fn c_transform(space: &FiniteMms, phi: &[f64]) -> Result<Vec<f64>> {
    check_len(space, phi)?;
    let all: Vec<usize> = (0..space.n()).collect();
    Ok(c_transform_between(space, phi, &all, &all))
}

/// `c`-transform of `φ` given on `from`, evaluated on `to`.
pub fn c_transform_between(space: &FiniteMms, phi: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    to.par_iter().map(|&y| from.iter().zip(phi).map(|(&x, p)| 0.5 * space.dist(x, y).powi(2) - p).fold(f64::INFINITY, f64::min)).collect()
}

/// `c`-transform on a Euclidean lattice, one axis at a time.
///
/// Points with `φ = −∞` are excluded from the minimum, so a sub-box can act
/// as the source set. Exact for the quadratic cost, since it separates over
/// coordinates; the cost is `O(n · Σ dims)` instead of `O(n²)`.
pub fn c_transform_lattice(lattice: &Lattice, phi: &[f64]) -> Result<Vec<f64>> {
    if phi.len() != lattice.len() {
        return invalid("field length does not match the lattice");
    }
    let mut cur: Vec<f64> = phi.iter().map(|p| -p).collect();
    let mut stride = 1usize;
    for &len in &lattice.dims {
        let kernel: Vec<f64> = (0..len).map(|k| 0.5 * (k as f64 * lattice.spacing).powi(2)).collect();
        let block = stride * len;
        let next: Vec<f64> = (0..cur.len())
            .into_par_iter()
            .map(|y| {
                let base = y - y % block + y % stride;
                let iy = (y / stride) % len;
                (0..len).map(|ix| kernel[ix.abs_diff(iy)] + cur[base + ix * stride]).fold(f64::INFINITY, f64::min)
            })
            .collect();
        cur = next;
        stride = block;
    }
    Ok(cur)
}

/// A `c`-concave function with its transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KantorovichPotential {
    pub phi: Vec<f64>,
    pub phic: Vec<f64>,
}

impl KantorovichPotential {
    /// Accept `φ` only when `φ^{cc} = φ` within `1e-10` (relative to its size).
    pub fn c_concave(space: &FiniteMms, phi: Vec<f64>) -> Result<Self> {
        let phic = c_transform(space, &phi)?;
        let phicc = c_transform(space, &phic)?;
        let scale = 1.0 + phi.iter().fold(0.0_f64, |a, p| a.max(p.abs()));
        let gap = phi.iter().zip(&phicc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-10 * scale {
            return Err(MmsError::Domain(format!("not c-concave: |φ^cc − φ| reaches {gap:.3e}")));
        }
        Ok(KantorovichPotential { phi, phic })
    }

    /// `{y : φ(x) + φ^c(y) = d²(x,y)/2}` within `1e-9`.
    pub fn superdifferential(&self, space: &FiniteMms, x: usize) -> Vec<usize> {
        let scale = 1.0 + self.phi[x].abs();
        (0..space.n()).filter(|&y| (self.phi[x] + self.phic[y] - 0.5 * space.dist(x, y).powi(2)).abs() <= 1e-9 * scale).collect()
    }

    pub fn dual_value(&self, mu: &ProbabilityVector, nu: &ProbabilityVector) -> f64 {
        let a: f64 = self.phi.iter().zip(mu.mass()).filter(|(_, m)| **m > 0.0).map(|(p, m)| p * m).sum();
        let b: f64 = self.phic.iter().zip(nu.mass()).filter(|(_, m)| **m > 0.0).map(|(p, m)| p * m).sum();
        a + b
    }
}

pub fn c_superdifferential(space: &FiniteMms, phi: &[f64], x: usize) -> Result<Vec<usize>> {
    if x >= space.n() {
        return invalid(format!("point {x} outside the space"));
    }
    Ok(KantorovichPotential::c_concave(space, phi.to_vec())?.superdifferential(space, x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSolution {
    pub potential: KantorovichPotential,
    /// `½W₂²` from the primal.
    pub primal: f64,
    pub dual: f64,
    pub transport: Transport,
}

/// Optimal dual pair for the cost `d²/2`, with `φ` extended to the whole
/// space as a `c`-transform of the target dual (hence `c`-concave).
pub fn kantorovich_potential(space: &FiniteMms, mu: &ProbabilityVector, nu: &ProbabilityVector) -> Result<PotentialSolution> {
    let t = solve_on_space(space, mu, nu, |d| 0.5 * d * d)?;
    let all: Vec<usize> = (0..space.n()).collect();
    let phi = c_transform_between(space, &t.target_dual, &t.target_support, &all);
    let phic = c_transform(space, &phi)?;
    let potential = KantorovichPotential { phi, phic };
    let dual = potential.dual_value(mu, nu);
    let gap = (t.cost - dual).abs();
    if gap > 1e-9 * (1.0 + t.cost.abs()) {
        return Err(MmsError::Solver(format!("potential duality gap {gap:.3e}")));
    }
    Ok(PotentialSolution { potential, primal: t.cost, dual, transport: t })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    pub times: Vec<f64>,
    pub measures: Vec<ProbabilityVector>,
    /// Coupled pairs whose geodesic was not unique.
    pub cut_pairs: usize,
}

/// Push each coupled pair along its model geodesic and snap to the nearest point.
pub fn displacement_interpolation(space: &FiniteMms, mu: &ProbabilityVector, nu: &ProbabilityVector, t_grid: &[f64]) -> Result<Interpolation> {
    if space.model().is_none() {
        return invalid("displacement interpolation needs a model space");
    }
    if t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return invalid("times must lie in [0, 1]");
    }
    let plan = wq_distance(space, mu, nu, 2.0)?.coupling;
    let mut cut = vec![false; plan.entries.len()];
    let mut measures = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if t == 0.0 {
            measures.push(mu.clone());
            continue;
        }
        if t == 1.0 {
            measures.push(nu.clone());
            continue;
        }
        let targets: Vec<(usize, bool)> = plan
            .entries
            .par_iter()
            .map(|&(i, j, _)| {
                let (p, is_cut) = space.geodesic_point(i, j, t)?;
                Ok((space.nearest_point(&p)?, is_cut))
            })
            .collect::<Result<_>>()?;
        let mut mass = vec![0.0; space.n()];
        for (k, &(z, is_cut)) in targets.iter().enumerate() {
            mass[z] += plan.entries[k].2;
            cut[k] |= is_cut;
        }
        measures.push(ProbabilityVector::normalized(mass)?);
    }
    Ok(Interpolation { times: t_grid.to_vec(), measures, cut_pairs: cut.iter().filter(|c| **c).count() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrenierReport {
    /// `‖slope⁺φ(x) − d(x,y)‖_{L²(γ)} / ‖d‖_{L²(γ)}`.
    pub relative_residual: f64,
    pub absolute_residual: f64,
    /// Largest `slope⁺φ(x) − max_{y∈∂^cφ(x)} d(x,y)` over the source support.
    pub max_excess: f64,
    pub scale_h: f64,
}

pub fn metric_brenier_check(space: &FiniteMms, mu: &ProbabilityVector, nu: &ProbabilityVector) -> Result<BrenierReport> {
    let sol = kantorovich_potential(space, mu, nu)?;
    let pot = &sol.potential;
    let slope = local_slope(space, &pot.phi, SlopeVariant::Ascending);
    let (mut res, mut norm) = (0.0, 0.0);
    for &(x, y, m) in &sol.transport.coupling.entries {
        let d = space.dist(x, y);
        res += m * (slope[x] - d).powi(2);
        norm += m * d * d;
    }
    let max_excess = mu
        .support()
        .par_iter()
        .map(|&x| {
            let reach = pot.superdifferential(space, x).iter().map(|&y| space.dist(x, y)).fold(0.0, f64::max);
            slope[x] - reach
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let absolute_residual = res.sqrt();
    let relative_residual = if norm > 0.0 { absolute_residual / norm.sqrt() } else { absolute_residual };
    Ok(BrenierReport { relative_residual, absolute_residual, max_excess, scale_h: space.h() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::build_euclidean_grid;

    fn line3() -> FiniteMms {
        build_euclidean_grid(&[3], 1.0, None).unwrap()
    }

    #[test]
    fn lattice_transform_matches_scan() {
        let s = build_euclidean_grid(&[7, 5], 0.3, None).unwrap();
        let phi: Vec<f64> = (0..s.n()).map(|i| (i as f64 * 0.37).sin()).collect();
        let fast = c_transform_lattice(s.lattice().unwrap(), &phi).unwrap();
        let slow = c_transform(&s, &phi).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut partial = phi.clone();
        partial[3] = f64::NEG_INFINITY;
        let from: Vec<usize> = (0..s.n()).filter(|&i| i != 3).collect();
        let to: Vec<usize> = (0..s.n()).collect();
        let kept: Vec<f64> = from.iter().map(|&i| phi[i]).collect();
        let slow = c_transform_between(&s, &kept, &from, &to);
        let fast = c_transform_lattice(s.lattice().unwrap(), &partial).unwrap();
        assert!(fast.iter().zip(&slow).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn three_point_line() {
        let s = line3();
        let mu = ProbabilityVector::dirac(3, 0).unwrap();
        let nu = ProbabilityVector::new(vec![0.0, 0.5, 0.5]).unwrap();
        let t = wq_distance(&s, &mu, &nu, 2.0).unwrap();
        assert!((t.cost - 2.5).abs() < 1e-12);
        let k = kantorovich_potential(&s, &mu, &nu).unwrap();
        assert!((k.dual - 1.25).abs() < 1e-12);
    }

    #[test]
    fn diracs_and_identity() {
        let s = build_euclidean_grid(&[6], 0.5, None).unwrap();
        let a = ProbabilityVector::dirac(6, 1).unwrap();
        let b = ProbabilityVector::dirac(6, 4).unwrap();
        assert!((wq_distance(&s, &a, &b, 3.0).unwrap().value - 1.5).abs() < 1e-12);
        let u = ProbabilityVector::normalized(vec![1.0; 6]).unwrap();
        let t = wq_distance(&s, &u, &u, 2.0).unwrap();
        assert_eq!(t.cost, 0.0);
        assert!(t.coupling.entries.iter().all(|&(i, j, _)| i == j));
        let k = kantorovich_potential(&s, &a, &b).unwrap();
        assert!((k.potential.phi[1] + k.potential.phic[4] - 0.5 * 1.5 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_potential() {
        let s = line3();
        assert_eq!(c_transform(&s, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(c_superdifferential(&s, &[0.0; 3], 1).unwrap().contains(&1));
    }

    #[test]
    fn bad_masses_rejected() {
        assert!(ProbabilityVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbabilityVector::new(vec![1.5, -0.5]).is_err());
        assert!(transportation_simplex(&[1.0], &[0.5], &[0.0]).is_err());
    }

    #[test]
    fn coupling_csv() {
        let c = Coupling { n: 2, entries: vec![(0, 1, 0.5)] };
        assert!(c.to_csv().starts_with("i,j,mass\n0,1,5"));
    }
}
