//! Finite metric measure spaces and builders for discretized model spaces.

use crate::error::{invalid, MmsError, Result};
use crate::normed::NormSpec;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Largest number of points a builder will produce.
pub const MAX_POINTS: usize = 10_000_000;

/// How distances are obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    /// Row-major `n×n` matrix.
    Dense(Vec<f64>),
    /// Norm of the coordinate difference.
    Normed(NormSpec),
    /// Angle between unit vectors stored as coordinates.
    GreatCircle,
    /// Unit sphere seen through stereographic projection from the north pole.
    StereographicSphere,
    /// Poincaré disk model of the plane with curvature −1.
    PoincareDisk,
}

/// Which smooth model a discretization approximates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelTag {
    Euclidean,
    Normed(NormSpec),
    Sphere { k: f64, n: f64 },
    Hyperbolic { k: f64, n: f64 },
}

impl ModelTag {
    pub fn curvature(&self) -> f64 {
        match self {
            ModelTag::Euclidean | ModelTag::Normed(_) => 0.0,
            ModelTag::Sphere { k, .. } | ModelTag::Hyperbolic { k, .. } => *k,
        }
    }
}

/// Regular chart lattice; the first axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub dims: Vec<usize>,
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (k, &m) in multi.iter().enumerate() {
            idx += m * stride;
            stride *= self.dims[k];
        }
        idx
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&d| {
                let m = idx % d;
                idx /= d;
                m
            })
            .collect()
    }

    /// Nearest lattice point to chart coordinates, clamped to the box.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = x
            .iter()
            .zip(&self.origin)
            .zip(&self.dims)
            .map(|((xi, oi), &d)| {
                let r = ((xi - oi) / self.spacing).round();
                r.clamp(0.0, (d - 1) as f64) as usize
            })
            .collect();
        self.index(&multi)
    }
}

/// Symmetric edge set `{(i,j) : 0 < dist(i,j) ≤ h}` in compressed rows,
/// sorted by `(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    dists: Vec<f64>,
}

impl NeighborhoodGraph {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::new();
        let mut dists = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, d) in row {
                targets.push(j);
                dists.push(d);
            }
            offsets.push(targets.len());
        }
        NeighborhoodGraph { offsets, targets, dists }
    }

    /// Neighbors of `i` with their distances.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()].iter().copied().zip(self.dists[r].iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.offsets.len() - 1).flat_map(move |i| self.neighbors(i).map(move |(j, d)| (i, j, d)))
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }
}

/// A finite metric measure space with a neighborhood scale.
#[derive(Debug)]
pub struct FiniteMms {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
    weight: Vec<f64>,
    h: f64,
    metric: Metric,
    model: Option<ModelTag>,
    lattice: Option<Lattice>,
    conductances: Option<Vec<(usize, usize, f64)>>,
    graph: OnceLock<NeighborhoodGraph>,
}

impl Clone for FiniteMms {
    fn clone(&self) -> Self {
        FiniteMms {
            n: self.n,
            dim: self.dim,
            coords: self.coords.clone(),
            weight: self.weight.clone(),
            h: self.h,
            metric: self.metric.clone(),
            model: self.model.clone(),
            lattice: self.lattice.clone(),
            conductances: self.conductances.clone(),
            graph: OnceLock::new(),
        }
    }
}

impl FiniteMms {
    /// Space given by an explicit distance matrix. No metric validation is
    /// done here; use [`validate_metric`].
    pub fn from_dense(dist: Vec<Vec<f64>>, weight: Vec<f64>, h: f64) -> Result<Self> {
        let n = dist.len();
        if weight.len() != n || dist.iter().any(|r| r.len() != n) {
            return invalid("distance matrix and weights disagree in size");
        }
        if !(h > 0.0) {
            return invalid("neighborhood scale must be positive");
        }
        Ok(FiniteMms {
            n,
            dim: 0,
            coords: Vec::new(),
            weight,
            h,
            metric: Metric::Dense(dist.into_iter().flatten().collect()),
            model: None,
            lattice: None,
            conductances: None,
            graph: OnceLock::new(),
        })
    }

    /// Space given by chart coordinates (row-major, `dim` per point).
    pub fn from_coords(coords: Vec<f64>, dim: usize, weight: Vec<f64>, h: f64, metric: Metric) -> Result<Self> {
        if dim == 0 || coords.len() != dim * weight.len() {
            return invalid("coordinate array does not match the weights");
        }
        if matches!(metric, Metric::Dense(_)) {
            return invalid("use from_dense for matrix metrics");
        }
        if let Metric::Normed(ns) = &metric {
            if ns.dim() != dim {
                return invalid("norm dimension differs from coordinate dimension");
            }
        }
        if !(h > 0.0) {
            return invalid("neighborhood scale must be positive");
        }
        Ok(FiniteMms { n: weight.len(), dim, coords, weight, h, metric, model: None, lattice: None, conductances: None, graph: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.weight.iter().sum()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn model(&self) -> Option<&ModelTag> {
        self.model.as_ref()
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        self.lattice.as_ref()
    }

    pub fn conductances(&self) -> Option<&[(usize, usize, f64)]> {
        self.conductances.as_deref()
    }

    pub fn has_coords(&self) -> bool {
        self.dim > 0
    }

    pub fn coord(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn with_h(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return invalid("neighborhood scale must be positive");
        }
        self.h = h;
        self.graph = OnceLock::new();
        Ok(self)
    }

    pub fn with_model(mut self, model: ModelTag) -> Self {
        self.model = Some(model);
        self
    }

    /// Attach a lattice whose points coincide with the coordinates.
    pub fn with_lattice(mut self, lattice: Lattice) -> Result<Self> {
        if lattice.len() != self.n || lattice.dims.len() != self.dim {
            return invalid("lattice does not match the point set");
        }
        self.lattice = Some(lattice);
        Ok(self)
    }

    pub fn with_weights(mut self, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != self.n {
            return invalid("weight vector has the wrong length");
        }
        self.weight = weight;
        Ok(self)
    }

    /// Edge conductances `(i, j, c)` with `i < j` defining the Dirichlet form.
    pub fn with_conductances(mut self, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, c) in &edges {
            if i >= self.n || j >= self.n || i == j || !(c > 0.0) {
                return invalid(format!("bad conductance edge ({i}, {j}, {c})"));
            }
        }
        let mut edges: Vec<_> = edges.into_iter().map(|(i, j, c)| (i.min(j), i.max(j), c)).collect();
        edges.sort_by_key(|e| (e.0, e.1));
        self.conductances = Some(edges);
        Ok(self)
    }

    /// Subspace on the given points, with edges and conductances restricted.
    pub fn restrict(&self, idx: &[usize]) -> Result<FiniteMms> {
        if idx.iter().any(|&i| i >= self.n) {
            return invalid("restriction index out of range");
        }
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let weight: Vec<f64> = idx.iter().map(|&i| self.weight[i]).collect();
        let mut sub = match &self.metric {
            Metric::Dense(_) => {
                let dist = idx.iter().map(|&i| idx.iter().map(|&j| self.dist(i, j)).collect()).collect();
                FiniteMms::from_dense(dist, weight, self.h)?
            }
            m => {
                let coords = idx.iter().flat_map(|&i| self.coord(i).iter().copied()).collect();
                FiniteMms::from_coords(coords, self.dim, weight, self.h, m.clone())?
            }
        };
        sub.model = self.model.clone();
        if let Some(edges) = &self.conductances {
            let kept = edges.iter().filter(|(i, j, _)| pos[*i] != usize::MAX && pos[*j] != usize::MAX).map(|&(i, j, c)| (pos[i], pos[j], c)).collect();
            sub = sub.with_conductances(kept)?;
        }
        Ok(sub)
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        if i == j && !matches!(self.metric, Metric::Dense(_)) {
            return 0.0;
        }
        match &self.metric {
            Metric::Dense(m) => m[i * self.n + j],
            _ => chart_distance(&self.metric, self.coord(i), self.coord(j)),
        }
    }

    /// Distances from `i` to every point.
    pub fn dist_row(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.dist(i, j)).collect()
    }

    /// Distance from a point to arbitrary chart coordinates.
    pub fn dist_to_coords(&self, i: usize, x: &[f64]) -> Result<f64> {
        match &self.metric {
            Metric::Dense(_) => invalid("matrix metrics have no chart"),
            m => Ok(chart_distance(m, self.coord(i), x)),
        }
    }

    pub fn diameter(&self) -> f64 {
        (0..self.n).into_par_iter().map(|i| (0..self.n).map(|j| self.dist(i, j)).fold(0.0, f64::max)).reduce(|| 0.0, f64::max)
    }

    pub fn neighborhood(&self) -> &NeighborhoodGraph {
        self.graph.get_or_init(|| self.build_graph())
    }

    fn build_graph(&self) -> NeighborhoodGraph {
        let h = self.h;
        let factor = match &self.metric {
            Metric::Dense(_) => None,
            Metric::Normed(ns) => Some(ns.euclidean_bound()),
            Metric::GreatCircle => Some(1.0),
            Metric::PoincareDisk => Some(0.5),
            Metric::StereographicSphere => {
                let r2 = (0..self.n).map(|i| self.coord(i).iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
                if r2 <= 1.0 {
                    Some((1.0 + r2) / 2.0)
                } else {
                    None
                }
            }
        };
        let rows: Vec<Vec<(usize, f64)>> = match factor {
            None => (0..self.n)
                .into_par_iter()
                .map(|i| {
                    (0..self.n)
                        .filter_map(|j| {
                            let d = self.dist(i, j);
                            (j != i && d > 0.0 && d <= h).then_some((j, d))
                        })
                        .collect()
                })
                .collect(),
            Some(f) => {
                let cell = h * f * (1.0 + 1e-9);
                let key = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / cell).floor() as i64).collect() };
                let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
                for i in 0..self.n {
                    buckets.entry(key(self.coord(i))).or_default().push(i);
                }
                let offsets = stencil(self.dim);
                (0..self.n)
                    .into_par_iter()
                    .map(|i| {
                        let k = key(self.coord(i));
                        let mut row = Vec::new();
                        for off in &offsets {
                            let kk: Vec<i64> = k.iter().zip(off).map(|(a, b)| a + b).collect();
                            if let Some(b) = buckets.get(&kk) {
                                for &j in b {
                                    if j == i {
                                        continue;
                                    }
                                    let d = self.dist(i, j);
                                    if d > 0.0 && d <= h {
                                        row.push((j, d));
                                    }
                                }
                            }
                        }
                        row
                    })
                    .collect()
            }
        };
        NeighborhoodGraph::from_rows(rows)
    }

    /// Point of the model geodesic from `i` to `j` at time `t`, in chart
    /// coordinates, and whether the pair sits on the cut locus.
    pub fn geodesic_point(&self, i: usize, j: usize, t: f64) -> Result<(Vec<f64>, bool)> {
        self.geodesic_between(self.coord(i), self.coord(j), t)
    }

    /// Model geodesic between arbitrary chart points.
    pub fn geodesic_between(&self, a: &[f64], b: &[f64], t: f64) -> Result<(Vec<f64>, bool)> {
        if a.len() != self.dim || b.len() != self.dim {
            return invalid("chart points have the wrong dimension");
        }
        match &self.metric {
            Metric::Dense(_) => invalid("geodesics need a model chart"),
            Metric::Normed(_) => Ok((a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect(), false)),
            Metric::GreatCircle => Ok(slerp(a, b, t)),
            Metric::StereographicSphere => {
                let (p, cut) = slerp(&stereo_to_sphere(a), &stereo_to_sphere(b), t);
                Ok((sphere_to_stereo(&p), cut))
            }
            Metric::PoincareDisk => {
                let ha = poincare_to_hyperboloid(a);
                let hb = poincare_to_hyperboloid(b);
                let d = chart_distance(&self.metric, a, b);
                if d == 0.0 {
                    return Ok((a.to_vec(), false));
                }
                let (sa, sb, s) = (((1.0 - t) * d).sinh(), (t * d).sinh(), d.sinh());
                let p: Vec<f64> = ha.iter().zip(&hb).map(|(x, y)| (sa * x + sb * y) / s).collect();
                Ok((hyperboloid_to_poincare(&p), false))
            }
        }
    }

    /// Density of the model volume against chart Lebesgue measure, when the
    /// chart is flat or conformal.
    pub fn chart_density(&self, x: &[f64]) -> Option<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match &self.metric {
            Metric::Normed(_) => Some(1.0),
            Metric::StereographicSphere => Some((2.0 / (1.0 + r2)).powi(self.dim as i32)),
            Metric::PoincareDisk => Some((2.0 / (1.0 - r2)).powi(self.dim as i32)),
            _ => None,
        }
    }

    /// Point closest to the chart coordinates `x`.
    pub fn nearest_point(&self, x: &[f64]) -> Result<usize> {
        if let Some(l) = &self.lattice {
            return Ok(l.nearest(x));
        }
        if matches!(self.metric, Metric::Dense(_)) {
            return invalid("nearest point needs a chart");
        }
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.n {
            let d = chart_distance(&self.metric, self.coord(i), x);
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best.1)
    }
}

fn stencil(dim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|v| {
                (-1..=1).map(move |o| {
                    let mut w = v.clone();
                    w.push(o);
                    w
                })
            })
            .collect();
    }
    out
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn chart_distance(metric: &Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::Dense(_) => f64::NAN,
        Metric::Normed(ns) => {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            ns.norm(&d)
        }
        Metric::GreatCircle => 2.0 * (diff_norm(a, b) / 2.0).min(1.0).asin(),
        Metric::StereographicSphere => {
            let ra = 1.0 + a.iter().map(|v| v * v).sum::<f64>();
            let rb = 1.0 + b.iter().map(|v| v * v).sum::<f64>();
            let chord = 2.0 * diff_norm(a, b) / (ra * rb).sqrt();
            2.0 * (chord / 2.0).min(1.0).asin()
        }
        Metric::PoincareDisk => {
            let ra = 1.0 - a.iter().map(|v| v * v).sum::<f64>();
            let rb = 1.0 - b.iter().map(|v| v * v).sum::<f64>();
            2.0 * (diff_norm(a, b) / (ra * rb).sqrt()).asinh()
        }
    }
}

fn stereo_to_sphere(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let mut p: Vec<f64> = x.iter().map(|v| 2.0 * v / (1.0 + r2)).collect();
    p.push((r2 - 1.0) / (r2 + 1.0));
    p
}

fn sphere_to_stereo(p: &[f64]) -> Vec<f64> {
    let z = p[p.len() - 1];
    p[..p.len() - 1].iter().map(|v| v / (1.0 - z)).collect()
}

fn poincare_to_hyperboloid(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let mut p = vec![(1.0 + r2) / (1.0 - r2)];
    p.extend(x.iter().map(|v| 2.0 * v / (1.0 - r2)));
    p
}

fn hyperboloid_to_poincare(p: &[f64]) -> Vec<f64> {
    p[1..].iter().map(|v| v / (1.0 + p[0])).collect()
}

/// Great-circle interpolation between unit vectors. Antipodal pairs are
/// routed through the midpoint with the lexicographically smallest
/// coordinates.
fn slerp(a: &[f64], b: &[f64], t: f64) -> (Vec<f64>, bool) {
    let theta = 2.0 * (diff_norm(a, b) / 2.0).min(1.0).asin();
    if theta < 1e-15 {
        return (a.to_vec(), false);
    }
    let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    if norm2(&sum) < 1e-12 {
        let mid = smallest_orthogonal(a);
        let (p, _) = if t <= 0.5 { slerp(a, &mid, 2.0 * t) } else { slerp(&mid, b, 2.0 * t - 1.0) };
        return (p, true);
    }
    let s = theta.sin();
    let (wa, wb) = (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s);
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect();
    let n = norm2(&p);
    (p.iter().map(|v| v / n).collect(), false)
}

/// Unit vector orthogonal to `u` that is lexicographically smallest.
fn smallest_orthogonal(u: &[f64]) -> Vec<f64> {
    for axis in 0..u.len() {
        let mut e = vec![0.0; u.len()];
        e[axis] = -1.0;
        let proj: f64 = e.iter().zip(u).map(|(x, y)| x * y).sum();
        let w: Vec<f64> = e.iter().zip(u).map(|(x, y)| x - proj * y).collect();
        let n = norm2(&w);
        if n > 1e-9 {
            return w.iter().map(|v| v / n).collect();
        }
    }
    vec![0.0; u.len()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub max_triangle_violation: f64,
    pub max_asymmetry: f64,
    pub max_diagonal: f64,
    pub min_weight: f64,
    pub nonpositive_mass: bool,
    /// False when triangles were sampled rather than enumerated.
    pub exhaustive: bool,
    pub pass: bool,
}

/// Largest space whose triangles are all enumerated.
pub const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 800;

pub fn validate_metric(space: &FiniteMms) -> ValidationReport {
    let n = space.n();
    let tol = 1e-12;
    let (max_asym, max_diag) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut a = 0.0_f64;
            for j in 0..n {
                a = a.max((space.dist(i, j) - space.dist(j, i)).abs());
            }
            (a, space.dist(i, i).abs())
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    let exhaustive = n <= EXHAUSTIVE_TRIANGLE_LIMIT;
    let max_tri = if exhaustive {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut v = 0.0_f64;
                for k in 0..n {
                    let dik = space.dist(i, k);
                    for j in 0..n {
                        v = v.max(space.dist(i, j) - dik - space.dist(k, j));
                    }
                }
                v
            })
            .reduce(|| 0.0, f64::max)
    } else {
        let mut rng = crate::rng::seeded(0x7419_u64);
        let triples: Vec<(usize, usize, usize)> = (0..2_000_000).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        triples.par_iter().map(|&(i, j, k)| space.dist(i, j) - space.dist(i, k) - space.dist(k, j)).reduce(|| 0.0, f64::max)
    };
    let min_weight = space.weights().iter().copied().fold(f64::INFINITY, f64::min);
    let nonpositive_mass = !(min_weight > 0.0);
    let pass = max_tri <= tol && max_asym <= tol && max_diag <= tol && !nonpositive_mass;
    ValidationReport {
        max_triangle_violation: max_tri.max(0.0),
        max_asymmetry: max_asym,
        max_diagonal: max_diag,
        min_weight,
        nonpositive_mass,
        exhaustive,
        pass,
    }
}

/// `m(B_r(x))` for the open ball.
pub fn ball_volume(space: &FiniteMms, x: usize, r: f64) -> f64 {
    (0..space.n()).filter(|&y| space.dist(x, y) < r).map(|y| space.weight(y)).sum()
}

fn check_count(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return invalid("grid dimensions must be nonempty and positive");
    }
    let mut total: usize = 1;
    for &d in dims {
        total = total.checked_mul(d).filter(|&t| t <= MAX_POINTS).ok_or_else(|| MmsError::InvalidInput(format!("grid exceeds {MAX_POINTS} points")))?;
    }
    Ok(total)
}

fn lattice_coords(l: &Lattice) -> Vec<f64> {
    let mut coords = Vec::with_capacity(l.len() * l.dims.len());
    for i in 0..l.len() {
        for (k, m) in l.multi_index(i).into_iter().enumerate() {
            coords.push(l.origin[k] + m as f64 * l.spacing);
        }
    }
    coords
}

/// Unordered axis edges of the lattice with a common conductance.
fn axis_edges(l: &Lattice, c: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..l.len() {
        let m = l.multi_index(i);
        let mut stride = 1;
        for (k, &d) in l.dims.iter().enumerate() {
            if m[k] + 1 < d {
                edges.push((i, i + stride, c));
            }
            stride *= d;
        }
    }
    edges
}

/// Regular grid with lower corner `origin`; `norm = None` is Euclidean.
///
/// Weights are `spacing^d`, the scale is `1.5·spacing` and axis edges carry
/// conductance `spacing^(d−2)` so the edge form approximates `∫|∇f|²`.
pub fn build_grid(dims: &[usize], spacing: f64, origin: Option<&[f64]>, norm: Option<NormSpec>) -> Result<FiniteMms> {
    let n = check_count(dims)?;
    if !(spacing > 0.0) {
        return invalid("spacing must be positive");
    }
    let d = dims.len();
    let origin = origin.map(|o| o.to_vec()).unwrap_or_else(|| vec![0.0; d]);
    if origin.len() != d {
        return invalid("origin has the wrong dimension");
    }
    let (norm, model) = match norm {
        None => (NormSpec::euclidean(d), ModelTag::Euclidean),
        Some(ns) => {
            let ns = ns.with_dim(d)?;
            let tag = if ns == NormSpec::euclidean(d) { ModelTag::Euclidean } else { ModelTag::Normed(ns.clone()) };
            (ns, tag)
        }
    };
    let lattice = Lattice { origin, spacing, dims: dims.to_vec() };
    let coords = lattice_coords(&lattice);
    let edges = axis_edges(&lattice, spacing.powi(d as i32 - 2));
    let space =
        FiniteMms::from_coords(coords, d, vec![spacing.powi(d as i32); n], 1.5 * spacing, Metric::Normed(norm))?.with_conductances(edges)?.with_model(model);
    Ok(FiniteMms { lattice: Some(lattice), ..space })
}

pub fn build_euclidean_grid(dims: &[usize], spacing: f64, norm: Option<NormSpec>) -> Result<FiniteMms> {
    build_grid(dims, spacing, None, norm)
}

/// Square grid `[-half_width, half_width]^dim` containing the origin as a point.
pub fn build_centered_grid(dim: usize, half_width: f64, spacing: f64, norm: Option<NormSpec>) -> Result<FiniteMms> {
    let k = (half_width / spacing).ceil() as usize;
    let origin = vec![-(k as f64) * spacing; dim];
    build_grid(&vec![2 * k + 1; dim], spacing, Some(&origin), norm)
}

/// Round circle (`n = 1`) or round 2-sphere (`n = 2`) of radius one.
///
/// The 2-sphere uses both poles plus latitude bands; each band point carries
/// an equal share of the band's exact area, so the total mass is `4π`.
pub fn build_sphere(n: u32, mesh: f64) -> Result<FiniteMms> {
    if !(mesh > 0.0) {
        return invalid("mesh must be positive");
    }
    match n {
        1 => {
            let m = ((2.0 * PI / mesh).round() as usize).max(3);
            check_count(&[m])?;
            let step = 2.0 * PI / m as f64;
            let coords: Vec<f64> = (0..m)
                .flat_map(|k| {
                    let a = k as f64 * step;
                    [a.cos(), a.sin()]
                })
                .collect();
            let edges = (0..m).map(|k| (k, (k + 1) % m, 1.0 / step)).collect();
            let s = FiniteMms::from_coords(coords, 2, vec![step; m], 1.5 * step, Metric::GreatCircle)?
                .with_conductances(edges)?
                .with_model(ModelTag::Sphere { k: 0.0, n: 1.0 });
            Ok(s)
        }
        2 => {
            let bands = ((PI / mesh).round() as usize).max(2);
            let step = PI / bands as f64;
            let mut coords = vec![0.0, 0.0, 1.0];
            let mut weight = vec![2.0 * PI * (1.0 - (step / 2.0).cos())];
            for k in 1..bands {
                let colat = k as f64 * step;
                let count = ((2.0 * PI * colat.sin() / step).round() as usize).max(1);
                check_count(&[weight.len() + count])?;
                let area = 2.0 * PI * (((k as f64 - 0.5) * step).cos() - ((k as f64 + 0.5) * step).cos());
                for j in 0..count {
                    let lon = (j as f64 + 0.5 * (k % 2) as f64) * 2.0 * PI / count as f64;
                    coords.extend([colat.sin() * lon.cos(), colat.sin() * lon.sin(), colat.cos()]);
                    weight.push(area / count as f64);
                }
            }
            coords.extend([0.0, 0.0, -1.0]);
            weight.push(2.0 * PI * (1.0 - (step / 2.0).cos()));
            Ok(FiniteMms::from_coords(coords, 3, weight, 1.5 * step, Metric::GreatCircle)?.with_model(ModelTag::Sphere { k: 1.0, n: 2.0 }))
        }
        _ => invalid(format!("spheres of dimension {n} are not implemented")),
    }
}

/// Two-dimensional model surface of constant curvature `+1` or `−1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Surface {
    Sphere,
    Hyperbolic,
}

/// Square patch of a constant-curvature surface around a base point at the
/// chart origin, on a conformal chart (stereographic for the sphere,
/// Poincaré for the hyperbolic plane).
///
/// `radius` is the geodesic radius reached along the axes and `spacing` the
/// geodesic spacing at the base point. Conformality keeps the edge form
/// unweighted in two dimensions; masses carry the conformal factor.
pub fn build_model_patch(surface: Surface, radius: f64, spacing: f64) -> Result<FiniteMms> {
    if !(radius > 0.0 && spacing > 0.0) {
        return invalid("radius and spacing must be positive");
    }
    let (half, metric, model) = match surface {
        Surface::Sphere => {
            if radius >= PI / 2.0 {
                return Err(MmsError::Domain("sphere patches must stay inside a hemisphere".into()));
            }
            ((radius / 2.0).tan(), Metric::StereographicSphere, ModelTag::Sphere { k: 1.0, n: 2.0 })
        }
        Surface::Hyperbolic => {
            let half = (radius / 2.0).tanh();
            if half * std::f64::consts::SQRT_2 >= 0.95 {
                return Err(MmsError::Domain("hyperbolic patch too large for the chart".into()));
            }
            (half, Metric::PoincareDisk, ModelTag::Hyperbolic { k: -1.0, n: 2.0 })
        }
    };
    let cs = spacing / 2.0;
    let k = (half / cs).ceil() as usize;
    let dims = [2 * k + 1, 2 * k + 1];
    check_count(&dims)?;
    let lattice = Lattice { origin: vec![-(k as f64) * cs; 2], spacing: cs, dims: dims.to_vec() };
    let coords = lattice_coords(&lattice);
    let factor = |x: &[f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        match surface {
            Surface::Sphere => 2.0 / (1.0 + r2),
            Surface::Hyperbolic => 2.0 / (1.0 - r2),
        }
    };
    let weight: Vec<f64> = coords.chunks(2).map(|x| (factor(x) * cs).powi(2)).collect();
    let lambda_max = coords.chunks(2).map(factor).fold(0.0, f64::max);
    let edges = axis_edges(&lattice, 1.0);
    let space = FiniteMms::from_coords(coords, 2, weight, 1.5 * cs * lambda_max, metric)?.with_conductances(edges)?.with_model(model);
    Ok(FiniteMms { lattice: Some(lattice), ..space })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line3() -> FiniteMms {
        FiniteMms::from_dense(vec![vec![0., 1., 2.], vec![1., 0., 1.], vec![2., 1., 0.]], vec![1.; 3], 1.0).unwrap()
    }

    #[test]
    fn line_metric_passes() {
        assert!(validate_metric(&line3()).pass);
    }

    #[test]
    fn broken_triangle_reports_violation() {
        let s = FiniteMms::from_dense(vec![vec![0., 1., 5.], vec![1., 0., 1.], vec![5., 1., 0.]], vec![1.; 3], 1.0).unwrap();
        let r = validate_metric(&s);
        assert!(!r.pass);
        assert_eq!(r.max_triangle_violation, 3.0);
    }

    #[test]
    fn zero_mass_fails() {
        let s = line3().with_weights(vec![1.0, 0.0, 1.0]).unwrap();
        let r = validate_metric(&s);
        assert!(r.nonpositive_mass && !r.pass);
    }

    #[test]
    fn grid_examples() {
        let s = build_euclidean_grid(&[2], 1.0, None).unwrap();
        assert_eq!(s.dist(0, 1), 1.0);
        assert_eq!(s.weights(), &[1.0, 1.0]);
        let s = build_euclidean_grid(&[3, 3], 0.5, None).unwrap();
        assert_eq!(s.n(), 9);
        assert!(s.weights().iter().all(|&w| w == 0.25));
        let s = build_euclidean_grid(&[2, 2], 0.5, Some(NormSpec::max_norm(2))).unwrap();
        assert_eq!(s.dist(0, 3), 0.5);
        assert!(build_euclidean_grid(&[10_000, 10_000], 1.0, None).is_err());
    }

    #[test]
    fn sphere_examples() {
        let c = build_sphere(1, PI / 2.0).unwrap();
        assert_eq!(c.n(), 4);
        assert!((c.dist(0, 2) - PI).abs() < 1e-12);
        let s = build_sphere(2, PI / 30.0).unwrap();
        assert!((s.dist(0, s.n() - 1) - PI).abs() < 1e-12);
        assert!((s.total_mass() / (4.0 * PI) - 1.0).abs() < 0.02);
        assert!(build_sphere(3, 0.1).is_err());
    }

    #[test]
    fn ball_volume_examples() {
        let s = build_euclidean_grid(&[5], 1.0, None).unwrap();
        assert_eq!(ball_volume(&s, 2, 0.0), 0.0);
        assert_eq!(ball_volume(&s, 2, 1.5), 3.0);
        assert_eq!(ball_volume(&s, 2, 10.0), 5.0);
    }

    #[test]
    fn neighborhood_matches_definition() {
        for s in [
            build_euclidean_grid(&[6, 5], 0.3, None).unwrap(),
            build_sphere(2, 0.3).unwrap(),
            build_model_patch(Surface::Hyperbolic, 0.6, 0.1).unwrap(),
            build_model_patch(Surface::Sphere, 0.6, 0.1).unwrap(),
        ] {
            let g = s.neighborhood();
            let mut expected = Vec::new();
            for i in 0..s.n() {
                for j in 0..s.n() {
                    let d = s.dist(i, j);
                    if d > 0.0 && d <= s.h() {
                        expected.push((i, j));
                    }
                }
            }
            let got: Vec<(usize, usize)> = g.edges().map(|(i, j, _)| (i, j)).collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn chart_metrics_are_metrics() {
        for s in [build_model_patch(Surface::Hyperbolic, 0.8, 0.2).unwrap(), build_model_patch(Surface::Sphere, 0.8, 0.2).unwrap()] {
            assert!(validate_metric(&s).pass);
        }
    }

    #[test]
    fn geodesic_midpoints() {
        let s = build_model_patch(Surface::Hyperbolic, 0.8, 0.2).unwrap();
        let (i, j) = (0, s.n() - 1);
        let (mid, _) = s.geodesic_point(i, j, 0.5).unwrap();
        let d = s.dist(i, j);
        assert!((s.dist_to_coords(i, &mid).unwrap() - d / 2.0).abs() < 1e-12);
        let c = build_sphere(1, PI / 2.0).unwrap();
        let (p, cut) = c.geodesic_point(0, 2, 0.5).unwrap();
        assert!(cut);
        assert!((p[0] - 0.0).abs() < 1e-12 && (p[1] + 1.0).abs() < 1e-12);
    }
}
