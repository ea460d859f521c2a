//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use mms_core::FiniteMms;
use rand::Rng;

/// `s_κ(x) = Σ (−κ)^j x^{2j+1}/(2j+1)!`, summed until the terms vanish.
pub fn gsine(kappa: f64, x: f64) -> f64 {
    let mut term = x;
    let mut sum = 0.0;
    let mut comp = 0.0;
    let r = -kappa * x * x;
    for j in 0..2000 {
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        term *= r / ((2 * j + 2) as f64 * (2 * j + 3) as f64);
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

pub fn sigma_series(k: f64, n: f64, t: f64, theta: f64) -> f64 {
    if theta == 0.0 {
        return t;
    }
    gsine(k / n, t * theta) / gsine(k / n, theta)
}

pub fn tau_series(k: f64, n: f64, t: f64, theta: f64) -> f64 {
    t.powf(1.0 / n) * sigma_series(k, n - 1.0, t, theta).powf(1.0 - 1.0 / n)
}

/// Fourth-order central difference at `s = 1`.
pub fn derivative_at_one(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(1.0 + 2.0 * h) + 8.0 * f(1.0 + h) - 8.0 * f(1.0 - h) + f(1.0 - 2.0 * h)) / (12.0 * h)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Flows on a spanning tree of the bipartite graph, by repeatedly peeling leaves.
fn tree_flows(a: &[f64], b: &[f64], cells: &[(usize, usize)]) -> Vec<f64> {
    let m = a.len();
    let mut rem: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut deg = vec![0usize; m + b.len()];
    for &(i, j) in cells {
        deg[i] += 1;
        deg[m + j] += 1;
    }
    let mut flow = vec![f64::NAN; cells.len()];
    let mut done = vec![false; cells.len()];
    for _ in 0..cells.len() {
        let k = (0..cells.len()).find(|&k| !done[k] && (deg[cells[k].0] == 1 || deg[m + cells[k].1] == 1)).expect("a spanning tree always has a leaf");
        let (i, j) = cells[k];
        let f = if deg[i] == 1 { rem[i] } else { rem[m + j] };
        flow[k] = f;
        rem[i] -= f;
        rem[m + j] -= f;
        deg[i] -= 1;
        deg[m + j] -= 1;
        done[k] = true;
    }
    flow
}

/// Minimum transport cost over every basic solution of the transportation polytope.
pub fn exhaustive_transport(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let all: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(m + n - 1);
    let parent: Vec<usize> = (0..m + n).collect();
    #[allow(clippy::too_many_arguments, clippy::type_complexity)]
    fn rec(
        start: usize,
        all: &[(usize, usize)],
        need: usize,
        chosen: &mut Vec<(usize, usize)>,
        parent: Vec<usize>,
        visit: &mut dyn FnMut(&[(usize, usize)]),
        m: usize,
    ) {
        if chosen.len() == need {
            visit(chosen);
            return;
        }
        if all.len() - start < need - chosen.len() {
            return;
        }
        for k in start..all.len() {
            let (i, j) = all[k];
            let mut p = parent.clone();
            let (ri, rj) = (find(&mut p, i), find(&mut p, m + j));
            if ri == rj {
                continue;
            }
            p[ri] = rj;
            chosen.push((i, j));
            rec(k + 1, all, need, chosen, p, visit, m);
            chosen.pop();
        }
    }
    let mut visit = |cells: &[(usize, usize)]| {
        let flows = tree_flows(a, b, cells);
        if flows.iter().all(|f| *f >= -1e-12) {
            let c: f64 = cells.iter().zip(&flows).map(|(&(i, j), f)| f * cost[i * n + j]).sum();
            best = best.min(c);
        }
    };
    rec(0, &all, m + n - 1, &mut chosen, parent, &mut visit, m);
    best
}

/// Brute-force `Γ₂(f)` on a weighted graph given by a dense conductance matrix.
pub fn gamma2_brute(c: &[Vec<f64>], w: &[f64], f: &[f64]) -> Vec<f64> {
    let n = w.len();
    let lap = |g: &[f64]| -> Vec<f64> { (0..n).map(|x| (0..n).map(|y| c[x][y] * (g[y] - g[x])).sum::<f64>() / w[x]).collect() };
    let gam =
        |g: &[f64], h: &[f64]| -> Vec<f64> { (0..n).map(|x| (0..n).map(|y| c[x][y] * (g[y] - g[x]) * (h[y] - h[x])).sum::<f64>() / (2.0 * w[x])).collect() };
    let lf = lap(f);
    let gff = gam(f, f);
    let lg = lap(&gff);
    let gl = gam(f, &lf);
    (0..n).map(|x| 0.5 * lg[x] - gl[x]).collect()
}

/// Random finite metric space of `n` points in the plane with random weights.
pub fn random_plane_space<R: Rng>(rng: &mut R, n: usize) -> FiniteMms {
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let dist = pts.iter().map(|p| pts.iter().map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).collect()).collect();
    let w = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    FiniteMms::from_dense(dist, w, 0.5).unwrap()
}

/// Random probability masses with roughly a third of the entries zeroed.
pub fn random_masses<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1..1.0) }).collect();
    if v.iter().all(|x| *x == 0.0) {
        v[rng.gen_range(0..n)] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}
