use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::neighbors::{sq_dist, NeighborhoodGraph};
use super::{Layout, SneConfig};
use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Row-sparse matrix with columns sorted within each row.
#[derive(Clone, Debug, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    cols: Vec<NodeId>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_parts(rows: Vec<(Vec<NodeId>, Vec<f64>)>) -> Self {
        let nnz = rows.iter().map(|r| r.0.len()).sum();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        offsets.push(0);
        for (c, v) in rows {
            cols.extend_from_slice(&c);
            vals.extend_from_slice(&v);
            offsets.push(cols.len());
        }
        Csr { offsets, cols, vals }
    }

    fn order(&self) -> usize {
        self.offsets.len() - 1
    }

    fn row(&self, i: usize) -> (&[NodeId], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&(j as NodeId)).map_or(0.0, |p| v[p])
    }
}

/// Conditional affinities `p_{j|i}`; row `i` is a distribution over `j != i`
/// (or empty for a node with no neighbors).
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMatrix(Csr);

impl ConditionalMatrix {
    /// Builds from `(column, value)` rows; zero entries are dropped.
    pub fn from_rows(rows: Vec<Vec<(NodeId, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut parts = Vec::with_capacity(n);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.retain(|e| e.1 != 0.0);
            row.sort_by_key(|e| e.0);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::arg(format!("duplicate column {} in row {i}", w[0].0)));
                }
            }
            for &(j, v) in &row {
                if j as usize >= n || j as usize == i || !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::arg(format!("invalid conditional entry ({i}, {j}) = {v}")));
                }
            }
            parts.push(row.into_iter().unzip());
        }
        Ok(ConditionalMatrix(Csr::from_parts(parts)))
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        ConditionalMatrix::from_rows(
            rows.iter()
                .map(|r| r.iter().enumerate().map(|(j, &v)| (j as NodeId, v)).collect())
                .collect(),
        )
    }

    pub fn order(&self) -> usize {
        self.0.order()
    }

    pub fn nnz(&self) -> usize {
        self.0.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[NodeId], &[f64]) {
        self.0.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

/// Symmetric joint affinities `p_ij` with zero diagonal and unit total mass.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    csr: Csr,
    /// `sum p_ij ln p_ij`, the constant part of the KL divergence.
    neg_entropy: f64,
}

impl AffinityMatrix {
    pub fn order(&self) -> usize {
        self.csr.order()
    }

    pub fn nnz(&self) -> usize {
        self.csr.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[NodeId], &[f64]) {
        self.csr.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn total(&self) -> f64 {
        self.csr.vals.iter().sum()
    }

    pub(crate) fn neg_entropy(&self) -> f64 {
        self.neg_entropy
    }
}

/// Dense square matrix, used for the low-dimensional affinities `q_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::arg(format!("{n}x{n} matrix needs {} values, got {}", n * n, values.len())));
        }
        Ok(SquareMatrix { n, values })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Outcome of fitting one row's bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowFit {
    Converged,
    /// All distances equal; the row is uniform whatever the bandwidth.
    Degenerate,
    /// The target is outside the attainable entropy range.
    Clamped,
}

const CALIBRATION_STEPS: usize = 64;

/// Fills `out` with `exp(-beta d_j) / Z`, searching `beta` so that the row's
/// perplexity `exp(H)` (natural-log entropy) equals `perplexity`.
fn calibrate_row(d: &[f64], perplexity: f64, out: &mut [f64]) -> RowFit {
    let m = d.len();
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let uniform = |out: &mut [f64]| out.iter_mut().for_each(|p| *p = 1.0 / m as f64);
    if !(dmax > dmin) {
        uniform(out);
        return RowFit::Degenerate;
    }
    let target = perplexity.ln();
    if target >= (m as f64).ln() {
        uniform(out);
        return RowFit::Clamped;
    }
    let gap = d
        .iter()
        .map(|&v| v - dmin)
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);

    let entropy = |beta: f64, out: &mut [f64]| -> f64 {
        let mut z = 0.0;
        let mut ws = 0.0;
        for (p, &v) in out.iter_mut().zip(d) {
            let s = v - dmin;
            let w = (-beta * s).exp();
            *p = w;
            z += w;
            ws += w * s;
        }
        out.iter_mut().for_each(|p| *p /= z);
        z.ln() + beta * ws / z
    };

    // Entropy decreases in beta; bisect on log(beta) between a bandwidth
    // wider than every distance and one narrower than the smallest gap.
    let mut lo = (1e-8 / (dmax - dmin)).ln();
    let mut hi = (700.0 / gap).ln();
    if entropy(hi.exp(), out) > target {
        return RowFit::Clamped;
    }
    for _ in 0..CALIBRATION_STEPS {
        let mid = 0.5 * (lo + hi);
        let h = entropy(mid.exp(), out);
        if (h.exp() - perplexity).abs() <= 1e-7 * perplexity {
            return RowFit::Converged;
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    entropy(hi.exp(), out);
    RowFit::Converged
}

/// Gaussian conditional affinities over all pairs with per-row bandwidths
/// calibrated to `perplexity`.
pub fn calibrate_conditional(x: &Embedding, perplexity: f64) -> Result<ConditionalMatrix> {
    let n = x.rows();
    if !(perplexity > 1.0) || perplexity >= n as f64 {
        return Err(Error::arg(format!("perplexity {perplexity} must lie in (1, n = {n})")));
    }
    let rows: Vec<((Vec<NodeId>, Vec<f64>), RowFit)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cols: Vec<NodeId> = (0..n as NodeId).filter(|&j| j as usize != i).collect();
            let d: Vec<f64> = cols.iter().map(|&j| sq_dist(x.row(i), x.row(j as usize))).collect();
            let mut p = vec![0.0; d.len()];
            let fit = calibrate_row(&d, perplexity, &mut p);
            ((cols, p), fit)
        })
        .collect();
    let degenerate = rows.iter().filter(|r| r.1 == RowFit::Degenerate).count();
    let clamped = rows.iter().filter(|r| r.1 == RowFit::Clamped).count();
    if degenerate > 0 {
        warn!("{degenerate} rows have all distances equal; using uniform affinities");
    }
    if clamped > 0 {
        warn!("{clamped} rows cannot reach perplexity {perplexity}; using the nearest attainable value");
    }
    Ok(ConditionalMatrix(Csr::from_parts(rows.into_iter().map(|r| r.0).collect())))
}

/// Per-node cumulative transition probabilities aligned with the edges.
fn transition_cdf(nng: &NeighborhoodGraph, positive_exponent: bool) -> Vec<Vec<f64>> {
    (0..nng.node_count())
        .into_par_iter()
        .map(|u| {
            let k = nng.neighbors(u).len();
            let logw: Vec<f64> = match nng.sq_distances(u) {
                Some(d) if positive_exponent => d.to_vec(),
                Some(d) => d.iter().map(|s| -s).collect(),
                None => vec![0.0; k],
            };
            let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut acc = 0.0;
            let mut cdf: Vec<f64> = logw
                .iter()
                .map(|l| {
                    acc += (l - top).exp();
                    acc
                })
                .collect();
            cdf.iter_mut().for_each(|c| *c /= acc);
            cdf
        })
        .collect()
}

/// Scratch for counting distinct visits of one node's walks.
struct WalkScratch {
    counts: Vec<u32>,
    touched: Vec<NodeId>,
    visited: Vec<NodeId>,
}

/// `p_{j|i}` is the fraction of walks from `i` that visit `j` at least once,
/// renormalized over the visited targets. Each node draws from its own
/// random stream, so the result does not depend on the worker count.
pub fn random_walk_conditional(nng: &NeighborhoodGraph, cfg: &SneConfig) -> Result<ConditionalMatrix> {
    cfg.validate()?;
    let n = nng.node_count();
    let cdf = transition_cdf(nng, cfg.positive_exponent);
    let rows: Vec<(Vec<NodeId>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map_init(
            || WalkScratch {
                counts: vec![0; n],
                touched: Vec::new(),
                visited: Vec::with_capacity(cfg.walk_length),
            },
            |s, i| walk_row(nng, &cdf, cfg, i, s),
        )
        .collect();
    let isolated = (0..n).filter(|&i| nng.neighbors(i).is_empty()).count();
    if isolated > 0 {
        info!("{isolated} nodes have no neighbors; their affinity rows are empty");
    }
    Ok(ConditionalMatrix(Csr::from_parts(rows)))
}

fn walk_row(
    nng: &NeighborhoodGraph,
    cdf: &[Vec<f64>],
    cfg: &SneConfig,
    i: usize,
    s: &mut WalkScratch,
) -> (Vec<NodeId>, Vec<f64>) {
    if nng.neighbors(i).is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    s.touched.clear();
    for _ in 0..cfg.walks_per_node {
        s.visited.clear();
        let mut u = i;
        for _ in 0..cfg.walk_length {
            let nb = nng.neighbors(u);
            if nb.is_empty() {
                break;
            }
            let r: f64 = rng.random();
            let step = cdf[u].partition_point(|&c| c <= r).min(nb.len() - 1);
            u = nb[step] as usize;
            if u != i && !s.visited.contains(&(u as NodeId)) {
                s.visited.push(u as NodeId);
            }
        }
        for &v in &s.visited {
            if s.counts[v as usize] == 0 {
                s.touched.push(v);
            }
            s.counts[v as usize] += 1;
        }
    }
    if let Some(cap) = cfg.max_row_targets {
        if s.touched.len() > cap {
            let counts = &s.counts;
            let by_visits = |a: &NodeId, b: &NodeId| counts[*b as usize].cmp(&counts[*a as usize]).then(a.cmp(b));
            s.touched.select_nth_unstable_by(cap - 1, by_visits);
            for &v in &s.touched[cap..] {
                s.counts[v as usize] = 0;
            }
            s.touched.truncate(cap);
        }
    }
    s.touched.sort_unstable();
    let total: u64 = s.touched.iter().map(|&v| s.counts[v as usize] as u64).sum();
    let vals = s
        .touched
        .iter()
        .map(|&v| {
            let c = std::mem::take(&mut s.counts[v as usize]);
            c as f64 / total as f64
        })
        .collect();
    (s.touched.clone(), vals)
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2n`, rescaled to total mass exactly 1.
pub fn symmetrize(cond: &ConditionalMatrix) -> Result<AffinityMatrix> {
    let c = &cond.0;
    let n = c.order();
    // Transpose by counting sort; columns come out sorted because rows are
    // visited in order.
    let mut t_off = vec![0usize; n + 1];
    for &j in &c.cols {
        t_off[j as usize + 1] += 1;
    }
    for i in 0..n {
        t_off[i + 1] += t_off[i];
    }
    let mut fill = t_off.clone();
    let mut t_cols = vec![0 as NodeId; c.cols.len()];
    let mut t_vals = vec![0.0; c.cols.len()];
    for i in 0..n {
        let (cols, vals) = c.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let at = &mut fill[j as usize];
            t_cols[*at] = i as NodeId;
            t_vals[*at] = v;
            *at += 1;
        }
    }

    let rows: Vec<(Vec<NodeId>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ac, av) = c.row(i);
            let r = t_off[i]..t_off[i + 1];
            let (bc, bv) = (&t_cols[r.clone()], &t_vals[r]);
            let (mut x, mut y) = (0, 0);
            let mut cols = Vec::with_capacity(ac.len() + bc.len());
            let mut vals = Vec::with_capacity(ac.len() + bc.len());
            while x < ac.len() || y < bc.len() {
                let ca = ac.get(x).copied().unwrap_or(NodeId::MAX);
                let cb = bc.get(y).copied().unwrap_or(NodeId::MAX);
                if ca == cb {
                    cols.push(ca);
                    vals.push(av[x] + bv[y]);
                    x += 1;
                    y += 1;
                } else if ca < cb {
                    cols.push(ca);
                    vals.push(av[x]);
                    x += 1;
                } else {
                    cols.push(cb);
                    vals.push(bv[y]);
                    y += 1;
                }
            }
            (cols, vals)
        })
        .collect();
    let mut csr = Csr::from_parts(rows);
    let total: f64 = csr.vals.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::arg("conditional affinities carry no mass"));
    }
    csr.vals.iter_mut().for_each(|v| *v /= total);
    let neg_entropy = csr.vals.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
    Ok(AffinityMatrix { csr, neg_entropy })
}

/// Student-t affinities `q_ij = (1 + |y_i - y_j|^2)^-1 / Z` over ordered pairs.
pub fn low_dim_affinities(y: &Layout) -> Result<SquareMatrix> {
    let n = y.len();
    if n < 2 {
        return Err(Error::arg("at least two points are required"));
    }
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (a, b) = (y.point(i), y.point(j));
                let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
                q[i * n + j] = 1.0 / (1.0 + d2);
            }
        }
    }
    let z: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= z);
    SquareMatrix::new(n, q)
}

/// Floor applied to `q_ij` inside the logarithm.
pub(crate) const Q_FLOOR: f64 = 1e-12;

/// `sum p_ij ln(p_ij / q_ij)` over the nonzero `p_ij`.
pub fn kl_divergence(p: &AffinityMatrix, q: &SquareMatrix) -> Result<f64> {
    let n = p.order();
    if q.order() != n {
        return Err(Error::arg(format!("orders differ: p is {n}, q is {}", q.order())));
    }
    let mut kl = 0.0;
    for i in 0..n {
        let (cols, vals) = p.row(i);
        for (&j, &pij) in cols.iter().zip(vals) {
            if pij > 0.0 {
                kl += pij * (pij / q.get(i, j as usize).max(Q_FLOOR)).ln();
            }
        }
    }
    Ok(kl)
}
