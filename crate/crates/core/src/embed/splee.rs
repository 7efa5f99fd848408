use log::info;
use rayon::prelude::*;

use super::eigen::{smallest_eigenpairs_deflated, EigenOptions, SymmetricOperator};
use super::{default_threshold, Embedding};
use crate::error::{Error, Result};
use crate::graph::{BfsScratch, Graph, NodePartition};

/// How embedding columns are scaled after the eigensolve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnScaling {
    UnitNorm,
    /// Unit norm, then divided by the eigenvalue.
    InverseEigenvalue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpleeConfig {
    pub dim: usize,
    /// Heat-kernel scale.
    pub epsilon: f64,
    /// Hop threshold; `None` means `floor(sqrt(|E|))`.
    pub threshold: Option<u32>,
    pub eig_tol: f64,
    pub max_iter: usize,
    /// Eigenvalues at or below this are treated as null. `None` means
    /// `1e-9` times the Gershgorin bound of the Laplacian.
    pub null_tol: Option<f64>,
    /// Solve `L y = lambda D y` instead of `L y = lambda y`.
    pub generalized: bool,
    pub scaling: ColumnScaling,
    /// The kernel is stored densely; larger graphs are refused.
    pub max_nodes: usize,
}

impl Default for SpleeConfig {
    fn default() -> Self {
        SpleeConfig {
            dim: 128,
            epsilon: 6.0,
            threshold: None,
            eig_tol: 1e-8,
            max_iter: 20_000,
            null_tol: None,
            generalized: false,
            scaling: ColumnScaling::UnitNorm,
            max_nodes: 20_000,
        }
    }
}

/// Heat-kernel weights on thresholded hop distances, stored densely, with
/// the row sums `D`.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    n: usize,
    w: Vec<f64>,
    degree: Vec<f64>,
}

impl KernelMatrix {
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// `x' (D - W) x`
    pub fn laplacian_quadratic_form(&self, x: &[f64]) -> f64 {
        let mut lx = vec![0.0; self.n];
        Laplacian { k: self }.apply(x, &mut lx);
        x.iter().zip(&lx).map(|(a, b)| a * b).sum()
    }

    /// Dense `L = D - W`, row-major.
    pub fn laplacian_dense(&self) -> Vec<f64> {
        let mut l: Vec<f64> = self.w.iter().map(|w| -w).collect();
        for i in 0..self.n {
            l[i * self.n + i] = self.degree[i];
        }
        l
    }
}

/// `W_ij = exp(-eps * d_ij^2)` for `0 < d_ij <= l0`, zero otherwise
/// (including `i == j` and unreachable pairs).
pub fn splee_kernel(g: &Graph, cfg: &SpleeConfig) -> Result<KernelMatrix> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::arg("graph has no nodes"));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::arg(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    if n > cfg.max_nodes {
        return Err(Error::arg(format!(
            "dense kernel of {n} nodes exceeds the limit of {} (raise max_nodes to override)",
            cfg.max_nodes
        )));
    }
    let threshold = cfg.threshold.unwrap_or_else(|| default_threshold(g));
    if threshold == 0 {
        return Err(Error::arg("threshold must be at least 1"));
    }
    let table: Vec<f64> = (0..=threshold)
        .map(|d| if d == 0 { 0.0 } else { (-cfg.epsilon * (d as f64).powi(2)).exp() })
        .collect();

    let mut w = vec![0.0; n * n];
    w.par_chunks_mut(n).enumerate().for_each_init(
        || BfsScratch::new(n),
        |scratch, (i, row)| {
            scratch.bfs_capped(g, i as u32, threshold, |v, d| row[v as usize] = table[d as usize]);
        },
    );
    let degree = w.par_chunks(n).map(|row| row.iter().sum()).collect();
    Ok(KernelMatrix { n, w, degree })
}

struct Laplacian<'a> {
    k: &'a KernelMatrix,
}

impl SymmetricOperator for Laplacian<'_> {
    fn order(&self) -> usize {
        self.k.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.k.n;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let row = &self.k.w[i * n..(i + 1) * n];
            *yi = self.k.degree[i] * x[i] - super::eigen::dot(row, x);
        });
    }

    fn norm_bound(&self) -> f64 {
        self.k.degree.iter().fold(0.0, |m, &d| m.max(2.0 * d))
    }
}

/// `D^{-1/2} L D^{-1/2}`; rows of isolated nodes are zero.
struct NormalizedLaplacian<'a> {
    k: &'a KernelMatrix,
    inv_sqrt: Vec<f64>,
}

impl SymmetricOperator for NormalizedLaplacian<'_> {
    fn order(&self) -> usize {
        self.k.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.k.n;
        let scaled: Vec<f64> = x.iter().zip(&self.inv_sqrt).map(|(a, b)| a * b).collect();
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            if self.inv_sqrt[i] == 0.0 {
                *yi = 0.0;
            } else {
                let row = &self.k.w[i * n..(i + 1) * n];
                *yi = x[i] - self.inv_sqrt[i] * super::eigen::dot(row, &scaled);
            }
        });
    }

    fn norm_bound(&self) -> f64 {
        2.0
    }
}

/// Components of the positive-weight graph of `W`.
fn kernel_components(g: &Graph, k: &KernelMatrix) -> NodePartition {
    if g.edge_count() > 0 && g.edges().next().is_some_and(|(u, w)| k.weight(u as usize, w as usize) == 0.0) {
        // exp(-eps) underflowed: every node is on its own.
        return NodePartition::singletons(g.node_count());
    }
    crate::graph::connected_components(g)
}

/// Eigenvectors of `L = D - W` for the `dim` smallest non-null eigenvalues,
/// one column each.
pub fn splee_embedding(g: &Graph, cfg: &SpleeConfig) -> Result<Embedding> {
    let n = g.node_count();
    if cfg.dim == 0 || cfg.dim >= n {
        return Err(Error::arg(format!("SPLEE dimension {} must be in [1, n) with n = {n}", cfg.dim)));
    }
    let kernel = splee_kernel(g, cfg)?;
    let comps = kernel_components(g, &kernel);
    if cfg.dim + comps.cluster_count() > n {
        return Err(Error::arg(format!(
            "{} components leave only {} non-null eigenvectors, {} requested",
            comps.cluster_count(),
            n - comps.cluster_count(),
            cfg.dim
        )));
    }
    if comps.cluster_count() > 1 {
        info!("splee: graph has {} components; skipping that many null eigenvectors", comps.cluster_count());
    }

    let opts = EigenOptions {
        tol: cfg.eig_tol,
        max_iter: cfg.max_iter,
        ..EigenOptions::default()
    };
    let mut null_basis: Vec<Vec<f64>> = vec![vec![0.0; n]; comps.cluster_count()];

    let (values, mut columns) = if cfg.generalized {
        let inv_sqrt: Vec<f64> = kernel
            .degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        for (v, &c) in comps.labels().iter().enumerate() {
            let d = kernel.degree[v];
            null_basis[c][v] = if d > 0.0 { d.sqrt() } else { 1.0 };
        }
        normalize_all(&mut null_basis);
        let op = NormalizedLaplacian { k: &kernel, inv_sqrt };
        let null_tol = cfg.null_tol.unwrap_or(1e-9 * op.norm_bound());
        let pairs = smallest_eigenpairs_deflated(&op, cfg.dim, null_tol, &null_basis, &opts)?;
        let cols: Vec<Vec<f64>> = pairs
            .vectors
            .into_iter()
            .map(|z| z.iter().zip(&op.inv_sqrt).map(|(a, b)| a * b).collect())
            .collect();
        (pairs.values, cols)
    } else {
        for (v, &c) in comps.labels().iter().enumerate() {
            null_basis[c][v] = 1.0;
        }
        normalize_all(&mut null_basis);
        let op = Laplacian { k: &kernel };
        let null_tol = cfg.null_tol.unwrap_or(1e-9 * op.norm_bound());
        let pairs = smallest_eigenpairs_deflated(&op, cfg.dim, null_tol, &null_basis, &opts)?;
        (pairs.values, pairs.vectors)
    };

    for (col, &lambda) in columns.iter_mut().zip(&values) {
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = match cfg.scaling {
            ColumnScaling::UnitNorm => 1.0 / norm,
            ColumnScaling::InverseEigenvalue => 1.0 / (norm * lambda),
        };
        col.iter_mut().for_each(|x| *x *= scale);
    }

    let d = cfg.dim;
    let mut data = vec![0.0; n * d];
    for (j, col) in columns.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            data[i * d + j] = x;
        }
    }
    Embedding::new(n, d, data)
}

fn normalize_all(vs: &mut [Vec<f64>]) {
    for v in vs {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
