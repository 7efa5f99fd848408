//! High-dimensional node embeddings: hop distances to random targets and the
//! shortest-path Laplacian eigenmap.

pub mod eigen;
mod splee;

use log::warn;
use rand::Rng;
use rayon::prelude::*;

pub use self::splee::{splee_embedding, splee_kernel, ColumnScaling, KernelMatrix, SpleeConfig};
use crate::error::{Error, Result};
use crate::graph::{connected_components, BfsScratch, Graph, NodeId};

/// Row-major `rows x dim` matrix; row `i` is node `i`'s vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("embedding dimension must be positive"));
        }
        if values.len() != rows * dim {
            return Err(Error::arg(format!(
                "embedding of {rows}x{dim} needs {} values, got {}",
                rows * dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite embedding entry at row {}", pos / dim)));
        }
        Ok(Embedding { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::arg("ragged embedding rows"));
        }
        Embedding::new(rows.len(), dim, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Default hop threshold: `floor(sqrt(|E|))`, at least 1.
pub fn default_threshold(g: &Graph) -> u32 {
    ((g.edge_count() as f64).sqrt().floor() as u32).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpConfig {
    /// Number of targets, i.e. embedding dimension.
    pub dim: usize,
    /// Hop threshold; `None` means [`default_threshold`].
    pub threshold: Option<u32>,
    pub seed: u64,
}

impl Default for SpConfig {
    fn default() -> Self {
        SpConfig {
            dim: 128,
            threshold: None,
            seed: 0,
        }
    }
}

/// `d` distinct nodes drawn uniformly without replacement.
pub fn choose_targets<R: Rng + ?Sized>(g: &Graph, d: usize, rng: &mut R) -> Result<Vec<NodeId>> {
    let n = g.node_count();
    if d > n {
        return Err(Error::arg(format!("cannot choose {d} targets from {n} nodes")));
    }
    Ok(rand::seq::index::sample(rng, n, d)
        .into_iter()
        .map(|i| i as NodeId)
        .collect())
}

/// Entry `(i, j)` is the hop distance from node `i` to target `j` when that
/// distance is at most the threshold `l0`, and `l0 + 1` otherwise (including
/// unreachable pairs). One capped BFS per target.
pub fn shortest_path_embedding(g: &Graph, cfg: &SpConfig) -> Result<Embedding> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let targets = choose_targets(g, cfg.dim, &mut rng)?;
    shortest_path_embedding_to(g, &targets, cfg.threshold.unwrap_or_else(|| default_threshold(g)))
}

/// [`shortest_path_embedding`] with explicit targets.
pub fn shortest_path_embedding_to(g: &Graph, targets: &[NodeId], threshold: u32) -> Result<Embedding> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::arg("graph has no nodes"));
    }
    if targets.is_empty() {
        return Err(Error::arg("at least one target is required"));
    }
    if threshold == 0 {
        return Err(Error::arg("threshold must be at least 1"));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= n) {
        return Err(Error::arg(format!("target {t} out of range")));
    }
    warn_untargeted_components(g, targets);

    let far = threshold + 1;
    let columns: Vec<Vec<u32>> = targets
        .par_iter()
        .map_init(
            || BfsScratch::new(n),
            |scratch, &t| {
                let mut col = vec![far; n];
                scratch.bfs_capped(g, t, threshold, |v, d| col[v as usize] = d);
                col
            },
        )
        .collect();

    let d = targets.len();
    let mut values = vec![0.0; n * d];
    for (j, col) in columns.iter().enumerate() {
        for (i, &dist) in col.iter().enumerate() {
            values[i * d + j] = dist as f64;
        }
    }
    Embedding::new(n, d, values)
}

fn warn_untargeted_components(g: &Graph, targets: &[NodeId]) {
    let comps = connected_components(g);
    let mut hit = vec![false; comps.cluster_count()];
    for &t in targets {
        hit[comps.label(t as usize)] = true;
    }
    let missed: Vec<usize> = (0..hit.len()).filter(|&c| !hit[c]).collect();
    if !missed.is_empty() {
        let nodes: usize = comps.labels().iter().filter(|&&c| !hit[c]).count();
        warn!(
            "{} connected components ({nodes} nodes) contain no target; their rows are all threshold+1 and indistinguishable",
            missed.len()
        );
    }
}
