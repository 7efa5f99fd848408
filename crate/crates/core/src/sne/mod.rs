//! Stochastic neighbor embedding from a high-dimensional embedding (t-SNE)
//! or from the graph's own neighborhoods (t-SGNE) down to two dimensions.

mod affinity;
mod interp;
mod neighbors;
mod optimize;
mod quadtree;

pub use self::affinity::{
    calibrate_conditional, kl_divergence, low_dim_affinities, random_walk_conditional, symmetrize, AffinityMatrix,
    ConditionalMatrix, SquareMatrix,
};
pub use self::neighbors::{knn_from_embedding, knn_from_graph, NeighborSource, NeighborhoodGraph};
pub use self::optimize::{kl_gradient, optimize_layout, optimize_layout_traced};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// How the conditional affinities `p_{j|i}` are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AffinityMode {
    /// Gaussian kernel over all pairs, bandwidth calibrated to the perplexity.
    Exact,
    /// Visit frequencies of random walks on a k-nearest-neighbor graph.
    RandomWalk,
}

/// How the repulsive part of the gradient is evaluated on large inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMethod {
    /// All pairs.
    Exact,
    /// Quadtree cells summarized by their center of mass.
    BarnesHut,
    /// Grid interpolation with FFT convolution.
    Interpolation,
}

/// Edge weights of the graph-derived neighborhood graph in t-SGNE.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphWeights {
    /// `exp(-|x_i - x_j|^2)` from the embedding.
    Embedding,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SneConfig {
    pub perplexity: f64,
    /// Neighbors per node; `None` means `3 * perplexity`.
    pub k_neighbors: Option<usize>,
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Keep only this many most-visited targets per random-walk row.
    pub max_row_targets: Option<usize>,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    /// Standard deviation of the Gaussian initialization.
    pub init_sd: f64,
    pub gradient: GradientMethod,
    /// Barnes-Hut opening angle.
    pub theta: f64,
    /// Layouts with at most this many nodes always use the exact gradient.
    pub exact_gradient_max_nodes: usize,
    /// Largest input accepted in [`AffinityMode::Exact`].
    pub exact_max_nodes: usize,
    /// Use `exp(+|x_i - x_j|^2)` transition weights instead of `exp(-...)`.
    pub positive_exponent: bool,
    pub graph_weights: GraphWeights,
    pub mode: AffinityMode,
    pub seed: u64,
}

impl Default for SneConfig {
    fn default() -> Self {
        SneConfig {
            perplexity: 30.0,
            k_neighbors: None,
            walks_per_node: 100,
            walk_length: 20,
            max_row_targets: None,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init_sd: 1e-4,
            gradient: GradientMethod::Interpolation,
            theta: 0.5,
            exact_gradient_max_nodes: 1000,
            exact_max_nodes: 20_000,
            positive_exponent: false,
            graph_weights: GraphWeights::Embedding,
            mode: AffinityMode::RandomWalk,
            seed: 0,
        }
    }
}

impl SneConfig {
    pub fn k(&self) -> usize {
        self.k_neighbors
            .unwrap_or_else(|| (3.0 * self.perplexity).round().max(1.0) as usize)
    }

    /// Checks the settings that do not depend on the input size.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::arg(m));
        if !(self.perplexity > 1.0) || !self.perplexity.is_finite() {
            return bad(format!("perplexity {} must be a finite value above 1", self.perplexity));
        }
        if self.k() == 0 {
            return bad("k_neighbors must be positive".into());
        }
        if self.walks_per_node == 0 || self.walk_length == 0 {
            return bad("walks_per_node and walk_length must be positive".into());
        }
        if self.max_row_targets == Some(0) {
            return bad("max_row_targets must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.exaggeration > 0.0) || !(self.init_sd > 0.0) {
            return bad("learning_rate, exaggeration and init_sd must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.final_momentum) {
            return bad("momentum values must lie in [0, 1)".into());
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return bad(format!("theta {} must be finite and non-negative", self.theta));
        }
        Ok(())
    }

    fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if self.perplexity >= n as f64 {
            return Err(Error::arg(format!("perplexity {} must be below n = {n}", self.perplexity)));
        }
        if self.k() >= n {
            return Err(Error::arg(format!("k_neighbors {} must be below n = {n}", self.k())));
        }
        Ok(())
    }
}

/// Two-dimensional coordinates, one point per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    points: Vec<[f64; 2]>,
}

impl Layout {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::arg(format!("non-finite coordinate for node {i}")));
        }
        Ok(Layout { points })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.points[i], self.points[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// t-SNE: affinities from the embedding alone, then KL minimization.
pub fn tsne(x: &Embedding, cfg: &SneConfig) -> Result<Layout> {
    optimize_layout(&tsne_affinities(x, cfg)?, cfg)
}

/// The joint affinities [`tsne`] optimizes against.
pub fn tsne_affinities(x: &Embedding, cfg: &SneConfig) -> Result<AffinityMatrix> {
    let n = x.rows();
    cfg.validate_for(n)?;
    let cond = match cfg.mode {
        AffinityMode::Exact => {
            if n > cfg.exact_max_nodes {
                return Err(Error::arg(format!(
                    "exact affinities are limited to {} nodes (got {n}); use the random-walk mode",
                    cfg.exact_max_nodes
                )));
            }
            calibrate_conditional(x, cfg.perplexity)?
        }
        AffinityMode::RandomWalk => random_walk_conditional(&knn_from_embedding(x, cfg.k())?, cfg)?,
    };
    symmetrize(&cond)
}

/// t-SGNE: t-SNE with the neighborhood graph taken from `g` by BFS.
pub fn tsgne(g: &Graph, x: &Embedding, cfg: &SneConfig) -> Result<Layout> {
    optimize_layout(&tsgne_affinities(g, x, cfg)?, cfg)
}

/// The joint affinities [`tsgne`] optimizes against.
pub fn tsgne_affinities(g: &Graph, x: &Embedding, cfg: &SneConfig) -> Result<AffinityMatrix> {
    let n = g.node_count();
    if x.rows() != n {
        return Err(Error::arg(format!("embedding has {} rows for {n} nodes", x.rows())));
    }
    cfg.validate_for(n)?;
    let weights = match cfg.graph_weights {
        GraphWeights::Embedding => Some(x),
        GraphWeights::Uniform => None,
    };
    let nng = knn_from_graph(g, cfg.k(), weights)?;
    symmetrize(&random_walk_conditional(&nng, cfg)?)
}
