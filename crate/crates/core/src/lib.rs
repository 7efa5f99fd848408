//! Graph layouts from a graph embedding followed by stochastic neighbor
//! embedding down to two dimensions, plus the tooling to score them.
//!
//! The pipeline is `layout = reduce(embed(graph))`:
//!
//! - [`embed`]: hop distances to random targets ([`embed::shortest_path_embedding`])
//!   or the shortest-path Laplacian eigenmap ([`embed::splee_embedding`]).
//! - [`sne`]: t-SNE on the embedding's own nearest neighbors ([`sne::tsne`]) or
//!   on neighborhoods read straight off the graph ([`sne::tsgne`]).
//! - [`metrics`]: Louvain communities, k-means on the layout, NMI and the
//!   grid-based aesthetic quality score.
//! - [`synth`]: LFR-style benchmark graphs with planted communities.

pub mod embed;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod sne;
pub mod synth;

pub use error::{Error, Result};
