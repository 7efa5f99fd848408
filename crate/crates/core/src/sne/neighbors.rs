use rayon::prelude::*;

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::graph::{BfsScratch, Graph, NodeId};

/// Where a [`NeighborhoodGraph`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeighborSource {
    Embedding,
    Graph,
}

/// Directed k-nearest-neighbor graph. Edge weights are `exp(-s)` where `s`
/// is the squared embedding distance, or 1 when no embedding was given.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodGraph {
    k: usize,
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    sq_dists: Option<Vec<f64>>,
    source: NeighborSource,
}

impl NeighborhoodGraph {
    fn from_lists(k: usize, lists: Vec<(Vec<NodeId>, Vec<f64>)>, weighted: bool, source: NeighborSource) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let total: usize = lists.iter().map(|l| l.0.len()).sum();
        let mut targets = Vec::with_capacity(total);
        let mut sq = Vec::with_capacity(if weighted { total } else { 0 });
        for (t, d) in lists {
            targets.extend_from_slice(&t);
            if weighted {
                sq.extend_from_slice(&d);
            }
            offsets.push(targets.len());
        }
        NeighborhoodGraph {
            k,
            offsets,
            targets,
            sq_dists: weighted.then_some(sq),
            source,
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn source(&self) -> NeighborSource {
        self.source
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, i: usize) -> &[NodeId] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Squared embedding distances along node `i`'s edges, if weighted.
    pub fn sq_distances(&self, i: usize) -> Option<&[f64]> {
        self.sq_dists
            .as_ref()
            .map(|d| &d[self.offsets[i]..self.offsets[i + 1]])
    }

    pub fn weights(&self, i: usize) -> Vec<f64> {
        match self.sq_distances(i) {
            Some(d) => d.iter().map(|s| (-s).exp()).collect(),
            None => vec![1.0; self.neighbors(i).len()],
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let split = a.len() / 4 * 4;
    let mut acc = [0.0f64; 4];
    for (x, y) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in a[split..].iter().zip(&b[split..]) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

const SOURCE_BLOCK: usize = 64;

/// Node `i` lists its `k` nearest rows by Euclidean distance, ascending,
/// ties broken by index. Brute force over all pairs.
pub fn knn_from_embedding(x: &Embedding, k: usize) -> Result<NeighborhoodGraph> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::arg(format!("k = {k} must be in [1, n) with n = {n}")));
    }
    let blocks: Vec<Vec<(Vec<NodeId>, Vec<f64>)>> = (0..n.div_ceil(SOURCE_BLOCK))
        .into_par_iter()
        .map(|b| knn_block(x, k, b * SOURCE_BLOCK..((b + 1) * SOURCE_BLOCK).min(n)))
        .collect();
    Ok(NeighborhoodGraph::from_lists(
        k,
        blocks.into_iter().flatten().collect(),
        true,
        NeighborSource::Embedding,
    ))
}

fn by_dist_then_id(a: &(f64, NodeId), b: &(f64, NodeId)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Keeps a candidate buffer per source and prunes it to the best `k`
/// whenever it doubles, so each target row is streamed once per block.
fn knn_block(x: &Embedding, k: usize, sources: std::ops::Range<usize>) -> Vec<(Vec<NodeId>, Vec<f64>)> {
    let mut cands: Vec<Vec<(f64, NodeId)>> = sources.clone().map(|_| Vec::with_capacity(2 * k)).collect();
    let mut worst = vec![f64::INFINITY; sources.len()];
    let prune = |c: &mut Vec<(f64, NodeId)>| {
        c.select_nth_unstable_by(k - 1, by_dist_then_id);
        c.truncate(k);
        c.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max)
    };
    for j in 0..x.rows() {
        let xj = x.row(j);
        for (b, i) in sources.clone().enumerate() {
            if i == j {
                continue;
            }
            let d = sq_dist(x.row(i), xj);
            // Later ids lose ties, so equality with the current worst is rejected.
            if d < worst[b] {
                cands[b].push((d, j as NodeId));
                if cands[b].len() == 2 * k {
                    worst[b] = prune(&mut cands[b]);
                }
            }
        }
    }
    cands
        .into_iter()
        .map(|mut c| {
            if c.len() > k {
                c.select_nth_unstable_by(k - 1, by_dist_then_id);
                c.truncate(k);
            }
            c.sort_unstable_by(by_dist_then_id);
            c.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect()
}

/// Node `i` lists its `k` nearest nodes by hop distance (BFS layers, ids
/// ascending within a layer). With an embedding, edges carry squared
/// embedding distances; without, weights are uniform.
pub fn knn_from_graph(g: &Graph, k: usize, x: Option<&Embedding>) -> Result<NeighborhoodGraph> {
    let n = g.node_count();
    if k == 0 {
        return Err(Error::arg("k must be positive"));
    }
    if let Some(x) = x {
        if x.rows() != n {
            return Err(Error::arg(format!("embedding has {} rows for {n} nodes", x.rows())));
        }
    }
    let lists: Vec<(Vec<NodeId>, Vec<f64>)> = (0..n as NodeId)
        .into_par_iter()
        .map_init(
            || (BfsScratch::new(n), Vec::new()),
            |(scratch, buf), v| {
                scratch.k_nearest(g, v, k, buf);
                let d = match x {
                    Some(x) => buf.iter().map(|&j| sq_dist(x.row(v as usize), x.row(j as usize))).collect(),
                    None => Vec::new(),
                };
                (buf.clone(), d)
            },
        )
        .collect();
    Ok(NeighborhoodGraph::from_lists(k, lists, x.is_some(), NeighborSource::Graph))
}
