//! Layout quality: Louvain communities on the graph, k-means on the layout,
//! normalized mutual information and the grid-based aesthetic quality.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodePartition};
use crate::sne::Layout;

/// Weighted graph with self loops, as produced by community aggregation.
/// `adj[i]` includes `(i, a_ii)` when node `i` has a self loop, where `a_ii`
/// counts internal weight in both directions.
struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    strength: Vec<f64>,
    total: f64,
}

impl WeightedGraph {
    fn from_graph(g: &Graph) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = (0..g.node_count() as u32)
            .map(|v| g.neighbors(v).iter().map(|&w| (w as usize, 1.0)).collect())
            .collect();
        WeightedGraph::new(adj)
    }

    fn new(adj: Vec<Vec<(usize, f64)>>) -> Self {
        let strength: Vec<f64> = adj.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
        let total = strength.iter().sum();
        WeightedGraph { adj, strength, total }
    }

    fn order(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, community: &[usize]) -> f64 {
        let k = community.iter().max().map_or(0, |&c| c + 1);
        let mut inside = vec![0.0; k];
        let mut tot = vec![0.0; k];
        for (i, row) in self.adj.iter().enumerate() {
            tot[community[i]] += self.strength[i];
            for &(j, w) in row {
                if community[j] == community[i] {
                    inside[community[i]] += w;
                }
            }
        }
        inside
            .iter()
            .zip(&tot)
            .map(|(&a, &t)| a / self.total - (t / self.total).powi(2))
            .sum()
    }

    /// Local moving phase; returns whether any node changed community.
    fn move_nodes(&self, community: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
        let n = self.order();
        let mut tot = vec![0.0; n];
        for i in 0..n {
            tot[community[i]] += self.strength[i];
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut link = vec![0.0; n];
        let mut seen: Vec<usize> = Vec::new();
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for &i in &order {
                let ki = self.strength[i];
                let own = community[i];
                seen.clear();
                for &(j, w) in &self.adj[i] {
                    if j == i {
                        continue;
                    }
                    let c = community[j];
                    if link[c] == 0.0 && !seen.contains(&c) {
                        seen.push(c);
                    }
                    link[c] += w;
                }
                tot[own] -= ki;
                let gain = |c: usize, link: &[f64]| link[c] - tot[c] * ki / self.total;
                let mut best = own;
                let mut best_gain = gain(own, &link);
                for &c in &seen {
                    let g = gain(c, &link);
                    if g > best_gain + 1e-12 || (g > best_gain - 1e-12 && best != own && c < best) {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += ki;
                for &c in &seen {
                    link[c] = 0.0;
                }
                link[own] = 0.0;
                if best != own {
                    community[i] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                return moved_any;
            }
        }
    }

    fn aggregate(&self, community: &[usize], k: usize) -> WeightedGraph {
        let mut merged: Vec<HashMap<usize, f64>> = vec![HashMap::new(); k];
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                *merged[community[i]].entry(community[j]).or_insert(0.0) += w;
            }
        }
        let adj = merged
            .into_iter()
            .map(|m| {
                let mut row: Vec<(usize, f64)> = m.into_iter().collect();
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        WeightedGraph::new(adj)
    }
}

/// Compacts labels to `0..k` in order of first appearance.
fn compact(labels: &mut [usize]) -> usize {
    let mut map = HashMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    map.len()
}

/// Louvain partition together with its modularity after each level.
#[derive(Clone, Debug)]
pub struct LouvainResult {
    pub partition: NodePartition,
    pub modularity: f64,
    /// Modularity after each aggregation level, starting with singletons.
    pub trace: Vec<f64>,
}

/// Two-phase Louvain: local moving by modularity gain in a seeded random
/// order, then aggregation, until a level moves no node.
pub fn louvain(g: &Graph, seed: u64) -> Result<NodePartition> {
    louvain_traced(g, seed).map(|r| r.partition)
}

pub fn louvain_traced(g: &Graph, seed: u64) -> Result<LouvainResult> {
    if g.edge_count() == 0 {
        return Err(Error::Metric("modularity is undefined on a graph without edges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = WeightedGraph::from_graph(g);
    let mut membership: Vec<usize> = (0..g.node_count()).collect();
    let mut trace = vec![level.modularity(&membership)];
    loop {
        let mut community: Vec<usize> = (0..level.order()).collect();
        if !level.move_nodes(&mut community, &mut rng) {
            break;
        }
        let k = compact(&mut community);
        for m in membership.iter_mut() {
            *m = community[*m];
        }
        level = level.aggregate(&community, k);
        trace.push(level.modularity(&(0..k).collect::<Vec<_>>()));
    }
    let modularity = *trace.last().unwrap();
    Ok(LouvainResult {
        partition: NodePartition::from_labels(&membership),
        modularity,
        trace,
    })
}

/// Newman modularity of `part` on `g`.
pub fn modularity(g: &Graph, part: &NodePartition) -> Result<f64> {
    if g.edge_count() == 0 {
        return Err(Error::Metric("modularity is undefined on a graph without edges".into()));
    }
    if part.len() != g.node_count() {
        return Err(Error::arg(format!("partition of {} nodes for a graph of {}", part.len(), g.node_count())));
    }
    Ok(WeightedGraph::from_graph(g).modularity(part.labels()))
}

const KMEANS_RESTARTS: u64 = 10;
const KMEANS_MAX_ITER: usize = 300;

fn sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// k-means on the layout coordinates with k-means++ seeding, keeping the
/// lowest-inertia of several restarts. Labels are numbered by first
/// appearance.
pub fn cluster_layout(y: &Layout, k: usize, seed: u64) -> Result<NodePartition> {
    let n = y.len();
    if k == 0 || k > n {
        return Err(Error::arg(format!("k = {k} must be in [1, n = {n}]")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart);
        let (inertia, labels) = lloyd(y.points(), k, &mut rng);
        if best.as_ref().is_none_or(|b| inertia < b.0) {
            best = Some((inertia, labels));
        }
    }
    Ok(NodePartition::from_labels(&best.unwrap().1))
}

fn plus_plus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|&p| sq(p, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&d| d > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick];
        centers.push(c);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(sq(p, c));
        }
    }
    centers
}

fn lloyd(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut centers = plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let (mut arg, mut best) = (0, f64::INFINITY);
            for (c, &ctr) in centers.iter().enumerate() {
                let d = sq(p, ctr);
                if d < best {
                    best = d;
                    arg = c;
                }
            }
            dist[i] = best;
            if labels[i] != arg {
                labels[i] = arg;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sum = vec![[0.0; 2]; k];
        let mut count = vec![0usize; k];
        for (i, &p) in points.iter().enumerate() {
            sum[labels[i]][0] += p[0];
            sum[labels[i]][1] += p[1];
            count[labels[i]] += 1;
        }
        for c in 0..k {
            if count[c] > 0 {
                centers[c] = [sum[c][0] / count[c] as f64, sum[c][1] / count[c] as f64];
            } else {
                // Re-seed an empty cluster at the point farthest from its center.
                let far = (0..n).fold(0, |a, i| if dist[i] > dist[a] { i } else { a });
                centers[c] = points[far];
                dist[far] = 0.0;
            }
        }
    }
    let inertia = points.iter().zip(&labels).map(|(&p, &l)| sq(p, centers[l])).sum();
    (inertia, labels)
}

/// `2 I(a; b) / (H(a) + H(b))` with natural logarithms. Two single-cluster
/// partitions score 1; a single-cluster partition against any other scores 0.
pub fn nmi(a: &NodePartition, b: &NodePartition) -> Result<f64> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::arg(format!("partitions cover {n} and {} nodes", b.len())));
    }
    if n == 0 {
        return Err(Error::arg("partitions are empty"));
    }
    let (sa, sb) = (a.cluster_sizes(), b.cluster_sizes());
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    for v in 0..n {
        *joint.entry((a.label(v), b.label(v))).or_insert(0) += 1;
    }
    let nf = n as f64;
    // Terms are keyed by symmetric quantities and summed in sorted order so
    // that swapping the arguments reproduces the result bit for bit.
    let mut terms: Vec<(u64, u64)> = joint
        .iter()
        .map(|(&(i, j), &c)| (c, sa[i] as u64 * sb[j] as u64))
        .collect();
    terms.sort_unstable();
    let mi: f64 = terms
        .iter()
        .map(|&(c, prod)| (c as f64 / nf) * ((n as u64 * c) as f64 / prod as f64).ln())
        .sum();
    let entropy = |sizes: &[usize]| -> f64 {
        let mut s: Vec<u64> = sizes.iter().map(|&c| c as u64).collect();
        s.sort_unstable();
        s.iter()
            .map(|&c| (c as f64 / nf) * ((n as u64 * c) as f64 / (c * c) as f64).ln())
            .sum()
    };
    let (ha, hb) = (entropy(&sa), entropy(&sb));
    Ok(match (ha > 0.0, hb > 0.0) {
        (false, false) => 1.0,
        (true, true) => (2.0 * mi / (ha + hb)).max(0.0),
        _ => 0.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AqConfig {
    pub grid_k: usize,
    /// A cell is good when its most frequent label's share exceeds this.
    pub dominance_p: f64,
    /// Divide by the number of occupied cells instead of `grid_k^2`.
    pub occupied_denominator: bool,
}

impl Default for AqConfig {
    fn default() -> Self {
        AqConfig {
            grid_k: 10,
            dominance_p: 0.6,
            occupied_denominator: false,
        }
    }
}

impl AqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_k == 0 {
            return Err(Error::arg("grid_k must be at least 1"));
        }
        if !(self.dominance_p > 0.0 && self.dominance_p <= 1.0) {
            return Err(Error::arg(format!("dominance_p = {} outside (0, 1]", self.dominance_p)));
        }
        Ok(())
    }
}

/// Fraction of the `k x k` grid cells over the layout's bounding box whose
/// dominant label holds more than `p` of the cell's nodes. Cells are
/// half-open except the last along each axis.
pub fn aesthetic_quality(y: &Layout, labels: &NodePartition, cfg: &AqConfig) -> Result<f64> {
    let n = y.len();
    if n == 0 {
        return Err(Error::arg("layout is empty"));
    }
    if labels.len() != n {
        return Err(Error::arg(format!("{} labels for {n} points", labels.len())));
    }
    cfg.validate()?;
    let k = cfg.grid_k;
    let pts = y.points();
    let axis = |a: usize| {
        let lo = pts.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi - lo)
    };
    let ((x0, xw), (y0, yw)) = (axis(0), axis(1));
    let cell = |v: f64, lo: f64, w: f64| -> usize {
        if w > 0.0 {
            ((k as f64 * (v - lo) / w).floor() as usize).min(k - 1)
        } else {
            0
        }
    };
    let mut counts: HashMap<(usize, usize), HashMap<usize, usize>> = HashMap::new();
    for (v, p) in pts.iter().enumerate() {
        *counts
            .entry((cell(p[0], x0, xw), cell(p[1], y0, yw)))
            .or_default()
            .entry(labels.label(v))
            .or_insert(0) += 1;
    }
    let good = counts
        .values()
        .filter(|c| {
            let total: usize = c.values().sum();
            let top = *c.values().max().unwrap();
            top as f64 / total as f64 > cfg.dominance_p
        })
        .count();
    let denom = if cfg.occupied_denominator { counts.len() } else { k * k };
    Ok(good as f64 / denom as f64)
}
