//! Undirected simple graphs in compressed adjacency form, edge-list I/O and
//! breadth-first primitives.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use log::info;

use crate::error::{Error, Result};

/// Node identifier. Graphs are limited to `u32::MAX - 1` nodes.
pub type NodeId = u32;

/// Sentinel distance for nodes not reached within the search cap.
pub const UNREACHED: u32 = u32::MAX;

/// Immutable undirected simple graph.
///
/// Neighbor lists are sorted, symmetric and free of self loops and duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    labels: Vec<String>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph on `n` nodes labelled `"0".."n-1"`. Self loops and
    /// duplicate edges are dropped.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::with_labels(labels, edges)
    }

    /// Builds a graph whose node `i` carries `labels[i]` for output.
    pub fn with_labels(labels: Vec<String>, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let n = labels.len();
        if n >= UNREACHED as usize {
            return Err(Error::arg(format!("too many nodes: {n}")));
        }
        let mut degree = vec![0usize; n];
        for &(u, w) in edges {
            if u as usize >= n || w as usize >= n {
                return Err(Error::arg(format!("edge ({u}, {w}) out of range for {n} nodes")));
            }
            if u != w {
                degree[u as usize] += 1;
                degree[w as usize] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0 as NodeId; offsets[n]];
        for &(u, w) in edges {
            if u != w {
                neighbors[fill[u as usize]] = w;
                fill[u as usize] += 1;
                neighbors[fill[w as usize]] = u;
                fill[w as usize] += 1;
            }
        }
        // Sort and dedup each list, compacting in place.
        let mut compact = Vec::with_capacity(neighbors.len());
        let mut new_offsets = Vec::with_capacity(n + 1);
        new_offsets.push(0);
        for i in 0..n {
            let list = &mut neighbors[offsets[i]..offsets[i + 1]];
            list.sort_unstable();
            let mut last = None;
            for &v in list.iter() {
                if last != Some(v) {
                    compact.push(v);
                    last = Some(v);
                }
            }
            new_offsets.push(compact.len());
        }
        compact.shrink_to_fit();
        let edge_count = compact.len() / 2;
        Ok(Graph {
            offsets: new_offsets,
            neighbors: compact,
            labels,
            edge_count,
        })
    }

    pub fn empty() -> Self {
        Graph {
            offsets: vec![0],
            neighbors: Vec::new(),
            labels: Vec::new(),
            edge_count: 0,
        }
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Output label of node `v` (the token it had in the input edge list).
    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Looks a node up by its output label. Linear scan.
    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label).map(|i| i as NodeId)
    }

    /// Each undirected edge once, smaller endpoint first, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count() as NodeId).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&w| w > u)
                .map(move |&w| (u, w))
        })
    }

    pub fn has_edge(&self, u: NodeId, w: NodeId) -> bool {
        self.neighbors(u).binary_search(&w).is_ok()
    }

    fn check_node(&self, v: NodeId) -> Result<()> {
        if (v as usize) < self.node_count() {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "node {v} out of range for graph with {} nodes",
                self.node_count()
            )))
        }
    }

    /// Serializes to the edge-list format using output labels. Isolated nodes
    /// are written as a self-loop line so that re-parsing keeps them.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for u in 0..self.node_count() as NodeId {
            if self.degree(u) == 0 {
                let _ = writeln!(out, "{} {}", self.label(u), self.label(u));
            }
            for &w in self.neighbors(u) {
                if w > u {
                    let _ = writeln!(out, "{} {}", self.label(u), self.label(w));
                }
            }
        }
        out
    }
}

/// Parses a whitespace-separated edge list. Lines starting with `#` and blank
/// lines are skipped. Tokens are arbitrary strings, remapped to contiguous ids
/// in order of first appearance.
pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<Graph> {
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut self_loops = 0usize;

    let mut intern = |tok: &str, labels: &mut Vec<String>| -> NodeId {
        if let Some(&id) = ids.get(tok) {
            return id;
        }
        let id = labels.len() as NodeId;
        labels.push(tok.to_string());
        ids.insert(tok.to_string(), id);
        id
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let (a, b) = match (toks.next(), toks.next(), toks.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected 2 tokens, got {}", trimmed.split_whitespace().count()),
                })
            }
        };
        let u = intern(a, &mut labels);
        let w = intern(b, &mut labels);
        if u == w {
            self_loops += 1;
        } else {
            edges.push((u, w));
        }
    }

    let raw = edges.len();
    let g = Graph::with_labels(labels, &edges)?;
    let duplicates = raw - g.edge_count();
    if self_loops > 0 || duplicates > 0 {
        info!("edge list: dropped {self_loops} self loops and {duplicates} duplicate edges");
    }
    Ok(g)
}

pub fn parse_edge_list_str(text: &str) -> Result<Graph> {
    parse_edge_list(text.as_bytes())
}

/// Cluster label per node plus cluster count. Every id in `0..cluster_count`
/// is used by at least one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodePartition {
    labels: Vec<usize>,
    cluster_count: usize,
}

impl NodePartition {
    /// Compacts arbitrary labels to `0..k` by order of first appearance.
    pub fn from_labels<T: Eq + std::hash::Hash + Clone>(raw: &[T]) -> Self {
        let mut map: HashMap<T, usize> = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l.clone()).or_insert(next)
            })
            .collect();
        NodePartition {
            labels,
            cluster_count: map.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        NodePartition {
            labels: (0..n).collect(),
            cluster_count: n,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Hop distances from a single source, truncated at `cap`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceVector {
    pub source: NodeId,
    pub cap: u32,
    pub distances: Vec<u32>,
}

impl DistanceVector {
    pub fn get(&self, v: NodeId) -> Option<u32> {
        match self.distances[v as usize] {
            UNREACHED => None,
            d => Some(d),
        }
    }
}

/// Reusable BFS state. Visited marks are generation-stamped so repeated
/// searches only pay for the nodes they touch.
pub struct BfsScratch {
    stamp: Vec<u32>,
    generation: u32,
    frontier: Vec<NodeId>,
    next: Vec<NodeId>,
}

impl BfsScratch {
    pub fn new(n: usize) -> Self {
        BfsScratch {
            stamp: vec![0; n],
            generation: 0,
            frontier: Vec::new(),
            next: Vec::new(),
        }
    }

    fn begin(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.frontier.clear();
        self.next.clear();
    }

    #[inline]
    fn visit(&mut self, v: NodeId) -> bool {
        let s = &mut self.stamp[v as usize];
        if *s == self.generation {
            false
        } else {
            *s = self.generation;
            true
        }
    }

    /// Level-synchronous BFS from `source` up to `cap` hops. `on_reach` is
    /// called once per reached node (source included) with its distance.
    pub fn bfs_capped(&mut self, g: &Graph, source: NodeId, cap: u32, mut on_reach: impl FnMut(NodeId, u32)) {
        self.begin();
        self.visit(source);
        on_reach(source, 0);
        self.frontier.push(source);
        let mut depth = 0u32;
        while !self.frontier.is_empty() && depth < cap {
            depth += 1;
            self.next.clear();
            for idx in 0..self.frontier.len() {
                let u = self.frontier[idx];
                for &w in g.neighbors(u) {
                    if self.visit(w) {
                        on_reach(w, depth);
                        self.next.push(w);
                    }
                }
            }
            std::mem::swap(&mut self.frontier, &mut self.next);
        }
    }

    /// See [`k_nearest_graph_neighbors`].
    pub fn k_nearest(&mut self, g: &Graph, v: NodeId, k: usize, out: &mut Vec<NodeId>) {
        out.clear();
        self.begin();
        self.visit(v);
        self.frontier.push(v);
        let mut depth = 0usize;
        while out.len() < k && !self.frontier.is_empty() && depth < k {
            depth += 1;
            self.next.clear();
            for idx in 0..self.frontier.len() {
                let u = self.frontier[idx];
                for &w in g.neighbors(u) {
                    if self.visit(w) {
                        self.next.push(w);
                    }
                }
            }
            // Only the layer that overflows k needs id order.
            let room = k - out.len();
            if self.next.len() > room {
                self.next.sort_unstable();
                out.extend_from_slice(&self.next[..room]);
            } else {
                let start = out.len();
                out.extend_from_slice(&self.next);
                out[start..].sort_unstable();
            }
            std::mem::swap(&mut self.frontier, &mut self.next);
        }
    }
}

/// Exact hop distances from `source` for every node within `cap` hops;
/// everything else is [`UNREACHED`].
pub fn bfs_distances(g: &Graph, source: NodeId, cap: u32) -> Result<DistanceVector> {
    g.check_node(source)?;
    if cap == 0 {
        return Err(Error::arg("bfs cap must be at least 1"));
    }
    let mut distances = vec![UNREACHED; g.node_count()];
    let mut scratch = BfsScratch::new(g.node_count());
    scratch.bfs_capped(g, source, cap, |w, d| distances[w as usize] = d);
    Ok(DistanceVector {
        source,
        cap,
        distances,
    })
}

/// The first `k` nodes reached by BFS from `v`, ordered by hop distance with
/// ascending id inside each distance layer. Never searches deeper than `k`
/// hops.
pub fn k_nearest_graph_neighbors(g: &Graph, v: NodeId, k: usize) -> Result<Vec<NodeId>> {
    g.check_node(v)?;
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let mut out = Vec::with_capacity(k);
    BfsScratch::new(g.node_count()).k_nearest(g, v, k, &mut out);
    Ok(out)
}

/// Connected components, labelled in order of their smallest node id.
pub fn connected_components(g: &Graph) -> NodePartition {
    let n = g.node_count();
    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if labels[s] != usize::MAX {
            continue;
        }
        labels[s] = count;
        stack.push(s as NodeId);
        while let Some(u) = stack.pop() {
            for &w in g.neighbors(u) {
                if labels[w as usize] == usize::MAX {
                    labels[w as usize] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    NodePartition {
        labels,
        cluster_count: count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    fn cycle(n: u32) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(n as usize, &edges).unwrap()
    }

    #[test]
    fn parse_simple() {
        let g = parse_edge_list_str("0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn parse_drops_duplicates_and_self_loops() {
        let g = parse_edge_list_str("a b\nb a\na a").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.label(0), "a");
        assert_eq!(g.label(1), "b");
    }

    #[test]
    fn parse_error_reports_line() {
        match parse_edge_list_str("0 1\n0") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_edge_list_str("# c\n0 1 2"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn parse_empty_and_comments() {
        let g = parse_edge_list_str("").unwrap();
        assert_eq!(g.node_count(), 0);
        let g = parse_edge_list_str("# header\n\n  \n7 9\n").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.label(0), "7");
    }

    #[test]
    fn bfs_path() {
        let g = path3();
        assert_eq!(bfs_distances(&g, 0, 10).unwrap().distances, vec![0, 1, 2]);
        assert_eq!(bfs_distances(&g, 0, 1).unwrap().distances, vec![0, 1, UNREACHED]);
        let single = Graph::from_edges(1, &[]).unwrap();
        assert_eq!(bfs_distances(&single, 0, 3).unwrap().distances, vec![0]);
        assert!(bfs_distances(&g, 3, 1).is_err());
        assert!(bfs_distances(&g, 0, 0).is_err());
    }

    #[test]
    fn knn_examples() {
        assert_eq!(k_nearest_graph_neighbors(&cycle(6), 0, 3).unwrap(), vec![1, 5, 2]);
        let star = Graph::from_edges(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
        assert_eq!(k_nearest_graph_neighbors(&star, 0, 3).unwrap(), vec![1, 2, 3]);
        let isolated = Graph::from_edges(3, &[(1, 2)]).unwrap();
        assert!(k_nearest_graph_neighbors(&isolated, 0, 4).unwrap().is_empty());
        // fewer reachable than k
        assert_eq!(k_nearest_graph_neighbors(&isolated, 1, 4).unwrap(), vec![2]);
    }

    #[test]
    fn knn_depth_is_bounded_by_k() {
        // Path 0-1-2-3: with k = 1 only depth 1 is explored.
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(k_nearest_graph_neighbors(&g, 0, 1).unwrap(), vec![1]);
        assert_eq!(k_nearest_graph_neighbors(&g, 0, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn components() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let c = connected_components(&g);
        assert_eq!(c.labels(), &[0, 0, 1, 1]);
        assert_eq!(c.cluster_count(), 2);
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(connected_components(&tri).cluster_count(), 1);
        assert_eq!(connected_components(&Graph::empty()).cluster_count(), 0);
    }

    #[test]
    fn partition_compacts_labels() {
        let p = NodePartition::from_labels(&[7, 7, 3, 9, 3]);
        assert_eq!(p.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(p.cluster_count(), 3);
        assert_eq!(p.cluster_sizes(), vec![2, 2, 1]);
    }

    fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
        (1..=max_n).prop_flat_map(|n| {
            proptest::collection::vec((0..n as u32, 0..n as u32), 0..(n * 3))
                .prop_map(move |edges| Graph::from_edges(n, &edges).unwrap())
        })
    }

    fn floyd_warshall(g: &Graph) -> Vec<Vec<u32>> {
        let n = g.node_count();
        let inf = u32::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for i in 0..n {
            d[i][i] = 0;
            for &j in g.neighbors(i as u32) {
                d[i][j as usize] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    proptest! {
        #[test]
        fn graph_invariants(g in arb_graph(40)) {
            let mut total = 0;
            for u in 0..g.node_count() as u32 {
                let list = g.neighbors(u);
                total += list.len();
                prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
                for &w in list {
                    prop_assert!(w != u);
                    prop_assert!(g.has_edge(w, u));
                }
            }
            prop_assert_eq!(total, 2 * g.edge_count());
        }

        #[test]
        fn bfs_matches_floyd_warshall(g in arb_graph(50), cap in 1u32..8) {
            let all = floyd_warshall(&g);
            for s in 0..g.node_count() {
                let dv = bfs_distances(&g, s as u32, cap).unwrap();
                for v in 0..g.node_count() {
                    let want = all[s][v];
                    if want <= cap {
                        prop_assert_eq!(dv.distances[v], want);
                    } else {
                        prop_assert_eq!(dv.distances[v], UNREACHED);
                    }
                }
                for (u, w) in g.edges() {
                    if let (Some(a), Some(b)) = (dv.get(u), dv.get(w)) {
                        prop_assert!(a.abs_diff(b) <= 1);
                    }
                }
            }
        }

        #[test]
        fn knn_is_prefix_consistent(g in arb_graph(30), k in 1usize..10) {
            let all = floyd_warshall(&g);
            for v in 0..g.node_count() as u32 {
                let a = k_nearest_graph_neighbors(&g, v, k).unwrap();
                let b = k_nearest_graph_neighbors(&g, v, k + 1).unwrap();
                prop_assert_eq!(&a[..], &b[..a.len()]);
                prop_assert!(!a.contains(&v));
                let keys: Vec<_> = a.iter().map(|&w| (all[v as usize][w as usize], w)).collect();
                prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn edge_list_round_trip(g in arb_graph(30)) {
            let text = g.to_edge_list();
            let h = parse_edge_list_str(&text).unwrap();
            prop_assert_eq!(h.node_count(), g.node_count());
            prop_assert_eq!(h.edge_count(), g.edge_count());
            for u in 0..g.node_count() as u32 {
                let hu = h.node_by_label(g.label(u)).unwrap();
                let mut want: Vec<&str> = g.neighbors(u).iter().map(|&w| g.label(w)).collect();
                let mut got: Vec<&str> = h.neighbors(hu).iter().map(|&w| h.label(w)).collect();
                want.sort();
                got.sort();
                prop_assert_eq!(want, got);
            }
        }

        #[test]
        fn components_constant_on_edges(g in arb_graph(40)) {
            let c = connected_components(&g);
            for (u, w) in g.edges() {
                prop_assert_eq!(c.label(u as usize), c.label(w as usize));
            }
            let sizes = c.cluster_sizes();
            prop_assert!(sizes.iter().all(|&s| s > 0));
        }
    }
}
