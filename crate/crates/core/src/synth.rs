//! LFR-style benchmark graphs: power-law degrees, power-law community sizes
//! and a tunable fraction `mu` of each node's edges leaving its community.

use std::collections::HashSet;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodePartition};

const REWIRE_SWEEPS: usize = 100;
/// Swap partners tried per unrepaired pair in each sweep.
const SWAP_TRIES: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct LfrParams {
    pub n: usize,
    /// Degree distribution exponent.
    pub tau1: f64,
    /// Community size distribution exponent.
    pub tau2: f64,
    /// Fraction of each node's edges that leave its community.
    pub mu: f64,
    pub avg_degree: f64,
    pub max_degree: usize,
    pub min_community: usize,
    pub max_community: usize,
    pub seed: u64,
}

impl LfrParams {
    /// Parameters with the default degree and community-size bounds:
    /// average degree 5, maximum degree `n/10` capped at 1000, communities in
    /// `[20, ceil(n/10)]`.
    pub fn new(n: usize, tau1: f64, tau2: f64, mu: f64, seed: u64) -> Self {
        let max_community = n.div_ceil(10).max(1);
        LfrParams {
            n,
            tau1,
            tau2,
            mu,
            avg_degree: 5.0,
            max_degree: (n / 10).clamp(1, 1000),
            min_community: 20.min(max_community),
            max_community,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::arg(m));
        if self.n < 2 {
            return bad(format!("n = {} must be at least 2", self.n));
        }
        if !(self.tau1 > 1.0) || !(self.tau2 > 1.0) {
            return bad(format!("exponents must exceed 1 (tau1 = {}, tau2 = {})", self.tau1, self.tau2));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu = {} outside [0, 1]", self.mu));
        }
        if self.min_community == 0 || self.min_community > self.max_community || self.max_community > self.n {
            return bad(format!(
                "community bounds must satisfy 1 <= min ({}) <= max ({}) <= n ({})",
                self.min_community, self.max_community, self.n
            ));
        }
        if self.max_degree == 0 || self.max_degree >= self.n {
            return bad(format!("max_degree = {} must be in [1, n)", self.max_degree));
        }
        if !(self.avg_degree >= 1.0) || self.avg_degree > self.max_degree as f64 {
            return bad(format!(
                "avg_degree = {} must be in [1, max_degree = {}]",
                self.avg_degree, self.max_degree
            ));
        }
        Ok(())
    }
}

/// Discrete power law on `lo..=hi` with mass proportional to `x^-exponent`,
/// sampled by inverting a precomputed CDF.
#[derive(Clone, Debug)]
pub struct PowerLaw {
    lo: usize,
    cdf: Vec<f64>,
}

impl PowerLaw {
    pub fn new(exponent: f64, lo: usize, hi: usize) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::arg(format!("power-law range [{lo}, {hi}] is empty or contains 0")));
        }
        if !(exponent > 1.0) {
            return Err(Error::arg(format!("power-law exponent {exponent} must exceed 1")));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (lo..=hi)
            .map(|x| {
                acc += (x as f64).powf(-exponent);
                acc
            })
            .collect();
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        *cdf.last_mut().unwrap() = 1.0;
        Ok(PowerLaw { lo, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.lo + self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    /// Mean of the distribution.
    pub fn mean(exponent: f64, lo: usize, hi: usize) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for x in lo..=hi {
            let w = (x as f64).powf(-exponent);
            num += x as f64 * w;
            den += w;
        }
        num / den
    }
}

/// One draw from the discrete power law on `lo..=hi`.
pub fn sample_power_law<R: Rng + ?Sized>(exponent: f64, lo: usize, hi: usize, rng: &mut R) -> Result<usize> {
    Ok(PowerLaw::new(exponent, lo, hi)?.sample(rng))
}

/// Draws degrees whose expected mean is `avg`: a two-component mixture of
/// power laws on `lo..=hi` and `lo+1..=hi`, where `lo` brackets `avg`.
fn degree_sequence(p: &LfrParams, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let hi = p.max_degree;
    let mean_at = |lo: usize| PowerLaw::mean(p.tau1, lo, hi);
    if p.avg_degree < mean_at(1) {
        return Err(Error::Generation(format!(
            "avg_degree {} is below the smallest attainable mean {:.3} for tau1 = {}",
            p.avg_degree,
            mean_at(1),
            p.tau1
        )));
    }
    let mut lo = 1;
    while lo < hi && mean_at(lo + 1) <= p.avg_degree {
        lo += 1;
    }
    if lo == hi {
        return Ok(vec![hi; p.n]);
    }
    let (m0, m1) = (mean_at(lo), mean_at(lo + 1));
    let weight_lo = (m1 - p.avg_degree) / (m1 - m0);
    let low = PowerLaw::new(p.tau1, lo, hi)?;
    let high = PowerLaw::new(p.tau1, lo + 1, hi)?;
    Ok((0..p.n)
        .map(|_| {
            if rng.random::<f64>() < weight_lo {
                low.sample(rng)
            } else {
                high.sample(rng)
            }
        })
        .collect())
}

/// Community sizes drawn from the power law, adjusted to sum to exactly `n`.
fn community_sizes(p: &LfrParams, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let law = PowerLaw::new(p.tau2, p.min_community, p.max_community)?;
    let mut sizes = Vec::new();
    let mut total = 0;
    while total < p.n {
        let s = law.sample(rng);
        sizes.push(s);
        total += s;
    }
    let overflow = total - p.n;
    let last = sizes.len() - 1;
    if sizes[last] - overflow >= p.min_community {
        sizes[last] -= overflow;
    } else {
        // Drop the last community and spread its leftover over the others.
        let mut leftover = sizes.pop().unwrap() - overflow;
        while leftover > 0 && sizes.iter().any(|&s| s < p.max_community) {
            let i = rng.random_range(0..sizes.len());
            if sizes[i] < p.max_community {
                sizes[i] += 1;
                leftover -= 1;
            }
        }
        if leftover > 0 {
            // Everything is full: the leftover becomes a community of its
            // own, topped up to the minimum from the others.
            let mut deficit = p.min_community.saturating_sub(leftover);
            sizes.push(leftover + deficit);
            let last = sizes.len() - 1;
            while deficit > 0 {
                let donors: Vec<usize> = (0..last).filter(|&i| sizes[i] > p.min_community).collect();
                if donors.is_empty() {
                    return Err(Error::Generation(format!(
                        "community sizes in [{}, {}] cannot partition {} nodes",
                        p.min_community, p.max_community, p.n
                    )));
                }
                sizes[donors[rng.random_range(0..donors.len())]] -= 1;
                deficit -= 1;
            }
        }
    }
    Ok(sizes)
}

/// Assigns nodes to communities so that each node's internal degree fits in
/// its community. Nodes are placed in decreasing order of internal degree.
fn assign_communities(internal: &mut [usize], external: &mut [usize], sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = internal.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| internal[b].cmp(&internal[a]).then(a.cmp(&b)));

    let mut by_size: Vec<usize> = (0..sizes.len()).collect();
    by_size.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut free: Vec<usize> = sizes.to_vec();
    let mut membership = vec![0; n];
    let mut clipped = 0usize;

    for &v in &order {
        // Communities able to host v form a prefix of `by_size`.
        let fits = by_size.partition_point(|&c| sizes[c] > internal[v]);
        let mut chosen = None;
        if fits > 0 {
            for _ in 0..32 {
                let c = by_size[rng.random_range(0..fits)];
                if free[c] > 0 {
                    chosen = Some(c);
                    break;
                }
            }
            if chosen.is_none() {
                let open: Vec<usize> = by_size[..fits].iter().copied().filter(|&c| free[c] > 0).collect();
                if !open.is_empty() {
                    chosen = Some(open[rng.random_range(0..open.len())]);
                }
            }
        }
        let c = match chosen {
            Some(c) => c,
            None => {
                // No fitting community has room: take the largest open one and
                // move the excess internal degree outside.
                let c = *by_size.iter().find(|&&c| free[c] > 0).expect("sizes sum to n");
                let cap = sizes[c] - 1;
                if internal[v] > cap {
                    external[v] += internal[v] - cap;
                    internal[v] = cap;
                    clipped += 1;
                }
                c
            }
        };
        free[c] -= 1;
        membership[v] = c;
    }
    if clipped > 0 {
        info!("lfr: clipped internal degree of {clipped} nodes to their community size");
    }
    membership
}

#[inline]
fn key(u: NodeId, w: NodeId) -> (NodeId, NodeId) {
    if u < w {
        (u, w)
    } else {
        (w, u)
    }
}

/// Configuration-model matching of `stubs`, followed by edge swaps that
/// repair self loops, multi-edges and pairs rejected by `allowed`. Returns the
/// stub pairs that could not be repaired.
fn wire_stubs(
    mut stubs: Vec<NodeId>,
    allowed: impl Fn(NodeId, NodeId) -> bool,
    edges: &mut HashSet<(NodeId, NodeId)>,
    out: &mut Vec<(NodeId, NodeId)>,
    rng: &mut ChaCha8Rng,
) -> Vec<(NodeId, NodeId)> {
    stubs.shuffle(rng);
    let start = out.len();
    let mut bad = Vec::new();
    for pair in stubs.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        if a != b && allowed(a, b) && edges.insert(key(a, b)) {
            out.push((a, b));
        } else {
            bad.push((a, b));
        }
    }
    for _ in 0..REWIRE_SWEEPS {
        if bad.is_empty() || out.len() == start {
            break;
        }
        let mut still_bad = Vec::new();
        'pairs: for &(a, b) in &bad {
            for _ in 0..SWAP_TRIES {
                let idx = start + rng.random_range(0..out.len() - start);
                let (c, d) = out[idx];
                let (e1, e2) = if rng.random::<bool>() { ((a, c), (b, d)) } else { ((a, d), (b, c)) };
                let ok = |(x, y): (NodeId, NodeId)| x != y && allowed(x, y) && !edges.contains(&key(x, y));
                if ok(e1) && ok(e2) && key(e1.0, e1.1) != key(e2.0, e2.1) {
                    edges.remove(&key(c, d));
                    edges.insert(key(e1.0, e1.1));
                    edges.insert(key(e2.0, e2.1));
                    out[idx] = e1;
                    out.push(e2);
                    continue 'pairs;
                }
            }
            still_bad.push((a, b));
        }
        bad = still_bad;
    }
    bad
}

/// Generates an LFR-style benchmark graph and its planted partition.
/// Deterministic given `p.seed`.
pub fn generate_lfr(p: &LfrParams) -> Result<(Graph, NodePartition)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let degrees = degree_sequence(p, &mut rng)?;

    // Split each degree with stochastic rounding so E[external] = mu * deg.
    let mut internal = Vec::with_capacity(p.n);
    let mut external = Vec::with_capacity(p.n);
    for &d in &degrees {
        let target = p.mu * d as f64;
        let mut ext = target.floor() as usize;
        if rng.random::<f64>() < target - ext as f64 {
            ext += 1;
        }
        external.push(ext);
        internal.push(d - ext);
    }

    let sizes = community_sizes(p, &mut rng)?;
    let membership = assign_communities(&mut internal, &mut external, &sizes, &mut rng);

    let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); sizes.len()];
    for (v, &c) in membership.iter().enumerate() {
        members[c].push(v as NodeId);
    }

    let mut edge_set: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(degrees.iter().sum::<usize>() / 2 + 1);
    let mut edges = Vec::with_capacity(edge_set.capacity());
    let mut dropped = 0usize;

    for group in &members {
        let mut stubs: Vec<NodeId> = Vec::new();
        for &v in group {
            stubs.extend(std::iter::repeat_n(v, internal[v as usize]));
        }
        if stubs.len() % 2 == 1 {
            // Make the community sum even: move one stub outside, or drop it
            // when no edge may leave a community.
            let pos = rng.random_range(0..stubs.len());
            let v = stubs.swap_remove(pos);
            internal[v as usize] -= 1;
            if p.mu > 0.0 {
                external[v as usize] += 1;
            }
        }
        // Pairs a saturated community cannot host leave it when edges may.
        for (a, b) in wire_stubs(stubs, |_, _| true, &mut edge_set, &mut edges, &mut rng) {
            if p.mu > 0.0 {
                external[a as usize] += 1;
                external[b as usize] += 1;
            } else {
                dropped += 1;
            }
        }
    }

    let mut stubs: Vec<NodeId> = Vec::new();
    for v in 0..p.n {
        stubs.extend(std::iter::repeat_n(v as NodeId, external[v]));
    }
    if stubs.len() % 2 == 1 {
        let pos = rng.random_range(0..stubs.len());
        stubs.swap_remove(pos);
    }
    let crosses = |a: NodeId, b: NodeId| membership[a as usize] != membership[b as usize];
    dropped += wire_stubs(stubs, crosses, &mut edge_set, &mut edges, &mut rng).len();

    let total = edges.len() + dropped;
    if dropped > 0 {
        let frac = dropped as f64 / total.max(1) as f64;
        if frac > 0.005 {
            warn!("lfr: discarded {dropped} of {total} stub pairs ({:.2}%) after rewiring", 100.0 * frac);
        } else {
            info!("lfr: discarded {dropped} of {total} stub pairs after rewiring");
        }
    }

    let graph = Graph::from_edges(p.n, &edges)?;
    Ok((graph, NodePartition::from_labels(&membership)))
}

/// Fraction of edges whose endpoints lie in different parts.
pub fn mixing_fraction(g: &Graph, part: &NodePartition) -> f64 {
    if g.edge_count() == 0 {
        return 0.0;
    }
    let cross = g
        .edges()
        .filter(|&(u, w)| part.label(u as usize) != part.label(w as usize))
        .count();
    cross as f64 / g.edge_count() as f64
}
