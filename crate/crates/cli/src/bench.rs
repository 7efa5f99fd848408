//! Stage timings over a set of runs, each cell the median of repetitions.

use std::fmt::Write;
use std::time::Instant;

use log::warn;

use crate::config::RunConfig;
use crate::pipeline::{embed, load_graph, reduce, resolved_workers};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub ge: String,
    pub dr: String,
    pub nodes: usize,
    pub edges: usize,
    pub ge_ms: f64,
    pub dr_ms: f64,
    pub total_ms: f64,
    /// `ok`, or the failing stage's message.
    pub status: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn dataset_name(cfg: &RunConfig) -> String {
    match &cfg.input {
        crate::config::Input::Lfr => format!("lfr-{}", cfg.lfr.n),
        crate::config::Input::EdgeList(p) => p
            .file_stem()
            .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
    }
}

/// Times the embedding and reduction stages of one configuration `reps`
/// times. Graph loading is not timed.
pub fn bench_one(cfg: &RunConfig, reps: usize) -> BenchRow {
    let mut row = BenchRow {
        dataset: dataset_name(cfg),
        ge: cfg.ge.to_string(),
        dr: cfg.dr.to_string(),
        nodes: 0,
        edges: 0,
        ge_ms: f64::NAN,
        dr_ms: f64::NAN,
        total_ms: f64::NAN,
        status: "ok".into(),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(resolved_workers(cfg.workers)).build() {
        Ok(p) => p,
        Err(e) => {
            row.status = e.to_string();
            return row;
        }
    };
    let result = pool.install(|| -> sgne_core::Result<(Vec<f64>, Vec<f64>)> {
        let (g, _) = load_graph(cfg)?;
        row.nodes = g.node_count();
        row.edges = g.edge_count();
        let (mut ge, mut dr) = (Vec::new(), Vec::new());
        for _ in 0..reps.max(1) {
            let t = Instant::now();
            let x = embed(&g, cfg)?;
            ge.push(t.elapsed().as_secs_f64() * 1e3);
            let t = Instant::now();
            reduce(&g, &x, cfg)?;
            dr.push(t.elapsed().as_secs_f64() * 1e3);
        }
        Ok((ge, dr))
    });
    match result {
        Ok((ge, dr)) => {
            let total = ge.iter().zip(&dr).map(|(a, b)| a + b).collect();
            row.ge_ms = median(ge);
            row.dr_ms = median(dr);
            row.total_ms = median(total);
        }
        Err(e) => {
            warn!("{} {} {}: {e}", row.dataset, row.ge, row.dr);
            row.status = e.to_string().replace([',', '\n'], ";");
        }
    }
    row
}

/// One row per configuration; failures become rows with their status and
/// the remaining configurations still run.
pub fn benchmark(cfgs: &[RunConfig], reps: usize) -> Vec<BenchRow> {
    cfgs.iter().map(|c| bench_one(c, reps)).collect()
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("dataset,ge,dr,n,edges,ge_ms,dr_ms,total_ms,status\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.1},{:.1},{:.1},{}",
            r.dataset, r.ge, r.dr, r.nodes, r.edges, r.ge_ms, r.dr_ms, r.total_ms, r.status
        );
    }
    s
}
