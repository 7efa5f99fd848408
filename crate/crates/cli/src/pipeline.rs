//! `layout = reduce(embed(graph))`, scored and written to the output
//! directory together with a manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;
use sgne_core::embed::{shortest_path_embedding, splee_embedding, Embedding};
use sgne_core::graph::{parse_edge_list, Graph, NodePartition};
use sgne_core::io::{write_kl_trace, write_layout, write_partition};
use sgne_core::metrics::{aesthetic_quality, cluster_layout, louvain_traced, nmi, AqConfig};
use sgne_core::sne::{optimize_layout_traced, tsgne_affinities, tsne_affinities, Layout};
use sgne_core::synth::generate_lfr;

use crate::config::{DrMethod, GeMethod, Input, RunConfig};
use crate::render::render_svg;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Load,
    Embed,
    Reduce,
    Metrics,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Embed => "embed",
            Stage::Reduce => "reduce",
            Stage::Metrics => "metrics",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: sgne_core::Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<sgne_core::Error>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// Layout scores written to `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    /// NMI between Louvain on the graph and k-means on the layout.
    pub nmi: f64,
    /// Aesthetic quality of the layout colored by the Louvain partition.
    pub aq: f64,
    pub louvain_clusters: usize,
    pub modularity: f64,
    pub grid_k: usize,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTimes {
    pub ge_ms: f64,
    pub dr_ms: f64,
    pub metrics_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub workers: usize,
    pub config: BTreeMap<String, String>,
    pub graph: GraphStats,
    pub timings: StageTimes,
    pub metrics: Metrics,
    pub artifacts: Vec<String>,
}

pub const LAYOUT_FILE: &str = "layout.csv";
pub const PARTITION_FILE: &str = "partition.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const SVG_FILE: &str = "layout.svg";
pub const CONFIG_FILE: &str = "config.txt";
pub const TRACE_FILE: &str = "kl_trace.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// The graph plus its planted partition when generated.
pub fn load_graph(cfg: &RunConfig) -> sgne_core::Result<(Graph, Option<NodePartition>)> {
    match &cfg.input {
        Input::EdgeList(path) => Ok((parse_edge_list(BufReader::new(File::open(path)?))?, None)),
        Input::Lfr => {
            let (g, planted) = generate_lfr(&cfg.lfr.params())?;
            Ok((g, Some(planted)))
        }
    }
}

pub fn embed(g: &Graph, cfg: &RunConfig) -> sgne_core::Result<Embedding> {
    match cfg.ge {
        GeMethod::ShortestPath => shortest_path_embedding(g, &cfg.sp),
        GeMethod::Splee => splee_embedding(g, &cfg.splee),
    }
}

/// The layout and its KL trace.
pub fn reduce(g: &Graph, x: &Embedding, cfg: &RunConfig) -> sgne_core::Result<(Layout, Vec<f64>)> {
    let p = match cfg.dr {
        DrMethod::Tsne => tsne_affinities(x, &cfg.sne)?,
        DrMethod::Tsgne => tsgne_affinities(g, x, &cfg.sne)?,
    };
    optimize_layout_traced(&p, &cfg.sne)
}

/// Louvain on the graph, k-means on the layout with as many clusters, and
/// the scores comparing them. Returns the Louvain partition alongside.
pub fn score(g: &Graph, y: &Layout, aq: &AqConfig, seed: u64) -> sgne_core::Result<(Metrics, NodePartition)> {
    let lv = louvain_traced(g, seed)?;
    let k = lv.partition.cluster_count();
    let km = cluster_layout(y, k, seed)?;
    let metrics = Metrics {
        nmi: nmi(&lv.partition, &km)?,
        aq: aesthetic_quality(y, &lv.partition, aq)?,
        louvain_clusters: k,
        modularity: lv.modularity,
        grid_k: aq.grid_k,
        p: aq.dominance_p,
    };
    Ok((metrics, lv.partition))
}

pub fn resolved_workers(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

/// Files written so far; removed again unless the run completes.
struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
    keep: bool,
}

impl Artifacts {
    fn write(&mut self, name: &str, data: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, data).at(Stage::Write)
    }

    fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect()
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs every stage on a pool of `cfg.workers` threads and writes the
/// artifacts into `cfg.out`. On failure nothing written by this run is left
/// behind.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let workers = resolved_workers(cfg.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError {
            stage: Stage::Load,
            source: sgne_core::Error::Argument(e.to_string()),
        })?;
    pool.install(|| run_stages(cfg, workers))
}

fn run_stages(cfg: &RunConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let (g, _) = load_graph(cfg).at(Stage::Load)?;
    info!("graph: {} nodes, {} edges", g.node_count(), g.edge_count());

    let t = Instant::now();
    let x = embed(&g, cfg).at(Stage::Embed)?;
    let ge_ms = ms(t);
    info!("{} embedding: {ge_ms:.0} ms", cfg.ge);

    let t = Instant::now();
    let (y, trace) = reduce(&g, &x, cfg).at(Stage::Reduce)?;
    let dr_ms = ms(t);
    info!("{}: {dr_ms:.0} ms, final KL {:.4}", cfg.dr, trace.last().copied().unwrap_or(f64::NAN));

    let t = Instant::now();
    let (metrics, partition) = score(&g, &y, &cfg.aq, cfg.seed).at(Stage::Metrics)?;
    let metrics_ms = ms(t);

    fs::create_dir_all(&cfg.out).at(Stage::Write)?;
    let mut out = Artifacts {
        dir: cfg.out.clone(),
        written: Vec::new(),
        keep: false,
    };
    let names = g.labels();
    let mut buf = Vec::new();
    write_layout(&mut buf, names, &y).at(Stage::Write)?;
    out.write(LAYOUT_FILE, &buf)?;
    buf.clear();
    write_partition(&mut buf, names, &partition).at(Stage::Write)?;
    out.write(PARTITION_FILE, &buf)?;
    out.write(METRICS_FILE, json(&metrics).as_bytes())?;
    out.write(SVG_FILE, render_svg(&y, &partition, cfg.svg_size).as_bytes())?;
    out.write(CONFIG_FILE, cfg.to_text().as_bytes())?;
    if cfg.kl_trace {
        buf.clear();
        write_kl_trace(&mut buf, &trace).at(Stage::Write)?;
        out.write(TRACE_FILE, &buf)?;
    }

    let mut artifacts = out.names();
    artifacts.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        workers,
        config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        graph: GraphStats {
            nodes: g.node_count(),
            edges: g.edge_count(),
        },
        timings: StageTimes { ge_ms, dr_ms, metrics_ms },
        metrics,
        artifacts,
    };
    out.write(MANIFEST_FILE, json(&manifest).as_bytes())?;
    out.keep = true;
    Ok(manifest)
}

pub fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

/// Path of `name` inside the configured output directory.
pub fn artifact_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out).join(name)
}
