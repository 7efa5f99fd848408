use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgne_cli::bench::{benchmark, to_csv};
use sgne_cli::config::{ConfigError, Input, RunConfig};
use sgne_cli::exit_code;
use sgne_cli::pipeline::{json, load_graph, run_pipeline, score};
use sgne_cli::render::render_svg;
use sgne_core::graph::{parse_edge_list, NodePartition};
use sgne_core::io::{align_to_graph, read_layout, read_partition, write_partition};
use sgne_core::sne::Layout;

#[derive(Parser, Debug)]
#[command(name = "sgne", version, about = "Graph layouts by graph embedding plus stochastic neighbor embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed, reduce to 2D, score, and write layout.csv, partition.csv,
    /// metrics.json, layout.svg, config.txt and manifest.json.
    Layout {
        /// Edge-list file, or `lfr` to generate a benchmark graph.
        #[arg(long)]
        input: Option<String>,
        /// SHORTEST_PATH or SPLEE.
        #[arg(long)]
        ge: Option<String>,
        /// TSNE or TSGNE.
        #[arg(long)]
        dr: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate an LFR graph: writes graph.txt and planted.csv.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Seeds the generator (the `lfr_seed` key).
        #[arg(long)]
        seed: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score an existing layout of a graph; prints metrics JSON.
    Score {
        /// Edge-list file.
        #[arg(long)]
        input: PathBuf,
        /// Layout CSV (`node,x,y`).
        #[arg(long)]
        layout: PathBuf,
        /// Write the JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the Louvain partition CSV here.
        #[arg(long)]
        partition_out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Time the embedding and reduction stages; writes a CSV table.
    Bench {
        /// Edge-list files; may repeat.
        #[arg(long)]
        input: Vec<PathBuf>,
        /// LFR sizes to generate, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Embedding methods, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "SHORTEST_PATH")]
        ge: Vec<String>,
        /// Reduction methods, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "TSNE,TSGNE")]
        dr: Vec<String>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// CSV path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Draw a layout CSV as an SVG scatter plot.
    Render {
        #[arg(long)]
        layout: PathBuf,
        /// `node,label` CSV used for colors; one color when absent.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 800)]
        size: u32,
    },
}

/// Settings shared by the subcommands that build a [`RunConfig`]. The
/// config file is applied first, then the flags.
#[derive(Args, Debug)]
struct Overrides {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    perplexity: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// Hop threshold, or `none` for the default.
    #[arg(long)]
    l0: Option<String>,
    #[arg(long)]
    grid_k: Option<String>,
    #[arg(long)]
    dominance_p: Option<String>,
    #[arg(long)]
    lfr_n: Option<String>,
    #[arg(long)]
    lfr_mu: Option<String>,
    #[arg(long)]
    lfr_tau1: Option<String>,
    #[arg(long)]
    lfr_tau2: Option<String>,
    /// Any other config key; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Usage(String),
    Core(sgne_core::Error),
    Stage(sgne_cli::pipeline::PipelineError),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<sgne_core::Error> for Failure {
    fn from(e: sgne_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig, extra: &[(&str, &Option<String>)]) -> Result<(), ConfigError> {
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("dim", &self.dim),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("perplexity", &self.perplexity),
            ("epsilon", &self.epsilon),
            ("l0", &self.l0),
            ("grid_k", &self.grid_k),
            ("dominance_p", &self.dominance_p),
            ("lfr_n", &self.lfr_n),
            ("lfr_mu", &self.lfr_mu),
            ("lfr_tau1", &self.lfr_tau1),
            ("lfr_tau2", &self.lfr_tau2),
        ];
        for (k, v) in flags.iter().chain(extra) {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| ConfigError::Invalid(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        Ok(())
    }

    fn build(&self, extra: &[(&str, &Option<String>)]) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        self.apply(&mut cfg, extra)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Layout {
            input,
            ge,
            dr,
            out,
            overrides,
        } => {
            let out = out.map(|p| p.display().to_string());
            let cfg = overrides.build(&[("input", &input), ("ge", &ge), ("dr", &dr), ("out", &out)])?;
            let manifest = run_pipeline(&cfg).map_err(Failure::Stage)?;
            println!("{}", json(&manifest.metrics).trim_end());
        }
        Command::Gen { out, seed, overrides } => {
            let mut cfg = overrides.build(&[("lfr_seed", &seed)])?;
            cfg.input = Input::Lfr;
            cfg.validate()?;
            let (g, planted) = load_graph(&cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("graph.txt"), g.to_edge_list())?;
            let mut buf = Vec::new();
            write_partition(&mut buf, g.labels(), planted.as_ref().expect("generated graphs are labeled"))?;
            fs::write(out.join("planted.csv"), buf)?;
        }
        Command::Score {
            input,
            layout,
            out,
            partition_out,
            overrides,
        } => {
            let cfg = overrides.build(&[])?;
            let g = parse_edge_list(BufReader::new(File::open(&input)?))?;
            let (names, y) = read_layout(BufReader::new(File::open(&layout)?))?;
            let y = Layout::new(align_to_graph(&g, &names, y.points())?)?;
            let (metrics, partition) = score(&g, &y, &cfg.aq, cfg.seed)?;
            let text = json(&metrics);
            match out {
                Some(path) => fs::write(path, &text)?,
                None => print!("{text}"),
            }
            if let Some(path) = partition_out {
                let mut buf = Vec::new();
                write_partition(&mut buf, g.labels(), &partition)?;
                fs::write(path, buf)?;
            }
        }
        Command::Bench {
            input,
            sizes,
            ge,
            dr,
            reps,
            out,
            overrides,
        } => {
            let base = overrides.build(&[])?;
            let mut datasets: Vec<Input> = input.into_iter().map(Input::EdgeList).collect();
            datasets.extend(sizes.iter().map(|_| Input::Lfr));
            if datasets.is_empty() {
                return Err(Failure::Usage("bench needs --input files or --sizes".into()));
            }
            let mut lfr_sizes = sizes.iter();
            let mut cfgs = Vec::new();
            for data in datasets {
                let n = if data == Input::Lfr { lfr_sizes.next().copied() } else { None };
                for g in &ge {
                    for d in &dr {
                        let mut c = base.clone();
                        c.input = data.clone();
                        if let Some(n) = n {
                            c.lfr.n = n;
                        }
                        c.set("ge", g)?;
                        c.set("dr", d)?;
                        c.validate()?;
                        cfgs.push(c);
                    }
                }
            }
            let csv = to_csv(&benchmark(&cfgs, reps));
            match out {
                Some(path) => fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Render {
            layout,
            partition,
            out,
            size,
        } => {
            if size == 0 {
                return Err(Failure::Usage("--size must be positive".into()));
            }
            let (names, y) = read_layout(BufReader::new(File::open(&layout)?))?;
            let labels = match partition {
                Some(path) => {
                    let rows = read_partition(BufReader::new(File::open(&path)?))?;
                    let by_name: std::collections::HashMap<&str, &str> =
                        rows.iter().map(|(n, l)| (n.as_str(), l.as_str())).collect();
                    let labels = names
                        .iter()
                        .map(|n| {
                            by_name.get(n.as_str()).copied().ok_or_else(|| {
                                sgne_core::Error::Argument(format!("node {n:?} has no label in {}", path.display()))
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    NodePartition::from_labels(&labels)
                }
                None => NodePartition::from_labels(&vec![0; y.len()]),
            };
            fs::write(out, render_svg(&y, &labels, size))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e.source))
        }
    }
}
