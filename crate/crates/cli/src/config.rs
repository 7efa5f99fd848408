//! Run configuration: a flat `key = value` file plus command-line overrides.
//! Keys accept `-` or `_` interchangeably.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sgne_core::embed::{ColumnScaling, SpConfig, SpleeConfig};
use sgne_core::metrics::AqConfig;
use sgne_core::sne::{AffinityMode, GradientMethod, GraphWeights, SneConfig};
use sgne_core::synth::LfrParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeMethod {
    ShortestPath,
    Splee,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrMethod {
    Tsne,
    Tsgne,
}

fn canonical(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "")
}

impl FromStr for GeMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match canonical(s).as_str() {
            "shortestpath" | "sp" => Ok(GeMethod::ShortestPath),
            "splee" => Ok(GeMethod::Splee),
            _ => Err("expected SHORTEST_PATH or SPLEE".into()),
        }
    }
}

impl fmt::Display for GeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeMethod::ShortestPath => "SHORTEST_PATH",
            GeMethod::Splee => "SPLEE",
        })
    }
}

impl FromStr for DrMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match canonical(s).as_str() {
            "tsne" => Ok(DrMethod::Tsne),
            "tsgne" => Ok(DrMethod::Tsgne),
            _ => Err("expected TSNE or TSGNE".into()),
        }
    }
}

impl fmt::Display for DrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DrMethod::Tsne => "TSNE",
            DrMethod::Tsgne => "TSGNE",
        })
    }
}

/// Where the graph comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    EdgeList(PathBuf),
    /// Generated from the `lfr_*` keys.
    Lfr,
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::EdgeList(p) => write!(f, "{}", p.display()),
            Input::Lfr => f.write_str("lfr"),
        }
    }
}

/// LFR settings; the bounds left unset follow [`LfrParams::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct LfrSettings {
    pub n: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub mu: f64,
    pub seed: u64,
    pub avg_degree: Option<f64>,
    pub max_degree: Option<usize>,
    pub min_community: Option<usize>,
    pub max_community: Option<usize>,
}

impl Default for LfrSettings {
    fn default() -> Self {
        LfrSettings {
            n: 1000,
            tau1: 4.0,
            tau2: 4.0,
            mu: 0.18,
            seed: 0,
            avg_degree: None,
            max_degree: None,
            min_community: None,
            max_community: None,
        }
    }
}

impl LfrSettings {
    pub fn params(&self) -> LfrParams {
        let mut p = LfrParams::new(self.n, self.tau1, self.tau2, self.mu, self.seed);
        if let Some(v) = self.avg_degree {
            p.avg_degree = v;
        }
        if let Some(v) = self.max_degree {
            p.max_degree = v;
        }
        if let Some(v) = self.min_community {
            p.min_community = v;
        }
        if let Some(v) = self.max_community {
            p.max_community = v;
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: Input,
    pub ge: GeMethod,
    pub dr: DrMethod,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub sp: SpConfig,
    pub splee: SpleeConfig,
    pub sne: SneConfig,
    pub aq: AqConfig,
    pub lfr: LfrSettings,
    /// Also write the per-iteration KL divergence.
    pub kl_trace: bool,
    pub svg_size: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: Input::Lfr,
            ge: GeMethod::ShortestPath,
            dr: DrMethod::Tsgne,
            seed: 0,
            out: PathBuf::from("out"),
            workers: 0,
            sp: SpConfig::default(),
            splee: SpleeConfig::default(),
            sne: SneConfig::default(),
            aq: AqConfig::default(),
            lfr: LfrSettings::default(),
            kl_trace: false,
            svg_size: 800,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    if canonical(value) == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

impl RunConfig {
    /// Sets one key. `dim` and `l0` apply to both embedding methods and `seed`
    /// to every seeded stage except graph generation (`lfr_seed`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let v = value.trim();
        match k {
            "input" => {
                self.input = if canonical(v) == "lfr" { Input::Lfr } else { Input::EdgeList(PathBuf::from(v)) }
            }
            "ge" => self.ge = parse(k, v)?,
            "dr" => self.dr = parse(k, v)?,
            "seed" => {
                self.seed = parse(k, v)?;
                self.sp.seed = self.seed;
                self.sne.seed = self.seed;
            }
            "out" => self.out = PathBuf::from(v),
            "workers" => self.workers = parse(k, v)?,
            "dim" => {
                self.sp.dim = parse(k, v)?;
                self.splee.dim = self.sp.dim;
            }
            "l0" => {
                self.sp.threshold = parse_opt(k, v)?;
                self.splee.threshold = self.sp.threshold;
            }
            "epsilon" => self.splee.epsilon = parse(k, v)?,
            "eig_tol" => self.splee.eig_tol = parse(k, v)?,
            "eig_max_iter" => self.splee.max_iter = parse(k, v)?,
            "null_tol" => self.splee.null_tol = parse_opt(k, v)?,
            "generalized" => self.splee.generalized = parse(k, v)?,
            "column_scaling" => {
                self.splee.scaling = match canonical(v).as_str() {
                    "unitnorm" => ColumnScaling::UnitNorm,
                    "inverseeigenvalue" => ColumnScaling::InverseEigenvalue,
                    _ => return Err(bad(k, v, "expected unit-norm or inverse-eigenvalue")),
                }
            }
            "splee_max_nodes" => self.splee.max_nodes = parse(k, v)?,
            "perplexity" => self.sne.perplexity = parse(k, v)?,
            "k_neighbors" => self.sne.k_neighbors = parse_opt(k, v)?,
            "walks_per_node" => self.sne.walks_per_node = parse(k, v)?,
            "walk_length" => self.sne.walk_length = parse(k, v)?,
            "max_row_targets" => self.sne.max_row_targets = parse_opt(k, v)?,
            "iterations" => self.sne.iterations = parse(k, v)?,
            "exaggeration" => self.sne.exaggeration = parse(k, v)?,
            "exaggeration_iters" => self.sne.exaggeration_iters = parse(k, v)?,
            "learning_rate" => self.sne.learning_rate = parse(k, v)?,
            "momentum" => self.sne.momentum = parse(k, v)?,
            "final_momentum" => self.sne.final_momentum = parse(k, v)?,
            "momentum_switch" => self.sne.momentum_switch = parse(k, v)?,
            "init_sd" => self.sne.init_sd = parse(k, v)?,
            "gradient" => {
                self.sne.gradient = match canonical(v).as_str() {
                    "exact" => GradientMethod::Exact,
                    "barneshut" => GradientMethod::BarnesHut,
                    "interpolation" => GradientMethod::Interpolation,
                    _ => return Err(bad(k, v, "expected exact, barnes-hut or interpolation")),
                }
            }
            "theta" => self.sne.theta = parse(k, v)?,
            "exact_gradient_max_nodes" => self.sne.exact_gradient_max_nodes = parse(k, v)?,
            "exact_max_nodes" => self.sne.exact_max_nodes = parse(k, v)?,
            "positive_exponent" => self.sne.positive_exponent = parse(k, v)?,
            "graph_weights" => {
                self.sne.graph_weights = match canonical(v).as_str() {
                    "embedding" => GraphWeights::Embedding,
                    "uniform" => GraphWeights::Uniform,
                    _ => return Err(bad(k, v, "expected embedding or uniform")),
                }
            }
            "affinity_mode" => {
                self.sne.mode = match canonical(v).as_str() {
                    "exact" => AffinityMode::Exact,
                    "randomwalk" => AffinityMode::RandomWalk,
                    _ => return Err(bad(k, v, "expected exact or random-walk")),
                }
            }
            "grid_k" => self.aq.grid_k = parse(k, v)?,
            "dominance_p" => self.aq.dominance_p = parse(k, v)?,
            "occupied_denominator" => self.aq.occupied_denominator = parse(k, v)?,
            "lfr_n" => self.lfr.n = parse(k, v)?,
            "lfr_tau1" => self.lfr.tau1 = parse(k, v)?,
            "lfr_tau2" => self.lfr.tau2 = parse(k, v)?,
            "lfr_mu" => self.lfr.mu = parse(k, v)?,
            "lfr_seed" => self.lfr.seed = parse(k, v)?,
            "lfr_avg_degree" => self.lfr.avg_degree = parse_opt(k, v)?,
            "lfr_max_degree" => self.lfr.max_degree = parse_opt(k, v)?,
            "lfr_min_community" => self.lfr.min_community = parse_opt(k, v)?,
            "lfr_max_community" => self.lfr.max_community = parse_opt(k, v)?,
            "kl_trace" => self.kl_trace = parse(k, v)?,
            "svg_size" => self.svg_size = parse(k, v)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order. Feeding these back
    /// through [`RunConfig::set`] reproduces `self`.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let sne = &self.sne;
        let scaling = match self.splee.scaling {
            ColumnScaling::UnitNorm => "unit-norm",
            ColumnScaling::InverseEigenvalue => "inverse-eigenvalue",
        };
        let gradient = match sne.gradient {
            GradientMethod::Exact => "exact",
            GradientMethod::BarnesHut => "barnes-hut",
            GradientMethod::Interpolation => "interpolation",
        };
        let graph_weights = match sne.graph_weights {
            GraphWeights::Embedding => "embedding",
            GraphWeights::Uniform => "uniform",
        };
        let mode = match sne.mode {
            AffinityMode::Exact => "exact",
            AffinityMode::RandomWalk => "random-walk",
        };
        vec![
            ("input", self.input.to_string()),
            ("ge", self.ge.to_string()),
            ("dr", self.dr.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("workers", self.workers.to_string()),
            ("dim", self.sp.dim.to_string()),
            ("l0", opt(&self.sp.threshold)),
            ("epsilon", self.splee.epsilon.to_string()),
            ("eig_tol", self.splee.eig_tol.to_string()),
            ("eig_max_iter", self.splee.max_iter.to_string()),
            ("null_tol", opt(&self.splee.null_tol)),
            ("generalized", self.splee.generalized.to_string()),
            ("column_scaling", scaling.to_string()),
            ("splee_max_nodes", self.splee.max_nodes.to_string()),
            ("perplexity", sne.perplexity.to_string()),
            ("k_neighbors", opt(&sne.k_neighbors)),
            ("walks_per_node", sne.walks_per_node.to_string()),
            ("walk_length", sne.walk_length.to_string()),
            ("max_row_targets", opt(&sne.max_row_targets)),
            ("iterations", sne.iterations.to_string()),
            ("exaggeration", sne.exaggeration.to_string()),
            ("exaggeration_iters", sne.exaggeration_iters.to_string()),
            ("learning_rate", sne.learning_rate.to_string()),
            ("momentum", sne.momentum.to_string()),
            ("final_momentum", sne.final_momentum.to_string()),
            ("momentum_switch", sne.momentum_switch.to_string()),
            ("init_sd", sne.init_sd.to_string()),
            ("gradient", gradient.to_string()),
            ("theta", sne.theta.to_string()),
            ("exact_gradient_max_nodes", sne.exact_gradient_max_nodes.to_string()),
            ("exact_max_nodes", sne.exact_max_nodes.to_string()),
            ("positive_exponent", sne.positive_exponent.to_string()),
            ("graph_weights", graph_weights.to_string()),
            ("affinity_mode", mode.to_string()),
            ("grid_k", self.aq.grid_k.to_string()),
            ("dominance_p", self.aq.dominance_p.to_string()),
            ("occupied_denominator", self.aq.occupied_denominator.to_string()),
            ("lfr_n", self.lfr.n.to_string()),
            ("lfr_tau1", self.lfr.tau1.to_string()),
            ("lfr_tau2", self.lfr.tau2.to_string()),
            ("lfr_mu", self.lfr.mu.to_string()),
            ("lfr_seed", self.lfr.seed.to_string()),
            ("lfr_avg_degree", opt(&self.lfr.avg_degree)),
            ("lfr_max_degree", opt(&self.lfr.max_degree)),
            ("lfr_min_community", opt(&self.lfr.min_community)),
            ("lfr_max_community", opt(&self.lfr.max_community)),
            ("kl_trace", self.kl_trace.to_string()),
            ("svg_size", self.svg_size.to_string()),
        ]
    }

    /// The flat file form of [`RunConfig::entries`].
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if let Input::EdgeList(p) = &self.input {
            if !p.is_file() {
                return invalid(format!("input file {} does not exist", p.display()));
            }
        }
        if self.sp.dim == 0 {
            return invalid("dim must be positive".into());
        }
        if self.svg_size == 0 {
            return invalid("svg_size must be positive".into());
        }
        self.sne.validate().or_else(|e| invalid(e.to_string()))?;
        self.aq.validate().or_else(|e| invalid(e.to_string()))?;
        if self.input == Input::Lfr {
            self.lfr.params().validate().or_else(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }
}
