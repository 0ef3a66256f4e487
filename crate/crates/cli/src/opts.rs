//! Command-line options. Every option is optional at parse time so a JSON
//! config file can fill it; flags win over the config, and defaults apply
//! last.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use sica_core::eval::{Metric, ProtocolRegime};
use sica_core::nanovit::{AdapterConfig, ModelConfig, Regime, TrainSpec};
use sica_core::pipeline::ProtocolConfig;
use sica_core::spectra::Scheme;

use crate::error::{usage, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "sica",
    version,
    about = "Low-rank adaptation, subspace analysis and cross-domain evaluation"
)]
pub struct Cli {
    /// JSON file with option values; a previous run_manifest.json also works.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
    /// Upper bound on worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-domain benchmark.
    GenData(GenDataArgs),
    /// Fine-tune a detector on the training split.
    Train(TrainArgs),
    /// Subspace analysis of a weight update.
    Analyze(AnalyzeArgs),
    /// Cross-domain protocol evaluation.
    Eval(EvalArgs),
    /// Rank ablation of the low-rank regime.
    AblateRank(AblateArgs),
    /// Markdown and SVG summary of previous runs.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Analyze(_) => "analyze",
            Command::Eval(_) => "eval",
            Command::AblateRank(_) => "ablate-rank",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GenDataArgs {
    #[arg(long)]
    pub domains: Option<usize>,
    #[arg(long)]
    pub variants: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n_real: Option<usize>,
    #[arg(long)]
    pub n_fake: Option<usize>,
    /// Fraction of each domain's variants used for training.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub strength: Option<f64>,
    /// Pairwise center distance in units of the spread.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Weight of the axis shared by a domain's variants.
    #[arg(long)]
    pub shared_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Model and optimization settings shared by the training commands.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FitArgs {
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_start: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    /// Keep layer norms frozen in the low-rank regime.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub freeze_norms: Option<bool>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    #[arg(long)]
    pub head_hidden: Option<usize>,
    /// Decision threshold on sigmoid scores.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pretrained backbone checkpoint; pretrained from the data when absent.
    #[arg(long)]
    pub backbone: Option<PathBuf>,
}

impl FitArgs {
    /// Protocol settings with `default_epochs` as the fine-tuning default.
    pub fn protocol_config(
        &self,
        regime: Regime,
        d_feature: usize,
        default_epochs: usize,
    ) -> ProtocolConfig {
        let base = ProtocolConfig::default();
        let seed = self.seed.unwrap_or(base.seed);
        let m = &base.model;
        let model = ModelConfig {
            d_feature,
            seq_len: self.seq_len.unwrap_or(m.seq_len),
            d_model: self.d_model.unwrap_or(m.d_model),
            n_heads: self.n_heads.unwrap_or(m.n_heads),
            n_layers: self.n_layers.unwrap_or(m.n_layers),
            mlp_hidden: self.mlp_hidden.unwrap_or(m.mlp_hidden),
            head_hidden: self.head_hidden.unwrap_or(m.head_hidden),
            seed,
        };
        let spec = |epochs: usize, base: &TrainSpec| TrainSpec {
            epochs,
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            lr_start: self.lr_start.unwrap_or(base.lr_start),
            lr_end: self.lr_end.unwrap_or(base.lr_end),
            seed,
        };
        ProtocolConfig {
            model,
            pretrain: spec(
                self.pretrain_epochs.unwrap_or(base.pretrain.epochs),
                &base.pretrain,
            ),
            train: spec(self.epochs.unwrap_or(default_epochs), &base.train),
            adapter: AdapterConfig {
                rank: self.rank.unwrap_or(base.adapter.rank),
                alpha: self.alpha.unwrap_or(base.adapter.alpha),
            },
            regime,
            protocols: base.protocols,
            metric: base.metric,
            threshold: self.threshold.unwrap_or(base.threshold),
            seed,
            freeze_norms: self.freeze_norms.unwrap_or(base.freeze_norms),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub regime: Option<Regime>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeArgs {
    /// Checkpoint holding the frozen weights.
    #[arg(long)]
    pub w0: Option<PathBuf>,
    /// Tuned checkpoint; not needed for the effort scheme.
    #[arg(long)]
    pub delta: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Comma-separated subspace sizes.
    #[arg(long)]
    pub k_grid: Option<String>,
    /// Principal subspace excluded by the effort scheme.
    #[arg(long)]
    pub effort_k: Option<usize>,
    /// Only analyze attention matrices whose name contains this text.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated subset of sd, lodo, unified.
    #[arg(long)]
    pub regime_set: Option<String>,
    /// Training regime of every protocol row.
    #[arg(long)]
    pub train: Option<Regime>,
    #[arg(long)]
    pub metric: Option<Metric>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated adapter ranks.
    #[arg(long)]
    pub ranks: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportArgs {
    /// Comma-separated run directories.
    #[arg(long, value_delimiter = ',')]
    pub runs: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn strip_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Overlays the flags on the config file values.
pub fn merge<T: Serialize + DeserializeOwned>(
    flags: &T,
    config: Option<&Value>,
    command: &str,
) -> CliResult<T> {
    let mut merged = match config {
        None => Map::new(),
        Some(Value::Object(obj)) => {
            // a run manifest nests the options of one subcommand
            if let (Some(Value::String(sub)), Some(opts)) =
                (obj.get("subcommand"), obj.get("options"))
            {
                if sub != command {
                    return usage(format!("config is a manifest of `{sub}`, not `{command}`"));
                }
                strip_nulls(opts.clone())
            } else {
                strip_nulls(Value::Object(obj.clone()))
            }
        }
        Some(_) => return usage("config file must hold a JSON object"),
    };
    merged.extend(strip_nulls(serde_json::to_value(flags)?));
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| crate::error::CliError::Usage(format!("config: {e}")))
}

pub fn require<'a, T>(v: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    match v {
        Some(x) => Ok(x),
        None => usage(format!("missing required flag --{flag}")),
    }
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    let out: Result<Vec<T>, _> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect();
    match out {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => usage(format!("cannot parse {what} list {text:?}")),
    }
}

pub fn parse_protocols(text: &str) -> CliResult<Vec<ProtocolRegime>> {
    parse_list(text, "protocol")
}
