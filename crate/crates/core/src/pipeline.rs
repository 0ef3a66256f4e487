//! End-to-end wiring: backbone pretraining, per-row fine-tuning for the
//! cross-domain protocols, rank sweeps and spectral analysis of trained
//! checkpoints, plus the files each of them writes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domgen::SampleSet;
use crate::error::{invalid, Result};
use crate::eval::{
    diff_heatmap, format_fixed, run_protocol, variant_bundles, variant_macro, DiffHeatmap,
    MacroTable, Metric, ProtocolRegime, ProtocolRun,
};
use crate::matcore::svd;
use crate::nanovit::{
    predict_scores, pretrain_backbone, train, AdapterConfig, Checkpoint, ModelConfig, Pretrained,
    Regime, TrainLogRow, TrainSpec,
};
use crate::seeds;
use crate::spectra::{analyze_checkpoint, effort_sigma_hat, Scheme, SpectralReport};
use crate::{DeltaSpec, Matrix};

/// Everything that determines a protocol run besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub model: ModelConfig,
    pub pretrain: TrainSpec,
    pub train: TrainSpec,
    pub adapter: AdapterConfig,
    pub regime: Regime,
    pub protocols: Vec<ProtocolRegime>,
    pub metric: Metric,
    pub threshold: f64,
    pub seed: u64,
    pub freeze_norms: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            pretrain: TrainSpec {
                epochs: 5,
                ..TrainSpec::default()
            },
            train: TrainSpec {
                epochs: 10,
                ..TrainSpec::default()
            },
            adapter: AdapterConfig::default(),
            regime: Regime::Sica,
            protocols: vec![
                ProtocolRegime::Sd,
                ProtocolRegime::Lodo,
                ProtocolRegime::Unified,
            ],
            metric: Metric::Auc,
            threshold: 0.5,
            seed: 7,
            freeze_norms: false,
        }
    }
}

/// Pretrains the shared backbone on the real samples of `train_set`.
pub fn fit_backbone(cfg: &ProtocolConfig, train_set: &SampleSet) -> Result<Pretrained> {
    let model = ModelConfig {
        d_feature: train_set.d_feature,
        ..cfg.model.clone()
    };
    let spec = TrainSpec {
        seed: seeds::derive(cfg.seed, "pretrain"),
        ..cfg.pretrain.clone()
    };
    pretrain_backbone(&model, &train_set.reals(), &spec)
}

/// Fresh head (and adapters) on `backbone`, trained on `data`.
pub fn fine_tune(
    backbone: &Checkpoint,
    cfg: &ProtocolConfig,
    adapter: AdapterConfig,
    seed: u64,
    data: &SampleSet,
) -> Result<(Checkpoint, Vec<TrainLogRow>)> {
    let mut ck = Checkpoint::adapt_from(backbone, cfg.regime, adapter, seed)?;
    ck.freeze_norms = cfg.freeze_norms;
    let spec = TrainSpec {
        seed: seeds::derive(seed, "train"),
        ..cfg.train.clone()
    };
    train(&ck, &spec, data)
}

/// Runs the selected protocols, fine-tuning one model per row on top of
/// `backbone`.
pub fn run_detection_protocol(
    backbone: &Checkpoint,
    train_set: &SampleSet,
    test: &SampleSet,
    domain_names: &[String],
    cfg: &ProtocolConfig,
) -> Result<ProtocolRun> {
    run_protocol(
        train_set,
        test,
        domain_names,
        &cfg.protocols,
        cfg.metric,
        cfg.threshold,
        cfg.seed,
        |_, row_seed, data| {
            let (ck, _) = fine_tune(backbone, cfg, cfg.adapter, row_seed, data)?;
            Ok(move |d: &SampleSet| predict_scores(&ck, d))
        },
    )
}

/// Derived tables of a protocol run.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolArtifacts {
    pub heatmap: Option<DiffHeatmap>,
    /// Per-variant macro table of the unified row, in percent.
    pub unified_macro: Option<MacroTable>,
}

pub fn protocol_artifacts(
    run: &ProtocolRun,
    test: &SampleSet,
    domain_names: &[String],
    threshold: f64,
) -> Result<ProtocolArtifacts> {
    let m = &run.matrix;
    let sd = m.select(ProtocolRegime::Sd);
    let unified = m.select(ProtocolRegime::Unified);
    let heatmap = if !sd.rows.is_empty() && unified.rows.len() == 1 {
        Some(diff_heatmap(&sd, &unified)?)
    } else {
        None
    };
    let unified_macro = match m
        .rows
        .iter()
        .position(|r| r.regime == ProtocolRegime::Unified)
    {
        Some(i) => {
            let bundles = variant_bundles(test, &run.row_scores[i], threshold)?;
            Some(variant_macro(&bundles, domain_names, m.metric)?)
        }
        None => None,
    };
    Ok(ProtocolArtifacts {
        heatmap,
        unified_macro,
    })
}

/// Writes `matrix_<metric>.csv`, `matrix.json` and, when the protocols
/// allow it, `diff_heatmap.svg`, `diff_heatmap.csv` and
/// `unified_macro_<metric>.csv`. Returns the file names written.
pub fn write_protocol_outputs(
    dir: &Path,
    run: &ProtocolRun,
    artifacts: &ProtocolArtifacts,
) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let metric = run.matrix.metric;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        fs::write(dir.join(&name), body)?;
        written.push(name);
        Ok(())
    };
    put(format!("matrix_{metric}.csv"), run.matrix.to_csv())?;
    put(
        "matrix.json".into(),
        serde_json::to_string_pretty(&run.matrix)?,
    )?;
    if let Some(h) = &artifacts.heatmap {
        put("diff_heatmap.svg".into(), h.to_svg())?;
        put("diff_heatmap.csv".into(), h.to_csv())?;
    }
    if let Some(t) = &artifacts.unified_macro {
        put(format!("unified_macro_{metric}.csv"), t.to_csv(1))?;
    }
    Ok(written)
}

pub const TRAIN_LOG_HEADER: &str = "epoch,step,lr,loss,acc";

pub fn train_log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = format!("{TRAIN_LOG_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:e},{},{}",
            r.epoch, r.step, r.lr, r.loss, r.acc
        );
    }
    out
}

/// One line of the rank ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    /// Requested rank clamped to the attention width.
    pub effective_rank: usize,
    pub alpha: f64,
    /// Macro average of domain averages over test variants, as fractions.
    pub overall_acc: f64,
    pub overall_auc: f64,
}

pub const RANK_SWEEP_HEADER: &str = "rank,effective_rank,alpha,overall_acc,overall_auc";

/// Trains one unified low-rank model per requested rank, keeping α/r fixed
/// at the configured ratio. Ranks clamped to the same effective rank share
/// one run.
pub fn rank_sweep(
    backbone: &Checkpoint,
    train_set: &SampleSet,
    test: &SampleSet,
    domain_names: &[String],
    ranks: &[usize],
    cfg: &ProtocolConfig,
) -> Result<Vec<RankRow>> {
    if ranks.is_empty() || ranks.contains(&0) {
        return invalid("ranks must be a non-empty list of positive counts");
    }
    let cfg = ProtocolConfig {
        regime: Regime::Sica,
        ..cfg.clone()
    };
    let width = backbone.config.d_model;
    let ratio = cfg.adapter.alpha / cfg.adapter.rank as f64;
    let mut done: BTreeMap<usize, RankRow> = BTreeMap::new();
    let mut out = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let eff = rank.min(width);
        if !done.contains_key(&eff) {
            let adapter = AdapterConfig {
                rank: eff,
                alpha: ratio * eff as f64,
            };
            let seed = seeds::derive_ints(seeds::derive(cfg.seed, "rank-sweep"), &[eff as u64]);
            let (ck, _) = fine_tune(backbone, &cfg, adapter, seed, train_set)?;
            let scores = predict_scores(&ck, test)?;
            let bundles = variant_bundles(test, &scores, cfg.threshold)?;
            let acc = variant_macro(&bundles, domain_names, Metric::Acc)?;
            let auc = variant_macro(&bundles, domain_names, Metric::Auc)?;
            done.insert(
                eff,
                RankRow {
                    rank,
                    effective_rank: eff,
                    alpha: adapter.alpha,
                    overall_acc: acc.overall / 100.0,
                    overall_auc: auc.overall / 100.0,
                },
            );
        }
        out.push(RankRow {
            rank,
            ..done[&eff].clone()
        });
    }
    Ok(out)
}

pub fn rank_sweep_csv(rows: &[RankRow]) -> String {
    let mut out = format!("{RANK_SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.rank,
            r.effective_rank,
            r.alpha,
            format_fixed(r.overall_acc, 4),
            format_fixed(r.overall_auc, 4)
        );
    }
    out
}

/// Attention matrices whose name contains `filter` (all when `None`).
fn selected(names: impl IntoIterator<Item = String>, filter: Option<&str>) -> Vec<String> {
    names
        .into_iter()
        .filter(|n| filter.is_none_or(|f| n.contains(f)))
        .collect()
}

/// Frozen attention weights of `w0`, restricted by `filter`.
pub fn frozen_attention(w0: &Checkpoint, filter: Option<&str>) -> Result<BTreeMap<String, Matrix>> {
    let all = w0.attention_weights();
    let keep = selected(all.keys().cloned(), filter);
    if keep.is_empty() {
        return invalid(format!("no attention matrix matches {filter:?}"));
    }
    Ok(keep
        .into_iter()
        .map(|n| (n.clone(), all[&n].clone()))
        .collect())
}

/// Updates carried by `delta` relative to `w0` under `scheme`. For the
/// residual-subspace baseline `delta` is ignored and each update is built
/// from the factors of W₀ at `effort_k`.
pub fn scheme_deltas(
    w0: &BTreeMap<String, Matrix>,
    delta: Option<&Checkpoint>,
    scheme: Scheme,
    effort_k: usize,
    seed: u64,
) -> Result<BTreeMap<String, DeltaSpec>> {
    let mut out = BTreeMap::new();
    for (i, name) in w0.keys().enumerate() {
        let spec = match scheme {
            Scheme::Effort => {
                let f = svd(&w0[name])?;
                let sigma_hat =
                    effort_sigma_hat(&f, effort_k, seeds::derive_ints(seed, &[i as u64]))?;
                DeltaSpec::Effort {
                    sigma_hat,
                    k: effort_k,
                }
            }
            Scheme::Fft => {
                let Some(ck) = delta else {
                    return invalid("the full fine-tune scheme needs a tuned checkpoint");
                };
                match ck.params.get(name) {
                    Some(w) => DeltaSpec::Fft(w.clone()),
                    None => return invalid(format!("tuned checkpoint lacks {name}")),
                }
            }
            Scheme::Sica => {
                let Some(ck) = delta else {
                    return invalid("the low-rank scheme needs an adapted checkpoint");
                };
                match ck.adapters.get(name) {
                    Some(ad) => DeltaSpec::Sica(ad.clone()),
                    None => return invalid(format!("adapted checkpoint has no adapter on {name}")),
                }
            }
        };
        out.insert(name.clone(), spec);
    }
    Ok(out)
}

/// Spectral report of one scheme over the (filtered) attention set.
pub fn spectral_analysis(
    w0: &Checkpoint,
    delta: Option<&Checkpoint>,
    scheme: Scheme,
    k_grid: &[usize],
    effort_k: usize,
    filter: Option<&str>,
    seed: u64,
) -> Result<SpectralReport> {
    let frozen = frozen_attention(w0, filter)?;
    let deltas = scheme_deltas(&frozen, delta, scheme, effort_k, seed)?;
    analyze_checkpoint(&frozen, &deltas, k_grid)
}

/// Writes `spectral_report.json`, `spectral_report.csv` and
/// `spectral_avg.csv`.
pub fn write_spectral_outputs(dir: &Path, report: &SpectralReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("spectral_report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    fs::write(dir.join("spectral_report.csv"), report.records_csv())?;
    fs::write(dir.join("spectral_avg.csv"), report.averages_csv())?;
    Ok(())
}
