use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use sica_core::domgen::{
    apply_split, build_benchmark, read_dataset, write_dataset, BenchmarkConfig, DomainParams,
    SampleSet,
};
use sica_core::eval::{Metric, MetricBundle, ProtocolRegime};
use sica_core::nanovit::{
    load_checkpoint, predict_scores, save_checkpoint, Checkpoint, Regime, TrainSpec,
};
use sica_core::pipeline::{
    fine_tune, fit_backbone, protocol_artifacts, rank_sweep, rank_sweep_csv,
    run_detection_protocol, spectral_analysis, train_log_csv, write_protocol_outputs,
    write_spectral_outputs, ProtocolConfig,
};
use sica_core::seeds;
use sica_core::spectra::{default_k_grid, Scheme};

use crate::error::{usage, CliResult};
use crate::manifest::prepare_out;
use crate::opts::{
    merge, parse_list, parse_protocols, require, AblateArgs, AnalyzeArgs, EvalArgs, FitArgs,
    GenDataArgs, ReportArgs, TrainArgs,
};
use crate::report;

/// Global flags shared by every subcommand.
pub struct Ctx {
    pub config: Option<Value>,
    pub force: bool,
}

/// What a finished subcommand reports back for its run manifest.
pub struct Outcome {
    pub options: Value,
    pub resolved: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub outputs: Vec<String>,
    pub summary: Value,
}

pub fn gen_data(args: &GenDataArgs, ctx: &Ctx) -> CliResult<Outcome> {
    let a: GenDataArgs = merge(args, ctx.config.as_ref(), "gen-data")?;
    let out = require(&a.out, "out")?.clone();
    let d = BenchmarkConfig::default();
    let p = DomainParams::default();
    let cfg = BenchmarkConfig {
        domains: a.domains.unwrap_or(d.domains),
        variants: a.variants.unwrap_or(d.variants),
        dim: a.dim.unwrap_or(d.dim),
        n_real_per_domain: a.n_real.unwrap_or(d.n_real_per_domain),
        n_fake_per_variant: a.n_fake.unwrap_or(d.n_fake_per_variant),
        train_fraction_of_variants: a.train_fraction.unwrap_or(d.train_fraction_of_variants),
        params: DomainParams {
            semantic_spread: a.spread.unwrap_or(p.semantic_spread),
            artifact_strength: a.strength.unwrap_or(p.artifact_strength),
            center_separation: a.separation.unwrap_or(p.center_separation),
            shared_fraction: a.shared_fraction.unwrap_or(p.shared_fraction),
        },
        seed: a.seed.unwrap_or(d.seed),
    };
    let (set, manifest) = build_benchmark(&cfg)?;
    prepare_out(&out, ctx.force)?;
    write_dataset(&out, &set, &manifest)?;
    let c = &manifest.split.counts;
    Ok(Outcome {
        options: serde_json::to_value(&a)?,
        resolved: serde_json::to_value(&cfg)?,
        seed: Some(cfg.seed),
        inputs: vec![],
        out,
        outputs: vec!["data.csv".into(), "manifest.json".into()],
        summary: json!({"samples": set.len(), "train": c.train, "val": c.val, "test": c.test}),
    })
}

struct Data {
    train: SampleSet,
    val: SampleSet,
    test: SampleSet,
    names: Vec<String>,
}

fn load_data(dir: &Path) -> CliResult<Data> {
    let (set, manifest) = read_dataset(dir)?;
    let (train, val, test) = apply_split(&set, &manifest.split)?;
    Ok(Data {
        train,
        val,
        test,
        names: manifest.domain_names(),
    })
}

/// Loads `--backbone` or pretrains one on the training reals, saving it to
/// `save_to` when given. Adjusts `cfg.model` to the backbone actually used.
fn obtain_backbone(
    fit: &FitArgs,
    cfg: &mut ProtocolConfig,
    train: &SampleSet,
    save_to: Option<&Path>,
) -> CliResult<(Checkpoint, Value)> {
    if let Some(dir) = &fit.backbone {
        let ck = load_checkpoint(dir)?;
        if ck.config.d_feature != train.d_feature {
            return usage(format!(
                "backbone expects {} features, data has {}",
                ck.config.d_feature, train.d_feature
            ));
        }
        cfg.model = ck.config.clone();
        return Ok((ck, json!({"backbone": dir})));
    }
    let pre = fit_backbone(cfg, train)?;
    cfg.model = pre.checkpoint.config.clone();
    if let Some(dir) = save_to {
        save_checkpoint(dir, &pre.checkpoint)?;
        fs::write(dir.join("pretrain_log.csv"), train_log_csv(&pre.log))?;
    }
    Ok((
        pre.checkpoint,
        json!({"backbone_domain_accuracy": pre.domain_accuracy}),
    ))
}

fn data_dir(data: &Option<PathBuf>) -> CliResult<PathBuf> {
    Ok(require(data, "data")?.clone())
}

pub fn train(args: &TrainArgs, ctx: &Ctx) -> CliResult<Outcome> {
    let a: TrainArgs = merge(args, ctx.config.as_ref(), "train")?;
    let data_path = data_dir(&a.data)?;
    let out = require(&a.out, "out")?.clone();
    let data = load_data(&data_path)?;
    let regime = a.regime.unwrap_or(Regime::Sica);
    let mut cfg = a
        .fit
        .protocol_config(regime, data.train.d_feature, TrainSpec::default().epochs);
    prepare_out(&out, ctx.force)?;
    let backbone_dir = out.join("backbone");
    let (backbone, mut summary) =
        obtain_backbone(&a.fit, &mut cfg, &data.train, Some(&backbone_dir))?;
    let (ck, log) = fine_tune(
        &backbone,
        &cfg,
        cfg.adapter,
        seeds::derive(cfg.seed, "train"),
        &data.train,
    )?;
    save_checkpoint(&out, &ck)?;
    fs::write(out.join("train_log.csv"), train_log_csv(&log))?;
    let val = MetricBundle::compute(
        &predict_scores(&ck, &data.val)?,
        &data.val.labels(),
        cfg.threshold,
    )?;
    fs::write(
        out.join("val_metrics.json"),
        serde_json::to_string_pretty(&val)? + "\n",
    )?;
    let mut outputs = vec![
        "manifest.json".into(),
        "train_log.csv".into(),
        "val_metrics.json".into(),
    ];
    if a.fit.backbone.is_none() {
        outputs.push("backbone/".into());
    }
    if let Some(last) = log.last() {
        summary["final_train_acc"] = json!(last.acc);
        summary["final_train_loss"] = json!(last.loss);
    }
    summary["val"] = serde_json::to_value(val)?;
    let mut inputs = vec![data_path];
    inputs.extend(a.fit.backbone.clone());
    Ok(Outcome {
        options: serde_json::to_value(&a)?,
        resolved: serde_json::to_value(&cfg)?,
        seed: Some(cfg.seed),
        inputs,
        out,
        outputs,
        summary,
    })
}

pub fn analyze(args: &AnalyzeArgs, ctx: &Ctx) -> CliResult<Outcome> {
    let a: AnalyzeArgs = merge(args, ctx.config.as_ref(), "analyze")?;
    let w0_dir = require(&a.w0, "w0")?.clone();
    let out = require(&a.out, "out")?.clone();
    let scheme = a.scheme.unwrap_or(Scheme::Sica);
    let w0 = load_checkpoint(&w0_dir)?;
    let delta = match (&a.delta, scheme) {
        (Some(dir), _) => Some(load_checkpoint(dir)?),
        (None, Scheme::Effort) => None,
        (None, _) => return usage("missing required flag --delta"),
    };
    let d = w0.config.d_model;
    let k_grid = match &a.k_grid {
        Some(text) => parse_list(text, "k")?,
        None => default_k_grid(d, d),
    };
    let effort_k = match a.effort_k {
        Some(k) => k,
        None => match k_grid.iter().copied().filter(|&k| k < d).max() {
            Some(k) => k,
            None => return usage("no k below the matrix size to build the effort update"),
        },
    };
    let seed = a.seed.unwrap_or(7);
    let report = spectral_analysis(
        &w0,
        delta.as_ref(),
        scheme,
        &k_grid,
        effort_k,
        a.filter.as_deref(),
        seed,
    )?;
    prepare_out(&out, ctx.force)?;
    write_spectral_outputs(&out, &report)?;
    let mut inputs = vec![w0_dir];
    inputs.extend(a.delta.clone());
    Ok(Outcome {
        options: serde_json::to_value(&a)?,
        resolved: json!({
            "scheme": scheme,
            "k_grid": report.k_grid,
            "effort_k": if scheme == Scheme::Effort { Some(effort_k) } else { None },
            "filter": a.filter,
            "seed": seed,
        }),
        seed: Some(seed),
        inputs,
        out,
        outputs: vec![
            "spectral_report.json".into(),
            "spectral_report.csv".into(),
            "spectral_avg.csv".into(),
        ],
        summary: serde_json::to_value(&report.averages)?,
    })
}

pub fn eval(args: &EvalArgs, ctx: &Ctx) -> CliResult<Outcome> {
    let a: EvalArgs = merge(args, ctx.config.as_ref(), "eval")?;
    let data_path = data_dir(&a.data)?;
    let out = require(&a.out, "out")?.clone();
    let protocols = match &a.regime_set {
        Some(text) => parse_protocols(text)?,
        None => vec![
            ProtocolRegime::Sd,
            ProtocolRegime::Lodo,
            ProtocolRegime::Unified,
        ],
    };
    let data = load_data(&data_path)?;
    let regime = a.train.unwrap_or(Regime::Sica);
    let base = ProtocolConfig::default();
    let mut cfg = a
        .fit
        .protocol_config(regime, data.train.d_feature, base.train.epochs);
    cfg.protocols = protocols;
    cfg.metric = a.metric.unwrap_or(Metric::Auc);
    prepare_out(&out, ctx.force)?;
    let (backbone, summary) = obtain_backbone(&a.fit, &mut cfg, &data.train, None)?;
    let run = run_detection_protocol(&backbone, &data.train, &data.test, &data.names, &cfg)?;
    let artifacts = protocol_artifacts(&run, &data.test, &data.names, cfg.threshold)?;
    let outputs = write_protocol_outputs(&out, &run, &artifacts)?;
    let mut inputs = vec![data_path];
    inputs.extend(a.fit.backbone.clone());
    Ok(Outcome {
        options: serde_json::to_value(&a)?,
        resolved: serde_json::to_value(&cfg)?,
        seed: Some(cfg.seed),
        inputs,
        out,
        outputs,
        summary,
    })
}

pub fn ablate_rank(args: &AblateArgs, ctx: &Ctx) -> CliResult<Outcome> {
    let a: AblateArgs = merge(args, ctx.config.as_ref(), "ablate-rank")?;
    let data_path = data_dir(&a.data)?;
    let out = require(&a.out, "out")?.clone();
    let ranks: Vec<usize> = parse_list(a.ranks.as_deref().unwrap_or("1,2,4,8,16,32,64"), "rank")?;
    let data = load_data(&data_path)?;
    let base = ProtocolConfig::default();
    let mut cfg = a
        .fit
        .protocol_config(Regime::Sica, data.train.d_feature, base.train.epochs);
    prepare_out(&out, ctx.force)?;
    let (backbone, summary) = obtain_backbone(&a.fit, &mut cfg, &data.train, None)?;
    let rows = rank_sweep(
        &backbone,
        &data.train,
        &data.test,
        &data.names,
        &ranks,
        &cfg,
    )?;
    fs::write(out.join("rank_sweep.csv"), rank_sweep_csv(&rows))?;
    let mut inputs = vec![data_path];
    inputs.extend(a.fit.backbone.clone());
    let mut resolved = serde_json::to_value(&cfg)?;
    resolved["ranks"] = json!(ranks);
    Ok(Outcome {
        options: serde_json::to_value(&a)?,
        resolved,
        seed: Some(cfg.seed),
        inputs,
        out,
        outputs: vec!["rank_sweep.csv".into()],
        summary,
    })
}

pub fn report(args: &ReportArgs, ctx: &Ctx) -> CliResult<Outcome> {
    let a: ReportArgs = merge(args, ctx.config.as_ref(), "report")?;
    let runs = require(&a.runs, "runs")?.clone();
    let out = require(&a.out, "out")?.clone();
    if runs.is_empty() {
        return usage("--runs needs at least one directory");
    }
    let title = a.title.clone().unwrap_or_else(|| "Run report".to_string());
    prepare_out(&out, ctx.force)?;
    let outputs = report::render(&runs, &title, &out)?;
    Ok(Outcome {
        options: serde_json::to_value(&a)?,
        resolved: json!({"runs": runs, "title": title}),
        seed: None,
        inputs: runs,
        out,
        outputs,
        summary: Value::Null,
    })
}
