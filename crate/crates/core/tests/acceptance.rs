//! Acceptance suite. One sequential test prints a PASS/FAIL line per
//! criterion; running sequentially keeps the pipeline timing honest.

mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use sica_core::adapt::{adapted_forward, merge};
use sica_core::domgen::{apply_split, build_benchmark, write_dataset, BenchmarkConfig, SampleSet};
use sica_core::eval::{
    accuracy, auc, average_precision, f1, format_fixed, macro_table, ProtocolRegime,
};
use sica_core::matcore::{svd, top_k};
use sica_core::nanovit::{
    forward, save_checkpoint, AdapterConfig, Checkpoint, ModelConfig, Regime, TrainSpec,
};
use sica_core::pipeline::{
    fine_tune, fit_backbone, protocol_artifacts, rank_sweep, rank_sweep_csv,
    run_detection_protocol, spectral_analysis, write_protocol_outputs, ProtocolConfig,
    RANK_SWEEP_HEADER,
};
use sica_core::spectra::{
    build_delta, effort_sigma_hat, outside_energy, projectors, subspace_cosine, Scheme,
    SpectralRecord,
};
use sica_core::{seeds, DeltaSpec, Matrix};
use support::*;

type Outcome = Result<String, String>;

/// Criteria whose literal statement conflicts with the required rounding
/// rule. Their FAIL line is printed but does not fail the suite.
const KNOWN_CONFLICTS: [usize; 1] = [9];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_svd() -> Outcome {
    let start = Instant::now();
    let mut rng = seeds::rng(101);
    let mut worst_rec: f64 = 0.0;
    let mut worst_sv: f64 = 0.0;
    for case in 0..200u64 {
        let m = rng.random_range(2..=64);
        let n = rng.random_range(2..=64);
        let w = if case % 4 == 0 {
            let r = rng.random_range(0..m.min(n));
            if r == 0 {
                Matrix::zeros(m, n)
            } else {
                low_rank_matrix(m, n, r, 1000 + case)
            }
        } else {
            uniform_matrix(m, n, 1000 + case)
        };
        let f = svd(&w).map_err(|e| format!("case {case}: {e}"))?;
        let norm = frob_sq(&w).sqrt();
        let rec = frob_sq(&f.reconstruct().sub(&w).unwrap()).sqrt() / norm.max(1.0);
        worst_rec = worst_rec.max(rec);
        let ev = symmetric_eigenvalues(&naive_matmul(&naive_transpose(&w), &w));
        let top = ev[0].max(f64::MIN_POSITIVE);
        for (s, e) in f.s.iter().zip(&ev) {
            worst_sv = worst_sv.max((s * s - e.max(0.0)).abs() / top);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst_rec <= 1e-10, || {
        format!("reconstruction residual {worst_rec:e}")
    })?;
    ensure(worst_sv <= 1e-8, || {
        format!("singular value mismatch {worst_sv:e}")
    })?;
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "200 matrices, residual {worst_rec:.1e}, sv error {worst_sv:.1e}, {secs:.2} s"
    ))
}

fn c2_projectors() -> Outcome {
    let mut rng = seeds::rng(202);
    let (mut worst_p, mut worst_py): (f64, f64) = (0.0, 0.0);
    for case in 0..500u64 {
        let m = rng.random_range(2..=16);
        let n = rng.random_range(2..=16);
        let w0 = uniform_matrix(m, n, 2000 + case);
        let delta = uniform_matrix(m, n, 3000 + case);
        let k = rng.random_range(1..=m.min(n));
        let basis = top_k(&svd(&w0).unwrap(), k).unwrap();
        let (pl, pr) = projectors(&basis).unwrap();
        for p in [&pl, &pr] {
            worst_p = worst_p
                .max(naive_matmul(p, p).sub(p).unwrap().max_abs())
                .max(naive_transpose(p).sub(p).unwrap().max_abs());
        }
        let (rl, rr) = outside_energy(&delta, &basis).unwrap();
        let (sl, sr) = subspace_cosine(&delta, &basis).unwrap();
        worst_py = worst_py
            .max((sl * sl + rl - 1.0).abs())
            .max((sr * sr + rr - 1.0).abs());
    }
    ensure(worst_p <= 1e-12, || format!("projector error {worst_p:e}"))?;
    ensure(worst_py <= 1e-10, || {
        format!("Pythagorean error {worst_py:e}")
    })?;
    Ok(format!(
        "500 cases, projector error {worst_p:.1e}, identity error {worst_py:.1e}"
    ))
}

fn c3_effort() -> Outcome {
    let mut rng = seeds::rng(303);
    let (mut worst_r, mut worst_s): (f64, f64) = (0.0, 0.0);
    for case in 0..100u64 {
        let m = rng.random_range(3..=32);
        let n = rng.random_range(3..=32);
        let w0 = uniform_matrix(m, n, 4000 + case);
        let f = svd(&w0).unwrap();
        let k = rng.random_range(1..m.min(n));
        let sigma_hat = effort_sigma_hat(&f, k, case).unwrap();
        let delta = build_delta(&w0, &DeltaSpec::Effort { sigma_hat, k }).unwrap();
        let basis = top_k(&f, k).unwrap();
        let (rl, rr) = outside_energy(&delta, &basis).unwrap();
        let (sl, sr) = subspace_cosine(&delta, &basis).unwrap();
        worst_r = worst_r.max((rl - 1.0).abs()).max((rr - 1.0).abs());
        worst_s = worst_s.max(sl).max(sr);
    }
    ensure(worst_r <= 1e-8, || format!("ratio off by {worst_r:e}"))?;
    ensure(worst_s <= 1e-8, || format!("cosine {worst_s:e}"))?;
    Ok(format!(
        "100 instances, |r - 1| {worst_r:.1e}, sim {worst_s:.1e}"
    ))
}

/// Small benchmark and backbone with one full and one low-rank fine-tune.
struct Fixture {
    backbone: Checkpoint,
    fft: Checkpoint,
    sica: Checkpoint,
}

fn fixture() -> Fixture {
    let bench = BenchmarkConfig {
        domains: 2,
        variants: 4,
        dim: 32,
        n_real_per_domain: 150,
        n_fake_per_variant: 40,
        seed: 17,
        ..BenchmarkConfig::default()
    };
    let (set, manifest) = build_benchmark(&bench).unwrap();
    let (train_set, _, _) = apply_split(&set, &manifest.split).unwrap();
    let cfg = ProtocolConfig {
        model: ModelConfig {
            seq_len: 4,
            d_model: 16,
            n_heads: 2,
            mlp_hidden: 32,
            head_hidden: 16,
            ..ModelConfig::default()
        },
        pretrain: TrainSpec {
            epochs: 2,
            ..TrainSpec::default()
        },
        train: TrainSpec {
            epochs: 3,
            ..TrainSpec::default()
        },
        adapter: AdapterConfig {
            rank: 4,
            alpha: 8.0,
        },
        ..ProtocolConfig::default()
    };
    let backbone = fit_backbone(&cfg, &train_set).unwrap().checkpoint;
    let fft_cfg = ProtocolConfig {
        regime: Regime::Fft,
        ..cfg.clone()
    };
    let fft = fine_tune(&backbone, &fft_cfg, cfg.adapter, 5, &train_set)
        .unwrap()
        .0;
    let sica = fine_tune(&backbone, &cfg, cfg.adapter, 5, &train_set)
        .unwrap()
        .0;
    Fixture {
        backbone,
        fft,
        sica,
    }
}

/// Largest step against the expected direction between consecutive k.
fn monotonicity_violation(a: &SpectralRecord, b: &SpectralRecord) -> f64 {
    [
        b.r_left - a.r_left,
        b.r_right - a.r_right,
        a.sim_left - b.sim_left,
        a.sim_right - b.sim_right,
    ]
    .into_iter()
    .fold(f64::MIN, f64::max)
}

/// Exact-arithmetic monotonicity; the slack absorbs roundoff where the
/// value is constant, e.g. r = 1 below the residual baseline's k.
fn c4_monotonicity(fx: &Fixture) -> Outcome {
    const ROUNDOFF: f64 = 1e-12;
    let grid = [1, 2, 4, 8, 12, 16];
    let (mut reports, mut checks, mut worst) = (0, 0, f64::MIN);
    for (scheme, delta) in [
        (Scheme::Fft, Some(&fx.fft)),
        (Scheme::Sica, Some(&fx.sica)),
        (Scheme::Effort, None),
    ] {
        let report = spectral_analysis(&fx.backbone, delta, scheme, &grid, 8, None, 7)
            .map_err(|e| e.to_string())?;
        reports += 1;
        let mut by_matrix: BTreeMap<&str, Vec<&SpectralRecord>> = BTreeMap::new();
        for r in &report.records {
            by_matrix.entry(r.matrix.as_str()).or_default().push(r);
        }
        for (name, rows) in by_matrix {
            for w in rows.windows(2) {
                ensure(w[0].k < w[1].k, || format!("{name}: k grid out of order"))?;
                let v = monotonicity_violation(w[0], w[1]);
                worst = worst.max(v);
                ensure(v <= ROUNDOFF, || {
                    format!(
                        "{scheme:?} {name}: k {} -> {} breaks monotonicity by {v:e}",
                        w[0].k, w[1].k
                    )
                })?;
                checks += 1;
            }
        }
    }
    Ok(format!(
        "{reports} reports, {checks} consecutive k pairs, largest roundoff step {:.1e}",
        worst.max(0.0)
    ))
}

fn c5_rank_bound(fx: &Fixture) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut moved = false;
    for (name, ad) in &fx.sica.adapters {
        let w0 = &fx.sica.params[name];
        let delta = merge(w0, ad).unwrap().sub(w0).unwrap();
        let s = svd(&delta).unwrap().s;
        moved |= s[0] > 0.0;
        if s[0] > 0.0 {
            worst = worst.max(s[ad.rank..].iter().fold(0.0f64, |m, &v| m.max(v)) / s[0]);
        }
    }
    ensure(moved, || "adapters never moved from zero".into())?;
    ensure(worst < 1e-10, || format!("tail ratio {worst:e}"))?;
    Ok(format!(
        "{} adapted matrices, worst tail ratio {worst:.1e}",
        fx.sica.adapters.len()
    ))
}

fn c6_gradients() -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    for regime in [Regime::Fft, Regime::Sica, Regime::Probe] {
        total += gradient_check(regime)?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{total} entries across 3 regimes, {secs:.1} s"))
}

fn c7_noop_and_merge(fx: &Fixture) -> Outcome {
    let fresh = Checkpoint::adapt_from(
        &fx.backbone,
        Regime::Sica,
        AdapterConfig {
            rank: 4,
            alpha: 8.0,
        },
        3,
    )
    .unwrap();
    let frozen =
        Checkpoint::adapt_from(&fx.backbone, Regime::Probe, AdapterConfig::default(), 3).unwrap();
    let x = uniform_matrix(fx.backbone.config.d_feature, 16, 77).scale(3.0);
    let a = forward(&fresh, &x).unwrap().0;
    let b = forward(&frozen, &x).unwrap().0;
    let noop = a
        .iter()
        .zip(&b)
        .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    ensure(noop <= 1e-12, || {
        format!("fresh adapters move logits by {noop:e}")
    })?;
    let mut worst: f64 = 0.0;
    for (name, ad) in &fx.sica.adapters {
        let w0 = &fx.sica.params[name];
        let h = uniform_matrix(w0.cols(), 9, 5);
        let factored = adapted_forward(w0, ad, &h).unwrap();
        let merged = naive_matmul(&merge(w0, ad).unwrap(), &h);
        worst = worst.max(factored.sub(&merged).unwrap().max_abs());
    }
    ensure(worst <= 1e-12, || format!("factored vs merged {worst:e}"))?;
    Ok(format!(
        "no-op logit gap {noop:.1e}, factored vs merged {worst:.1e}"
    ))
}

fn c8_metrics() -> Outcome {
    let sets: [[f64; 12]; 3] = [
        [
            0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6,
        ],
        [0.9, 0.1, 0.5, 0.5, 0.7, 0.3, 0.5, 0.9, 0.2, 0.8, 0.1, 0.6],
        [0.5; 12],
    ];
    let mut instances = 0;
    for scores in &sets {
        for mask in 0u32..(1 << 12) {
            let labels: Vec<u8> = (0..12).map(|i| ((mask >> i) & 1) as u8).collect();
            let ok = auc(scores, &labels).ok() == brute_auc(scores, &labels)
                && average_precision(scores, &labels).ok() == brute_ap(scores, &labels)
                && accuracy(scores, &labels, 0.5).unwrap() == brute_acc(scores, &labels, 0.5)
                && (f1(scores, &labels, 0.5).unwrap() - brute_f1(scores, &labels, 0.5)).abs()
                    < 1e-15;
            ensure(ok, || format!("mismatch at label pattern {mask:012b}"))?;
            instances += 1;
        }
    }
    let four = auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
    ensure(four == 0.75, || format!("4-sample AUC {four}"))?;
    Ok(format!("{instances} instances exact, 4-sample AUC {four}"))
}

fn overall(groups: &[(&str, Vec<f64>)]) -> String {
    let groups: Vec<(String, Vec<f64>)> = groups
        .iter()
        .map(|(n, v)| (n.to_string(), v.clone()))
        .collect();
    format_fixed(macro_table(&groups).unwrap().overall, 1)
}

fn c9_macro() -> Outcome {
    let sica_domains = overall(&[("all", vec![88.4, 94.0, 85.3, 73.8])]);
    let sica_subtypes = overall(&[
        ("Deepfake", vec![91.3, 89.4, 86.5, 86.6]),
        ("AIGC", vec![96.3, 94.5, 94.7, 96.7, 94.8, 86.9]),
        ("IMDL", vec![85.4, 85.1]),
        ("Doc", vec![69.2, 78.4]),
    ]);
    let resnet_subtypes = overall(&[
        ("Deepfake", vec![71.3, 65.4, 70.0, 64.7]),
        ("AIGC", vec![77.4, 65.2, 75.7, 78.5, 72.7, 75.5]),
        ("IMDL", vec![80.3, 74.2]),
        ("Doc", vec![61.9, 81.5]),
    ]);
    let resnet_domains = overall(&[("all", vec![67.8, 74.2, 77.3, 71.7])]);
    ensure(sica_domains == "85.4" && sica_subtypes == "85.4", || {
        format!("SICA row gives {sica_domains} / {sica_subtypes}")
    })?;
    ensure(resnet_subtypes == "72.7", || {
        format!("Resnet subtypes give {resnet_subtypes}")
    })?;
    let note = format!(
        "SICA 85.4 from domains and subtypes; Resnet subtypes 72.7; Resnet rounded domains (67.8, 74.2, 77.3, 71.7) \
         average exactly 72.75 and round half-up to {resnet_domains}"
    );
    ensure(resnet_domains == "72.7", || {
        format!("known conflict: {note}")
    })?;
    Ok(note)
}

struct PipelineRun {
    secs: f64,
    sd_diag: Vec<f64>,
    off_diag: Vec<f64>,
    lodo: Vec<f64>,
    unified_gap: Vec<f64>,
}

/// Full default pipeline: generate, pretrain, run SD/LODO/unified, write
/// every artifact under `out`.
fn default_pipeline(out: &Path) -> Result<PipelineRun, String> {
    let start = Instant::now();
    let e = |e: sica_core::Error| e.to_string();
    let (set, manifest) = build_benchmark(&BenchmarkConfig::default()).map_err(e)?;
    write_dataset(&out.join("data"), &set, &manifest).map_err(e)?;
    let (train_set, _, test): (SampleSet, SampleSet, SampleSet) =
        apply_split(&set, &manifest.split).map_err(e)?;
    let cfg = ProtocolConfig::default();
    let pre = fit_backbone(&cfg, &train_set).map_err(e)?;
    save_checkpoint(&out.join("backbone"), &pre.checkpoint).map_err(e)?;
    let names = manifest.domain_names();
    let run =
        run_detection_protocol(&pre.checkpoint, &train_set, &test, &names, &cfg).map_err(e)?;
    let artifacts = protocol_artifacts(&run, &test, &names, cfg.threshold).map_err(e)?;
    write_protocol_outputs(&out.join("eval"), &run, &artifacts).map_err(e)?;
    let secs = start.elapsed().as_secs_f64();

    let m = &run.matrix;
    let k = names.len();
    let row = |regime: ProtocolRegime, focus: Option<usize>| {
        m.rows
            .iter()
            .position(|r| r.regime == regime && r.focus == focus)
            .expect("row present")
    };
    let value = |i: usize, j: usize| m.value(i, j).expect("both classes present");
    let mut res = PipelineRun {
        secs,
        sd_diag: Vec::new(),
        off_diag: Vec::new(),
        lodo: Vec::new(),
        unified_gap: Vec::new(),
    };
    let uni = row(ProtocolRegime::Unified, None);
    for d in 0..k {
        let sd = row(ProtocolRegime::Sd, Some(d));
        res.sd_diag.push(value(sd, d));
        res.off_diag
            .extend((0..k).filter(|&j| j != d).map(|j| value(sd, j)));
        res.lodo.push(value(row(ProtocolRegime::Lodo, Some(d)), d));
        res.unified_gap.push((value(uni, d) - value(sd, d)).abs());
    }
    Ok(res)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join("/")
}

fn c10_heterogeneity(run: &PipelineRun) -> Outcome {
    let range = |v: &[f64]| {
        (
            v.iter().cloned().fold(f64::INFINITY, f64::min),
            v.iter().cloned().fold(0.0, f64::max),
        )
    };
    let (off_lo, off_hi) = range(&run.off_diag);
    let (lodo_lo, lodo_hi) = range(&run.lodo);
    let gap = range(&run.unified_gap).1;
    ensure(run.sd_diag.iter().all(|&v| v >= 0.90), || {
        format!("SD diagonal {}", fmt_list(&run.sd_diag))
    })?;
    ensure(off_lo >= 0.40 && off_hi <= 0.60, || {
        format!("SD off-diagonal in [{off_lo:.3}, {off_hi:.3}]")
    })?;
    ensure(lodo_lo >= 0.40 && lodo_hi <= 0.60, || {
        format!("LODO held-out {}", fmt_list(&run.lodo))
    })?;
    ensure(gap <= 0.05, || format!("unified gap {gap:.4}"))?;
    ensure(run.secs <= 120.0, || {
        format!("pipeline took {:.1} s", run.secs)
    })?;
    Ok(format!(
        "SD diag {}, off-diag [{off_lo:.3}, {off_hi:.3}], LODO {}, unified gap <= {gap:.4}, {:.1} s",
        fmt_list(&run.sd_diag),
        fmt_list(&run.lodo),
        run.secs
    ))
}

fn c11_rank_sweep() -> Outcome {
    let bench = BenchmarkConfig {
        dim: 32,
        variants: 4,
        n_real_per_domain: 120,
        n_fake_per_variant: 30,
        ..BenchmarkConfig::default()
    };
    let (set, manifest) = build_benchmark(&bench).unwrap();
    let (train_set, _, test) = apply_split(&set, &manifest.split).unwrap();
    let cfg = ProtocolConfig {
        model: ModelConfig {
            seq_len: 4,
            d_model: 16,
            n_heads: 2,
            mlp_hidden: 32,
            head_hidden: 16,
            ..ModelConfig::default()
        },
        pretrain: TrainSpec {
            epochs: 1,
            ..TrainSpec::default()
        },
        train: TrainSpec {
            epochs: 2,
            ..TrainSpec::default()
        },
        ..ProtocolConfig::default()
    };
    let ranks = [1, 2, 4, 8, 16, 32, 64];
    let names = manifest.domain_names();
    let sweep = || -> Result<String, String> {
        let backbone = fit_backbone(&cfg, &train_set)
            .map_err(|e| e.to_string())?
            .checkpoint;
        let rows = rank_sweep(&backbone, &train_set, &test, &names, &ranks, &cfg)
            .map_err(|e| e.to_string())?;
        Ok(rank_sweep_csv(&rows))
    };
    let first = sweep()?;
    let second = sweep()?;
    ensure(first == second, || "two identical sweeps differ".into())?;
    let lines: Vec<&str> = first.lines().collect();
    ensure(lines[0] == RANK_SWEEP_HEADER, || {
        format!("header {}", lines[0])
    })?;
    ensure(lines.len() == ranks.len() + 1, || {
        format!("{} rows", lines.len() - 1)
    })?;
    for (line, &rank) in lines[1..].iter().zip(&ranks) {
        let f: Vec<&str> = line.split(',').collect();
        let ok = f.len() == 5
            && f[0] == rank.to_string()
            && f[1].parse::<usize>().is_ok_and(|e| e == rank.min(16))
            && f[3..]
                .iter()
                .all(|v| v.parse::<f64>().is_ok_and(|x| (0.0..=1.0).contains(&x)));
        ensure(ok, || format!("bad row {line}"))?;
    }
    Ok(format!("ranks {ranks:?} deterministic, schema ok"))
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

fn c12_determinism(first: &Path, second: &Path) -> Outcome {
    default_pipeline(second)?;
    let a = files_under(first);
    let b = files_under(second);
    ensure(a == b, || "different file sets".into())?;
    ensure(a.iter().any(|f| f.ends_with(".svg")), || {
        "no SVG written".into()
    })?;
    for f in &a {
        ensure(
            fs::read(first.join(f)).unwrap() == fs::read(second.join(f)).unwrap(),
            || format!("{f} differs"),
        )?;
    }
    Ok(format!("{} files byte-identical, SVG included", a.len()))
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "SVD correctness", c1_svd()));
    results.push((2, "projector algebra", c2_projectors()));
    results.push((3, "residual-subspace baseline exactness", c3_effort()));
    let fx = fixture();
    results.push((4, "spectral monotonicity", c4_monotonicity(&fx)));
    results.push((5, "low-rank update rank bound", c5_rank_bound(&fx)));
    results.push((6, "gradient check", c6_gradients()));
    results.push((
        7,
        "adapter no-op and merge equivalence",
        c7_noop_and_merge(&fx),
    ));
    results.push((8, "metric oracles", c8_metrics()));
    results.push((9, "macro aggregation arithmetic", c9_macro()));
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let run = default_pipeline(&first);
    results.push((
        10,
        "desk-scale heterogeneity",
        run.as_ref()
            .map_err(Clone::clone)
            .and_then(c10_heterogeneity),
    ));
    results.push((11, "rank ablation sweep", c11_rank_sweep()));
    let det = match &run {
        Ok(_) => c12_determinism(&first, &tmp.path().join("second")),
        Err(e) => Err(format!("first run failed: {e}")),
    };
    results.push((12, "determinism", det));

    let mut unexpected = Vec::new();
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS {name}: {detail}"),
            Err(why) => {
                let known = KNOWN_CONFLICTS.contains(id);
                println!(
                    "criterion {id:>2} FAIL {name}: {why}{}",
                    if known { " (recorded)" } else { "" }
                );
                if !known {
                    unexpected.push(*id);
                }
            }
        }
    }
    assert!(unexpected.is_empty(), "failed criteria: {unexpected:?}");
}
