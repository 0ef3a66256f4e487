use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

const SMALL_MODEL: [&str; 10] = [
    "--seq-len",
    "4",
    "--d-model",
    "8",
    "--n-heads",
    "2",
    "--mlp-hidden",
    "16",
    "--head-hidden",
    "8",
];

fn sica(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sica"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sica(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_data(dir: &Path) {
    ok(&[
        "gen-data",
        "--domains",
        "2",
        "--variants",
        "4",
        "--dim",
        "16",
        "--n-real",
        "120",
        "--n-fake",
        "30",
        "--seed",
        "5",
        "--out",
        p(dir),
    ]);
}

fn with_model<'a>(base: &[&'a str]) -> Vec<&'a str> {
    let mut v = base.to_vec();
    v.extend(SMALL_MODEL);
    v
}

#[test]
fn help_exits_zero() {
    let out = sica(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gen-data"));
}

#[test]
fn missing_out_names_the_flag() {
    let out = sica(&["gen-data", "--dim", "64"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = sica(&["gen-data", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn occupied_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    small_data(&d);
    let again = sica(&[
        "gen-data",
        "--domains",
        "2",
        "--variants",
        "4",
        "--dim",
        "16",
        "--out",
        p(&d),
    ]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    ok(&[
        "gen-data",
        "--domains",
        "2",
        "--variants",
        "4",
        "--dim",
        "16",
        "--force",
        "--out",
        p(&d),
    ]);
}

#[test]
fn divergence_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    small_data(&d);
    let x = tmp.path().join("x");
    let args = with_model(&[
        "train",
        "--data",
        p(&d),
        "--epochs",
        "1",
        "--pretrain-epochs",
        "1",
        "--lr-start",
        "1e300",
        "--lr-end",
        "1e300",
        "--out",
        p(&x),
    ]);
    let out = sica(&args);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "numerical");
}

#[test]
fn config_file_fills_options_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"domains": 2, "variants": 4, "dim": 16, "n_real": 50, "n_fake": 10, "seed": 1}"#,
    )
    .unwrap();
    let d = tmp.path().join("d");
    ok(&[
        "gen-data",
        "--config",
        p(&cfg),
        "--seed",
        "9",
        "--out",
        p(&d),
    ]);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["resolved"]["seed"], 9);
    assert_eq!(m["resolved"]["dim"], 16);
    assert_eq!(m["resolved"]["n_real_per_domain"], 50);
    let header = fs::read_to_string(d.join("data.csv")).unwrap();
    assert!(header.starts_with("sample_id,domain,variant,label,f0,"));
}

#[test]
fn end_to_end_pipeline() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let (d, ck, an, ef, ev, ab, rep) = (
        root.join("data"),
        root.join("sica"),
        root.join("analyze"),
        root.join("effort"),
        root.join("eval"),
        root.join("ablate"),
        root.join("report"),
    );
    small_data(&d);
    ok(&with_model(&[
        "train",
        "--data",
        p(&d),
        "--regime",
        "sica",
        "--rank",
        "2",
        "--alpha",
        "4",
        "--epochs",
        "2",
        "--pretrain-epochs",
        "1",
        "--seed",
        "3",
        "--out",
        p(&ck),
    ]));
    let log = fs::read_to_string(ck.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,step,lr,loss,acc\n"));
    assert_eq!(log.lines().count(), 4);
    assert!(ck.join("manifest.json").exists() && ck.join("backbone/manifest.json").exists());
    assert!(ck.join("layers.0.attn.q.lora_a.matb").exists());

    let backbone = ck.join("backbone");
    ok(&[
        "analyze",
        "--w0",
        p(&backbone),
        "--delta",
        p(&ck),
        "--scheme",
        "sica",
        "--k-grid",
        "1,2,4,8",
        "--out",
        p(&an),
    ]);
    let csv = fs::read_to_string(an.join("spectral_report.csv")).unwrap();
    assert!(csv.starts_with("matrix,k,r_left,r_right,sim_left,sim_right\n"));
    assert!(an.join("spectral_avg.csv").exists() && an.join("spectral_report.json").exists());
    ok(&[
        "analyze",
        "--w0",
        p(&backbone),
        "--scheme",
        "effort",
        "--k-grid",
        "1,2,4",
        "--out",
        p(&ef),
    ]);
    let avg = fs::read_to_string(ef.join("spectral_avg.csv")).unwrap();
    for line in avg.lines().skip(1) {
        let f: Vec<f64> = line
            .split(',')
            .skip(2)
            .map(|v| v.parse().unwrap())
            .collect();
        assert!(
            (f[0] - 1.0).abs() < 1e-8 && (f[1] - 1.0).abs() < 1e-8 && f[2] < 1e-8 && f[3] < 1e-8
        );
    }

    let eval_args = with_model(&[
        "eval",
        "--data",
        p(&d),
        "--regime-set",
        "sd,lodo,unified",
        "--train",
        "sica",
        "--rank",
        "2",
        "--metric",
        "auc",
        "--epochs",
        "1",
        "--pretrain-epochs",
        "1",
        "--out",
        p(&ev),
    ]);
    ok(&eval_args);
    for f in [
        "matrix_auc.csv",
        "matrix.json",
        "diff_heatmap.svg",
        "diff_heatmap.csv",
        "unified_macro_auc.csv",
    ] {
        assert!(ev.join(f).exists(), "{f} missing");
    }
    let matrix = fs::read_to_string(ev.join("matrix_auc.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 1 + 2 + 2 + 1);

    ok(&with_model(&[
        "ablate-rank",
        "--data",
        p(&d),
        "--ranks",
        "1,2,16",
        "--epochs",
        "1",
        "--pretrain-epochs",
        "1",
        "--out",
        p(&ab),
    ]));
    let sweep = fs::read_to_string(ab.join("rank_sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(
        lines[0],
        "rank,effective_rank,alpha,overall_acc,overall_auc"
    );
    assert!(lines[3].starts_with("16,8,"));

    let runs = [&ck, &an, &ev, &ab].map(|x| p(x).to_string()).join(",");
    ok(&["report", "--runs", &runs, "--out", p(&rep)]);
    let md = fs::read_to_string(rep.join("report.md")).unwrap();
    assert!(md.contains("run3_diff_heatmap.svg") && md.contains("run4_rank_sweep.svg"));
    for dir in [&d, &ck, &an, &ef, &ev, &ab, &rep] {
        assert!(dir.join("run_manifest.json").exists());
    }
    assert!(start.elapsed().as_secs_f64() < 120.0);

    // re-running from the manifest reproduces the primary outputs
    let again = root.join("eval-again");
    ok(&[
        "eval",
        "--config",
        p(&ev.join("run_manifest.json")),
        "--out",
        p(&again),
    ]);
    for f in [
        "matrix_auc.csv",
        "matrix.json",
        "diff_heatmap.svg",
        "diff_heatmap.csv",
        "unified_macro_auc.csv",
    ] {
        assert_eq!(
            fs::read(ev.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f} differs"
        );
    }
}
