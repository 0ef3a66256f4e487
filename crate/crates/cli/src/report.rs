//! Markdown summary of earlier run directories, with SVG line charts for
//! training curves, spectral averages and rank sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sica_core::eval::format_fixed;

use crate::error::{usage, CliResult};
use crate::manifest::RunManifest;

pub const CHART_W: usize = 480;
pub const CHART_H: usize = 300;
const LEFT: usize = 56;
const RIGHT: usize = 16;
const TOP: usize = 36;
const BOTTOM: usize = 64;
pub const SERIES_COLORS: [&str; 4] = ["#2166ac", "#b2182b", "#4393c3", "#d6604d"];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let Some(head) = lines.next() else {
            return usage(format!("{} is empty", path.display()));
        };
        let split = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
        Ok(Table {
            header: split(head),
            rows: lines.map(split).collect(),
        })
    }

    fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r.get(j).and_then(|v| v.parse().ok()))
                .collect(),
        )
    }

    fn labels(&self, name: &str) -> Vec<String> {
        let j = self.header.iter().position(|h| h == name).unwrap_or(0);
        self.rows
            .iter()
            .map(|r| r.get(j).cloned().unwrap_or_default())
            .collect()
    }

    fn markdown(&self) -> String {
        let mut s = format!("| {} |\n", self.header.join(" | "));
        let _ = writeln!(s, "|{}", " --- |".repeat(self.header.len()));
        for r in &self.rows {
            let _ = writeln!(s, "| {} |", r.join(" | "));
        }
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Deterministic line chart with categorical x positions.
pub fn line_chart(
    title: &str,
    x_labels: &[String],
    series: &[(String, Vec<Option<f64>>)],
    y_range: Option<(f64, f64)>,
) -> String {
    let (lo, hi) = y_range.unwrap_or_else(|| {
        let vals = series.iter().flat_map(|(_, v)| v.iter().flatten().copied());
        let (mn, mx) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        if !mn.is_finite() {
            (0.0, 1.0)
        } else if mx - mn < 1e-12 {
            (mn - 0.5, mx + 0.5)
        } else {
            let pad = 0.05 * (mx - mn);
            (mn - pad, mx + pad)
        }
    });
    let plot_w = (CHART_W - LEFT - RIGHT) as f64;
    let plot_h = (CHART_H - TOP - BOTTOM) as f64;
    let n = x_labels.len().max(1) as f64;
    let x_at = |i: usize| LEFT as f64 + (i as f64 + 0.5) * plot_w / n;
    let y_at = |v: f64| TOP as f64 + (hi - v) / (hi - lo) * plot_h;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_W}\" height=\"{CHART_H}\" viewBox=\"0 0 {CHART_W} {CHART_H}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(
        s,
        "<rect width=\"{CHART_W}\" height=\"{CHART_H}\" fill=\"#ffffff\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{LEFT}\" y=\"20\" font-size=\"13\">{}</text>",
        xml_escape(title)
    );
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let y = y_at(v);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>",
            CHART_W - RIGHT
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LEFT - 4,
            y + 4.0,
            format_fixed(v, 2)
        );
    }
    for (i, l) in x_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            x_at(i),
            CHART_H - BOTTOM + 16,
            xml_escape(l)
        );
    }
    for (k, (name, vals)) in series.iter().enumerate() {
        let color = SERIES_COLORS[k % SERIES_COLORS.len()];
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| format!("{:.1},{:.1}", x_at(i), y_at(v))))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                pts.join(" ")
            );
        }
        let lx = LEFT + k * 104;
        let ly = CHART_H - 20;
        let _ = writeln!(
            s,
            "<rect x=\"{lx}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>",
            ly - 10
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{ly}\">{}</text>",
            lx + 16,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn chart_of(
    table: &Table,
    x: &str,
    ys: &[&str],
    title: &str,
    y_range: Option<(f64, f64)>,
) -> String {
    let series: Vec<(String, Vec<Option<f64>>)> = ys
        .iter()
        .filter_map(|y| table.column(y).map(|c| (y.to_string(), c)))
        .collect();
    line_chart(title, &table.labels(x), &series, y_range)
}

/// Writes `report.md` and the charts into `out`; returns the file names.
pub fn render(runs: &[PathBuf], title: &str, out: &Path) -> CliResult<Vec<String>> {
    let mut md = format!("# {title}\n");
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> CliResult<String> {
        fs::write(out.join(&name), body)?;
        written.push(name.clone());
        Ok(name)
    };
    for (i, dir) in runs.iter().enumerate() {
        let run = RunManifest::read(dir)?;
        let tag = format!("run{}", i + 1);
        let _ = write!(
            md,
            "\n## {}. {} ({})\n\n",
            i + 1,
            run.subcommand,
            dir.display()
        );
        let _ = writeln!(md, "Command: `{}`\n", run.command_line.join(" "));
        match run.subcommand.as_str() {
            "train" => {
                let log = Table::read(&dir.join("train_log.csv"))?;
                let chart = put(
                    format!("{tag}_train.svg"),
                    chart_of(
                        &log,
                        "epoch",
                        &["loss", "acc"],
                        "training loss and accuracy by epoch",
                        None,
                    ),
                )?;
                let _ = writeln!(md, "![training curve]({chart})\n");
                md.push_str(&log.markdown());
            }
            "analyze" => {
                let avg = Table::read(&dir.join("spectral_avg.csv"))?;
                let chart = put(
                    format!("{tag}_spectral.svg"),
                    chart_of(
                        &avg,
                        "k",
                        &["r_left", "r_right", "sim_left", "sim_right"],
                        "outside energy and subspace cosine by k",
                        Some((0.0, 1.0)),
                    ),
                )?;
                let _ = writeln!(md, "![spectral averages]({chart})\n");
                md.push_str(&avg.markdown());
            }
            "eval" => {
                let mut names: Vec<String> = fs::read_dir(dir)?
                    .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
                    .filter(|n| n.ends_with(".csv"))
                    .collect();
                names.sort();
                for name in names {
                    let _ = writeln!(md, "### {name}\n");
                    md.push_str(&Table::read(&dir.join(&name))?.markdown());
                    md.push('\n');
                }
                let heat = dir.join("diff_heatmap.svg");
                if heat.exists() {
                    let chart = put(format!("{tag}_diff_heatmap.svg"), fs::read_to_string(heat)?)?;
                    let _ = writeln!(md, "![difference heatmap]({chart})\n");
                }
            }
            "ablate-rank" => {
                let sweep = Table::read(&dir.join("rank_sweep.csv"))?;
                let chart = put(
                    format!("{tag}_rank_sweep.svg"),
                    chart_of(
                        &sweep,
                        "rank",
                        &["overall_acc", "overall_auc"],
                        "overall score by adapter rank",
                        None,
                    ),
                )?;
                let _ = writeln!(md, "![rank sweep]({chart})\n");
                md.push_str(&sweep.markdown());
            }
            _ => {
                let _ = writeln!(
                    md,
                    "```json\n{}\n```",
                    serde_json::to_string_pretty(&run.summary)?
                );
            }
        }
    }
    put("report.md".into(), md)?;
    Ok(written)
}
