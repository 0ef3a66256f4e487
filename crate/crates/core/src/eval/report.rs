//! Table rounding, macro averages and the difference heatmap.

use serde::{Deserialize, Serialize};

use super::metrics::{Metric, MetricBundle};
use super::protocol::EvalMatrix;
use crate::domgen::SampleSet;
use crate::error::{dim_err, invalid, Result};
use crate::scalar::Scalar;

/// Rounds to `decimals` places, ties away from zero. A relative nudge of
/// 1e-12 keeps decimal ties such as 0.125 written as 0.12499999 on the
/// upper side.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let f = 10f64.powi(decimals as i32);
    let y = x.abs() * f;
    let r = (y * (1.0 + 1e-12) + 0.5).floor() / f;
    if x < 0.0 {
        -r
    } else {
        r
    }
}

/// Fixed-point text of the rounded value, never `-0.000`.
pub fn format_fixed(x: f64, decimals: u32) -> String {
    let r = round_half_up(x, decimals);
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{:.*}", decimals as usize, r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroGroup {
    pub name: String,
    pub count: usize,
    pub mean: f64,
}

/// Per-group unweighted means and their unweighted mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroTable {
    pub groups: Vec<MacroGroup>,
    pub overall: f64,
}

impl MacroTable {
    pub fn to_csv(&self, decimals: u32) -> String {
        let mut out = String::from("group,count,mean\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{}\n",
                g.name,
                g.count,
                format_fixed(g.mean, decimals)
            ));
        }
        out.push_str(&format!(
            "overall,{},{}\n",
            self.groups.len(),
            format_fixed(self.overall, decimals)
        ));
        out
    }
}

/// Averages each group's subtype values, then the group averages.
pub fn macro_table<T: Scalar>(groups: &[(String, Vec<T>)]) -> Result<MacroTable> {
    if groups.is_empty() {
        return invalid("macro table over no groups");
    }
    let mut out = Vec::with_capacity(groups.len());
    for (name, values) in groups {
        if values.is_empty() {
            return invalid(format!("group {name} is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid(format!("group {name} has a non-finite value"));
        }
        let mean = values.iter().map(|v| v.as_f64()).sum::<f64>() / values.len() as f64;
        out.push(MacroGroup {
            name: name.clone(),
            count: values.len(),
            mean,
        });
    }
    let overall = out.iter().map(|g| g.mean).sum::<f64>() / out.len() as f64;
    Ok(MacroTable {
        groups: out,
        overall,
    })
}

/// Metrics per fake variant of each domain's test samples: the domain's
/// reals against that variant's fakes.
pub fn variant_bundles(
    test: &SampleSet,
    scores: &[f64],
    threshold: f64,
) -> Result<Vec<(usize, usize, MetricBundle)>> {
    if scores.len() != test.len() {
        return dim_err(format!(
            "{} scores for {} samples",
            scores.len(),
            test.len()
        ));
    }
    let mut keys: Vec<(usize, usize)> = test
        .samples
        .iter()
        .filter_map(|s| s.variant.map(|v| (s.domain, v)))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let mut out = Vec::with_capacity(keys.len());
    for (d, v) in keys {
        let idx: Vec<usize> = (0..test.len())
            .filter(|&i| {
                let s = &test.samples[i];
                s.domain == d && (s.variant.is_none() || s.variant == Some(v))
            })
            .collect();
        let sc: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let lb: Vec<u8> = idx.iter().map(|&i| test.samples[i].label).collect();
        out.push((d, v, MetricBundle::compute(&sc, &lb, threshold)?));
    }
    Ok(out)
}

/// Macro table over test variants in percent, grouped by domain.
pub fn variant_macro(
    bundles: &[(usize, usize, MetricBundle)],
    domain_names: &[String],
    metric: Metric,
) -> Result<MacroTable> {
    let mut groups: Vec<(String, Vec<f64>)> = domain_names
        .iter()
        .map(|n| (n.clone(), Vec::new()))
        .collect();
    for &(d, v, b) in bundles {
        let Some(g) = groups.get_mut(d) else {
            return invalid(format!("variant {v} belongs to unnamed domain {d}"));
        };
        if let Some(x) = b.get(metric) {
            g.1.push(100.0 * x);
        }
    }
    groups.retain(|g| !g.1.is_empty());
    macro_table(&groups)
}

/// Diverging palette, strongest negative first; index 5 is the neutral
/// center.
pub const PALETTE: [&str; 11] = [
    "#67001f", "#b2182b", "#d6604d", "#f4a582", "#fddbc7", "#f7f7f7", "#d1e5f0", "#92c5de",
    "#4393c3", "#2166ac", "#053061",
];

/// Magnitude thresholds: a value steps one palette entry away from the
/// center for each edge its magnitude reaches.
pub const PALETTE_EDGES: [f64; 5] = [0.01, 0.03, 0.1, 0.2, 0.35];

const CELL_W: usize = 96;
const CELL_H: usize = 40;
const LEFT: usize = 128;
const TOP: usize = 48;
const PAD: usize = 16;
const SWATCH_W: usize = 32;

pub fn palette_index(v: f64) -> usize {
    let level = PALETTE_EDGES.iter().filter(|&&e| v.abs() >= e).count();
    if v < 0.0 {
        5 - level
    } else {
        5 + level
    }
}

/// Unified-minus-single-domain differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffHeatmap {
    pub metric: Metric,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

/// `values[i][j] = unified[j] - sd[i][j]`.
pub fn diff_heatmap(sd: &EvalMatrix, unified: &EvalMatrix) -> Result<DiffHeatmap> {
    if unified.rows.len() != 1 {
        return invalid(format!(
            "reference must be a single row, got {}",
            unified.rows.len()
        ));
    }
    if sd.col_labels != unified.col_labels {
        return invalid("single-domain and unified columns differ");
    }
    if sd.metric != unified.metric {
        return invalid("single-domain and unified metrics differ");
    }
    let values = (0..sd.rows.len())
        .map(|i| {
            (0..sd.col_labels.len())
                .map(|j| Some(unified.value(0, j)? - sd.value(i, j)?))
                .collect()
        })
        .collect();
    Ok(DiffHeatmap {
        metric: sd.metric,
        row_labels: sd.row_labels(),
        col_labels: sd.col_labels.clone(),
        values,
    })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn signed(v: f64) -> String {
    let s = format_fixed(v, 4);
    if s.starts_with('-') || s == "0.0000" {
        s
    } else {
        format!("+{s}")
    }
}

impl DiffHeatmap {
    pub fn to_csv(&self) -> String {
        let mut out = format!("row,{}\n", self.col_labels.join(","));
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            out.push_str(label);
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format_fixed(*v, 4));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Deterministic SVG: one cell per value plus a palette legend.
    pub fn to_svg(&self) -> String {
        let (nr, nc) = (self.row_labels.len(), self.col_labels.len());
        let grid_w = nc * CELL_W;
        let width = LEFT + grid_w.max(PALETTE.len() * SWATCH_W) + PAD;
        let legend_y = TOP + nr * CELL_H + PAD;
        let height = legend_y + 20 + PAD + 14;
        let mut s = String::new();
        s.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        ));
        s.push_str(&format!(
            "<rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
        ));
        s.push_str(&format!(
            "<text x=\"{PAD}\" y=\"20\" font-size=\"14\">unified minus single-domain ({})</text>\n",
            self.metric
        ));
        for (j, c) in self.col_labels.iter().enumerate() {
            let x = LEFT + j * CELL_W + CELL_W / 2;
            s.push_str(&format!(
                "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                TOP - 8,
                xml_escape(c)
            ));
        }
        for (i, r) in self.row_labels.iter().enumerate() {
            let y = TOP + i * CELL_H;
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                LEFT - 8,
                y + CELL_H / 2 + 4,
                xml_escape(r)
            ));
            for j in 0..nc {
                let x = LEFT + j * CELL_W;
                let (fill, text, ink) = match self.values[i][j] {
                    Some(v) => {
                        let k = palette_index(v);
                        let ink = if k <= 1 || k >= 9 {
                            "#ffffff"
                        } else {
                            "#000000"
                        };
                        (PALETTE[k], signed(v), ink)
                    }
                    None => ("#ffffff", "n/a".to_string(), "#000000"),
                };
                s.push_str(&format!(
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"{fill}\" stroke=\"#808080\"/>\n"
                ));
                s.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{text}</text>\n",
                    x + CELL_W / 2,
                    y + CELL_H / 2 + 4
                ));
            }
        }
        for (k, color) in PALETTE.iter().enumerate() {
            let x = LEFT + k * SWATCH_W;
            s.push_str(&format!(
                "<rect x=\"{x}\" y=\"{legend_y}\" width=\"{SWATCH_W}\" height=\"20\" fill=\"{color}\" stroke=\"#808080\"/>\n"
            ));
        }
        s.push_str(&format!(
            "<text x=\"{LEFT}\" y=\"{}\">-{}</text>\n",
            legend_y + 34,
            PALETTE_EDGES[4]
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">+{}</text>\n",
            LEFT + PALETTE.len() * SWATCH_W,
            legend_y + 34,
            PALETTE_EDGES[4]
        ));
        s.push_str("</svg>\n");
        s
    }
}
