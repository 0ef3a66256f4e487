//! Cross-domain evaluation: single-domain, leave-one-domain-out and unified
//! training rows, each scored on the pooled test split of every domain.

use serde::{Deserialize, Serialize};

use super::metrics::{Metric, MetricBundle};
use super::report::format_fixed;
use crate::domgen::SampleSet;
use crate::error::{invalid, Error, Result};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolRegime {
    Sd,
    Lodo,
    Unified,
}

impl std::str::FromStr for ProtocolRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd" => Ok(ProtocolRegime::Sd),
            "lodo" => Ok(ProtocolRegime::Lodo),
            "unified" => Ok(ProtocolRegime::Unified),
            other => invalid(format!("unknown protocol {other:?}")),
        }
    }
}

impl std::fmt::Display for ProtocolRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolRegime::Sd => "sd",
            ProtocolRegime::Lodo => "lodo",
            ProtocolRegime::Unified => "unified",
        })
    }
}

/// One training configuration of the protocol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolRow {
    pub regime: ProtocolRegime,
    pub label: String,
    pub train_domains: Vec<usize>,
    /// The domain left out (LODO) or trained on alone (SD).
    pub focus: Option<usize>,
}

/// Rows in the order SD, LODO, unified, each SD/LODO block by domain id.
pub fn protocol_rows(domain_names: &[String], regimes: &[ProtocolRegime]) -> Vec<ProtocolRow> {
    let k = domain_names.len();
    let mut wanted = regimes.to_vec();
    wanted.sort();
    wanted.dedup();
    let mut rows = Vec::new();
    for regime in wanted {
        match regime {
            ProtocolRegime::Sd => rows.extend((0..k).map(|d| ProtocolRow {
                regime,
                label: domain_names[d].clone(),
                train_domains: vec![d],
                focus: Some(d),
            })),
            ProtocolRegime::Lodo => rows.extend((0..k).map(|d| ProtocolRow {
                regime,
                label: format!("w/o {}", domain_names[d]),
                train_domains: (0..k).filter(|&o| o != d).collect(),
                focus: Some(d),
            })),
            ProtocolRegime::Unified => rows.push(ProtocolRow {
                regime,
                label: "Unified".into(),
                train_domains: (0..k).collect(),
                focus: None,
            }),
        }
    }
    rows
}

/// Rows are training configurations, columns test domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    pub metric: Metric,
    pub rows: Vec<ProtocolRow>,
    pub col_labels: Vec<String>,
    /// `None` marks a test domain with no samples.
    pub cells: Vec<Vec<Option<MetricBundle>>>,
}

impl EvalMatrix {
    pub fn row_labels(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.label.clone()).collect()
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col].and_then(|b| b.get(self.metric))
    }

    /// The rows of one protocol, as a matrix of their own.
    pub fn select(&self, regime: ProtocolRegime) -> EvalMatrix {
        let keep: Vec<usize> = (0..self.rows.len())
            .filter(|&i| self.rows[i].regime == regime)
            .collect();
        EvalMatrix {
            metric: self.metric,
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            col_labels: self.col_labels.clone(),
            cells: keep.iter().map(|&i| self.cells[i].clone()).collect(),
        }
    }

    pub fn with_metric(&self, metric: Metric) -> EvalMatrix {
        EvalMatrix {
            metric,
            ..self.clone()
        }
    }

    /// `protocol,row,<col...>` with 4-decimal values; empty when absent.
    pub fn to_csv(&self) -> String {
        let mut out = format!("protocol,row,{}\n", self.col_labels.join(","));
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("{},{}", row.regime, row.label));
            for j in 0..self.col_labels.len() {
                out.push(',');
                if let Some(v) = self.value(i, j) {
                    out.push_str(&format_fixed(v, 4));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Matrix plus the raw test scores of every row (test-set order).
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolRun {
    pub matrix: EvalMatrix,
    pub row_scores: Vec<Vec<f64>>,
}

fn in_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::Dimension(m) => Error::Dimension(format!("{ctx}: {m}")),
        Error::InvalidInput(m) => Error::InvalidInput(format!("{ctx}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        Error::Undefined(m) => Error::Undefined(format!("{ctx}: {m}")),
        Error::Format(m) => Error::Format(format!("{ctx}: {m}")),
        other => other,
    }
}

/// Trains one model per protocol row with `train_fn(row, row_seed, train)`,
/// which returns a scorer, and evaluates it on each domain's test samples.
/// Row seeds are derived from `seed` and the row label.
#[allow(clippy::too_many_arguments)]
pub fn run_protocol<F, S>(
    train: &SampleSet,
    test: &SampleSet,
    domain_names: &[String],
    regimes: &[ProtocolRegime],
    metric: Metric,
    threshold: f64,
    seed: u64,
    mut train_fn: F,
) -> Result<ProtocolRun>
where
    F: FnMut(&ProtocolRow, u64, &SampleSet) -> Result<S>,
    S: Fn(&SampleSet) -> Result<Vec<f64>>,
{
    let k = domain_names.len();
    if k < 2 {
        return invalid("the protocol needs at least 2 domains");
    }
    for d in 0..k {
        for (name, set) in [("train", train), ("test", test)] {
            let labels = set.of_domain(d).labels();
            if !(labels.contains(&0) && labels.contains(&1)) {
                return invalid(format!(
                    "{name} split of {} lacks one class",
                    domain_names[d]
                ));
            }
        }
    }
    if let Some(s) = train
        .samples
        .iter()
        .chain(&test.samples)
        .find(|s| s.domain >= k)
    {
        return invalid(format!(
            "sample {} has domain {} beyond the {k} named",
            s.id, s.domain
        ));
    }
    let rows = protocol_rows(domain_names, regimes);
    if rows.is_empty() {
        return invalid("no protocol selected");
    }
    let by_domain: Vec<Vec<usize>> = (0..k)
        .map(|d| {
            (0..test.len())
                .filter(|&i| test.samples[i].domain == d)
                .collect()
        })
        .collect();
    let mut cells = Vec::with_capacity(rows.len());
    let mut row_scores = Vec::with_capacity(rows.len());
    for row in &rows {
        let ctx = format!("{} row {}", row.regime, row.label);
        let subset = train.filter(|s| row.train_domains.contains(&s.domain));
        let row_seed = seeds::derive(seed, &format!("{}/{}", row.regime, row.label));
        let scorer = train_fn(row, row_seed, &subset).map_err(|e| in_context(e, &ctx))?;
        let scores = scorer(test).map_err(|e| in_context(e, &ctx))?;
        if scores.len() != test.len() {
            return invalid(format!(
                "{ctx}: scorer returned {} scores for {} samples",
                scores.len(),
                test.len()
            ));
        }
        let mut row_cells = Vec::with_capacity(k);
        for idx in &by_domain {
            if idx.is_empty() {
                row_cells.push(None);
                continue;
            }
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| test.samples[i].label).collect();
            row_cells.push(Some(
                MetricBundle::compute(&s, &l, threshold).map_err(|e| in_context(e, &ctx))?,
            ));
        }
        cells.push(row_cells);
        row_scores.push(scores);
    }
    Ok(ProtocolRun {
        matrix: EvalMatrix {
            metric,
            rows,
            col_labels: domain_names.to_vec(),
            cells,
        },
        row_scores,
    })
}
