//! Detection metrics, cross-domain protocols and report tables.

mod metrics;
mod protocol;
mod report;

pub use metrics::{accuracy, auc, average_precision, f1, Metric, MetricBundle};
pub use protocol::{
    protocol_rows, run_protocol, EvalMatrix, ProtocolRegime, ProtocolRow, ProtocolRun,
};
pub use report::{
    diff_heatmap, format_fixed, macro_table, palette_index, round_half_up, variant_bundles,
    variant_macro, DiffHeatmap, MacroGroup, MacroTable, PALETTE, PALETTE_EDGES,
};
