//! CSV and JSON-lines writers.
//!
//! Column sets:
//!
//! * runs: `seed, protocol, terminated, rounds_used, iterations_used,
//!   mis_size, bot_count, neg_inf_count, cheat_flags, deviator, strategy,
//!   fired_rounds, detected`
//! * summary: `trials, terminated_fraction, iter_mean, iter_median, iter_p95,
//!   iter_max, bot_count, neg_inf_count, cheat_flag_count, mis_valid`
//! * per-node summary: `node, inclusion_frequency, mean_finite_utility`
//! * curve: the fields of [`CurvePoint`]
//! * paired: `node, strategy, trials, honest_mean, deviant_mean, std_err,
//!   neg_inf_runs, honest_neg_inf_runs, detected_runs, fired_runs,
//!   fired_positive_runs`

use std::io::Write;

use serde::Serialize;

use super::{CurvePoint, PairedComparison, TrialSummary};
use crate::engine::RunRecord;
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Parameter(format!("csv output failed: {e}"))
}

fn io_err(e: std::io::Error) -> Error {
    Error::Parameter(format!("output failed: {e}"))
}

pub fn write_json_lines<W: Write, T: Serialize>(
    mut w: W,
    items: impl IntoIterator<Item = T>,
) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::Parameter(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn write_csv<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row).map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Serialize)]
struct RunRow<'a> {
    seed: u64,
    protocol: String,
    terminated: bool,
    rounds_used: u64,
    iterations_used: u64,
    mis_size: usize,
    bot_count: usize,
    neg_inf_count: usize,
    cheat_flags: usize,
    deviator: Option<u32>,
    strategy: Option<&'a str>,
    fired_rounds: Option<u64>,
    detected: Option<bool>,
}

pub fn runs_csv<W: Write>(w: W, records: &[RunRecord]) -> Result<()> {
    write_csv(
        w,
        records.iter().map(|r| {
            let dev = r.deviations.first();
            RunRow {
                seed: r.seed,
                protocol: r.protocol.to_string(),
                terminated: r.terminated,
                rounds_used: r.rounds_used,
                iterations_used: r.iterations_used,
                mis_size: r.ones().len(),
                bot_count: r.bot_count(),
                neg_inf_count: r.neg_inf_count(),
                cheat_flags: r.cheat_flags.iter().filter(|&&f| f).count(),
                deviator: dev.map(|d| d.node.0),
                strategy: dev.map(|d| d.strategy.as_str()),
                fired_rounds: dev.map(|d| d.fired_rounds),
                detected: dev.map(|d| d.detected),
            }
        }),
    )
}

#[derive(Serialize)]
struct SummaryRow {
    trials: u64,
    terminated_fraction: f64,
    iter_mean: f64,
    iter_median: f64,
    iter_p95: f64,
    iter_max: f64,
    bot_count: u64,
    neg_inf_count: u64,
    cheat_flag_count: u64,
    mis_valid: u64,
}

pub fn summary_csv<W: Write>(w: W, s: &TrialSummary) -> Result<()> {
    write_csv(
        w,
        [SummaryRow {
            trials: s.trials,
            terminated_fraction: s.terminated_fraction,
            iter_mean: s.iterations.mean,
            iter_median: s.iterations.median,
            iter_p95: s.iterations.p95,
            iter_max: s.iterations.max,
            bot_count: s.bot_count,
            neg_inf_count: s.neg_inf_count,
            cheat_flag_count: s.cheat_flag_count,
            mis_valid: s.mis_valid,
        }],
    )
}

pub fn per_node_csv<W: Write>(w: W, s: &TrialSummary) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        node: usize,
        inclusion_frequency: f64,
        mean_finite_utility: f64,
    }
    write_csv(
        w,
        s.inclusion_frequency
            .iter()
            .zip(&s.mean_finite_utility)
            .enumerate()
            .map(|(node, (&inclusion_frequency, &mean_finite_utility))| Row {
                node,
                inclusion_frequency,
                mean_finite_utility,
            }),
    )
}

pub fn curve_csv<W: Write>(w: W, points: &[CurvePoint]) -> Result<()> {
    write_csv(w, points)
}

pub fn paired_csv<W: Write>(w: W, rows: &[PairedComparison]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        node: u32,
        strategy: &'a str,
        trials: u64,
        honest_mean: f64,
        deviant_mean: f64,
        std_err: f64,
        neg_inf_runs: u64,
        honest_neg_inf_runs: u64,
        detected_runs: u64,
        fired_runs: u64,
        fired_positive_runs: u64,
    }
    write_csv(
        w,
        rows.iter().map(|c| Row {
            node: c.deviation.node.0,
            strategy: c.deviation.kind.name(),
            trials: c.trials,
            honest_mean: c.honest_mean,
            deviant_mean: c.deviant_mean,
            std_err: c.std_err,
            neg_inf_runs: c.neg_inf_runs,
            honest_neg_inf_runs: c.honest_neg_inf_runs,
            detected_runs: c.detected_runs,
            fired_runs: c.fired_runs,
            fired_positive_runs: c.fired_positive_runs,
        }),
    )
}
