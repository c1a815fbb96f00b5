//! CSV and JSON exports. Floats are printed with nine significant digits so
//! reruns with the same seeds are byte-identical.

use std::fmt::Write;

use serde::Serialize;

use super::sweep::SweepGrid;
use crate::error::Result;
use crate::learner::TrainLog;
use crate::solver::Mode;

pub const RUNS_CSV_HEADER: &str = "mode,seed,lambda1,lambda2,layer,quadratic,l1,iterations,epoch";

pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// Rows of `RUNS_CSV_HEADER` for one training log. With `per_layer` every
/// layer gets its own row; otherwise one row per epoch with `layer = all`
/// holding the sums over layers.
pub fn learning_curve_csv(mode: Mode, seed: u64, lambdas: &[f64], log: &TrainLog, per_layer: bool) -> String {
    let mut out = format!("{RUNS_CSV_HEADER}\n");
    push_curve_rows(&mut out, mode, seed, lambdas, log.epochs.iter(), per_layer);
    out
}

fn push_curve_rows<'a>(
    out: &mut String,
    mode: Mode,
    seed: u64,
    lambdas: &[f64],
    epochs: impl Iterator<Item = &'a crate::learner::EpochRecord>,
    per_layer: bool,
) {
    let l1 = opt(lambdas.first().copied());
    let l2 = opt(lambdas.get(1).copied());
    for e in epochs {
        let iters = fmt_float(e.mean_iterations);
        if per_layer {
            for (i, c) in e.layers.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{mode},{seed},{l1},{l2},{},{},{},{iters},{}",
                    i + 1,
                    fmt_float(c.quadratic),
                    fmt_float(c.l1),
                    e.epoch
                );
            }
        } else {
            let q: f64 = e.layers.iter().map(|c| c.quadratic).sum();
            let s: f64 = e.layers.iter().map(|c| c.l1).sum();
            let _ = writeln!(out, "{mode},{seed},{l1},{l2},all,{},{},{iters},{}", fmt_float(q), fmt_float(s), e.epoch);
        }
    }
}

/// Per-epoch, per-layer rows for every successful run of a sweep.
pub fn runs_csv(grid: &SweepGrid) -> String {
    let mut out = format!("{RUNS_CSV_HEADER}\n");
    for r in &grid.runs {
        push_curve_rows(&mut out, r.mode, r.seed, &[r.lambda1, r.lambda2], r.curve().iter(), true);
    }
    out
}

/// One row per grid cell with median/MAD totals, iterations and the
/// relative difference. Invalid cells leave their statistics empty.
pub fn grid_csv(grid: &SweepGrid) -> String {
    let mut out = String::from(
        "lambda1,lambda2,valid,hila_median,hila_mad,spc_median,spc_mad,rel_diff,hila_iterations,spc_iterations,unconverged\n",
    );
    for c in &grid.cells {
        let med = |s: &Option<super::Stat>| opt(s.as_ref().map(|s| s.median));
        let mad = |s: &Option<super::Stat>| opt(s.as_ref().map(|s| s.mad));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_float(c.lambda1),
            fmt_float(c.lambda2),
            c.valid,
            med(&c.hila),
            mad(&c.hila),
            med(&c.spc),
            mad(&c.spc),
            opt(c.rel_diff),
            med(&c.hila_iterations),
            med(&c.spc_iterations),
            c.unconverged
        );
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<S: Serialize>(v: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}
