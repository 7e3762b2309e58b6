//! Study orchestration: grids and composite selection, walk-forward
//! validation, credit branches and diagnostics.

mod diagnostics;
mod grid;
mod walkforward;

pub use diagnostics::{
    forward_compounded, gate_regressions, quintile_diagnostic, GateCandidate, GateRow,
    InteractionGateRow, QuintileResult, GATE_PASS_T,
};
pub use grid::{
    credit_incremental_grid, credit_replacement_grid, evaluate, expanded_local_grid, rank,
    score_cache, Candidate, Evaluated, GridSpec, ScoreCache, SelectionScore,
};
pub use walkforward::{
    select_on_span, walk_forward, BlockSelection, WalkForwardMode, WalkForwardResult,
    WalkForwardSpec,
};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::market_data::Date;
use crate::policy::{backtest_targets, recost, targets, BacktestResult, PolicyConfig};
use crate::signals::score_series;

/// Backtest one policy on `[start, end]`, validating the signal warmup.
pub fn run_backtest(
    ds: &Dataset,
    config: &PolicyConfig,
    name: &str,
    start: Date,
    end: Date,
) -> Result<BacktestResult> {
    config.validate()?;
    let (lo, hi) = ds.policy_window(start, end)?;
    run_backtest_idx(ds, config, name, lo, hi)
}

pub fn run_backtest_idx(
    ds: &Dataset,
    config: &PolicyConfig,
    name: &str,
    lo: usize,
    hi: usize,
) -> Result<BacktestResult> {
    let score = score_series(&ds.frame, &config.score);
    let t = targets(&score.score_z, config.max_tilt, config.tau_w);
    backtest_targets(
        name,
        &ds.dates,
        &ds.g,
        &ds.d,
        &t,
        config.eta,
        config.w0,
        config.cost_bps,
        lo,
        hi,
    )
}

/// One backtest per tilt on an otherwise fixed structure.
pub fn tilt_sweep(
    ds: &Dataset,
    base: &PolicyConfig,
    tilts: &[f64],
    lo: usize,
    hi: usize,
) -> Result<Vec<(f64, BacktestResult)>> {
    tilts
        .iter()
        .map(|&tilt| {
            let cfg = PolicyConfig {
                max_tilt: tilt,
                ..*base
            };
            cfg.validate()?;
            run_backtest_idx(ds, &cfg, &format!("tilt_{tilt:.2}"), lo, hi).map(|r| (tilt, r))
        })
        .collect()
}

/// Same weight path re-costed at each bps level.
pub fn cost_sensitivity(
    ds: &Dataset,
    config: &PolicyConfig,
    costs: &[f64],
    lo: usize,
    hi: usize,
) -> Result<Vec<(f64, BacktestResult)>> {
    let gross = run_backtest_idx(ds, &config.with_cost(0.0), "cost", lo, hi)?;
    costs
        .iter()
        .map(|&bps| recost(&gross, config.w0, bps).map(|r| (bps, r)))
        .collect()
}
