use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::market_data::Date;
use crate::policy::{ewma_step, simulate, BacktestResult};

use super::grid::{evaluate, rank, Candidate, Evaluated, SelectionScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkForwardMode {
    /// Train on all history before each block.
    Expanding,
    /// Train on the trailing `train_len` days before each block.
    Rolling,
    /// Select once on the `train_len` days before the first block.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkForwardSpec {
    pub mode: WalkForwardMode,
    pub train_len: usize,
    pub test_len: usize,
}

impl WalkForwardSpec {
    pub fn new(mode: WalkForwardMode) -> Self {
        Self {
            mode,
            train_len: 252,
            test_len: 63,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSelection {
    pub start: Date,
    pub end: Date,
    pub train_start: Date,
    pub train_end: Date,
    pub config_id: String,
}

#[derive(Debug, Clone)]
pub struct WalkForwardResult {
    pub result: BacktestResult,
    pub blocks: Vec<BlockSelection>,
}

/// Index of the best candidate on calendar span `[a, b]`.
pub fn select_on_span(
    evals: &[Evaluated],
    sel: &SelectionScore,
    a: usize,
    b: usize,
) -> Result<usize> {
    let metrics = evals
        .iter()
        .map(|e| e.span_metrics(a, b))
        .collect::<Result<Vec<_>>>()?;
    let entries: Vec<(&str, _)> = evals
        .iter()
        .zip(&metrics)
        .map(|(e, m)| (e.candidate.id.as_str(), m))
        .collect();
    Ok(rank(&entries, sel)[0].0)
}

/// Walk-forward validation.
///
/// Candidates are evaluated on a continuous causal path from `history_lo`;
/// each test block of `test_len` days starting at `oos_lo` trades the
/// candidate ranked best on its training span. The stitched path starts at
/// the pool's `w0` on `oos_lo`; on a configuration change the EWMA state
/// carries over from the incumbent weight.
#[allow(clippy::too_many_arguments)]
pub fn walk_forward(
    ds: &Dataset,
    pool: &[Candidate],
    spec: &WalkForwardSpec,
    sel: &SelectionScore,
    history_lo: usize,
    oos_lo: usize,
    hi: usize,
    name: &str,
) -> Result<WalkForwardResult> {
    if pool.is_empty() {
        return Err(Error::validation("walk-forward pool is empty"));
    }
    if spec.train_len == 0 || spec.test_len == 0 {
        return Err(Error::validation("train_len and test_len must be >= 1"));
    }
    if oos_lo < history_lo + spec.train_len {
        return Err(Error::validation(format!(
            "walk-forward needs {} training days before the first test block",
            spec.train_len
        )));
    }
    if hi < oos_lo + spec.test_len {
        return Err(Error::validation(
            "window too short for one full test block",
        ));
    }
    let cost = pool[0].config.cost_bps;
    if pool.iter().any(|c| c.config.cost_bps != cost) {
        return Err(Error::validation("walk-forward pool mixes cost levels"));
    }
    let w0 = pool[0].config.w0;

    let evals = evaluate(ds, pool, history_lo, hi)?;

    let mut blocks = Vec::new();
    let mut chosen_for_day = vec![0usize; hi + 2];
    let mut fixed_choice: Option<usize> = None;
    let mut start = oos_lo;
    while start <= hi {
        let end = (start + spec.test_len - 1).min(hi);
        let (ta, tb) = match spec.mode {
            WalkForwardMode::Expanding => (history_lo, start - 1),
            WalkForwardMode::Rolling => (start - spec.train_len, start - 1),
            WalkForwardMode::Fixed => (oos_lo - spec.train_len, oos_lo - 1),
        };
        let pick = match (spec.mode, fixed_choice) {
            (WalkForwardMode::Fixed, Some(p)) => p,
            _ => {
                let p = select_on_span(&evals, sel, ta, tb)?;
                fixed_choice = Some(p);
                p
            }
        };
        for slot in chosen_for_day.iter_mut().take(end + 1).skip(start) {
            *slot = pick;
        }
        blocks.push(BlockSelection {
            start: ds.dates[start],
            end: ds.dates[end],
            train_start: ds.dates[ta],
            train_end: ds.dates[tb],
            config_id: evals[pick].candidate.id.clone(),
        });
        start = end + 1;
    }
    let last = chosen_for_day[hi];
    chosen_for_day[hi + 1] = last;

    let result = simulate(
        name,
        &ds.dates,
        &ds.g,
        &ds.d,
        oos_lo,
        hi,
        w0,
        cost,
        |i, w| {
            // State formed at the close of day i is traded on day i+1 under the
            // configuration selected for that day's block.
            let e = &evals[chosen_for_day[i + 1]];
            ewma_step(w, e.targets[i], e.candidate.config.eta)
        },
    )?;
    Ok(WalkForwardResult { result, blocks })
}
