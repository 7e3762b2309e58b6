//! Score → weight mapping, EWMA smoothing, t+1 execution, proportional
//! two-sided costs and the performance metrics block.
//!
//! Timing: the weight state updated at the close of day `i` (from the score
//! known at that close) is the weight applied to day `i+1` returns. The
//! first day of a backtest window is traded at `w0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::Date;
use crate::signals::{ScoreParams, ScoreSpec, Signal};
use crate::TRADING_DAYS;

pub const SHARPE_CONVENTION: &str = "mean(net)/std(net)*sqrt(252), no risk-free subtraction";
pub const SORTINO_CONVENTION: &str =
    "mean(net)/sqrt(sum(min(net,0)^2)/n)*sqrt(252), no risk-free subtraction";
pub const TURNOVER_CONVENTION: &str = "(252/n) * sum 2|dw| over applied weights";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub score: ScoreSpec,
    pub max_tilt: f64,
    pub tau_w: f64,
    pub eta: f64,
    pub cost_bps: f64,
    pub w0: f64,
}

impl PolicyConfig {
    pub fn smooth(params: ScoreParams, max_tilt: f64, tau_w: f64, eta: f64) -> Self {
        Self {
            score: ScoreSpec::Smooth(params),
            max_tilt,
            tau_w,
            eta,
            cost_bps: 10.0,
            w0: 0.5,
        }
    }

    /// Selected local-grid configuration.
    pub fn best_local() -> Self {
        Self::smooth(ScoreParams::new(0.50, 0.50, 0.05), 0.50, 0.75, 0.05)
    }

    /// Fixed-structure baseline used by the tilt sweep (tilt filled by caller).
    pub fn fixed_structure(max_tilt: f64) -> Self {
        Self::smooth(ScoreParams::new(0.50, 0.25, 0.15), max_tilt, 1.0, 0.05)
    }

    pub fn with_cost(mut self, cost_bps: f64) -> Self {
        self.cost_bps = cost_bps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_tilt >= 0.0 && self.max_tilt <= 0.5) {
            return Err(Error::validation(format!(
                "max_tilt {} outside [0, 0.5]",
                self.max_tilt
            )));
        }
        if !(self.tau_w > 0.0) {
            return Err(Error::validation("tau_w must be > 0"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::validation("eta must be in (0, 1]"));
        }
        if !(self.cost_bps >= 0.0) {
            return Err(Error::validation("cost_bps must be >= 0"));
        }
        if (self.w0 - 0.5).abs() > self.max_tilt + 1e-15 {
            return Err(Error::validation("w0 outside the tilt band"));
        }
        Ok(())
    }
}

pub fn target_weight(score_z: f64, max_tilt: f64, tau_w: f64) -> f64 {
    0.5 + max_tilt * (score_z / tau_w).tanh()
}

pub fn targets(score_z: &[Option<f64>], max_tilt: f64, tau_w: f64) -> Signal {
    score_z
        .iter()
        .map(|s| s.map(|s| target_weight(s, max_tilt, tau_w)))
        .collect()
}

/// One EWMA step; a missing target holds the previous weight.
#[inline]
pub fn ewma_step(prev: f64, target: Option<f64>, eta: f64) -> f64 {
    match target {
        Some(t) => (1.0 - eta) * prev + eta * t,
        None => prev,
    }
}

/// Post-close weight state for each day.
pub fn ewma_weights(targets: &[Option<f64>], eta: f64, w0: f64) -> Vec<f64> {
    let mut w = w0;
    targets
        .iter()
        .map(|t| {
            w = ewma_step(w, *t, eta);
            w
        })
        .collect()
}

/// Shifts post-close weights by one day; the first day trades at `w0`.
pub fn apply_execution_lag(weights: &[f64], w0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(weights.len());
    if weights.is_empty() {
        return out;
    }
    out.push(w0);
    out.extend_from_slice(&weights[..weights.len() - 1]);
    out
}

pub fn transaction_cost(dw: f64, cost_bps: f64) -> f64 {
    2.0 * dw.abs() * cost_bps / 10_000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub n: usize,
    pub final_wealth: f64,
    pub cagr: f64,
    pub vol: f64,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub max_dd: f64,
    pub calmar: Option<f64>,
    pub turnover_annual: f64,
    pub avg_g: Option<f64>,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n−1).
pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 || x.iter().all(|v| *v == x[0]) {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn max_drawdown(net: &[f64]) -> f64 {
    let mut equity = 1.0;
    let mut peak = 1.0;
    let mut worst: f64 = 0.0;
    for r in net {
        equity *= 1.0 + r;
        peak = f64::max(peak, equity);
        worst = worst.min(equity / peak - 1.0);
    }
    worst
}

pub fn annualized_vol(net: &[f64]) -> f64 {
    std_dev(net) * (TRADING_DAYS as f64).sqrt()
}

/// Metrics of a net return series. `weights` are the applied G weights and
/// the weight held before the first day (for turnover and average G).
pub fn compute_metrics(net: &[f64], weights: Option<(&[f64], f64)>) -> Result<Metrics> {
    if net.is_empty() {
        return Err(Error::validation("compute_metrics: empty return series"));
    }
    let n = net.len();
    let ann = TRADING_DAYS as f64;
    let final_wealth: f64 = net.iter().map(|r| 1.0 + r).product();
    let cagr = final_wealth.powf(ann / n as f64) - 1.0;
    let m = mean(net);
    let sd = std_dev(net);
    let vol = sd * ann.sqrt();
    let sharpe = (sd > 0.0).then(|| m / sd * ann.sqrt());
    let downside = (net.iter().map(|r| r.min(0.0).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sortino = (downside > 0.0).then(|| m / downside * ann.sqrt());
    let max_dd = max_drawdown(net);
    let calmar = (max_dd < 0.0).then(|| cagr / max_dd.abs());
    let (turnover_annual, avg_g) = match weights {
        Some((w, prev)) => {
            let mut last = prev;
            let mut turn = 0.0;
            for x in w {
                turn += 2.0 * (x - last).abs();
                last = *x;
            }
            (ann / n as f64 * turn, Some(mean(w)))
        }
        None => (0.0, None),
    };
    Ok(Metrics {
        n,
        final_wealth,
        cagr,
        vol,
        sharpe,
        sortino,
        max_dd,
        calmar,
        turnover_annual,
        avg_g,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub name: String,
    pub dates: Vec<Date>,
    pub weights_g: Vec<f64>,
    pub gross: Vec<f64>,
    pub costs: Vec<f64>,
    pub net: Vec<f64>,
    pub equity: Vec<f64>,
    pub metrics: Metrics,
}

/// Core causal loop over calendar indices `lo..=hi`.
///
/// `update(i, w)` returns the post-close weight state of day `i` given the
/// state `w` before it; that state is applied to day `i+1`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    name: &str,
    dates: &[Date],
    g: &[f64],
    d: &[f64],
    lo: usize,
    hi: usize,
    w_init: f64,
    cost_bps: f64,
    mut update: impl FnMut(usize, f64) -> f64,
) -> Result<BacktestResult> {
    if hi < lo || hi >= dates.len() {
        return Err(Error::validation("simulate: empty or out-of-range window"));
    }
    let n = hi - lo + 1;
    let mut weights_g = Vec::with_capacity(n);
    let mut gross = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut net = Vec::with_capacity(n);
    let mut equity = Vec::with_capacity(n);
    let mut applied = w_init;
    let mut prev_applied = w_init;
    let mut state = w_init;
    let mut wealth = 1.0;
    for i in lo..=hi {
        let gr = applied * g[i] + (1.0 - applied) * d[i];
        let c = transaction_cost(applied - prev_applied, cost_bps);
        let nr = gr - c;
        wealth *= 1.0 + nr;
        weights_g.push(applied);
        gross.push(gr);
        costs.push(c);
        net.push(nr);
        equity.push(wealth);
        state = update(i, state);
        prev_applied = applied;
        applied = state;
    }
    let metrics = compute_metrics(&net, Some((&weights_g, w_init)))?;
    Ok(BacktestResult {
        name: name.to_string(),
        dates: dates[lo..=hi].to_vec(),
        weights_g,
        gross,
        costs,
        net,
        equity,
        metrics,
    })
}

/// Inclusive calendar index range for `[start, end]`.
pub fn window_indices(dates: &[Date], start: Date, end: Date) -> Result<(usize, usize)> {
    let lo = dates.partition_point(|d| *d < start);
    let hi = dates.partition_point(|d| *d <= end);
    if hi == 0 || lo >= hi {
        return Err(Error::validation(format!(
            "window {start}..{end} has no trading days"
        )));
    }
    Ok((lo, hi - 1))
}

/// Backtest of one policy over `[lo, hi]` on precomputed daily targets.
#[allow(clippy::too_many_arguments)]
pub fn backtest_targets(
    name: &str,
    dates: &[Date],
    g: &[f64],
    d: &[f64],
    targets: &[Option<f64>],
    eta: f64,
    w0: f64,
    cost_bps: f64,
    lo: usize,
    hi: usize,
) -> Result<BacktestResult> {
    simulate(name, dates, g, d, lo, hi, w0, cost_bps, |i, w| {
        ewma_step(w, targets[i], eta)
    })
}

/// Static daily-rebalanced mix: zero cost, zero turnover.
pub fn static_backtest(
    name: &str,
    dates: &[Date],
    g: &[f64],
    d: &[f64],
    w_g: f64,
    lo: usize,
    hi: usize,
) -> Result<BacktestResult> {
    simulate(name, dates, g, d, lo, hi, w_g, 0.0, |_, w| w)
}

/// Rebuilds a result with a different cost level on the same weight path.
pub fn recost(result: &BacktestResult, prev_weight: f64, cost_bps: f64) -> Result<BacktestResult> {
    let mut out = result.clone();
    let mut last = prev_weight;
    let mut wealth = 1.0;
    for i in 0..out.net.len() {
        let c = transaction_cost(out.weights_g[i] - last, cost_bps);
        last = out.weights_g[i];
        out.costs[i] = c;
        out.net[i] = out.gross[i] - c;
        wealth *= 1.0 + out.net[i];
        out.equity[i] = wealth;
    }
    out.metrics = compute_metrics(&out.net, Some((&out.weights_g, prev_weight)))?;
    Ok(out)
}

/// Compounded return per calendar year.
pub fn yearly_breakdown(dates: &[Date], net: &[f64]) -> Vec<(i32, f64)> {
    use chrono::Datelike;
    let mut out: Vec<(i32, f64)> = Vec::new();
    for (d, r) in dates.iter().zip(net) {
        let y = d.year();
        match out.last_mut() {
            Some((yy, w)) if *yy == y => *w *= 1.0 + r,
            _ => out.push((y, 1.0 + r)),
        }
    }
    out.into_iter().map(|(y, w)| (y, w - 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dates(n: usize) -> Vec<Date> {
        let s = crate::market_data::parse_date("2018-01-01").unwrap();
        (0..n).map(|i| s + chrono::Days::new(i as u64)).collect()
    }

    #[test]
    fn target_weight_values() {
        assert_eq!(target_weight(0.0, 0.5, 0.75), 0.5);
        assert!((target_weight(1e6, 0.5, 0.75) - 1.0).abs() < 1e-15);
        let expected = 0.5 + 0.5 * 1f64.tanh();
        assert!((target_weight(0.75, 0.5, 0.75) - expected).abs() < 1e-15);
        assert!((expected - 0.8808).abs() < 1e-4);
        assert_eq!(targets(&[None], 0.5, 1.0), vec![None]);
    }

    #[test]
    fn ewma_cases() {
        let t = vec![Some(0.7), Some(0.2), None, Some(0.9)];
        assert_eq!(ewma_weights(&t, 1.0, 0.5), vec![0.7, 0.2, 0.2, 0.9]);
        assert!((ewma_weights(&[Some(1.0)], 0.05, 0.5)[0] - 0.525).abs() < 1e-15);
        let w = ewma_weights(&vec![Some(0.8); 200], 0.05, 0.3);
        for (k, wk) in w.iter().enumerate() {
            let bound = 0.95f64.powi(k as i32 + 1) * 0.5 + 1e-12;
            assert!((wk - 0.8).abs() <= bound);
        }
    }

    #[test]
    fn lag_shifts_by_one() {
        assert_eq!(
            apply_execution_lag(&[0.6, 0.7, 0.8], 0.5),
            vec![0.5, 0.6, 0.7]
        );
        assert!(apply_execution_lag(&[], 0.5).is_empty());
    }

    #[test]
    fn cost_formula() {
        assert!((transaction_cost(0.01, 10.0) - 2e-5).abs() < 1e-20);
        assert_eq!(transaction_cost(0.0, 10.0), 0.0);
        assert_eq!(transaction_cost(0.3, 0.0), 0.0);
    }

    #[test]
    fn metrics_closed_forms() {
        let r = 0.001;
        let m = compute_metrics(&vec![r; 252], None).unwrap();
        assert!((m.cagr - ((1.0 + r).powi(252) - 1.0)).abs() < 1e-12);
        assert_eq!(m.max_dd, 0.0);
        assert_eq!(m.calmar, None);
        assert_eq!(m.sharpe, None);
        assert_eq!(m.turnover_annual, 0.0);
        assert!(compute_metrics(&[], None).is_err());

        let net = [0.1, -0.2, 0.05, 0.3];
        let m = compute_metrics(&net, None).unwrap();
        // peak 1.1, trough 0.88
        assert!((m.max_dd - (0.88 / 1.1 - 1.0)).abs() < 1e-15);
        assert!((m.calmar.unwrap() - m.cagr / m.max_dd.abs()).abs() < 1e-15);
    }

    #[test]
    fn simulate_lag_and_costs() {
        let ds = dates(4);
        let g = [0.01, 0.02, -0.01, 0.0];
        let d = [0.0, 0.0, 0.0, 0.0];
        let t = vec![Some(1.0), Some(1.0), Some(1.0), Some(1.0)];
        let res = backtest_targets("x", &ds, &g, &d, &t, 1.0, 0.5, 10.0, 0, 3).unwrap();
        assert_eq!(res.weights_g, vec![0.5, 1.0, 1.0, 1.0]);
        assert_eq!(res.costs[0], 0.0);
        assert!((res.costs[1] - 2.0 * 0.5 * 0.001).abs() < 1e-18);
        assert!((res.net[1] - (0.02 - 0.001)).abs() < 1e-15);
        let w: f64 = res.net.iter().map(|r| 1.0 + r).product();
        assert!((res.equity[3] - w).abs() < 1e-15);
    }

    #[test]
    fn missing_signal_holds_without_cost() {
        let ds = dates(5);
        let g = [0.01; 5];
        let d = [0.0; 5];
        let t = vec![None; 5];
        let res = backtest_targets("x", &ds, &g, &d, &t, 0.05, 0.5, 10.0, 0, 4).unwrap();
        assert!(res.weights_g.iter().all(|w| *w == 0.5));
        assert!(res.costs.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn yearly() {
        let s = crate::market_data::parse_date("2021-12-30").unwrap();
        let ds: Vec<Date> = (0..4).map(|i| s + chrono::Days::new(i)).collect();
        let y = yearly_breakdown(&ds, &[0.1, 0.1, 0.0, 0.0]);
        assert_eq!(y.len(), 2);
        assert!((y[0].1 - 0.21).abs() < 1e-15);
        assert_eq!(y[1], (2022, 0.0));
    }

    proptest! {
        #[test]
        fn weights_stay_in_tilt_band(
            scores in prop::collection::vec(prop::option::of(-50.0f64..50.0), 1..300),
            tilt in 0.0f64..=0.5, tau in 0.1f64..3.0, eta in 0.01f64..=1.0
        ) {
            let t = targets(&scores, tilt, tau);
            for w in ewma_weights(&t, eta, 0.5) {
                prop_assert!(w >= 0.5 - tilt - 1e-12 && w <= 0.5 + tilt + 1e-12);
            }
        }

        #[test]
        fn recost_is_monotone(
            scores in prop::collection::vec(-3.0f64..3.0, 20..120),
            g in prop::collection::vec(-0.03f64..0.03, 120),
        ) {
            let n = scores.len();
            let ds = dates(n);
            let d = vec![0.0; n];
            let t: Signal = scores.iter().map(|s| Some(target_weight(*s, 0.5, 1.0))).collect();
            let base = backtest_targets("x", &ds, &g[..n], &d, &t, 0.3, 0.5, 0.0, 0, n - 1).unwrap();
            let mut prev = base.metrics.cagr;
            for bps in [5.0, 10.0, 20.0] {
                let r = recost(&base, 0.5, bps).unwrap();
                prop_assert!(r.metrics.cagr <= prev);
                prev = r.metrics.cagr;
            }
        }
    }
}
