//! Comparison portfolios and pairwise incremental statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnSeries;
use crate::policy::{
    annualized_vol, compute_metrics, max_drawdown, mean, std_dev, Metrics, PolicyConfig,
};
use crate::signals::ScoreSpec;
use crate::TRADING_DAYS;

/// `w·G + (1−w)·D` daily.
pub fn static_mix(w_g: f64, g: &ReturnSeries, d: &ReturnSeries) -> Result<ReturnSeries> {
    if !(0.0..=1.0).contains(&w_g) {
        return Err(Error::validation(format!(
            "static weight {w_g} outside [0, 1]"
        )));
    }
    if g.dates != d.dates {
        return Err(Error::validation("static_mix: calendars differ"));
    }
    let returns = g
        .returns
        .iter()
        .zip(&d.returns)
        .map(|(a, b)| w_g * a + (1.0 - w_g) * b)
        .collect();
    ReturnSeries::new(format!("static_{:.2}", w_g), g.dates.clone(), returns)
}

pub fn mix_slices(w_g: f64, g: &[f64], d: &[f64]) -> Vec<f64> {
    g.iter()
        .zip(d)
        .map(|(a, b)| w_g * a + (1.0 - w_g) * b)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolMatch {
    pub weight: f64,
    /// Set when the required weight exceeds 1 (implicit leverage, no cost modeled).
    pub levered: bool,
}

/// Scale against zero-return cash so that `w·base` has annualized vol `target_vol`.
pub fn vol_match_weight(base: &[f64], target_vol: f64) -> Result<VolMatch> {
    let v = annualized_vol(base);
    if !(v > 0.0) {
        return Err(Error::validation(
            "vol_match_weight: base series has zero volatility",
        ));
    }
    let weight = target_vol / v;
    Ok(VolMatch {
        weight,
        levered: weight > 1.0,
    })
}

pub fn scale(base: &[f64], w: f64) -> Vec<f64> {
    base.iter().map(|r| w * r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchCriterion {
    Vol,
    MaxDd,
    Sharpe,
}

/// Exhaustive scan of static G weights on a `grid_step` grid over [0, 1].
///
/// Vol and MaxDD pick the weight whose metric is closest to `target`, ties
/// going to the lower weight; Sharpe picks the argmax.
pub fn matched_static_search(
    criterion: MatchCriterion,
    target: f64,
    g: &[f64],
    d: &[f64],
    grid_step: f64,
) -> Result<(f64, Metrics)> {
    let steps = (1.0 / grid_step).round() as usize;
    if steps == 0 || ((steps as f64) * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "grid step {grid_step} does not divide [0, 1]"
        )));
    }
    let scanned: Vec<(f64, Metrics)> = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let w = i as f64 / steps as f64;
            compute_metrics(&mix_slices(w, g, d), None).map(|m| (w, m))
        })
        .collect::<Result<_>>()?;
    let key = |m: &Metrics| -> f64 {
        match criterion {
            MatchCriterion::Vol => -(m.vol - target).abs(),
            MatchCriterion::MaxDd => -(m.max_dd - target).abs(),
            MatchCriterion::Sharpe => m.sharpe.unwrap_or(f64::NEG_INFINITY),
        }
    };
    let mut best = scanned[0];
    for cand in &scanned[1..] {
        if key(&cand.1) > key(&best.1) {
            best = *cand;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedKind {
    TnxOnly,
    CoreOnly,
}

/// Same tilt, τ_w, η and cost as `base`, with a rate-only or core-only score.
pub fn matched_policy(kind: MatchedKind, base: &PolicyConfig) -> PolicyConfig {
    let alpha = match base.score {
        ScoreSpec::Smooth(p) => p.alpha,
        ScoreSpec::CoreOnly { alpha } => alpha,
        _ => 0.5,
    };
    let score = match kind {
        MatchedKind::TnxOnly => ScoreSpec::TnxOnly,
        MatchedKind::CoreOnly => ScoreSpec::CoreOnly { alpha },
    };
    PolicyConfig { score, ..*base }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExcessConvention {
    #[default]
    Linear,
    Compounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStats {
    pub annual_excess: f64,
    pub tracking_error: f64,
    pub info_ratio: Option<f64>,
    pub maxdd_diff: f64,
}

pub fn pair_stats(a: &[f64], b: &[f64], convention: ExcessConvention) -> Result<PairStats> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::validation(
            "pair_stats: series lengths differ or are empty",
        ));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let ann = TRADING_DAYS as f64;
    let m = mean(&diff);
    let annual_excess = match convention {
        ExcessConvention::Linear => m * ann,
        ExcessConvention::Compounded => (1.0 + m).powf(ann) - 1.0,
    };
    let tracking_error = std_dev(&diff) * ann.sqrt();
    Ok(PairStats {
        annual_excess,
        tracking_error,
        info_ratio: (tracking_error > 0.0).then(|| annual_excess / tracking_error),
        maxdd_diff: max_drawdown(a) - max_drawdown(b),
    })
}
