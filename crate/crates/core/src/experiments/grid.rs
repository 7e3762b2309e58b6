use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::policy::{backtest_targets, compute_metrics, targets, Metrics, PolicyConfig};
use crate::signals::{score_series, ScoreParams, ScoreSpec, Signal};

/// A named policy configuration in a search pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub config: PolicyConfig,
}

impl Candidate {
    pub fn new(config: PolicyConfig) -> Self {
        Self {
            id: config_id(&config),
            config,
        }
    }
}

pub fn config_id(c: &PolicyConfig) -> String {
    let policy = format!("tilt{:.2} tau{:.2} eta{:.2}", c.max_tilt, c.tau_w, c.eta);
    match c.score {
        ScoreSpec::Smooth(p) => {
            let mut s = format!(
                "a{:.2} ls{:.2} lc{:.2} {policy}",
                p.alpha, p.lambda_s, p.lambda_c
            );
            if p.uses_credit() {
                s.push_str(&format!(
                    " lcr{:.2} lrcs{:.2}",
                    p.lambda_credit, p.lambda_rxcs
                ));
            }
            s
        }
        ScoreSpec::TnxOnly => format!("tnx-only {policy}"),
        ScoreSpec::CoreOnly { alpha } => format!("core-only a{alpha:.2} {policy}"),
        ScoreSpec::Replacement {
            beta,
            lambda_g,
            lambda_rxcs,
        } => format!("b{beta:.2} lg{lambda_g:.2} lrcs{lambda_rxcs:.2} {policy}"),
    }
}

/// Cartesian parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub lambda_s: Vec<f64>,
    pub lambda_c: Vec<f64>,
    pub max_tilt: Vec<f64>,
    pub tau_w: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(default)]
    pub lambda_credit: Vec<f64>,
    #[serde(default)]
    pub lambda_rxcs: Vec<f64>,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        let credit = self.lambda_credit.len().max(1) * self.lambda_rxcs.len().max(1);
        self.alpha.len()
            * self.lambda_s.len()
            * self.lambda_c.len()
            * self.max_tilt.len()
            * self.tau_w.len()
            * self.eta.len()
            * credit
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn candidates(&self, cost_bps: f64) -> Vec<Candidate> {
        let lcr = if self.lambda_credit.is_empty() {
            vec![0.0]
        } else {
            self.lambda_credit.clone()
        };
        let lrx = if self.lambda_rxcs.is_empty() {
            vec![0.0]
        } else {
            self.lambda_rxcs.clone()
        };
        let mut out = Vec::with_capacity(self.len());
        for &a in &self.alpha {
            for &ls in &self.lambda_s {
                for &lc in &self.lambda_c {
                    for &tilt in &self.max_tilt {
                        for &tau in &self.tau_w {
                            for &eta in &self.eta {
                                for &cr in &lcr {
                                    for &rx in &lrx {
                                        let p = ScoreParams::new(a, ls, lc).with_credit(cr, rx);
                                        let cfg = PolicyConfig::smooth(p, tilt, tau, eta)
                                            .with_cost(cost_bps);
                                        out.push(Candidate::new(cfg));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// The 2·2·3·4·3·3 = 432 configuration local grid.
pub fn expanded_local_grid() -> GridSpec {
    GridSpec {
        alpha: vec![0.50, 0.67],
        lambda_s: vec![0.25, 0.50],
        lambda_c: vec![0.05, 0.15, 0.25],
        max_tilt: vec![0.20, 0.30, 0.40, 0.50],
        tau_w: vec![0.75, 1.0, 1.5],
        eta: vec![0.03, 0.05, 0.10],
        lambda_credit: vec![],
        lambda_rxcs: vec![],
    }
}

/// Credit overlay on the fixed selected structure: 5·5 = 25 configurations.
pub fn credit_incremental_grid(base: &PolicyConfig) -> Vec<Candidate> {
    let ScoreSpec::Smooth(p) = base.score else {
        return vec![Candidate::new(*base)];
    };
    let mut out = Vec::new();
    for cr in [0.0, 0.05, 0.10, 0.25, 0.50] {
        for rx in [0.0, 0.10, 0.25, 0.50, 0.75] {
            let cfg = PolicyConfig {
                score: ScoreSpec::Smooth(p.with_credit(cr, rx)),
                ..*base
            };
            out.push(Candidate::new(cfg));
        }
    }
    out
}

/// Replacement-style credit score grid: 2·4·4·4·3·2 = 768 configurations.
pub fn credit_replacement_grid(cost_bps: f64) -> Vec<Candidate> {
    let mut out = Vec::new();
    for beta in [0.50, 0.67] {
        for lambda_g in [0.0, 0.05, 0.15, 0.25] {
            for lambda_rxcs in [0.0, 0.25, 0.50, 0.75] {
                for tilt in [0.20, 0.30, 0.40, 0.50] {
                    for tau in [0.75, 1.0, 1.5] {
                        for eta in [0.03, 0.05] {
                            let cfg = PolicyConfig {
                                score: ScoreSpec::Replacement {
                                    beta,
                                    lambda_g,
                                    lambda_rxcs,
                                },
                                max_tilt: tilt,
                                tau_w: tau,
                                eta,
                                cost_bps,
                                w0: 0.5,
                            };
                            out.push(Candidate::new(cfg));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Weights of the composite selection score over cross-config z-scores of
/// Sharpe, Calmar, CAGR, −|MaxDD| and −turnover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionScore {
    pub sharpe: f64,
    pub calmar: f64,
    pub cagr: f64,
    pub maxdd: f64,
    pub turnover: f64,
}

impl Default for SelectionScore {
    fn default() -> Self {
        Self {
            sharpe: 0.2,
            calmar: 0.2,
            cagr: 0.2,
            maxdd: 0.2,
            turnover: 0.2,
        }
    }
}

impl SelectionScore {
    pub fn cagr_only() -> Self {
        Self {
            sharpe: 0.0,
            calmar: 0.0,
            cagr: 1.0,
            maxdd: 0.0,
            turnover: 0.0,
        }
    }
}

fn cross_z(values: &[Option<f64>]) -> Vec<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.len() < 2 {
        return vec![0.0; values.len()];
    }
    let m = present.iter().sum::<f64>() / present.len() as f64;
    let sd =
        (present.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (present.len() - 1) as f64).sqrt();
    values
        .iter()
        .map(|v| match v {
            Some(v) if sd > 0.0 => (v - m) / sd,
            _ => 0.0,
        })
        .collect()
}

/// Orders `(id, metrics)` pairs best-first. Returns `(index, score)` pairs
/// into the input slice; ties break by id. Missing metrics score neutral.
pub fn rank(entries: &[(&str, &Metrics)], sel: &SelectionScore) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].0.cmp(entries[b].0));
    let col = |f: &dyn Fn(&Metrics) -> Option<f64>| -> Vec<f64> {
        cross_z(&order.iter().map(|&i| f(entries[i].1)).collect::<Vec<_>>())
    };
    let zs = col(&|m| m.sharpe);
    let zc = col(&|m| m.calmar);
    let zg = col(&|m| Some(m.cagr));
    let zd = col(&|m| Some(-m.max_dd.abs()));
    let zt = col(&|m| Some(-m.turnover_annual));
    let mut scored: Vec<(usize, f64)> = order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let s = sel.sharpe * zs[k]
                + sel.calmar * zc[k]
                + sel.cagr * zg[k]
                + sel.maxdd * zd[k]
                + sel.turnover * zt[k];
            (i, s)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| entries[a.0].0.cmp(entries[b.0].0))
    });
    scored
}

/// Score-z series shared by candidates with the same score spec.
pub type ScoreCache = BTreeMap<String, Signal>;

fn score_key(spec: &ScoreSpec) -> String {
    format!("{spec:?}")
}

pub fn score_cache(ds: &Dataset, pool: &[Candidate]) -> ScoreCache {
    let mut specs: BTreeMap<String, ScoreSpec> = BTreeMap::new();
    for c in pool {
        specs
            .entry(score_key(&c.config.score))
            .or_insert(c.config.score);
    }
    specs
        .into_par_iter()
        .map(|(k, spec)| (k, score_series(&ds.frame, &spec).score_z))
        .collect()
}

/// Candidate evaluated over a calendar range: daily targets, applied
/// weights and net returns, plus full-range metrics.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub candidate: Candidate,
    pub lo: usize,
    pub targets: Signal,
    pub weights: Vec<f64>,
    pub net: Vec<f64>,
    pub metrics: Metrics,
}

impl Evaluated {
    /// Metrics on calendar indices `[a, b]` of this candidate's path.
    pub fn span_metrics(&self, a: usize, b: usize) -> Result<Metrics> {
        let (i, j) = (a - self.lo, b - self.lo);
        let prev = if i == 0 {
            self.candidate.config.w0
        } else {
            self.weights[i - 1]
        };
        compute_metrics(&self.net[i..=j], Some((&self.weights[i..=j], prev)))
    }
}

/// Backtests every candidate on `[lo, hi]` in parallel.
pub fn evaluate(ds: &Dataset, pool: &[Candidate], lo: usize, hi: usize) -> Result<Vec<Evaluated>> {
    if pool.is_empty() {
        return Err(Error::validation("candidate pool is empty"));
    }
    for c in pool {
        c.config.validate()?;
    }
    let cache = score_cache(ds, pool);
    pool.par_iter()
        .map(|c| {
            let z = &cache[&score_key(&c.config.score)];
            let t = targets(z, c.config.max_tilt, c.config.tau_w);
            let r = backtest_targets(
                &c.id,
                &ds.dates,
                &ds.g,
                &ds.d,
                &t,
                c.config.eta,
                c.config.w0,
                c.config.cost_bps,
                lo,
                hi,
            )?;
            Ok(Evaluated {
                candidate: c.clone(),
                lo,
                targets: t,
                weights: r.weights_g,
                net: r.net,
                metrics: r.metrics,
            })
        })
        .collect()
}
