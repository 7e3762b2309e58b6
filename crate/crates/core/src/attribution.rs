//! Time-series factor attribution with Newey–West (Bartlett kernel) HAC
//! standard errors.
//!
//! The estimator is the usual sandwich
//!
//! ```text
//! V = (X'X)^-1 S (X'X)^-1,
//! S = Σ_t u_t² x_t x_t' + Σ_{k=1}^{L} (1 − k/(L+1)) Σ_t u_t u_{t−k} (x_t x_{t−k}' + x_{t−k} x_t')
//! ```
//!
//! with no degrees-of-freedom correction, so `L = 0` is White's HC0.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::{Date, FactorPanel, ReturnSeries, FACTOR_NAMES};
use crate::TRADING_DAYS;

/// Recorded in run metadata.
pub const ALPHA_ANNUALIZATION: &str = "compounded: (1 + alpha_daily)^252 - 1";
pub const NW_LAG_RULE: &str = "floor(4 * (n/100)^(2/9)), Bartlett kernel, no df correction";

/// Automatic Newey–West lag: `floor(4·(n/100)^(2/9))`.
pub fn default_hac_lags(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

pub fn annualize_alpha(alpha_daily: f64) -> f64 {
    (1.0 + alpha_daily).powi(TRADING_DAYS as i32) - 1.0
}

#[derive(Debug, Clone)]
pub struct RegressionSpec {
    pub dependent: Vec<f64>,
    /// Regressor columns, intercept excluded.
    pub regressors: Vec<Vec<f64>>,
    pub names: Vec<String>,
    /// `None` selects the automatic lag rule.
    pub hac_lags: Option<usize>,
}

impl RegressionSpec {
    pub fn new(dependent: Vec<f64>, regressors: Vec<Vec<f64>>, names: Vec<String>) -> Self {
        Self {
            dependent,
            regressors,
            names,
            hac_lags: None,
        }
    }

    pub fn with_lags(mut self, lags: usize) -> Self {
        self.hac_lags = Some(lags);
        self
    }

    pub fn n(&self) -> usize {
        self.dependent.len()
    }

    /// Rows `[lo, hi)` of dependent and regressors.
    pub fn slice(&self, lo: usize, hi: usize) -> RegressionSpec {
        RegressionSpec {
            dependent: self.dependent[lo..hi].to_vec(),
            regressors: self.regressors.iter().map(|c| c[lo..hi].to_vec()).collect(),
            names: self.names.clone(),
            hac_lags: self.hac_lags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub n: usize,
    pub hac_lags: usize,
    pub alpha_daily: f64,
    pub alpha_annual: f64,
    pub alpha_se: f64,
    pub alpha_t_nw: f64,
    pub names: Vec<String>,
    pub betas: Vec<f64>,
    pub beta_se: Vec<f64>,
    pub beta_t_nw: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn beta(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.betas[i])
    }
}

/// Newey–West long-run covariance of the scores `x_t u_t`.
fn hac_meat(x: &DMatrix<f64>, u: &DVector<f64>, lags: usize) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut scores = x.clone();
    for t in 0..n {
        for j in 0..p {
            scores[(t, j)] *= u[t];
        }
    }
    let mut s = scores.transpose() * &scores;
    for k in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - k as f64 / (lags as f64 + 1.0);
        let lead = scores.rows(k, n - k);
        let lag = scores.rows(0, n - k);
        let gamma = lead.transpose() * lag;
        s += (&gamma + gamma.transpose()) * w;
    }
    s
}

/// Least squares with intercept and HAC inference.
pub fn ols_hac(spec: &RegressionSpec) -> Result<RegressionResult> {
    let n = spec.n();
    let k = spec.regressors.len();
    let p = k + 1;
    if spec.names.len() != k {
        return Err(Error::validation("regressor names do not match columns"));
    }
    if spec.regressors.iter().any(|c| c.len() != n) {
        return Err(Error::validation("regressor length differs from dependent"));
    }
    if n <= p {
        return Err(Error::validation(format!(
            "sample length {n} too small for {k} regressors"
        )));
    }
    if spec
        .dependent
        .iter()
        .chain(spec.regressors.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::validation("non-finite value in regression data"));
    }
    if let Some(j) = spec.regressors.iter().position(|c| c == &spec.dependent) {
        return Err(Error::DependentInRegressors(j));
    }

    let x = DMatrix::from_fn(n, p, |i, j| {
        if j == 0 {
            1.0
        } else {
            spec.regressors[j - 1][i]
        }
    });
    let y = DVector::from_column_slice(&spec.dependent);

    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let tol = scale * 1e-10 * n as f64;
    let rank = (0..p).filter(|&j| r[(j, j)].abs() > tol).count();
    if rank < p {
        return Err(Error::Singular { rank, cols: p });
    }
    let qty = qr.q().transpose() * &y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::Singular { rank, cols: p })?;

    let fitted = &x * &coef;
    let resid = &y - fitted;
    let ybar = y.mean();
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let rss: f64 = resid.iter().map(|v| v * v).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - k as f64 - 1.0);

    let lags = spec.hac_lags.unwrap_or_else(|| default_hac_lags(n));
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { rank, cols: p })?;
    // (X'X)^-1 = R^-1 R^-T
    let bread = &r_inv * r_inv.transpose();
    let meat = hac_meat(&x, &resid, lags);
    let cov = &bread * meat * &bread;
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let t = |j: usize| {
        if se[j] > 0.0 {
            coef[j] / se[j]
        } else {
            f64::NAN
        }
    };

    Ok(RegressionResult {
        n,
        hac_lags: lags,
        alpha_daily: coef[0],
        alpha_annual: annualize_alpha(coef[0]),
        alpha_se: se[0],
        alpha_t_nw: t(0),
        names: spec.names.clone(),
        betas: (1..p).map(|j| coef[j]).collect(),
        beta_se: se[1..].to_vec(),
        beta_t_nw: (1..p).map(t).collect(),
        r2,
        adj_r2,
        residuals: resid.iter().copied().collect(),
    })
}

/// Asset minus risk-free, or unchanged for a zero-cost long/short.
pub fn excess_dependent(asset: &[f64], rf: &[f64], zero_cost: bool) -> Vec<f64> {
    if zero_cost {
        asset.to_vec()
    } else {
        asset.iter().zip(rf).map(|(a, f)| a - f).collect()
    }
}

/// One fit per terminal index on exactly `window` trailing observations.
pub fn rolling_attribution(
    spec: &RegressionSpec,
    window: usize,
) -> Result<Vec<(usize, RegressionResult)>> {
    if window > spec.n() {
        return Err(Error::validation(format!(
            "rolling window {window} exceeds sample {}",
            spec.n()
        )));
    }
    (window..=spec.n())
        .into_par_iter()
        .map(|hi| {
            let mut fit = ols_hac(&spec.slice(hi - window, hi))?;
            fit.residuals.clear();
            Ok((hi - 1, fit))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Period {
    pub name: String,
    pub start: Date,
    pub end: Date,
}

/// Independent fit per named period; `dates` index the rows of `spec`.
pub fn period_attribution(
    spec: &RegressionSpec,
    dates: &[Date],
    periods: &[Period],
) -> Result<Vec<(String, RegressionResult)>> {
    if dates.len() != spec.n() {
        return Err(Error::validation(
            "period_attribution: dates do not match sample",
        ));
    }
    periods
        .iter()
        .map(|p| {
            let lo = dates.partition_point(|d| *d < p.start);
            let hi = dates.partition_point(|d| *d <= p.end);
            if hi <= lo {
                return Err(Error::validation(format!("period {} is empty", p.name)));
            }
            let mut fit = ols_hac(&spec.slice(lo, hi))?;
            fit.residuals.clear();
            Ok((p.name.clone(), fit))
        })
        .collect()
}

/// Aligns an asset return series with the factor panel on common dates and
/// builds the FF5+MOM regression.
pub fn factor_spec(
    asset: &ReturnSeries,
    factors: &FactorPanel,
    zero_cost: bool,
    start: Date,
    end: Date,
) -> Result<(Vec<Date>, RegressionSpec)> {
    let mut dates = Vec::new();
    let mut dep = Vec::new();
    let mut rf = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 6];
    let fcols = factors.columns();
    for (d, r) in asset.dates.iter().zip(&asset.returns) {
        if *d < start || *d > end {
            continue;
        }
        if let Ok(i) = factors.dates.binary_search(d) {
            dates.push(*d);
            dep.push(*r);
            rf.push(factors.rf[i]);
            for (c, f) in cols.iter_mut().zip(fcols.iter()) {
                c.push(f[i]);
            }
        }
    }
    if dates.is_empty() {
        return Err(Error::Coverage(format!(
            "{}: no overlap with factor dates in window",
            asset.symbol
        )));
    }
    let y = excess_dependent(&dep, &rf, zero_cost);
    Ok((
        dates,
        RegressionSpec::new(
            y,
            cols,
            FACTOR_NAMES.iter().map(|s| s.to_string()).collect(),
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Normal-equations oracle by Gauss–Jordan elimination with partial pivoting.
    fn normal_equations(y: &[f64], cols: &[Vec<f64>]) -> Vec<f64> {
        let n = y.len();
        let p = cols.len() + 1;
        let xij = |i: usize, j: usize| if j == 0 { 1.0 } else { cols[j - 1][i] };
        let mut a = vec![vec![0.0; p + 1]; p];
        for r in 0..p {
            for c in 0..p {
                a[r][c] = (0..n).map(|i| xij(i, r) * xij(i, c)).sum();
            }
            a[r][p] = (0..n).map(|i| xij(i, r) * y[i]).sum();
        }
        for c in 0..p {
            let piv = (c..p)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..p).map(|r| a[r][p] / a[r][r]).collect()
    }

    fn synthetic(seed: u64, n: usize, k: usize) -> RegressionSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = (0..n)
            .map(|i| {
                0.3 + cols
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (j as f64 - 1.0) * c[i])
                    .sum::<f64>()
                    + rng.random_range(-0.5..0.5)
            })
            .collect();
        RegressionSpec::new(y, cols, (0..k).map(|j| format!("x{j}")).collect())
    }

    #[test]
    fn exact_fit() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = ols_hac(&RegressionSpec::new(y, vec![x], vec!["x".into()])).unwrap();
        assert!((fit.betas[0] - 2.0).abs() < 1e-12);
        assert!(fit.alpha_daily.abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_on_50_obs() {
        let spec = synthetic(11, 50, 3);
        let fit = ols_hac(&spec).unwrap();
        let oracle = normal_equations(&spec.dependent, &spec.regressors);
        assert!((fit.alpha_daily - oracle[0]).abs() < 1e-10);
        for (b, o) in fit.betas.iter().zip(&oracle[1..]) {
            assert!((b - o).abs() < 1e-10);
        }
    }

    #[test]
    fn coefficients_invariant_to_lags() {
        let spec = synthetic(3, 300, 4);
        let a = ols_hac(&spec.clone().with_lags(0)).unwrap();
        let b = ols_hac(&spec.clone().with_lags(12)).unwrap();
        assert_eq!(a.betas, b.betas);
        assert_ne!(a.beta_t_nw, b.beta_t_nw);
    }

    #[test]
    fn dependent_as_regressor_is_rejected() {
        let mut spec = synthetic(5, 60, 2);
        spec.regressors.push(spec.dependent.clone());
        spec.names.push("y".into());
        assert!(matches!(
            ols_hac(&spec),
            Err(Error::DependentInRegressors(2))
        ));
    }

    #[test]
    fn rank_deficient_and_small_samples() {
        let mut spec = synthetic(5, 60, 2);
        spec.regressors
            .push(spec.regressors[0].iter().map(|v| 2.0 * v).collect());
        spec.names.push("dup".into());
        assert!(matches!(ols_hac(&spec), Err(Error::Singular { .. })));
        let tiny = synthetic(1, 3, 2);
        assert!(matches!(ols_hac(&tiny), Err(Error::Validation(_))));
    }

    #[test]
    fn annualization() {
        assert_eq!(annualize_alpha(0.0), 0.0);
        // (1.0001)^252 - 1 evaluated directly
        let direct = (252.0 * 0.0001f64.ln_1p()).exp_m1();
        assert!((annualize_alpha(0.0001) - direct).abs() < 1e-14);
        assert!((annualize_alpha(0.0001) - 0.02551).abs() < 1e-5);
        assert!(annualize_alpha(-0.0001) < 0.0);
    }

    #[test]
    fn excess_cases() {
        assert_eq!(
            excess_dependent(&[0.001, 0.002], &[0.5, 0.5], true),
            vec![0.001, 0.002]
        );
        assert_eq!(excess_dependent(&[0.001], &[0.0], false), vec![0.001]);
        assert!((excess_dependent(&[0.0010], &[0.0002], false)[0] - 0.0008).abs() < 1e-18);
    }

    #[test]
    fn lag_rule() {
        assert_eq!(default_hac_lags(100), 4);
        assert_eq!(default_hac_lags(2330), 8);
    }

    #[test]
    fn rolling_windows_match_slice_refits() {
        let spec = synthetic(9, 120, 2).with_lags(3);
        let rolled = rolling_attribution(&spec, 60).unwrap();
        assert_eq!(rolled.len(), 61);
        for (end, fit) in rolled.iter().step_by(10) {
            let direct = ols_hac(&spec.slice(end + 1 - 60, end + 1)).unwrap();
            assert_eq!(fit.betas, direct.betas);
            assert_eq!(fit.beta_t_nw, direct.beta_t_nw);
        }
        assert!(rolling_attribution(&spec, 121).is_err());
    }

    #[test]
    fn constant_beta_rolling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v + 0.001).collect();
        let spec = RegressionSpec::new(y, vec![x], vec!["x".into()]);
        for (_, fit) in rolling_attribution(&spec, 252).unwrap() {
            assert!((fit.betas[0] - 0.7).abs() < 1e-8);
        }
    }

    #[test]
    fn period_fits_recover_regime_betas() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let start = crate::market_data::parse_date("2020-01-01").unwrap();
        let dates: Vec<Date> = (0..600).map(|i| start + chrono::Days::new(i)).collect();
        let x: Vec<f64> = (0..600).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| if i < 300 { 1.0 } else { 2.0 } * v + rng.random_range(-0.05..0.05))
            .collect();
        let spec = RegressionSpec::new(y, vec![x], vec!["x".into()]);
        let periods = vec![
            Period {
                name: "a".into(),
                start: dates[0],
                end: dates[299],
            },
            Period {
                name: "b".into(),
                start: dates[300],
                end: dates[599],
            },
        ];
        let fits = period_attribution(&spec, &dates, &periods).unwrap();
        assert!((fits[0].1.betas[0] - 1.0).abs() < 0.02);
        assert!((fits[1].1.betas[0] - 2.0).abs() < 0.02);

        let whole = vec![Period {
            name: "all".into(),
            start: dates[0],
            end: dates[599],
        }];
        let one = period_attribution(&spec, &dates, &whole).unwrap();
        assert_eq!(one[0].1.betas, ols_hac(&spec).unwrap().betas);

        let empty = vec![Period {
            name: "none".into(),
            start: dates[599] + chrono::Days::new(5),
            end: dates[599] + chrono::Days::new(9),
        }];
        assert!(period_attribution(&spec, &dates, &empty).is_err());
    }
}
