use serde::Serialize;

use crate::attribution::{ols_hac, RegressionSpec};
use crate::error::{Error, Result};
use crate::signals::Signal;

/// |t| threshold for a gate pass.
pub const GATE_PASS_T: f64 = 1.5;

/// Forward compounded return over `t+1..=t+h`, missing if any day is
/// missing or the window runs past `hi`.
pub fn forward_compounded(x: &[Option<f64>], h: usize, hi: usize) -> Signal {
    let n = x.len();
    (0..n)
        .map(|t| {
            if t + h > hi || t + h >= n {
                return None;
            }
            let mut w = 1.0;
            for v in &x[t + 1..=t + h] {
                w *= 1.0 + (*v)?;
            }
            Some(w - 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuintileResult {
    pub horizon: usize,
    pub n_obs: usize,
    pub means: [f64; 5],
    pub counts: [usize; 5],
    pub spread: f64,
}

/// Mean forward `horizon`-day compounded G−D by score quintile over days
/// `lo..=hi`. Forward windows may not extend beyond `hi`.
pub fn quintile_diagnostic(
    score_z: &[Option<f64>],
    gd: &[Option<f64>],
    horizon: usize,
    lo: usize,
    hi: usize,
) -> Result<QuintileResult> {
    if horizon == 0 {
        return Err(Error::validation("quintile horizon must be >= 1"));
    }
    let fwd = forward_compounded(gd, horizon, hi);
    let mut obs: Vec<(f64, usize, f64)> = (lo..=hi.min(score_z.len() - 1))
        .filter_map(|t| Some((score_z[t]?, t, fwd[t]?)))
        .collect();
    if obs.len() < 5 * horizon {
        return Err(Error::validation(format!(
            "quintile diagnostic needs at least {} observations, got {}",
            5 * horizon,
            obs.len()
        )));
    }
    obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = obs.len();
    let mut sums = [0.0; 5];
    let mut counts = [0usize; 5];
    for (rank, (_, _, f)) in obs.iter().enumerate() {
        let q = rank * 5 / n;
        sums[q] += f;
        counts[q] += 1;
    }
    let mut means = [0.0; 5];
    for q in 0..5 {
        means[q] = sums[q] / counts[q] as f64;
    }
    Ok(QuintileResult {
        horizon,
        n_obs: n,
        means,
        counts,
        spread: means[4] - means[0],
    })
}

/// A main-effect gate candidate and its expected sign (+1 or −1).
#[derive(Debug, Clone)]
pub struct GateCandidate<'a> {
    pub name: String,
    pub signal: &'a [Option<f64>],
    pub expected_sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateRow {
    pub name: String,
    pub n: usize,
    pub hac_lags: usize,
    pub coef: f64,
    pub t_hac: f64,
    pub n_nonoverlap: usize,
    pub coef_nonoverlap: f64,
    pub t_nonoverlap: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionGateRow {
    pub name: String,
    pub variant: String,
    pub n: usize,
    pub coef: f64,
    pub t_hac: f64,
}

fn univariate(
    y: Vec<f64>,
    x: Vec<f64>,
    lags: Option<usize>,
) -> Result<crate::attribution::RegressionResult> {
    let mut spec = RegressionSpec::new(y, vec![x], vec!["x".into()]);
    if let Some(l) = lags {
        spec = spec.with_lags(l);
    }
    ols_hac(&spec)
}

fn gate_one(
    name: &str,
    x: &[Option<f64>],
    fwd: &[Option<f64>],
    horizon: usize,
    lo: usize,
    hi: usize,
    sign: f64,
) -> Result<GateRow> {
    let idx: Vec<usize> = (lo..=hi)
        .filter(|&t| x[t].is_some() && fwd[t].is_some())
        .collect();
    if idx.len() < 3 * horizon.max(10) {
        return Err(Error::validation(format!(
            "gate {name}: insufficient sample ({})",
            idx.len()
        )));
    }
    let y: Vec<f64> = idx.iter().map(|&t| fwd[t].unwrap()).collect();
    let xs: Vec<f64> = idx.iter().map(|&t| x[t].unwrap()).collect();
    let fit = univariate(y.clone(), xs.clone(), Some(horizon + 5))?;
    let first = idx[0];
    let sub: Vec<usize> = (0..idx.len())
        .filter(|&k| (idx[k] - first).is_multiple_of(horizon))
        .collect();
    let (n_no, c_no, t_no) = if sub.len() >= 3 {
        let f = univariate(
            sub.iter().map(|&k| y[k]).collect(),
            sub.iter().map(|&k| xs[k]).collect(),
            None,
        )?;
        (sub.len(), f.betas[0], f.beta_t_nw[0])
    } else {
        (sub.len(), f64::NAN, f64::NAN)
    };
    let pass =
        fit.betas[0] * sign > 0.0 && c_no * sign > 0.0 && fit.beta_t_nw[0].abs() >= GATE_PASS_T;
    Ok(GateRow {
        name: name.to_string(),
        n: fit.n,
        hac_lags: fit.hac_lags,
        coef: fit.betas[0],
        t_hac: fit.beta_t_nw[0],
        n_nonoverlap: n_no,
        coef_nonoverlap: c_no,
        t_nonoverlap: t_no,
        pass,
    })
}

/// Main-effect gates for each candidate plus, when `rcs_z` is given, the raw
/// and TNX-residual interaction gates.
pub fn gate_regressions(
    candidates: &[GateCandidate<'_>],
    gd: &[Option<f64>],
    horizon: usize,
    lo: usize,
    hi: usize,
    interaction: Option<(&[Option<f64>], &[Option<f64>])>,
) -> Result<(Vec<GateRow>, Vec<InteractionGateRow>)> {
    if horizon == 0 {
        return Err(Error::validation("gate horizon must be >= 1"));
    }
    let fwd = forward_compounded(gd, horizon, hi);
    let main = candidates
        .iter()
        .map(|c| gate_one(&c.name, c.signal, &fwd, horizon, lo, hi, c.expected_sign))
        .collect::<Result<Vec<_>>>()?;

    let mut inter = Vec::new();
    if let Some((rcs_z, r)) = interaction {
        let idx: Vec<usize> = (lo..=hi)
            .filter(|&t| rcs_z[t].is_some() && r[t].is_some() && fwd[t].is_some())
            .collect();
        if idx.len() < 3 * horizon.max(10) {
            return Err(Error::validation("interaction gate: insufficient sample"));
        }
        let y: Vec<f64> = idx.iter().map(|&t| fwd[t].unwrap()).collect();
        let xr: Vec<f64> = idx.iter().map(|&t| r[t].unwrap()).collect();
        let xi: Vec<f64> = idx.iter().map(|&t| rcs_z[t].unwrap()).collect();
        let raw = univariate(y.clone(), xi.clone(), Some(horizon + 5))?;
        inter.push(InteractionGateRow {
            name: "rxcs".into(),
            variant: "raw".into(),
            n: raw.n,
            coef: raw.betas[0],
            t_hac: raw.beta_t_nw[0],
        });
        let first = univariate(y, xr, Some(horizon + 5))?;
        let resid = univariate(first.residuals, xi, Some(horizon + 5))?;
        inter.push(InteractionGateRow {
            name: "rxcs".into(),
            variant: "tnx_residual".into(),
            n: resid.n,
            coef: resid.betas[0],
            t_hac: resid.beta_t_nw[0],
        });
    }
    Ok((main, inter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_window() {
        let x = vec![Some(0.1), Some(0.1), Some(-0.5), None, Some(0.0)];
        let f = forward_compounded(&x, 2, 4);
        assert!((f[0].unwrap() - (1.1 * 0.5 - 1.0)).abs() < 1e-15);
        assert_eq!(f[1], None);
        assert_eq!(f[3], None);
        assert_eq!(f[4], None);
    }

    #[test]
    fn perfect_ranking_increasing() {
        let n = 500;
        let gd: Signal = (0..n).map(|t| Some(t as f64 * 1e-5)).collect();
        // Score = next-day return, so forward 1-day return is monotone in score.
        let score: Signal = (0..n).map(|t| Some((t + 1) as f64)).collect();
        let q = quintile_diagnostic(&score, &gd, 1, 0, n - 1).unwrap();
        for k in 1..5 {
            assert!(q.means[k] > q.means[k - 1]);
        }
        let (mn, mx) = (
            q.counts.iter().min().unwrap(),
            q.counts.iter().max().unwrap(),
        );
        assert!(mx - mn <= 1);
        assert_eq!(q.counts.iter().sum::<usize>(), q.n_obs);
    }

    #[test]
    fn too_few_observations() {
        let gd: Signal = vec![Some(0.0); 50];
        let score: Signal = vec![Some(1.0); 50];
        assert!(quintile_diagnostic(&score, &gd, 21, 0, 49).is_err());
    }

    #[test]
    fn gate_recovers_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 3000;
        let x: Signal = (0..n).map(|_| Some(rng.random_range(-1.0..1.0))).collect();
        let gd: Signal = (0..n)
            .map(|t| {
                let lag = if t > 0 { x[t - 1].unwrap() } else { 0.0 };
                Some(0.004 * lag + rng.random_range(-0.01..0.01))
            })
            .collect();
        let c = [GateCandidate {
            name: "x".into(),
            signal: &x,
            expected_sign: 1.0,
        }];
        let (rows, inter) = gate_regressions(&c, &gd, 1, 0, n - 1, None).unwrap();
        assert!(rows[0].coef > 0.0 && rows[0].t_hac > 2.0 && rows[0].pass);
        assert_eq!(rows[0].hac_lags, 6);
        assert!(inter.is_empty());
    }
}
