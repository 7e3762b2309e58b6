//! Direction-normalized state signals, smooth components, interactions and
//! the policy scores.
//!
//! Every series lives on the master trading calendar as `Vec<Option<f64>>`;
//! `None` means the value is not available that day (insufficient history,
//! zero variance, or missing input). All operators are causal: the value at
//! index `t` depends only on inputs at indices `≤ t`.

use serde::{Deserialize, Serialize};

use crate::market_data::Date;

pub type Signal = Vec<Option<f64>>;

/// Minimum observations before an expanding z-score is emitted.
pub const Z_MIN_OBS: usize = 60;
pub const CHANGE_WINDOW: usize = 21;
pub const VIX_PCT_WINDOW: usize = 756;
pub const VIX_PCT_MIN_OBS: usize = 252;
pub const GD_TRAILING: usize = 126;

/// Expanding z-score with sample (n−1) standard deviation over all
/// non-missing observations up to and including `t`.
pub fn expanding_z(x: &[Option<f64>], min_obs: usize) -> Signal {
    assert!(min_obs >= 2, "expanding_z needs min_obs >= 2");
    let mut out = vec![None; x.len()];
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (t, v) in x.iter().enumerate() {
        let Some(v) = *v else { continue };
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
        if n >= min_obs {
            let var = m2 / (n as f64 - 1.0);
            if var > 0.0 {
                out[t] = Some((v - mean) / var.sqrt());
            }
        }
    }
    out
}

pub fn softplus(x: f64, tau: f64) -> f64 {
    let s = x / tau;
    if s > 0.0 {
        x + tau * (-s).exp().ln_1p()
    } else {
        tau * s.exp().ln_1p()
    }
}

fn map1(x: &[Option<f64>], f: impl Fn(f64) -> f64) -> Signal {
    x.iter().map(|v| v.map(&f)).collect()
}

fn map2(a: &[Option<f64>], b: &[Option<f64>], f: impl Fn(f64, f64) -> f64) -> Signal {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(f(*x, *y)),
            _ => None,
        })
        .collect()
}

fn neg(x: &[Option<f64>]) -> Signal {
    map1(x, |v| -v)
}

/// Weighted sum of terms. Terms with weight exactly zero are skipped and do
/// not need to be present; otherwise a missing term makes the sum missing.
pub fn combine(terms: &[(f64, &[Option<f64>])]) -> Signal {
    let len = terms.first().map(|t| t.1.len()).unwrap_or(0);
    let used: Vec<&(f64, &[Option<f64>])> = terms.iter().filter(|(w, _)| *w != 0.0).collect();
    (0..len)
        .map(|t| {
            let mut acc = 0.0;
            for (w, s) in &used {
                acc += w * s[t]?;
            }
            Some(acc)
        })
        .collect()
}

/// `x_t − x_{t−lag}` on calendar rows.
pub fn change(x: &[Option<f64>], lag: usize) -> Signal {
    (0..x.len())
        .map(|t| {
            if t < lag {
                return None;
            }
            Some(x[t]? - x[t - lag]?)
        })
        .collect()
}

/// Inclusive percentile rank of `x_t` among the trailing `window` rows
/// (present values only); requires `min_obs` present values.
pub fn trailing_percentile(x: &[Option<f64>], window: usize, min_obs: usize) -> Signal {
    let mut sorted: Vec<f64> = Vec::with_capacity(window);
    let mut out = vec![None; x.len()];
    for t in 0..x.len() {
        if t >= window {
            if let Some(old) = x[t - window] {
                let pos = sorted.partition_point(|v| *v < old);
                sorted.remove(pos);
            }
        }
        if let Some(v) = x[t] {
            let pos = sorted.partition_point(|s| *s < v);
            sorted.insert(pos, v);
            if sorted.len() >= min_obs {
                let le = sorted.partition_point(|s| *s <= v);
                out[t] = Some(le as f64 / sorted.len() as f64);
            }
        }
    }
    out
}

/// `level_t / max_{s≤t} level_s − 1`.
pub fn drawdown_from_peak(x: &[Option<f64>]) -> Signal {
    let mut peak = f64::NEG_INFINITY;
    x.iter()
        .map(|v| {
            let v = (*v)?;
            peak = peak.max(v);
            Some(v / peak - 1.0)
        })
        .collect()
}

/// Compounded return over the trailing `window` rows; needs every row present.
pub fn trailing_compounded(x: &[Option<f64>], window: usize) -> Signal {
    (0..x.len())
        .map(|t| {
            if t + 1 < window {
                return None;
            }
            let mut w = 1.0;
            for v in &x[t + 1 - window..=t] {
                w *= 1.0 + (*v)?;
            }
            Some(w - 1.0)
        })
        .collect()
}

/// Raw inputs sampled on the master calendar.
#[derive(Debug, Clone)]
pub struct RawStateInputs {
    pub dates: Vec<Date>,
    pub tnx: Signal,
    pub vix: Signal,
    pub spy: Signal,
    /// Daily G−D relative return.
    pub gd: Signal,
    pub baa10y: Option<Signal>,
}

#[derive(Debug, Clone)]
pub struct DerivedInputs {
    pub d_tnx21: Signal,
    pub spy_drawdown: Signal,
    pub vix_pct756: Signal,
    pub d_vix21: Signal,
    pub gd_trailing126: Signal,
}

pub fn derive_inputs(raw: &RawStateInputs) -> DerivedInputs {
    DerivedInputs {
        d_tnx21: change(&raw.tnx, CHANGE_WINDOW),
        spy_drawdown: drawdown_from_peak(&raw.spy),
        vix_pct756: trailing_percentile(&raw.vix, VIX_PCT_WINDOW, VIX_PCT_MIN_OBS),
        d_vix21: change(&raw.vix, CHANGE_WINDOW),
        gd_trailing126: trailing_compounded(&raw.gd, GD_TRAILING),
    }
}

impl DerivedInputs {
    /// First index at which every derived input exists.
    pub fn first_complete(&self) -> Option<usize> {
        (0..self.d_tnx21.len()).find(|&t| {
            self.d_tnx21[t].is_some()
                && self.spy_drawdown[t].is_some()
                && self.vix_pct756[t].is_some()
                && self.d_vix21[t].is_some()
                && self.gd_trailing126[t].is_some()
        })
    }
}

#[derive(Debug, Clone)]
pub struct Directional {
    pub r: Signal,
    pub d: Signal,
    pub vh: Signal,
    pub vr: Signal,
    pub g126: Signal,
}

pub fn directional_z(derived: &DerivedInputs) -> Directional {
    Directional {
        r: neg(&expanding_z(&derived.d_tnx21, Z_MIN_OBS)),
        d: neg(&expanding_z(&derived.spy_drawdown, Z_MIN_OBS)),
        vh: expanding_z(&derived.vix_pct756, Z_MIN_OBS),
        vr: neg(&expanding_z(&derived.d_vix21, Z_MIN_OBS)),
        g126: expanding_z(&derived.gd_trailing126, Z_MIN_OBS),
    }
}

#[derive(Debug, Clone)]
pub struct Components {
    pub high_vix: Signal,
    pub vix_relief: Signal,
    pub low_vix: Signal,
    pub growth_ext: Signal,
    pub rate_quiet: Signal,
}

pub fn smooth_components(dir: &Directional, tau: f64) -> Components {
    Components {
        high_vix: map1(&dir.vh, |v| softplus(v, tau)),
        vix_relief: map1(&dir.vr, |v| softplus(v, tau)),
        low_vix: map1(&dir.vh, |v| softplus(-v, tau)),
        growth_ext: map1(&dir.g126, |v| softplus(v, tau)),
        rate_quiet: map1(&dir.r, |v| (-0.5 * v * v).exp()),
    }
}

#[derive(Debug, Clone)]
pub struct Interactions {
    pub i1: Signal,
    pub i2: Signal,
    pub i3: Signal,
    pub i4: Signal,
}

pub fn interactions(c: &Components, dir: &Directional) -> Interactions {
    let i3 = map2(&c.growth_ext, &c.low_vix, |g, l| g * l);
    Interactions {
        i1: map2(&dir.r, &dir.vh, |r, v| r * v),
        i2: map2(&c.high_vix, &c.vix_relief, |h, v| h * v),
        i4: map2(&i3, &c.rate_quiet, |x, q| x * q),
        i3,
    }
}

#[derive(Debug, Clone)]
pub struct CreditSignals {
    pub d_baa21: Signal,
    pub ce: Signal,
    pub cs: Signal,
    pub rcs_z: Signal,
}

pub fn credit_signals(baa10y: &[Option<f64>], r: &[Option<f64>]) -> CreditSignals {
    let d_baa21 = change(baa10y, CHANGE_WINDOW);
    let ce = neg(&expanding_z(&d_baa21, Z_MIN_OBS));
    let cs = expanding_z(baa10y, Z_MIN_OBS);
    let rcs_z = expanding_z(&map2(r, &cs, |a, b| a * b), Z_MIN_OBS);
    CreditSignals {
        d_baa21,
        ce,
        cs,
        rcs_z,
    }
}

/// All parameter-free signals for one calendar.
#[derive(Debug, Clone)]
pub struct SignalFrame {
    pub dates: Vec<Date>,
    pub derived: DerivedInputs,
    pub dir: Directional,
    pub components: Components,
    pub inter: Interactions,
    pub z_i1: Signal,
    pub z_i2: Signal,
    pub z_i3: Signal,
    pub z_i4: Signal,
    pub credit: Option<CreditSignals>,
}

impl SignalFrame {
    pub fn build(raw: &RawStateInputs, tau_softplus: f64) -> SignalFrame {
        let derived = derive_inputs(raw);
        let dir = directional_z(&derived);
        let components = smooth_components(&dir, tau_softplus);
        let inter = interactions(&components, &dir);
        let credit = raw.baa10y.as_ref().map(|b| credit_signals(b, &dir.r));
        SignalFrame {
            dates: raw.dates.clone(),
            z_i1: expanding_z(&inter.i1, Z_MIN_OBS),
            z_i2: expanding_z(&inter.i2, Z_MIN_OBS),
            z_i3: expanding_z(&inter.i3, Z_MIN_OBS),
            z_i4: expanding_z(&inter.i4, Z_MIN_OBS),
            derived,
            dir,
            components,
            inter,
            credit,
        }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn stress(&self) -> Signal {
        combine(&[(0.5, &self.z_i1), (0.5, &self.z_i2)])
    }

    pub fn crowded(&self) -> Signal {
        combine(&[(0.5, &self.z_i3), (0.5, &self.z_i4)])
    }

    /// Named columns for the signal dump.
    pub fn columns(&self) -> Vec<(&'static str, &Signal)> {
        let mut cols: Vec<(&'static str, &Signal)> = vec![
            ("d_tnx21", &self.derived.d_tnx21),
            ("spy_drawdown", &self.derived.spy_drawdown),
            ("vix_pct756", &self.derived.vix_pct756),
            ("d_vix21", &self.derived.d_vix21),
            ("gd_trailing126", &self.derived.gd_trailing126),
            ("r", &self.dir.r),
            ("d", &self.dir.d),
            ("vh", &self.dir.vh),
            ("vr", &self.dir.vr),
            ("g126", &self.dir.g126),
            ("high_vix", &self.components.high_vix),
            ("vix_relief", &self.components.vix_relief),
            ("low_vix", &self.components.low_vix),
            ("growth_ext", &self.components.growth_ext),
            ("rate_quiet", &self.components.rate_quiet),
            ("i1", &self.inter.i1),
            ("i2", &self.inter.i2),
            ("i3", &self.inter.i3),
            ("i4", &self.inter.i4),
        ];
        if let Some(c) = &self.credit {
            cols.push(("ce", &c.ce));
            cols.push(("cs", &c.cs));
            cols.push(("rcs_z", &c.rcs_z));
        }
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub alpha: f64,
    pub lambda_s: f64,
    pub lambda_c: f64,
    #[serde(default)]
    pub lambda_credit: f64,
    #[serde(default)]
    pub lambda_rxcs: f64,
    #[serde(default = "default_tau")]
    pub tau_softplus: f64,
}

fn default_tau() -> f64 {
    1.0
}

impl ScoreParams {
    pub fn new(alpha: f64, lambda_s: f64, lambda_c: f64) -> Self {
        Self {
            alpha,
            lambda_s,
            lambda_c,
            lambda_credit: 0.0,
            lambda_rxcs: 0.0,
            tau_softplus: 1.0,
        }
    }

    pub fn with_credit(mut self, lambda_credit: f64, lambda_rxcs: f64) -> Self {
        self.lambda_credit = lambda_credit;
        self.lambda_rxcs = lambda_rxcs;
        self
    }

    pub fn uses_credit(&self) -> bool {
        self.lambda_credit != 0.0 || self.lambda_rxcs != 0.0
    }
}

/// How the raw score is assembled from the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreSpec {
    /// Core + stress − crowding, plus the optional credit overlay terms.
    Smooth(ScoreParams),
    /// Rate relief only.
    TnxOnly,
    /// Rate relief and drawdown depth only.
    CoreOnly { alpha: f64 },
    /// Credit-based replacement: drawdown depth, credit relief, trailing
    /// G−D (entering negatively) and the rate-by-credit-stress interaction.
    Replacement {
        beta: f64,
        lambda_g: f64,
        lambda_rxcs: f64,
    },
}

#[derive(Debug, Clone)]
pub struct ScoreSeries {
    pub core: Signal,
    pub stress: Option<Signal>,
    pub crowded: Option<Signal>,
    pub raw: Signal,
    pub score_z: Signal,
}

pub fn core_score(frame: &SignalFrame, alpha: f64) -> Signal {
    combine(&[(alpha, &frame.dir.r), (1.0 - alpha, &frame.dir.d)])
}

fn credit_or_missing(frame: &SignalFrame) -> (Signal, Signal) {
    match &frame.credit {
        Some(c) => (c.ce.clone(), c.rcs_z.clone()),
        None => (vec![None; frame.len()], vec![None; frame.len()]),
    }
}

/// Base smooth score: core + λ_s·stress − λ_c·crowded.
pub fn policy_score(frame: &SignalFrame, params: &ScoreParams) -> ScoreSeries {
    score_series(frame, &ScoreSpec::Smooth(*params))
}

/// Augments a base raw score with the credit overlay and re-standardizes.
pub fn incremental_score(
    raw_score: &[Option<f64>],
    ce: &[Option<f64>],
    rcs_z: &[Option<f64>],
    lambda_credit: f64,
    lambda_rxcs: f64,
) -> (Signal, Signal) {
    let raw = combine(&[(1.0, raw_score), (lambda_credit, ce), (lambda_rxcs, rcs_z)]);
    let z = expanding_z(&raw, Z_MIN_OBS);
    (raw, z)
}

pub fn score_series(frame: &SignalFrame, spec: &ScoreSpec) -> ScoreSeries {
    let (core, stress, crowded, raw) = match *spec {
        ScoreSpec::Smooth(p) => {
            let core = core_score(frame, p.alpha);
            let stress = (p.lambda_s != 0.0).then(|| frame.stress());
            let crowded = (p.lambda_c != 0.0).then(|| frame.crowded());
            let empty: Signal = Vec::new();
            let base = combine(&[
                (1.0, &core),
                (p.lambda_s, stress.as_deref().unwrap_or(&empty)),
                (-p.lambda_c, crowded.as_deref().unwrap_or(&empty)),
            ]);
            let raw = if p.uses_credit() {
                let (ce, rcs) = credit_or_missing(frame);
                incremental_score(&base, &ce, &rcs, p.lambda_credit, p.lambda_rxcs).0
            } else {
                base
            };
            (core, stress, crowded, raw)
        }
        ScoreSpec::TnxOnly => {
            let core = frame.dir.r.clone();
            (core.clone(), None, None, core)
        }
        ScoreSpec::CoreOnly { alpha } => {
            let core = core_score(frame, alpha);
            (core.clone(), None, None, core)
        }
        ScoreSpec::Replacement {
            beta,
            lambda_g,
            lambda_rxcs,
        } => {
            let (ce, rcs) = credit_or_missing(frame);
            let core = combine(&[(beta, &frame.dir.d), (1.0 - beta, &ce)]);
            let raw = combine(&[
                (1.0, &core),
                (-lambda_g, &frame.dir.g126),
                (lambda_rxcs, &rcs),
            ]);
            (core, None, None, raw)
        }
    };
    let score_z = expanding_z(&raw, Z_MIN_OBS);
    ScoreSeries {
        core,
        stress,
        crowded,
        raw,
        score_z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn some(v: &[f64]) -> Signal {
        v.iter().map(|x| Some(*x)).collect()
    }

    #[test]
    fn expanding_z_constant_is_missing() {
        assert!(expanding_z(&some(&[3.0; 100]), 2)
            .iter()
            .all(|v| v.is_none()));
    }

    #[test]
    fn expanding_z_two_points() {
        let z = expanding_z(&some(&[0.0, 1.0]), 2);
        assert_eq!(z[0], None);
        // mean 0.5, sample sd sqrt(0.5)
        let expected = 0.5 / 0.5f64.sqrt();
        assert!((z[1].unwrap() - expected).abs() < 1e-15);
        assert!((z[1].unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn expanding_z_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z = expanding_z(&some(&x), 5);
        for t in [4usize, 50, 199] {
            let s = &x[..=t];
            let m = s.iter().sum::<f64>() / s.len() as f64;
            let sd = (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64).sqrt();
            assert!((z[t].unwrap() - (x[t] - m) / sd).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(softplus(50.0, 1.0) - 50.0 < 1e-12);
        assert!(softplus(50.0, 1.0) >= 50.0);
        assert!(softplus(-50.0, 1.0) < 1e-12);
        assert!(softplus(1000.0, 1.0).is_finite());
        assert!((softplus(2.0, 0.5) - 0.5 * (1.0 + 4f64.exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn derived_input_edge_cases() {
        let spy = some(&[100.0, 110.0, 105.0, 120.0]);
        let dd = drawdown_from_peak(&spy);
        assert_eq!(dd[1], Some(0.0));
        assert_eq!(dd[3], Some(0.0));
        assert!((dd[2].unwrap() - (105.0 / 110.0 - 1.0)).abs() < 1e-15);

        let vix: Vec<f64> = (0..300).map(|i| 10.0 + (i % 17) as f64).collect();
        let mut v = some(&vix);
        v.push(Some(1000.0));
        let pct = trailing_percentile(&v, VIX_PCT_WINDOW, VIX_PCT_MIN_OBS);
        assert_eq!(pct[300], Some(1.0));
        assert_eq!(pct[250], None);

        let gd = some(&[0.0; 130]);
        let tr = trailing_compounded(&gd, GD_TRAILING);
        assert_eq!(tr[124], None);
        assert_eq!(tr[125], Some(0.0));
        assert_eq!(tr[129], Some(0.0));
    }

    #[test]
    fn percentile_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Signal = (0..1200)
            .map(|i| {
                let v: f64 = StandardNormal.sample(&mut rng);
                if i % 97 == 5 {
                    None
                } else {
                    Some((v * 4.0).round())
                }
            })
            .collect();
        let fast = trailing_percentile(&x, 100, 30);
        for t in 0..x.len() {
            let brute = x[t].and_then(|v| {
                let lo = (t + 1).saturating_sub(100);
                let w: Vec<f64> = x[lo..=t].iter().flatten().copied().collect();
                (w.len() >= 30)
                    .then(|| w.iter().filter(|s| **s <= v).count() as f64 / w.len() as f64)
            });
            assert_eq!(fast[t], brute, "t={t}");
        }
    }

    #[test]
    fn sign_conventions() {
        let t2: Signal = (0..100)
            .map(|i| Some(2.0 + 0.01 * ((i * 7919) % 13) as f64))
            .collect();
        let d_tnx = change(&t2, 21);
        let r = neg(&expanding_z(&d_tnx, 10));
        for t in 40..100 {
            if let (Some(dx), Some(rv)) = (d_tnx[t], r[t]) {
                let prior: Vec<f64> = d_tnx[..=t].iter().flatten().copied().collect();
                let m = prior.iter().sum::<f64>() / prior.len() as f64;
                if dx < m {
                    assert!(rv > 0.0);
                }
            }
        }
    }

    #[test]
    fn components_and_interactions() {
        let dir = Directional {
            r: some(&[0.0, 3.0, 50.0]),
            d: some(&[0.0, 0.0, 0.0]),
            vh: some(&[0.0, 1.0, -1.0]),
            vr: some(&[0.0, -2.0, 2.0]),
            g126: some(&[0.0, 1.0, 2.0]),
        };
        let c = smooth_components(&dir, 1.0);
        assert_eq!(c.rate_quiet[0], Some(1.0));
        assert_eq!(c.high_vix[0], c.low_vix[0]);
        assert!((c.high_vix[0].unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(c.rate_quiet[2].unwrap() < 1e-300);
        assert_eq!(c.high_vix[1], c.low_vix[2]);
        let i = interactions(&c, &dir);
        assert_eq!(i.i1[0], Some(0.0));
        assert_eq!(i.i4[0], i.i3[0]);
        for t in 0..3 {
            assert!(i.i2[t].unwrap() >= 0.0 && i.i3[t].unwrap() >= 0.0);
        }
    }

    #[test]
    fn credit_edge_cases() {
        let n = 200;
        let baa: Signal = (0..n)
            .map(|i| Some(2.0 + 0.3 * ((i as f64) * 0.1).sin()))
            .collect();
        let zero_r = some(&vec![0.0; n]);
        let c = credit_signals(&baa, &zero_r);
        assert!(c.rcs_z.iter().all(|v| v.is_none()));
        for t in 0..n {
            if let (Some(d), Some(ce)) = (c.d_baa21[t], c.ce[t]) {
                let prior: Vec<f64> = c.d_baa21[..=t].iter().flatten().copied().collect();
                let m = prior.iter().sum::<f64>() / prior.len() as f64;
                if d < m {
                    assert!(ce > 0.0);
                }
            }
        }
        let shifted: Signal = baa.iter().map(|v| v.map(|x| x + 5.0)).collect();
        let c2 = credit_signals(&shifted, &zero_r);
        for (a, b) in c.ce.iter().zip(&c2.ce) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
                (None, None) => {}
                _ => panic!("missingness differs"),
            }
        }
        assert!(credit_signals(&vec![None; n], &zero_r)
            .ce
            .iter()
            .all(|v| v.is_none()));
    }

    fn random_frame(seed: u64, n: usize) -> SignalFrame {
        SignalFrame::build(&random_frame_raw(seed, n), 1.0)
    }

    #[test]
    fn degenerate_score_weights() {
        let f = random_frame(3, 800);
        let s = policy_score(&f, &ScoreParams::new(0.5, 0.0, 0.0));
        assert_eq!(s.raw, s.core);
        let s1 = policy_score(&f, &ScoreParams::new(1.0, 0.3, 0.2));
        assert_eq!(s1.core, f.dir.r);
        let inc = policy_score(&f, &ScoreParams::new(0.5, 0.5, 0.05));
        let inc0 = policy_score(&f, &ScoreParams::new(0.5, 0.5, 0.05).with_credit(0.0, 0.0));
        assert_eq!(inc.score_z, inc0.score_z);
        let tnx = score_series(&f, &ScoreSpec::TnxOnly);
        let base = policy_score(&f, &ScoreParams::new(1.0, 0.0, 0.0));
        assert_eq!(tnx.score_z, base.score_z);
        let core1 = score_series(&f, &ScoreSpec::CoreOnly { alpha: 1.0 });
        assert_eq!(core1.score_z, tnx.score_z);
    }

    #[test]
    fn incremental_matches_direct_overlay() {
        let f = random_frame(5, 900);
        let p = ScoreParams::new(0.5, 0.5, 0.05);
        let base = policy_score(&f, &p);
        let c = f.credit.as_ref().unwrap();
        let (_, z) = incremental_score(&base.raw, &c.ce, &c.rcs_z, 0.10, 0.50);
        let direct = policy_score(&f, &p.with_credit(0.10, 0.50));
        assert_eq!(z, direct.score_z);
    }

    #[test]
    fn score_z_expanding_mean_near_zero() {
        // iid normal inputs: the standardized score has mean near zero
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let raw: Signal = (0..5000)
            .map(|_| Some(StandardNormal.sample(&mut rng)))
            .collect();
        let z = expanding_z(&raw, Z_MIN_OBS);
        let v: Vec<f64> = z.iter().flatten().copied().collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn frame_is_causal_under_prefix_extension() {
        let full = random_frame(7, 1000);
        let p = ScoreParams::new(0.5, 0.5, 0.05).with_credit(0.1, 0.5);
        let s_full = policy_score(&full, &p);
        let raw_full = random_frame_raw(7, 1000);
        let cut = 700;
        let truncated = RawStateInputs {
            dates: raw_full.dates[..cut].to_vec(),
            tnx: raw_full.tnx[..cut].to_vec(),
            vix: raw_full.vix[..cut].to_vec(),
            spy: raw_full.spy[..cut].to_vec(),
            gd: raw_full.gd[..cut].to_vec(),
            baa10y: raw_full.baa10y.as_ref().map(|b| b[..cut].to_vec()),
        };
        let s_cut = policy_score(&SignalFrame::build(&truncated, 1.0), &p);
        assert_eq!(&s_full.score_z[..cut], &s_cut.score_z[..]);
    }

    fn random_frame_raw(seed: u64, n: usize) -> RawStateInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut walk = |start: f64, step: f64| -> Signal {
            let mut x = start;
            (0..n)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x = (x + step * e).max(0.1);
                    Some(x)
                })
                .collect()
        };
        let tnx = walk(2.5, 0.05);
        let vix = walk(18.0, 0.8);
        let spy = walk(300.0, 3.0);
        let baa = walk(2.0, 0.03);
        let gd: Signal = (0..n)
            .map(|_| {
                Some(
                    0.005 * {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        v
                    },
                )
            })
            .collect();
        let start = crate::market_data::parse_date("2010-01-04").unwrap();
        RawStateInputs {
            dates: (0..n)
                .map(|i| start + chrono::Days::new(i as u64))
                .collect(),
            tnx,
            vix,
            spy,
            gd,
            baa10y: Some(baa),
        }
    }

    #[test]
    fn monotone_in_rate_relief_without_crowding() {
        // Raising r (with vh > 0) raises core by alpha·dr and i1 = r·vh, so the
        // un-standardized composite cannot fall.
        let alpha = 0.5;
        let lambda_s = 0.5;
        let z_of = |x: f64| x; // monotone stand-in for the stress z-step
        let raw = |r: f64, vh: f64, d: f64, i2: f64| {
            alpha * r + (1.0 - alpha) * d + lambda_s * (0.5 * z_of(r * vh) + 0.5 * z_of(i2))
        };
        for (vh, d, i2) in [(0.5, 0.1, 0.3), (1.5, -1.0, 2.0), (0.01, 0.0, 0.0)] {
            for r in [-2.0, -0.5, 0.0, 0.7, 2.0] {
                let h = 1e-6;
                assert!(raw(r + h, vh, d, i2) - raw(r, vh, d, i2) >= 0.0);
            }
        }
    }

    #[test]
    fn crowding_enters_negatively() {
        // With λ_s = 0, raising GrowthExt raises i3 and i4 (LowVIX, RateQuiet
        // nonnegative) and therefore lowers core − λ_c·crowded.
        let lambda_c = 0.25;
        let composite = |g: f64, low: f64, quiet: f64, core: f64| {
            core - lambda_c * (0.5 * (g * low) + 0.5 * (g * low * quiet))
        };
        for (low, quiet, core) in [(0.7, 0.9, 0.0), (0.1, 0.2, 1.0), (2.0, 1.0, -0.5)] {
            for g in [0.01, 0.5, 3.0] {
                let a = softplus(g, 1.0);
                let b = softplus(g + 0.1, 1.0);
                assert!(composite(b, low, quiet, core) <= composite(a, low, quiet, core));
            }
        }
    }

    proptest! {
        #[test]
        fn softplus_bounds_monotone_convex(x in -60.0f64..60.0, tau in 0.1f64..5.0) {
            let v = softplus(x, tau);
            prop_assert!(v >= 0.0);
            prop_assert!(v >= x.max(0.0) - 1e-12);
            prop_assert!(v <= x.max(0.0) + tau * std::f64::consts::LN_2 + 1e-12);
            let h = 0.01;
            prop_assert!(softplus(x + h, tau) >= v);
            prop_assert!(softplus(x + h, tau) + softplus(x - h, tau) >= 2.0 * v - 1e-12);
        }

        #[test]
        fn rate_quiet_in_unit_interval(r in -40.0f64..40.0) {
            let q = (-0.5 * r * r).exp();
            prop_assert!(q <= 1.0 && q >= 0.0);
            prop_assert!(r.abs() > 38.0 || q > 0.0);
        }

        #[test]
        fn expanding_z_prefix_causal(xs in prop::collection::vec(-10.0f64..10.0, 3..200), cut in 2usize..200) {
            let x = some(&xs);
            let full = expanding_z(&x, 2);
            let c = cut.min(xs.len());
            let part = expanding_z(&x[..c], 2);
            prop_assert_eq!(&full[..c], &part[..]);
        }
    }
}
