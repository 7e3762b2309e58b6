//! Seeded synthetic market generator writing the loader file formats.
//!
//! Shocks: a market factor with VIX-linked volatility, five more factor
//! series, a mean-reverting 10y yield, a log-OU VIX whose shocks load
//! negatively on the market, and an OU credit spread. Basket members load on
//! the factors with growth/defensive style exposures plus idiosyncratic
//! noise. A planted effect adds `planted_k · rr_{t−1}` to G−D, split evenly,
//! where `rr` is the scaled negative 21-day yield change.

use std::path::Path;

use chrono::{Datelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Universe, FACTOR_FILE};
use crate::error::{Error, Result};
use crate::market_data::{parse_date, write_factors, write_series, Date, FactorPanel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_days: usize,
    /// Multiplies every drift and shock; 0 gives constant prices and levels.
    pub vol_scale: f64,
    pub planted_k: f64,
    /// Business days before the last defensive member lists.
    pub late_start_offset: usize,
    /// Per-member probability of a dropped daily bar.
    pub missing_prob: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_days: 3000,
            vol_scale: 1.0,
            planted_k: 0.0015,
            late_start_offset: 500,
            missing_prob: 0.002,
        }
    }
}

const TNX_DAILY_SD: f64 = 0.05;

fn z(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn business_days(start: Date, n: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

struct Loadings {
    mkt: f64,
    smb: f64,
    hml: f64,
    rmw: f64,
    cma: f64,
    mom: f64,
}

const G_LOAD: Loadings = Loadings {
    mkt: 1.10,
    smb: -0.10,
    hml: -0.45,
    rmw: 0.05,
    cma: -0.25,
    mom: 0.05,
};
const D_LOAD: Loadings = Loadings {
    mkt: 0.85,
    smb: 0.05,
    hml: 0.15,
    rmw: 0.20,
    cma: 0.20,
    mom: -0.05,
};

/// Generates a full data directory for `universe`. Returns the calendar.
pub fn synth_data(
    dir: &Path,
    seed: u64,
    params: &SynthParams,
    universe: &Universe,
) -> Result<Vec<Date>> {
    if params.n_days < 1000 {
        return Err(Error::validation("synth_data needs n_days >= 1000"));
    }
    if !(params.vol_scale >= 0.0) {
        return Err(Error::validation("vol_scale must be >= 0"));
    }
    std::fs::create_dir_all(dir)?;
    let n = params.n_days;
    let s = params.vol_scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = business_days(parse_date("2012-01-03").unwrap(), n);

    let mut tnx = vec![2.5f64; n];
    let mut vix = vec![18.0f64; n];
    let mut baa = vec![2.0f64; n];
    let mut f = FactorPanel {
        dates: dates.clone(),
        mkt_rf: vec![0.0; n],
        smb: vec![0.0; n],
        hml: vec![0.0; n],
        rmw: vec![0.0; n],
        cma: vec![0.0; n],
        mom: vec![0.0; n],
        rf: vec![0.00005 * s; n],
    };
    let mut rr = vec![0.0; n];
    for t in 1..n {
        tnx[t] = tnx[t - 1] + s * (0.002 * (2.5 - tnx[t - 1]) + TNX_DAILY_SD * z(&mut rng));
        let em = z(&mut rng);
        let ev = -0.7 * em + (1.0f64 - 0.49).sqrt() * z(&mut rng);
        let lv = vix[t - 1].ln() + s * (0.02 * (18.0f64.ln() - vix[t - 1].ln()) + 0.07 * ev);
        vix[t] = lv.exp();
        baa[t] = baa[t - 1] + s * (0.01 * (2.0 - baa[t - 1]) + 0.02 * z(&mut rng) - 0.01 * em);
        f.mkt_rf[t] = s * (0.0004 + vix[t - 1] / 100.0 / 252f64.sqrt() * em);
        f.smb[t] = s * 0.005 * z(&mut rng);
        f.hml[t] = s * 0.005 * z(&mut rng);
        f.rmw[t] = s * 0.004 * z(&mut rng);
        f.cma[t] = s * 0.004 * z(&mut rng);
        f.mom[t] = s * 0.006 * z(&mut rng);
        if t >= 21 && s > 0.0 {
            rr[t] = -(tnx[t] - tnx[t - 21]) / (s * TNX_DAILY_SD * 21f64.sqrt());
        }
    }

    let style = |l: &Loadings, t: usize| {
        f.rf[t]
            + l.mkt * f.mkt_rf[t]
            + l.smb * f.smb[t]
            + l.hml * f.hml[t]
            + l.rmw * f.rmw[t]
            + l.cma * f.cma[t]
            + l.mom * f.mom[t]
    };

    let write_prices = |sym: &str, rets: &[f64], first: usize, drop: &[bool]| -> Result<()> {
        let mut ds = Vec::new();
        let mut px = Vec::new();
        let mut p = 100.0;
        for t in first..n {
            if t > first {
                p *= 1.0 + rets[t];
            }
            if !drop[t] || t == first || t == n - 1 {
                ds.push(dates[t]);
                px.push(p);
            }
        }
        write_series(&dir.join(format!("{sym}.csv")), &ds, &px)
    };

    let groups = [
        (&universe.growth.members, &G_LOAD, 0.5),
        (&universe.defensive.members, &D_LOAD, -0.5),
    ];
    for (members, load, side) in groups {
        for (m, sym) in members.iter().enumerate() {
            let mut rets = vec![0.0; n];
            let mut drop = vec![false; n];
            for t in 1..n {
                let idio = s * 0.004 * z(&mut rng);
                rets[t] = style(load, t) + idio + side * params.planted_k * s * rr[t - 1];
                drop[t] = rng.random::<f64>() < params.missing_prob;
            }
            let late = side < 0.0 && m + 1 == members.len();
            let first = if late {
                params.late_start_offset.min(n / 2)
            } else {
                0
            };
            write_prices(sym, &rets, first, &drop)?;
        }
    }
    let spy: Vec<f64> = (0..n).map(|t| f.rf[t] + f.mkt_rf[t]).collect();
    write_prices(&universe.spy, &spy, 0, &vec![false; n])?;
    write_series(&dir.join(format!("{}.csv", universe.tnx)), &dates, &tnx)?;
    write_series(&dir.join(format!("{}.csv", universe.vix)), &dates, &vix)?;
    write_series(&dir.join(format!("{}.csv", universe.baa10y)), &dates, &baa)?;
    write_factors(&dir.join(FACTOR_FILE), &f)?;
    Ok(dates)
}
