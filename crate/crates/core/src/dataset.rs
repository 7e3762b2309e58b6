//! Assembles every input the experiments need from a data directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baskets::{basket_returns, BasketDef};
use crate::error::{Error, Result};
use crate::market_data::{
    align, fill_onto_calendar, forward_fill_bounded, load_factors, load_levels, load_prices,
    to_returns_on_calendar, union_calendar, Date, FactorPanel, PriceSeries, ReturnSeries,
    DEFAULT_MAX_GAP,
};
use crate::signals::{RawStateInputs, Signal, SignalFrame};

pub const FACTOR_FILE: &str = "ff5_mom_daily.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    pub growth: BasketDef,
    pub defensive: BasketDef,
    pub spy: String,
    pub tnx: String,
    pub vix: String,
    pub baa10y: String,
}

impl Default for Universe {
    fn default() -> Self {
        Self {
            growth: BasketDef::growth(),
            defensive: BasketDef::defensive(),
            spy: "SPY".into(),
            tnx: "TNX".into(),
            vix: "VIX".into(),
            baa10y: "BAA10Y".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageEntry {
    pub symbol: String,
    pub group: String,
    pub first_return_date: Date,
    pub n_returns: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Master trading calendar.
    pub dates: Vec<Date>,
    /// Basket returns on the calendar; NaN outside the common basket span.
    pub g: Vec<f64>,
    pub d: Vec<f64>,
    pub spy_ret: Vec<f64>,
    pub gd: Signal,
    /// Index of the first date on which both baskets have returns.
    pub basket_start: usize,
    /// Last index on which both baskets have returns.
    pub basket_end: usize,
    pub g_series: ReturnSeries,
    pub d_series: ReturnSeries,
    pub members: Vec<ReturnSeries>,
    pub coverage: Vec<CoverageEntry>,
    pub raw: RawStateInputs,
    pub frame: SignalFrame,
    pub factors: Option<FactorPanel>,
    pub checksums: Vec<(String, String)>,
    pub universe: Universe,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn csv_path(dir: &Path, symbol: &str) -> PathBuf {
    dir.join(format!("{symbol}.csv"))
}

fn to_signal(s: &ReturnSeries, calendar: &[Date]) -> Signal {
    let mut out = vec![None; calendar.len()];
    let mut j = 0;
    for (i, d) in calendar.iter().enumerate() {
        while j < s.dates.len() && s.dates[j] < *d {
            j += 1;
        }
        if j < s.dates.len() && s.dates[j] == *d {
            out[i] = Some(s.returns[j]);
        }
    }
    out
}

impl Dataset {
    pub fn load(dir: &Path, universe: &Universe) -> Result<Dataset> {
        let mut checksums = Vec::new();
        let mut track = |path: &Path| -> Result<()> {
            if !path.exists() {
                return Err(Error::MissingFile(path.to_path_buf()));
            }
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            checksums.push((name, sha256_file(path)?));
            Ok(())
        };

        let mut price_symbols: Vec<String> = universe
            .growth
            .members
            .iter()
            .chain(&universe.defensive.members)
            .cloned()
            .collect();
        price_symbols.push(universe.spy.clone());
        let mut prices: Vec<PriceSeries> = Vec::with_capacity(price_symbols.len());
        for s in &price_symbols {
            let p = csv_path(dir, s);
            track(&p)?;
            prices.push(load_prices(&p)?);
        }
        let tnx_path = csv_path(dir, &universe.tnx);
        let vix_path = csv_path(dir, &universe.vix);
        track(&tnx_path)?;
        track(&vix_path)?;
        let tnx = load_levels(&tnx_path, false)?;
        let vix = load_levels(&vix_path, true)?;
        let baa_path = csv_path(dir, &universe.baa10y);
        let baa = if baa_path.exists() {
            track(&baa_path)?;
            Some(load_levels(&baa_path, false)?)
        } else {
            None
        };
        let factor_path = dir.join(FACTOR_FILE);
        let factors = if factor_path.exists() {
            track(&factor_path)?;
            Some(load_factors(&factor_path)?)
        } else {
            None
        };

        let reference = union_calendar(prices.iter().map(|p| p.dates.as_slice()));
        let mut returns = Vec::with_capacity(prices.len());
        let mut filled_prices = Vec::with_capacity(prices.len());
        for p in &prices {
            let f = forward_fill_bounded(p, &reference, DEFAULT_MAX_GAP)?;
            returns.push(to_returns_on_calendar(&f, &reference)?);
            filled_prices.push(f);
        }
        let panel = align(&returns, reference[0], *reference.last().unwrap())?;
        let dates = panel.dates.clone();

        let members_g: Vec<&str> = universe.growth.members.iter().map(String::as_str).collect();
        let members_d: Vec<&str> = universe
            .defensive
            .members
            .iter()
            .map(String::as_str)
            .collect();
        let g_basket = basket_returns(&universe.growth.name, &members_g, &panel)?;
        let d_basket = basket_returns(&universe.defensive.name, &members_d, &panel)?;
        let (g_series, d_series) = crate::baskets::common_dates(&g_basket, &d_basket);
        if g_series.is_empty() {
            return Err(Error::Coverage("G and D baskets do not overlap".into()));
        }
        let basket_start = panel.index_of(g_series.dates[0]).unwrap();
        let basket_end = panel.index_of(*g_series.dates.last().unwrap()).unwrap();

        let g_sig = to_signal(&g_series, &dates);
        let d_sig = to_signal(&d_series, &dates);
        let gd: Signal = g_sig
            .iter()
            .zip(&d_sig)
            .map(|(a, b)| Some((*a)? - (*b)?))
            .collect();
        let spy_returns = returns
            .iter()
            .find(|r| r.symbol == universe.spy)
            .expect("spy loaded");
        let spy_ret: Vec<f64> = to_signal(spy_returns, &dates)
            .into_iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect();

        let spy_prices = filled_prices.last().expect("spy loaded");
        let spy_level = fill_onto_calendar(&spy_prices.dates, &spy_prices.closes, &dates, 0);
        let raw = RawStateInputs {
            dates: dates.clone(),
            tnx: fill_onto_calendar(&tnx.dates, &tnx.levels, &dates, DEFAULT_MAX_GAP),
            vix: fill_onto_calendar(&vix.dates, &vix.levels, &dates, DEFAULT_MAX_GAP),
            spy: spy_level,
            gd: gd.clone(),
            baa10y: baa
                .as_ref()
                .map(|b| fill_onto_calendar(&b.dates, &b.levels, &dates, DEFAULT_MAX_GAP)),
        };
        let frame = SignalFrame::build(&raw, 1.0);

        let mut coverage = Vec::new();
        for r in &returns {
            let group = if universe.growth.members.contains(&r.symbol) {
                "G"
            } else if universe.defensive.members.contains(&r.symbol) {
                "D"
            } else {
                continue;
            };
            if let Some(first) = r.first_date() {
                coverage.push(CoverageEntry {
                    symbol: r.symbol.clone(),
                    group: group.into(),
                    first_return_date: first,
                    n_returns: r.len(),
                });
            }
        }
        let members = returns
            .iter()
            .filter(|r| r.symbol != universe.spy)
            .cloned()
            .collect();

        Ok(Dataset {
            g: g_sig.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            d: d_sig.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            dates,
            spy_ret,
            gd,
            basket_start,
            basket_end,
            g_series,
            d_series,
            members,
            coverage,
            raw,
            frame,
            factors,
            checksums,
            universe: universe.clone(),
        })
    }

    /// First calendar index at which every derived signal input exists.
    pub fn first_feasible(&self) -> Result<usize> {
        self.frame
            .derived
            .first_complete()
            .map(|i| i.max(self.basket_start))
            .ok_or_else(|| Error::Coverage("signals never become available".into()))
    }

    /// Validated calendar index range for a policy window.
    pub fn policy_window(&self, start: Date, end: Date) -> Result<(usize, usize)> {
        let first = self.first_feasible()?;
        let (lo, hi) = crate::policy::window_indices(&self.dates, start, end)?;
        if lo < first {
            return Err(Error::Warmup {
                requested: start,
                first_feasible: self.dates[first],
            });
        }
        Ok((lo, hi.min(self.basket_end)))
    }

    pub fn relative_series(&self) -> crate::baskets::RelativeSeries {
        crate::baskets::relative(&self.g_series, &self.d_series).expect("common dates")
    }

    pub fn date_index(&self, date: Date) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }
}
