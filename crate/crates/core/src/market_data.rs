//! Series loading, bounded forward fill, returns and calendar alignment.
//!
//! Input files are delimited text with a `date,value` header and ISO-8601
//! dates. Price series must be strictly positive. Level series (yields,
//! spreads, index levels) may be zero or negative unless the caller asks for
//! positivity, which is the case for VIX and SPY.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Date = NaiveDate;

/// Default bound on consecutive missing trading days that may be filled.
pub const DEFAULT_MAX_GAP: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub symbol: String,
    pub dates: Vec<Date>,
    pub closes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub symbol: String,
    pub dates: Vec<Date>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSeries {
    pub symbol: String,
    pub dates: Vec<Date>,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Price,
    /// `positive` enforces strictly positive levels (VIX, SPY).
    Level {
        positive: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedSeries {
    Price(PriceSeries),
    Level(LevelSeries),
}

fn check_strictly_increasing(symbol: &str, dates: &[Date]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[1] == pair[0] {
            return Err(Error::DuplicateDate {
                symbol: symbol.to_string(),
                date: pair[0],
            });
        }
        if pair[1] < pair[0] {
            return Err(Error::validation(format!(
                "{symbol}: dates not increasing at {}",
                pair[1]
            )));
        }
    }
    Ok(())
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, dates: Vec<Date>, closes: Vec<f64>) -> Result<Self> {
        let symbol = symbol.into();
        if dates.len() != closes.len() {
            return Err(Error::validation(format!(
                "{symbol}: dates/closes length mismatch"
            )));
        }
        check_strictly_increasing(&symbol, &dates)?;
        if let Some(i) = closes.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::validation(format!(
                "{symbol}: nonpositive price {} on {}",
                closes[i], dates[i]
            )));
        }
        Ok(Self {
            symbol,
            dates,
            closes,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

impl ReturnSeries {
    pub fn new(symbol: impl Into<String>, dates: Vec<Date>, returns: Vec<f64>) -> Result<Self> {
        let symbol = symbol.into();
        if dates.len() != returns.len() {
            return Err(Error::validation(format!(
                "{symbol}: dates/returns length mismatch"
            )));
        }
        check_strictly_increasing(&symbol, &dates)?;
        if let Some(i) = returns.iter().position(|r| !(r.is_finite() && *r > -1.0)) {
            return Err(Error::validation(format!(
                "{symbol}: return {} on {} is not > -1",
                returns[i], dates[i]
            )));
        }
        Ok(Self {
            symbol,
            dates,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn first_date(&self) -> Option<Date> {
        self.dates.first().copied()
    }

    /// Restrict to `[start, end]`.
    pub fn slice(&self, start: Date, end: Date) -> ReturnSeries {
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d <= end);
        ReturnSeries {
            symbol: self.symbol.clone(),
            dates: self.dates[lo..hi].to_vec(),
            returns: self.returns[lo..hi].to_vec(),
        }
    }
}

impl LevelSeries {
    pub fn new(
        symbol: impl Into<String>,
        dates: Vec<Date>,
        levels: Vec<f64>,
        positive: bool,
    ) -> Result<Self> {
        let symbol = symbol.into();
        if dates.len() != levels.len() {
            return Err(Error::validation(format!(
                "{symbol}: dates/levels length mismatch"
            )));
        }
        check_strictly_increasing(&symbol, &dates)?;
        if let Some(i) = levels
            .iter()
            .position(|v| !v.is_finite() || (positive && *v <= 0.0))
        {
            return Err(Error::validation(format!(
                "{symbol}: invalid level {} on {}",
                levels[i], dates[i]
            )));
        }
        Ok(Self {
            symbol,
            dates,
            levels,
        })
    }
}

pub fn parse_date(s: &str) -> Option<Date> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

fn symbol_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Load a `date,value` file. Rows are sorted by date; duplicates are rejected.
///
/// For level files a value of `.` or an empty field marks a missing
/// observation (FRED convention) and the row is skipped.
pub fn load_series(path: &Path, kind: SeriesKind) -> Result<LoadedSeries> {
    let symbol = symbol_from_path(path);
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(parse_err(path, 1, "expected header `date,value`"));
    }
    let mut rows: Vec<(Date, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected 2 fields, got {}", rec.len()),
            ));
        }
        let date = parse_date(&rec[0])
            .ok_or_else(|| parse_err(path, line, format!("bad date `{}`", &rec[0])))?;
        let raw = &rec[1];
        if matches!(kind, SeriesKind::Level { .. }) && (raw.is_empty() || raw == ".") {
            continue;
        }
        let value: f64 = raw
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad value `{raw}`")))?;
        if !value.is_finite() {
            return Err(parse_err(path, line, format!("non-finite value `{raw}`")));
        }
        rows.push((date, value));
    }
    if rows.is_empty() {
        return Err(Error::validation(format!(
            "{}: no observations",
            path.display()
        )));
    }
    rows.sort_by_key(|r| r.0);
    let (dates, values): (Vec<Date>, Vec<f64>) = rows.into_iter().unzip();
    match kind {
        SeriesKind::Price => Ok(LoadedSeries::Price(PriceSeries::new(
            symbol, dates, values,
        )?)),
        SeriesKind::Level { positive } => Ok(LoadedSeries::Level(LevelSeries::new(
            symbol, dates, values, positive,
        )?)),
    }
}

pub fn load_prices(path: &Path) -> Result<PriceSeries> {
    match load_series(path, SeriesKind::Price)? {
        LoadedSeries::Price(p) => Ok(p),
        LoadedSeries::Level(_) => unreachable!(),
    }
}

pub fn load_levels(path: &Path, positive: bool) -> Result<LevelSeries> {
    match load_series(path, SeriesKind::Level { positive })? {
        LoadedSeries::Level(l) => Ok(l),
        LoadedSeries::Price(_) => unreachable!(),
    }
}

/// Samples observations onto `calendar`, then fills runs of at most `max_gap`
/// consecutive missing calendar dates that lie strictly inside the observed
/// span. Runs longer than `max_gap` stay entirely missing. A run still open
/// after the last observation cannot yet be known to be long, so its first
/// `max_gap` dates are filled; this keeps every filled value a function of
/// data on or before its date. Observations on dates outside the calendar
/// are ignored.
pub fn fill_onto_calendar(
    dates: &[Date],
    values: &[f64],
    calendar: &[Date],
    max_gap: usize,
) -> Vec<Option<f64>> {
    let mut out: Vec<Option<f64>> = vec![None; calendar.len()];
    let mut j = 0;
    for (i, day) in calendar.iter().enumerate() {
        while j < dates.len() && dates[j] < *day {
            j += 1;
        }
        if j < dates.len() && dates[j] == *day {
            out[i] = Some(values[j]);
        }
    }
    let mut last: Option<usize> = None;
    for i in 0..out.len() {
        if out[i].is_some() {
            if let Some(prev) = last {
                let gap = i - prev - 1;
                if gap > 0 && gap <= max_gap {
                    let v = out[prev];
                    for slot in out.iter_mut().take(i).skip(prev + 1) {
                        *slot = v;
                    }
                }
            }
            last = Some(i);
        }
    }
    if let Some(prev) = last {
        let v = out[prev];
        for slot in out.iter_mut().skip(prev + 1).take(max_gap) {
            *slot = v;
        }
    }
    out
}

/// Bounded forward fill of a price series onto a trading calendar.
///
/// The output holds only dates that carry a value (observed or filled).
pub fn forward_fill_bounded(
    prices: &PriceSeries,
    calendar: &[Date],
    max_gap: usize,
) -> Result<PriceSeries> {
    let known: BTreeSet<&Date> = calendar.iter().collect();
    if let Some(d) = prices.dates.iter().find(|d| !known.contains(d)) {
        return Err(Error::validation(format!(
            "{}: date {d} is not on the calendar",
            prices.symbol
        )));
    }
    let filled = fill_onto_calendar(&prices.dates, &prices.closes, calendar, max_gap);
    let (dates, closes): (Vec<Date>, Vec<f64>) = calendar
        .iter()
        .zip(filled)
        .filter_map(|(d, v)| v.map(|v| (*d, v)))
        .unzip();
    Ok(PriceSeries {
        symbol: prices.symbol.clone(),
        dates,
        closes,
    })
}

/// Simple returns between consecutive observations.
pub fn to_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::validation(format!(
            "{}: need at least 2 prices for returns",
            prices.symbol
        )));
    }
    let returns = prices
        .closes
        .windows(2)
        .map(|w| w[1] / w[0] - 1.0)
        .collect();
    Ok(ReturnSeries {
        symbol: prices.symbol.clone(),
        dates: prices.dates[1..].to_vec(),
        returns,
    })
}

/// Simple returns restricted to calendar-adjacent observations: a date whose
/// previous calendar date has no close produces no return.
pub fn to_returns_on_calendar(prices: &PriceSeries, calendar: &[Date]) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::validation(format!(
            "{}: need at least 2 prices for returns",
            prices.symbol
        )));
    }
    let pos: BTreeMap<Date, usize> = calendar.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut dates = Vec::new();
    let mut returns = Vec::new();
    for i in 1..prices.len() {
        let (Some(&a), Some(&b)) = (pos.get(&prices.dates[i - 1]), pos.get(&prices.dates[i]))
        else {
            return Err(Error::validation(format!(
                "{}: price dates not on calendar",
                prices.symbol
            )));
        };
        if b == a + 1 {
            dates.push(prices.dates[i]);
            returns.push(prices.closes[i] / prices.closes[i - 1] - 1.0);
        }
    }
    Ok(ReturnSeries {
        symbol: prices.symbol.clone(),
        dates,
        returns,
    })
}

/// Rebuilds a price path from returns, starting at `base` on `base_date`.
pub fn cumulate(returns: &ReturnSeries, base_date: Date, base: f64) -> Result<PriceSeries> {
    let mut dates = Vec::with_capacity(returns.len() + 1);
    let mut closes = Vec::with_capacity(returns.len() + 1);
    dates.push(base_date);
    closes.push(base);
    let mut level = base;
    for (d, r) in returns.dates.iter().zip(&returns.returns) {
        level *= 1.0 + r;
        dates.push(*d);
        closes.push(level);
    }
    PriceSeries::new(returns.symbol.clone(), dates, closes)
}

/// Sorted union of all dates.
pub fn union_calendar<'a>(dates: impl IntoIterator<Item = &'a [Date]>) -> Vec<Date> {
    let mut all = BTreeSet::new();
    for ds in dates {
        all.extend(ds.iter().copied());
    }
    all.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub symbol: String,
    pub first_date: Date,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    pub dates: Vec<Date>,
    /// Columns sorted by symbol; `None` only before a column's first date
    /// or after its last.
    pub columns: Vec<(String, Vec<Option<f64>>)>,
    pub coverage: Vec<CoverageRow>,
}

impl AlignedPanel {
    pub fn column(&self, symbol: &str) -> Option<&[Option<f64>]> {
        self.columns
            .iter()
            .find(|(s, _)| s == symbol)
            .map(|(_, v)| v.as_slice())
    }

    pub fn index_of(&self, date: Date) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }
}

/// Aligns return series onto a common calendar within `[start, end]`.
///
/// A date belongs to the calendar when every series whose own span covers
/// that date has a value on it; series do not constrain dates before their
/// first observation or after their last. At least one date must be covered
/// by all series at once.
pub fn align(series: &[ReturnSeries], start: Date, end: Date) -> Result<AlignedPanel> {
    if start > end {
        return Err(Error::validation(format!(
            "align: start {start} after end {end}"
        )));
    }
    if let Some(s) = series.iter().find(|s| s.is_empty()) {
        return Err(Error::validation(format!(
            "align: series {} is empty",
            s.symbol
        )));
    }
    let mut ordered: Vec<&ReturnSeries> = series.iter().collect();
    ordered.sort_by(|a, b| a.symbol.cmp(&b.symbol));

    let maps: Vec<BTreeMap<Date, f64>> = ordered
        .iter()
        .map(|s| {
            s.dates
                .iter()
                .copied()
                .zip(s.returns.iter().copied())
                .collect()
        })
        .collect();
    let spans: Vec<(Date, Date)> = ordered
        .iter()
        .map(|s| (s.dates[0], *s.dates.last().unwrap()))
        .collect();

    let candidates = union_calendar(ordered.iter().map(|s| s.dates.as_slice()));
    let mut dates = Vec::new();
    let mut common = 0usize;
    for d in candidates.into_iter().filter(|d| *d >= start && *d <= end) {
        let mut ok = true;
        let mut all = true;
        for (m, (lo, hi)) in maps.iter().zip(&spans) {
            let has = m.contains_key(&d);
            if d >= *lo && d <= *hi {
                if !has {
                    ok = false;
                    break;
                }
            } else {
                all = false;
            }
        }
        if ok {
            if all {
                common += 1;
            }
            dates.push(d);
        }
    }
    if common == 0 {
        return Err(Error::validation("align: empty intersection of calendars"));
    }

    let mut columns = Vec::with_capacity(ordered.len());
    let mut coverage = Vec::with_capacity(ordered.len());
    for (s, m) in ordered.iter().zip(&maps) {
        let col: Vec<Option<f64>> = dates.iter().map(|d| m.get(d).copied()).collect();
        let first = dates
            .iter()
            .zip(&col)
            .find(|(_, v)| v.is_some())
            .map(|(d, _)| *d);
        let count = col.iter().filter(|v| v.is_some()).count();
        if let Some(first_date) = first {
            coverage.push(CoverageRow {
                symbol: s.symbol.clone(),
                first_date,
                count,
            });
        }
        columns.push((s.symbol.clone(), col));
    }
    Ok(AlignedPanel {
        dates,
        columns,
        coverage,
    })
}

/// Daily FF5 + momentum factor returns and the risk-free rate, in decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    pub dates: Vec<Date>,
    pub mkt_rf: Vec<f64>,
    pub smb: Vec<f64>,
    pub hml: Vec<f64>,
    pub rmw: Vec<f64>,
    pub cma: Vec<f64>,
    pub mom: Vec<f64>,
    pub rf: Vec<f64>,
}

pub const FACTOR_HEADER: [&str; 8] = ["date", "mkt_rf", "smb", "hml", "rmw", "cma", "mom", "rf"];
pub const FACTOR_NAMES: [&str; 6] = ["MKT", "SMB", "HML", "RMW", "CMA", "MOM"];

impl FactorPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Factor columns in MKT, SMB, HML, RMW, CMA, MOM order.
    pub fn columns(&self) -> [&[f64]; 6] {
        [
            &self.mkt_rf,
            &self.smb,
            &self.hml,
            &self.rmw,
            &self.cma,
            &self.mom,
        ]
    }

    fn check_decimal(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::validation("factor file has no rows"));
        }
        let mean_abs = self.mkt_rf.iter().map(|v| v.abs()).sum::<f64>() / self.len() as f64;
        if mean_abs > 0.05 {
            return Err(Error::validation(format!(
                "factor MKT mean |value| {mean_abs:.4} looks like percent, expected decimal returns"
            )));
        }
        Ok(())
    }
}

pub fn load_factors(path: &Path) -> Result<FactorPanel> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != FACTOR_HEADER {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`", FACTOR_HEADER.join(",")),
        ));
    }
    let mut rows: Vec<(Date, [f64; 7])> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 8 {
            return Err(parse_err(
                path,
                line,
                format!("expected 8 fields, got {}", rec.len()),
            ));
        }
        let date = parse_date(&rec[0])
            .ok_or_else(|| parse_err(path, line, format!("bad date `{}`", &rec[0])))?;
        let mut vals = [0.0; 7];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec[k + 1]
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad value `{}`", &rec[k + 1])))?;
        }
        rows.push((date, vals));
    }
    rows.sort_by_key(|r| r.0);
    let dates: Vec<Date> = rows.iter().map(|r| r.0).collect();
    check_strictly_increasing("factors", &dates)?;
    let col = |k: usize| rows.iter().map(|r| r.1[k]).collect::<Vec<f64>>();
    let panel = FactorPanel {
        dates,
        mkt_rf: col(0),
        smb: col(1),
        hml: col(2),
        rmw: col(3),
        cma: col(4),
        mom: col(5),
        rf: col(6),
    };
    panel.check_decimal()?;
    Ok(panel)
}

/// Writes a `date,value` file.
pub fn write_series(path: &Path, dates: &[Date], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "value"])?;
    for (d, v) in dates.iter().zip(values) {
        w.write_record([d.to_string(), format!("{v}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_factors(path: &Path, f: &FactorPanel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FACTOR_HEADER)?;
    for i in 0..f.len() {
        w.write_record([
            f.dates[i].to_string(),
            format!("{}", f.mkt_rf[i]),
            format!("{}", f.smb[i]),
            format!("{}", f.hml[i]),
            format!("{}", f.rmw[i]),
            format!("{}", f.cma[i]),
            format!("{}", f.mom[i]),
            format!("{}", f.rf[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
