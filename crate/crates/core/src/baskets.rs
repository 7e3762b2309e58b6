//! Equal-weight G and D baskets and the G−D relative return.
//!
//! Baskets are daily-rebalanced: the basket return on a date is the plain
//! mean of its member returns on that date.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{AlignedPanel, Date, ReturnSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasketDef {
    pub name: String,
    pub members: Vec<String>,
}

impl BasketDef {
    pub fn growth() -> Self {
        Self {
            name: "G".into(),
            members: ["QQQ", "XLK", "VGT", "SPYG", "VUG"]
                .map(String::from)
                .to_vec(),
        }
    }

    pub fn defensive() -> Self {
        Self {
            name: "D".into(),
            members: ["SCHD", "VYM", "VTV", "FDVV", "COWZ"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Recorded in run metadata.
pub const REBALANCE_CONVENTION: &str = "daily-rebalanced equal weight (mean of member returns)";

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeSeries {
    pub dates: Vec<Date>,
    pub values: Vec<f64>,
}

/// Equal-weight basket from members sampled on an aligned panel.
///
/// The basket spans from the latest member first date to the earliest member
/// last date; every member must have a value on every panel date inside it.
pub fn basket_returns(name: &str, members: &[&str], panel: &AlignedPanel) -> Result<ReturnSeries> {
    if members.is_empty() {
        return Err(Error::validation(format!("basket {name} has no members")));
    }
    let mut cols = Vec::with_capacity(members.len());
    for m in members {
        let col = panel
            .column(m)
            .ok_or_else(|| Error::Coverage(format!("basket {name}: member {m} not loaded")))?;
        cols.push((m, col));
    }
    let mut start_idx = 0;
    let mut end_idx = usize::MAX;
    for (m, col) in &cols {
        let first = col
            .iter()
            .position(|v| v.is_some())
            .ok_or_else(|| Error::Coverage(format!("basket {name}: member {m} has no data")))?;
        let last = col.iter().rposition(|v| v.is_some()).expect("has data");
        start_idx = start_idx.max(first);
        end_idx = end_idx.min(last);
    }
    if end_idx < start_idx {
        return Err(Error::Coverage(format!(
            "basket {name}: member histories do not overlap"
        )));
    }

    let n = members.len() as f64;
    let mut dates = Vec::with_capacity(end_idx + 1 - start_idx);
    let mut returns = Vec::with_capacity(end_idx + 1 - start_idx);
    for i in start_idx..=end_idx {
        let mut sum = 0.0;
        for (m, col) in &cols {
            sum += col[i].ok_or_else(|| {
                Error::Coverage(format!(
                    "basket {name}: member {m} missing on {}",
                    panel.dates[i]
                ))
            })?;
        }
        dates.push(panel.dates[i]);
        returns.push(sum / n);
    }
    ReturnSeries::new(name, dates, returns)
}

/// Mean of already aligned member series (same dates for all).
pub fn mean_of_aligned(name: &str, members: &[ReturnSeries]) -> Result<ReturnSeries> {
    let first = members
        .first()
        .ok_or_else(|| Error::validation(format!("basket {name} has no members")))?;
    if members.iter().any(|m| m.dates != first.dates) {
        return Err(Error::validation(format!(
            "basket {name}: member calendars differ"
        )));
    }
    let n = members.len() as f64;
    let returns = (0..first.len())
        .map(|i| members.iter().map(|m| m.returns[i]).sum::<f64>() / n)
        .collect();
    ReturnSeries::new(name, first.dates.clone(), returns)
}

/// R^G − R^D on identical calendars.
pub fn relative(g: &ReturnSeries, d: &ReturnSeries) -> Result<RelativeSeries> {
    if g.dates != d.dates {
        return Err(Error::validation(format!(
            "relative: calendars of {} and {} differ",
            g.symbol, d.symbol
        )));
    }
    Ok(RelativeSeries {
        dates: g.dates.clone(),
        values: g
            .returns
            .iter()
            .zip(&d.returns)
            .map(|(a, b)| a - b)
            .collect(),
    })
}

/// Restricts two series to their common dates.
pub fn common_dates(a: &ReturnSeries, b: &ReturnSeries) -> (ReturnSeries, ReturnSeries) {
    let start = a.dates[0].max(b.dates[0]);
    let end = (*a.dates.last().unwrap()).min(*b.dates.last().unwrap());
    let (a, b) = (a.slice(start, end), b.slice(start, end));
    let keep: std::collections::BTreeSet<Date> = a
        .dates
        .iter()
        .filter(|d| b.dates.binary_search(d).is_ok())
        .copied()
        .collect();
    let filt = |s: &ReturnSeries| {
        let (dates, returns) = s
            .dates
            .iter()
            .zip(&s.returns)
            .filter(|(d, _)| keep.contains(d))
            .map(|(d, r)| (*d, *r))
            .unzip();
        ReturnSeries {
            symbol: s.symbol.clone(),
            dates,
            returns,
        }
    };
    (filt(&a), filt(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{align, parse_date};
    use proptest::prelude::*;

    fn cal(n: usize) -> Vec<Date> {
        let s = parse_date("2016-12-19").unwrap();
        (0..n).map(|i| s + chrono::Days::new(i as u64)).collect()
    }

    #[test]
    fn equal_members_give_member_return() {
        let c = cal(3);
        let a = ReturnSeries::new("A", c.clone(), vec![0.01; 3]).unwrap();
        let b = ReturnSeries::new("B", c.clone(), vec![0.01; 3]).unwrap();
        let p = align(&[a, b], c[0], c[2]).unwrap();
        let bk = basket_returns("G", &["A", "B"], &p).unwrap();
        assert_eq!(bk.returns, vec![0.01; 3]);
    }

    #[test]
    fn two_member_mean_and_late_start() {
        let c = cal(4);
        let a = ReturnSeries::new("A", c.clone(), vec![0.02; 4]).unwrap();
        let b = ReturnSeries::new("B", c[2..].to_vec(), vec![0.0; 2]).unwrap();
        let p = align(&[a, b], c[0], c[3]).unwrap();
        let bk = basket_returns("T", &["A", "B"], &p).unwrap();
        assert_eq!(bk.dates, c[2..].to_vec());
        assert_eq!(bk.dates[0], parse_date("2016-12-21").unwrap());
        assert!((bk.returns[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn early_member_end_truncates_basket() {
        let c = cal(5);
        let a = ReturnSeries::new("A", c.clone(), vec![0.02; 5]).unwrap();
        let b = ReturnSeries::new("B", c[..3].to_vec(), vec![0.0; 3]).unwrap();
        let p = align(&[a.clone(), b], c[0], c[4]).unwrap();
        let bk = basket_returns("T", &["A", "B"], &p).unwrap();
        assert_eq!(bk.dates, c[..3].to_vec());

        // An interior gap removes the date from the aligned calendar.
        let gap = ReturnSeries::new("B", vec![c[0], c[1], c[3], c[4]], vec![0.0; 4]).unwrap();
        let p = align(&[a, gap], c[0], c[4]).unwrap();
        let bk = basket_returns("T", &["A", "B"], &p).unwrap();
        assert_eq!(bk.dates, vec![c[0], c[1], c[3], c[4]]);
    }

    #[test]
    fn relative_arithmetic_and_mismatch() {
        let c = cal(2);
        let g = ReturnSeries::new("G", c.clone(), vec![0.02, 0.01]).unwrap();
        let d = ReturnSeries::new("D", c.clone(), vec![0.005, 0.01]).unwrap();
        let r = relative(&g, &d).unwrap();
        assert!((r.values[0] - 0.015).abs() < 1e-15);
        assert_eq!(r.values[1], 0.0);
        let short = ReturnSeries::new("D", c[..1].to_vec(), vec![0.0]).unwrap();
        assert!(relative(&g, &short).is_err());
    }

    proptest! {
        #[test]
        fn basket_is_permutation_invariant_and_bounded(
            rows in prop::collection::vec(prop::collection::vec(-0.2f64..0.2, 4), 1..30)
        ) {
            let c = cal(rows.len());
            let members: Vec<ReturnSeries> = (0..4)
                .map(|k| ReturnSeries::new(format!("M{k}"), c.clone(), rows.iter().map(|r| r[k]).collect()).unwrap())
                .collect();
            let p = align(&members, c[0], *c.last().unwrap()).unwrap();
            let fwd = basket_returns("B", &["M0", "M1", "M2", "M3"], &p).unwrap();
            let rev = basket_returns("B", &["M3", "M2", "M1", "M0"], &p).unwrap();
            for i in 0..rows.len() {
                prop_assert!((fwd.returns[i] - rev.returns[i]).abs() < 1e-15);
                let lo = rows[i].iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = rows[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(fwd.returns[i] >= lo - 1e-15 && fwd.returns[i] <= hi + 1e-15);
            }
            let gd = relative(&members[0], &members[1]).unwrap();
            let dg = relative(&members[1], &members[0]).unwrap();
            for (a, b) in gd.values.iter().zip(&dg.values) {
                prop_assert_eq!(*a, -*b);
            }
        }
    }
}
