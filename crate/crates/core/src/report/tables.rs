use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::market_data::Date;
use crate::policy::Metrics;

/// Missing values print as this in every output file.
pub const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    /// Decimal fraction, printed ×100 with two decimals.
    Pct(Option<f64>),
    /// Printed with the given number of decimals.
    Num(Option<f64>, usize),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    pub fn pct(v: f64) -> Cell {
        Cell::Pct(Some(v))
    }

    pub fn ratio(v: Option<f64>) -> Cell {
        Cell::Num(v, 2)
    }

    pub fn beta(v: f64) -> Cell {
        Cell::Num(Some(v), 3)
    }

    fn formatted(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Pct(Some(v)) if v.is_finite() => format!("{:.2}", v * 100.0),
            Cell::Num(Some(v), d) if v.is_finite() => format!("{:.*}", *d, v),
            _ => NA.into(),
        }
    }

    fn full(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Pct(Some(v)) | Cell::Num(Some(v), _) if v.is_finite() => format!("{v:e}"),
            _ => NA.into(),
        }
    }
}

/// Delimited table written twice: display formatting (percent columns
/// carry a `_pct` suffix) and a `_full` companion at full precision with
/// every value in decimal units.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, headers: &[&str]) -> Table {
        Table {
            name: name.into(),
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    fn display_headers(&self) -> Vec<String> {
        self.headers
            .iter()
            .enumerate()
            .map(|(j, h)| match self.rows.first().map(|r| &r[j]) {
                Some(Cell::Pct(_)) => format!("{h}_pct"),
                _ => h.clone(),
            })
            .collect()
    }

    /// Writes `<name>.csv` and `<name>_full.csv`; returns both paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let pretty = dir.join(format!("{}.csv", self.name));
        let full = dir.join(format!("{}_full.csv", self.name));
        let mut w = csv::Writer::from_path(&pretty)?;
        w.write_record(self.display_headers())?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::formatted))?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(&full)?;
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::full))?;
        }
        w.flush()?;
        Ok(vec![pretty, full])
    }
}

pub const METRIC_HEADERS: [&str; 11] = [
    "method",
    "final_wealth",
    "cagr",
    "vol",
    "sharpe",
    "sortino",
    "max_dd",
    "calmar",
    "turnover",
    "avg_g",
    "n_days",
];

pub fn metrics_row(method: &str, m: &Metrics) -> Vec<Cell> {
    vec![
        Cell::text(method),
        Cell::Num(Some(m.final_wealth), 2),
        Cell::pct(m.cagr),
        Cell::pct(m.vol),
        Cell::ratio(m.sharpe),
        Cell::ratio(m.sortino),
        Cell::pct(m.max_dd),
        Cell::ratio(m.calmar),
        Cell::pct(m.turnover_annual),
        Cell::Pct(m.avg_g),
        Cell::Int(m.n as i64),
    ]
}

pub fn metrics_table(name: &str, rows: &[(String, Metrics)]) -> Table {
    let mut t = Table::new(name, &METRIC_HEADERS);
    for (label, m) in rows {
        t.push(metrics_row(label, m));
    }
    t
}

/// Wealth paths on a common calendar: one column per method.
pub fn equity_table(name: &str, dates: &[Date], curves: &[(String, Vec<f64>)]) -> Table {
    let mut headers = vec!["date"];
    headers.extend(curves.iter().map(|(n, _)| n.as_str()));
    let mut t = Table::new(name, &headers);
    for (i, d) in dates.iter().enumerate() {
        let mut row = vec![Cell::text(d.to_string())];
        row.extend(curves.iter().map(|(_, c)| Cell::Num(c.get(i).copied(), 6)));
        t.push(row);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(Cell::pct(0.19237).formatted(), "19.24");
        assert_eq!(Cell::ratio(Some(1.005)).formatted(), "1.00");
        assert_eq!(Cell::ratio(None).formatted(), NA);
        assert_eq!(Cell::beta(-0.5519).formatted(), "-0.552");
        assert_eq!(Cell::Pct(Some(f64::NAN)).full(), NA);
        assert_eq!(Cell::pct(0.25).full(), "2.5e-1");
    }

    #[test]
    fn writes_pair() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("x", &["method", "cagr"]);
        t.push(vec![Cell::text("a"), Cell::pct(0.1)]);
        let paths = t.write(dir.path()).unwrap();
        let pretty = std::fs::read_to_string(&paths[0]).unwrap();
        let full = std::fs::read_to_string(&paths[1]).unwrap();
        assert_eq!(pretty, "method,cagr_pct\na,10.00\n");
        assert_eq!(full, "method,cagr\na,1e-1\n");
    }
}
