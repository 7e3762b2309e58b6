use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::Datelike;
use sha2::{Digest, Sha256};

use crate::attribution::{
    factor_spec, ols_hac, period_attribution, rolling_attribution, Period, RegressionResult,
    ALPHA_ANNUALIZATION, NW_LAG_RULE,
};
use crate::benchmarks::{
    matched_policy, matched_static_search, mix_slices, pair_stats, scale, vol_match_weight,
    ExcessConvention, MatchCriterion, MatchedKind,
};
use crate::dataset::{Dataset, Universe};
use crate::error::{Error, Result};
use crate::experiments::{
    cost_sensitivity, credit_incremental_grid, credit_replacement_grid, evaluate, gate_regressions,
    quintile_diagnostic, rank, run_backtest_idx, tilt_sweep, walk_forward, Candidate, Evaluated,
    GateCandidate, WalkForwardMode, WalkForwardSpec,
};
use crate::market_data::{parse_date, Date, ReturnSeries, FACTOR_NAMES};
use crate::policy::{
    compute_metrics, static_backtest, yearly_breakdown, BacktestResult, Metrics, PolicyConfig,
    SHARPE_CONVENTION, SORTINO_CONVENTION, TURNOVER_CONVENTION,
};
use crate::signals::{
    score_series, ScoreSpec, CHANGE_WINDOW, GD_TRAILING, VIX_PCT_MIN_OBS, VIX_PCT_WINDOW, Z_MIN_OBS,
};
use crate::synth::synth_data;

use super::tables::{equity_table, metrics_row, metrics_table, Cell, Table, METRIC_HEADERS};
use super::{parse_window, Experiment, RunConfig, RunManifest};

const DEFAULT_MAIN: (&str, &str) = ("2017-06-28", "2026-05-15");
const DEFAULT_ATTRIBUTION: (&str, &str) = ("2016-12-21", "2026-03-31");
const DEFAULT_POST: &str = "2022-01-03";
const DEFAULT_PERIODS: [(&str, &str, &str); 4] = [
    ("COVID Rebound 2020-2021", "2020-01-01", "2021-12-31"),
    ("Rate Hike 2022", "2022-01-01", "2022-12-31"),
    ("AI Rally 2023-2024", "2023-01-01", "2024-12-31"),
    ("Recent 2025-2026Q1", "2025-01-01", "2026-03-31"),
];

struct Ctx<'a> {
    cfg: &'a RunConfig,
    ds: Dataset,
    lo: usize,
    hi: usize,
    post_lo: usize,
    attribution: (Date, Date),
    periods: Vec<Period>,
    selected: PolicyConfig,
}

fn d(s: &str) -> Date {
    parse_date(s).expect("static date")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl<'a> Ctx<'a> {
    fn build(cfg: &'a RunConfig, ds: Dataset) -> Result<Ctx<'a>> {
        let synthetic = cfg.synthetic;
        let (lo, hi) = match &cfg.window {
            Some(w) => {
                let (a, b) = parse_window(w)?;
                ds.policy_window(a, b)?
            }
            None if synthetic => (ds.first_feasible()?, ds.basket_end),
            None => ds.policy_window(d(DEFAULT_MAIN.0), d(DEFAULT_MAIN.1))?,
        };
        let attribution = match &cfg.attribution_window {
            Some(w) => parse_window(w)?,
            None if synthetic => (ds.dates[ds.basket_start], ds.dates[ds.basket_end]),
            None => (d(DEFAULT_ATTRIBUTION.0), d(DEFAULT_ATTRIBUTION.1)),
        };
        let post_lo = match &cfg.post_start {
            Some(p) => ds
                .dates
                .partition_point(|x| *x < parse_date(p).expect("validated")),
            None if synthetic => lo + (hi - lo) * 3 / 5,
            None => ds.dates.partition_point(|x| *x < d(DEFAULT_POST)),
        };
        if post_lo < lo || post_lo > hi {
            return Err(Error::validation(format!(
                "post-window start outside the main window {}..{}",
                ds.dates[lo], ds.dates[hi]
            )));
        }
        let periods = if synthetic && cfg.attribution_window.is_none() {
            let (a, b) = (ds.basket_start, ds.basket_end);
            let step = (b - a + 1) / 4;
            (0..4)
                .map(|k| Period {
                    name: format!("P{}", k + 1),
                    start: ds.dates[a + k * step],
                    end: ds.dates[if k == 3 { b } else { a + (k + 1) * step - 1 }],
                })
                .collect()
        } else {
            DEFAULT_PERIODS
                .iter()
                .map(|(n, s, e)| Period {
                    name: n.to_string(),
                    start: d(s),
                    end: d(e),
                })
                .collect()
        };
        Ok(Ctx {
            selected: cfg.selected_policy()?,
            cfg,
            ds,
            lo,
            hi,
            post_lo,
            attribution,
            periods,
        })
    }

    fn cost(&self) -> f64 {
        self.cfg.cost_bps
    }

    fn policy(&self, c: &PolicyConfig, name: &str, lo: usize) -> Result<BacktestResult> {
        c.validate()?;
        run_backtest_idx(&self.ds, c, name, lo, self.hi)
    }

    fn static_mix(&self, w: f64, name: &str, lo: usize) -> Result<BacktestResult> {
        static_backtest(name, &self.ds.dates, &self.ds.g, &self.ds.d, w, lo, self.hi)
    }

    fn spy(&self, lo: usize) -> Result<(Vec<f64>, Metrics)> {
        let r = self.ds.spy_ret[lo..=self.hi].to_vec();
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Coverage(
                "SPY returns missing inside the window".into(),
            ));
        }
        let m = compute_metrics(&r, None)?;
        Ok((r, m))
    }

    fn window_label(&self, lo: usize) -> String {
        format!("{}:{}", self.ds.dates[lo], self.ds.dates[self.hi])
    }
}

fn wealth(r: &[f64]) -> Vec<f64> {
    let mut w = 1.0;
    r.iter()
        .map(|x| {
            w *= 1.0 + x;
            w
        })
        .collect()
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn table(&mut self, t: &Table) -> Result<()> {
        self.files.extend(t.write(&self.dir)?);
        Ok(())
    }
}

fn regression_cells(label: &str, f: &RegressionResult) -> Vec<Cell> {
    let mut row = vec![
        Cell::text(label),
        Cell::Int(f.n as i64),
        Cell::pct(f.alpha_annual),
        Cell::ratio(Some(f.alpha_t_nw)),
    ];
    row.extend(f.betas.iter().map(|b| Cell::beta(*b)));
    row.push(Cell::beta(f.adj_r2));
    row.push(Cell::beta(f.r2));
    row.push(Cell::Int(f.hac_lags as i64));
    row
}

fn regression_headers(first: &str) -> Vec<&str> {
    let mut h = vec![first, "n", "alpha_annual", "alpha_t_nw"];
    h.extend(FACTOR_NAMES);
    h.extend(["adj_r2", "r2", "nw_lags"]);
    h
}

fn exp_attribution(ctx: &Ctx, out: &mut Out) -> Result<()> {
    let ds = &ctx.ds;
    let factors = ds
        .factors
        .as_ref()
        .ok_or_else(|| Error::Coverage("factor file not found in data directory".into()))?;
    let (a, b) = ctx.attribution;

    let mut cov = Table::new(
        "data_coverage",
        &["symbol", "group", "first_return_date", "n_returns"],
    );
    for c in &ds.coverage {
        cov.push(vec![
            Cell::text(&c.symbol),
            Cell::text(&c.group),
            Cell::text(c.first_return_date.to_string()),
            Cell::Int(c.n_returns as i64),
        ]);
    }
    out.table(&cov)?;

    let rel = ds.relative_series();
    let gd = ReturnSeries::new("G-D", rel.dates, rel.values)?;
    let mut port = Table::new("attribution_portfolios", &regression_headers("portfolio"));
    for (label, s, zero_cost) in [
        ("G", &ds.g_series, false),
        ("D", &ds.d_series, false),
        ("G-D", &gd, true),
    ] {
        let (_, spec) = factor_spec(s, factors, zero_cost, a, b)?;
        port.push(regression_cells(label, &ols_hac(&spec)?));
    }
    out.table(&port)?;

    let mut etf = Table::new("attribution_etfs", &regression_headers("etf"));
    let u = &ds.universe;
    for sym in u.growth.members.iter().chain(&u.defensive.members) {
        let s = ds
            .members
            .iter()
            .find(|m| &m.symbol == sym)
            .expect("member loaded");
        let (_, spec) = factor_spec(s, factors, false, a, b)?;
        etf.push(regression_cells(sym, &ols_hac(&spec)?));
    }
    out.table(&etf)?;

    let (dates, spec) = factor_spec(&gd, factors, true, a, b)?;
    for &w in &ctx.cfg.rolling_windows {
        if w > spec.n() {
            continue;
        }
        let fits = rolling_attribution(&spec, w)?;
        let mut h = vec!["date", "alpha_annual"];
        h.extend(FACTOR_NAMES);
        h.push("r2");
        let mut t = Table::new(format!("attribution_rolling_{w}"), &h);
        for (end, f) in &fits {
            let mut row = vec![
                Cell::text(dates[*end].to_string()),
                Cell::pct(f.alpha_annual),
            ];
            row.extend(f.betas.iter().map(|b| Cell::beta(*b)));
            row.push(Cell::beta(f.r2));
            t.push(row);
        }
        out.table(&t)?;
    }

    let mut h = vec!["period", "n", "alpha_annual"];
    h.extend(FACTOR_NAMES);
    h.push("r2");
    let mut per = Table::new("attribution_periods", &h);
    for (name, f) in period_attribution(&spec, &dates, &ctx.periods)? {
        let mut row = vec![
            Cell::text(name),
            Cell::Int(f.n as i64),
            Cell::pct(f.alpha_annual),
        ];
        row.extend(f.betas.iter().map(|b| Cell::beta(*b)));
        row.push(Cell::beta(f.r2));
        per.push(row);
    }
    out.table(&per)
}

fn exp_tilt(ctx: &Ctx, out: &mut Out) -> Result<()> {
    let base = PolicyConfig::fixed_structure(0.5).with_cost(ctx.cost());
    let runs = tilt_sweep(&ctx.ds, &base, &ctx.cfg.tilts, ctx.lo, ctx.hi)?;
    let mut h = vec!["max_tilt"];
    h.extend(METRIC_HEADERS);
    let mut t = Table::new("tilt", &h);
    for (tilt, r) in &runs {
        let mut row = vec![Cell::pct(*tilt)];
        row.extend(metrics_row(&r.name, &r.metrics));
        t.push(row);
    }
    out.table(&t)?;
    let curves: Vec<(String, Vec<f64>)> = runs
        .iter()
        .map(|(_, r)| (r.name.clone(), r.equity.clone()))
        .collect();
    out.table(&equity_table(
        "equity_tilt",
        &ctx.ds.dates[ctx.lo..=ctx.hi],
        &curves,
    ))
}

fn ranked_table(
    name: &str,
    evals: &[Evaluated],
    limit: Option<usize>,
    sel: &crate::experiments::SelectionScore,
) -> (Table, Vec<usize>) {
    let entries: Vec<(&str, &Metrics)> = evals
        .iter()
        .map(|e| (e.candidate.id.as_str(), &e.metrics))
        .collect();
    let ranked = rank(&entries, sel);
    let mut h = vec!["rank", "config_id", "selection_score"];
    h.extend(&METRIC_HEADERS[1..]);
    let mut t = Table::new(name, &h);
    for (k, (i, score)) in ranked.iter().enumerate().take(limit.unwrap_or(usize::MAX)) {
        let mut row = vec![
            Cell::Int(k as i64 + 1),
            Cell::text(&evals[*i].candidate.id),
            Cell::Num(Some(*score), 3),
        ];
        row.extend(metrics_row("", &evals[*i].metrics).into_iter().skip(1));
        t.push(row);
    }
    (t, ranked.iter().map(|r| r.0).collect())
}

fn exp_grid(ctx: &Ctx, out: &mut Out) -> Result<()> {
    let pool = ctx.cfg.grid.candidates(ctx.cost());
    let evals = evaluate(&ctx.ds, &pool, ctx.lo, ctx.hi)?;
    let sel = &ctx.cfg.selector;
    out.table(&ranked_table("local_grid", &evals, Some(ctx.cfg.grid_top_k), sel).0)?;
    out.table(&ranked_table("local_grid_all", &evals, None, sel).0)
}

struct Row {
    name: String,
    net: Vec<f64>,
    metrics: Metrics,
}

impl Row {
    fn of(r: BacktestResult, name: &str) -> Row {
        Row {
            name: name.into(),
            net: r.net,
            metrics: r.metrics,
        }
    }
}

fn benchmark_rows(ctx: &Ctx, lo: usize, with_d: bool, with_spy: bool) -> Result<Vec<Row>> {
    let mut rows = vec![
        Row::of(ctx.static_mix(0.5, "50/50", lo)?, "50/50 G/D"),
        Row::of(ctx.static_mix(1.0, "100G", lo)?, "100% G"),
    ];
    if with_d {
        rows.push(Row::of(ctx.static_mix(0.0, "100D", lo)?, "100% D"));
    }
    if with_spy {
        let (net, metrics) = ctx.spy(lo)?;
        rows.push(Row {
            name: "SPY".into(),
            net,
            metrics,
        });
    }
    Ok(rows)
}

fn write_rows(out: &mut Out, ctx: &Ctx, name: &str, lo: usize, rows: &[Row]) -> Result<()> {
    let m: Vec<(String, Metrics)> = rows.iter().map(|r| (r.name.clone(), r.metrics)).collect();
    out.table(&metrics_table(name, &m))?;
    let curves: Vec<(String, Vec<f64>)> = rows
        .iter()
        .map(|r| (r.name.clone(), wealth(&r.net)))
        .collect();
    out.table(&equity_table(
        &format!("equity_{name}"),
        &ctx.ds.dates[lo..=ctx.hi],
        &curves,
    ))
}

fn exp_benchmarks(ctx: &Ctx, out: &mut Out) -> Result<()> {
    let sel = &ctx.selected;
    let mut rows = vec![
        Row::of(
            ctx.policy(sel, "selected", ctx.lo)?,
            "Selected Smooth Score",
        ),
        Row::of(
            ctx.policy(&matched_policy(MatchedKind::TnxOnly, sel), "tnx", ctx.lo)?,
            "Matched TNX-only",
        ),
        Row::of(
            ctx.policy(&matched_policy(MatchedKind::CoreOnly, sel), "core", ctx.lo)?,
            "Matched Core-only",
        ),
        Row::of(
            ctx.policy(
                &PolicyConfig::fixed_structure(0.5).with_cost(ctx.cost()),
                "fixed",
                ctx.lo,
            )?,
            "Fixed-Structure 50% Tilt",
        ),
    ];
    rows.extend(benchmark_rows(ctx, ctx.lo, true, true)?);
    write_rows(out, ctx, "selected_summary", ctx.lo, &rows)?;

    let mut inc = Table::new(
        "incremental",
        &[
            "comparison",
            "annual_excess",
            "tracking_error",
            "info_ratio",
            "max_dd_diff",
        ],
    );
    for other in &rows[1..] {
        if other.name == "100% D" {
            continue;
        }
        let p = pair_stats(&rows[0].net, &other.net, ExcessConvention::Linear)?;
        inc.push(vec![
            Cell::text(format!("Selected Policy - {}", other.name)),
            Cell::pct(p.annual_excess),
            Cell::pct(p.tracking_error),
            Cell::ratio(p.info_ratio),
            Cell::pct(p.maxdd_diff),
        ]);
    }
    out.table(&inc)
}

fn exp_volmatch(ctx: &Ctx, out: &mut Out) -> Result<()> {
    let (lo, hi) = (ctx.lo, ctx.hi);
    let smooth = ctx.policy(&ctx.selected, "selected", lo)?;
    let g = &ctx.ds.g[lo..=hi];
    let dd = &ctx.ds.d[lo..=hi];
    let target_vol = smooth.metrics.vol;
    let vm = vol_match_weight(g, target_vol)?;
    let step = ctx.cfg.static_grid_step;
    let (w_vol, _) = matched_static_search(MatchCriterion::Vol, target_vol, g, dd, step)?;
    let (w_dd, _) =
        matched_static_search(MatchCriterion::MaxDd, smooth.metrics.max_dd, g, dd, step)?;
    let (w_sh, _) = matched_static_search(MatchCriterion::Sharpe, 0.0, g, dd, step)?;

    let mut rows: Vec<(String, Option<f64>, Vec<f64>, Option<(&[f64], f64)>)> = vec![
        (
            "Selected Smooth Score".into(),
            None,
            smooth.net.clone(),
            Some((&smooth.weights_g[..], ctx.selected.w0)),
        ),
        ("100% G".into(), Some(1.0), g.to_vec(), None),
        (
            format!("Vol-Matched 100% G ({:.2}% G)", vm.weight * 100.0),
            Some(vm.weight),
            scale(g, vm.weight),
            None,
        ),
        ("50/50 G/D".into(), Some(0.5), mix_slices(0.5, g, dd), None),
        (
            format!("Vol-Matched Static G/D ({:.0}% G)", w_vol * 100.0),
            Some(w_vol),
            mix_slices(w_vol, g, dd),
            None,
        ),
        (
            format!("MaxDD-Matched Static G/D ({:.0}% G)", w_dd * 100.0),
            Some(w_dd),
            mix_slices(w_dd, g, dd),
            None,
        ),
        (
            format!("Best Sharpe Static G/D ({:.0}% G)", w_sh * 100.0),
            Some(w_sh),
            mix_slices(w_sh, g, dd),
            None,
        ),
    ];
    let mut t = Table::new(
        "vol_matched",
        &[
            "method",
            "weight_g",
            "cagr",
            "vol",
            "sharpe",
            "max_dd",
            "turnover",
            "excess_vs_smooth",
            "levered",
        ],
    );
    let mut curves = Vec::new();
    for (name, w, net, weights) in rows.drain(..) {
        let m = compute_metrics(&net, weights)?;
        let ex = pair_stats(&net, &smooth.net, ExcessConvention::Linear)?.annual_excess;
        t.push(vec![
            Cell::text(&name),
            Cell::Pct(w),
            Cell::pct(m.cagr),
            Cell::pct(m.vol),
            Cell::ratio(m.sharpe),
            Cell::pct(m.max_dd),
            Cell::pct(m.turnover_annual),
            Cell::pct(ex),
            Cell::text(if w.is_some_and(|w| w > 1.0) {
                "yes"
            } else {
                "no"
            }),
        ]);
        curves.push((name, wealth(&net)));
    }
    out.table(&t)?;
    out.table(&equity_table(
        "equity_vol_matched",
        &ctx.ds.dates[lo..=hi],
        &curves,
    ))
}

fn wf_rows(
    ctx: &Ctx,
    pool: &[Candidate],
    label: &str,
    oos_lo: usize,
    blocks: &mut Table,
) -> Result<Vec<Row>> {
    let sel = &ctx.cfg.selector;
    let mut rows = Vec::new();
    for (mode, tag) in [
        (WalkForwardMode::Expanding, "WF Expanding"),
        (WalkForwardMode::Rolling, "WF Rolling"),
        (WalkForwardMode::Fixed, "Fixed Parameter"),
    ] {
        let spec = WalkForwardSpec {
            mode,
            train_len: ctx.cfg.train_len,
            test_len: ctx.cfg.test_len,
        };
        let name = format!("{label} {tag}");
        let wf = walk_forward(&ctx.ds, pool, &spec, sel, ctx.lo, oos_lo, ctx.hi, &name)?;
        for b in &wf.blocks {
            blocks.push(vec![
                Cell::text(&name),
                Cell::text(b.start.to_string()),
                Cell::text(b.end.to_string()),
                Cell::text(b.train_start.to_string()),
                Cell::text(b.train_end.to_string()),
                Cell::text(&b.config_id),
            ]);
        }
        rows.push(Row::of(wf.result, &name));
    }
    Ok(rows)
}

fn blocks_table(name: &str) -> Table {
    Table::new(
        name,
        &[
            "method",
            "block_start",
            "block_end",
            "train_start",
            "train_end",
            "config_id",
        ],
    )
}

fn check_oos_room(ctx: &Ctx, oos_lo: usize) -> Result<()> {
    if oos_lo < ctx.lo + ctx.cfg.train_len || oos_lo + ctx.cfg.test_len > ctx.hi {
        return Err(Error::validation(format!(
            "validation window {} needs {} training days inside the main window starting {}",
            ctx.window_label(oos_lo),
            ctx.cfg.train_len,
            ctx.ds.dates[ctx.lo]
        )));
    }
    Ok(())
}

fn exp_validation(ctx: &Ctx, out: &mut Out, name: &str, oos_lo: usize) -> Result<()> {
    check_oos_room(ctx, oos_lo)?;
    let pool = ctx.cfg.grid.candidates(ctx.cost());
    let mut blocks = blocks_table(&format!("{name}_blocks"));
    let mut rows = wf_rows(ctx, &pool, "Smooth Score", oos_lo, &mut blocks)?;
    rows.extend(benchmark_rows(ctx, oos_lo, true, true)?);
    write_rows(out, ctx, name, oos_lo, &rows)?;
    out.table(&blocks)
}

fn exp_credit(ctx: &Ctx, out: &mut Out) -> Result<()> {
    let ds = &ctx.ds;
    let credit = ds.frame.credit.as_ref().ok_or_else(|| {
        Error::Coverage("BAA10Y series not found; credit branches need it".into())
    })?;
    let (lo, hi) = (ctx.lo, ctx.hi);
    let sel = &ctx.cfg.selector;
    let base = ctx.selected;
    let inc_pool = credit_incremental_grid(&base);
    let rep_pool = credit_replacement_grid(ctx.cost());
    let inc = evaluate(ds, &inc_pool, lo, hi)?;
    let rep = evaluate(ds, &rep_pool, lo, hi)?;
    let (inc_t, inc_rank) = ranked_table("credit_grid_incremental", &inc, None, sel);
    let (rep_t, rep_rank) = ranked_table("credit_grid_replacement", &rep, None, sel);
    out.table(&inc_t)?;
    out.table(&rep_t)?;
    let best_inc = inc[inc_rank[0]].candidate.config;
    let best_rep = rep[rep_rank[0]].candidate.config;
    let core_rep = match best_rep.score {
        ScoreSpec::Replacement { beta, .. } => PolicyConfig {
            score: ScoreSpec::Replacement {
                beta,
                lambda_g: 0.0,
                lambda_rxcs: 0.0,
            },
            ..best_rep
        },
        _ => best_rep,
    };

    let mut rows = vec![
        Row::of(
            ctx.policy(&best_rep, "rep", lo)?,
            "Bond/Credit Smooth Score Best",
        ),
        Row::of(
            ctx.policy(&core_rep, "rep_core", lo)?,
            "Bond/Credit Core Only",
        ),
        Row::of(
            ctx.policy(&best_inc, "inc", lo)?,
            "Old Best + Bond/Credit Incremental",
        ),
        Row::of(
            ctx.policy(&base, "best", lo)?,
            "Existing Smooth Score Best Local",
        ),
    ];
    rows.extend(benchmark_rows(ctx, lo, false, true)?);
    write_rows(out, ctx, "bond_credit_main", lo, &rows)?;

    for (name, oos_lo, with_g) in [
        ("bond_credit_oos", lo + ctx.cfg.train_len, false),
        ("bond_credit_post2022", ctx.post_lo, true),
    ] {
        check_oos_room(ctx, oos_lo)?;
        let mut blocks = blocks_table(&format!("{name}_blocks"));
        let mut rows = wf_rows(ctx, &rep_pool, "Bond/Credit", oos_lo, &mut blocks)?;
        rows.extend(wf_rows(ctx, &inc_pool, "Old+Credit", oos_lo, &mut blocks)?);
        rows.push(Row::of(
            ctx.policy(&base, "best", oos_lo)?,
            "Existing Smooth Score Best Local",
        ));
        rows.push(Row::of(ctx.static_mix(0.5, "50/50", oos_lo)?, "50/50 G/D"));
        if with_g {
            rows.push(Row::of(ctx.static_mix(1.0, "100G", oos_lo)?, "100% G"));
        }
        write_rows(out, ctx, name, oos_lo, &rows)?;
        out.table(&blocks)?;
    }

    let mut h = vec!["cost_bps"];
    h.extend(METRIC_HEADERS);
    let mut ct = Table::new("old_credit_cost", &h);
    for (bps, r) in cost_sensitivity(ds, &best_inc, &ctx.cfg.costs, lo, hi)? {
        let mut row = vec![Cell::Num(Some(bps), 0)];
        row.extend(metrics_row(&format!("{bps}bp"), &r.metrics));
        ct.push(row);
    }
    out.table(&ct)?;

    let f = &ds.frame;
    let cands = [
        GateCandidate {
            name: "r: rate relief".into(),
            signal: &f.dir.r,
            expected_sign: 1.0,
        },
        GateCandidate {
            name: "d: SPY drawdown depth".into(),
            signal: &f.dir.d,
            expected_sign: 1.0,
        },
        GateCandidate {
            name: "g126: G-D trailing 126d".into(),
            signal: &f.dir.g126,
            expected_sign: -1.0,
        },
        GateCandidate {
            name: "ce: credit relief".into(),
            signal: &credit.ce,
            expected_sign: 1.0,
        },
    ];
    let h = ctx.cfg.gate_horizon;
    let (main, inter) =
        gate_regressions(&cands, &ds.gd, h, lo, hi, Some((&credit.rcs_z, &f.dir.r)))?;
    let mut gt = Table::new(
        "gate_main",
        &[
            "variable",
            "n",
            "nw_lags",
            "coef",
            "t_hac",
            "n_nonoverlap",
            "coef_nonoverlap",
            "t_nonoverlap",
            "direction",
            "pass",
        ],
    );
    for (g, c) in main.iter().zip(&cands) {
        gt.push(vec![
            Cell::text(&g.name),
            Cell::Int(g.n as i64),
            Cell::Int(g.hac_lags as i64),
            Cell::pct(g.coef),
            Cell::ratio(Some(g.t_hac)),
            Cell::Int(g.n_nonoverlap as i64),
            Cell::pct(g.coef_nonoverlap),
            Cell::ratio(Some(g.t_nonoverlap)),
            Cell::text(if c.expected_sign > 0.0 {
                "Positive"
            } else {
                "Negative"
            }),
            Cell::text(if g.pass { "Yes" } else { "No" }),
        ]);
    }
    out.table(&gt)?;
    let mut it = Table::new(
        "gate_interaction",
        &["interaction", "variant", "n", "coef", "t_hac"],
    );
    for g in &inter {
        it.push(vec![
            Cell::text("r x cs"),
            Cell::text(&g.variant),
            Cell::Int(g.n as i64),
            Cell::pct(g.coef),
            Cell::ratio(Some(g.t_hac)),
        ]);
    }
    out.table(&it)
}

fn exp_diagnostics(ctx: &Ctx, out: &mut Out) -> Result<()> {
    let ds = &ctx.ds;
    let (lo, hi) = (ctx.lo, ctx.hi);
    let sel = ctx.selected;
    let specs = [
        ("Selected Smooth Score", sel),
        (
            "Matched Core-only",
            matched_policy(MatchedKind::CoreOnly, &sel),
        ),
        (
            "Fixed-Structure 50% Tilt",
            PolicyConfig::fixed_structure(0.5),
        ),
        (
            "Matched TNX-only",
            matched_policy(MatchedKind::TnxOnly, &sel),
        ),
    ];
    let h = ctx.cfg.quintile_horizon;
    let mut q = Table::new(
        "score_diagnostic",
        &[
            "method",
            "horizon",
            "n_obs",
            "q1",
            "q2",
            "q3",
            "q4",
            "q5",
            "q5_minus_q1",
        ],
    );
    let mut selected_z = None;
    for (name, c) in &specs {
        let z = score_series(&ds.frame, &c.score).score_z;
        let r = quintile_diagnostic(&z, &ds.gd, h, lo, hi)?;
        let mut row = vec![
            Cell::text(*name),
            Cell::Int(h as i64),
            Cell::Int(r.n_obs as i64),
        ];
        row.extend(r.means.iter().map(|m| Cell::pct(*m)));
        row.push(Cell::pct(r.spread));
        q.push(row);
        selected_z.get_or_insert(z);
    }
    out.table(&q)?;

    let smooth = ctx.policy(&sel, "selected", lo)?;
    let dates = &ds.dates[lo..=hi];
    let mut series: Vec<(&str, Vec<f64>)> = vec![
        ("selected", smooth.net.clone()),
        ("100% G", ds.g[lo..=hi].to_vec()),
        ("100% D", ds.d[lo..=hi].to_vec()),
        ("50/50 G/D", mix_slices(0.5, &ds.g[lo..=hi], &ds.d[lo..=hi])),
    ];
    if let Ok((spy, _)) = ctx.spy(lo) {
        series.push(("SPY", spy));
    }
    let mut h = vec!["year", "n_days"];
    h.extend(series.iter().map(|s| s.0));
    let mut y = Table::new("yearly", &h);
    let per: Vec<Vec<(i32, f64)>> = series
        .iter()
        .map(|(_, r)| yearly_breakdown(dates, r))
        .collect();
    for (k, (year, _)) in per[0].iter().enumerate() {
        let n = dates.iter().filter(|d| d.year() == *year).count();
        let mut row = vec![Cell::Int(*year as i64), Cell::Int(n as i64)];
        row.extend(per.iter().map(|p| Cell::pct(p[k].1)));
        y.push(row);
    }
    out.table(&y)?;

    let cols = ds.frame.columns();
    let mut h = vec!["date"];
    h.extend(cols.iter().map(|c| c.0));
    h.push("score_z");
    let mut s = Table::new("signals", &h);
    let z = selected_z.expect("selected score");
    for i in 0..ds.dates.len() {
        let mut row = vec![Cell::text(ds.dates[i].to_string())];
        row.extend(cols.iter().map(|c| Cell::Num(c.1[i], 6)));
        row.push(Cell::Num(z[i], 6));
        s.push(row);
    }
    out.table(&s)
}

fn conventions(cfg: &RunConfig) -> BTreeMap<String, String> {
    let sel = cfg.selector;
    [
        ("alpha_annualization", ALPHA_ANNUALIZATION.to_string()),
        ("nw_lag_rule", NW_LAG_RULE.to_string()),
        ("sharpe", SHARPE_CONVENTION.to_string()),
        ("sortino", SORTINO_CONVENTION.to_string()),
        ("turnover", TURNOVER_CONVENTION.to_string()),
        ("z_min_obs", Z_MIN_OBS.to_string()),
        ("change_window", CHANGE_WINDOW.to_string()),
        (
            "vix_percentile",
            format!("inclusive rank over {VIX_PCT_WINDOW} obs, min {VIX_PCT_MIN_OBS}"),
        ),
        ("gd_trailing", format!("compounded over {GD_TRAILING} days")),
        ("softplus_tau", "1.0".to_string()),
        (
            "max_forward_fill",
            format!("{} trading days", crate::market_data::DEFAULT_MAX_GAP),
        ),
        (
            "selector_weights",
            format!(
                "sharpe={} calmar={} cagr={} neg_abs_maxdd={} neg_turnover={}",
                sel.sharpe, sel.calmar, sel.cagr, sel.maxdd, sel.turnover
            ),
        ),
        (
            "selector_missing_metric",
            "neutral (cross-config z = 0)".to_string(),
        ),
        (
            "execution",
            "weight formed at close t applied on t+1; cost 2|dw|*bps/1e4".to_string(),
        ),
        (
            "walk_forward_state",
            "EWMA state carried from incumbent weight across config changes".to_string(),
        ),
        (
            "excess_convention",
            "linear: mean daily difference * 252".to_string(),
        ),
        ("gate_hac_lags", "horizon + 5".to_string()),
        ("quintile_horizon", cfg.quintile_horizon.to_string()),
        ("gate_horizon", cfg.gate_horizon.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Runs the configured experiments and writes every artifact plus
/// `manifest.json` under `out_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let experiment = cfg.experiment()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let universe = Universe::default();
    let (data_dir, data_source) = if cfg.synthetic {
        let dir = cfg.out_dir.join("synthetic_data");
        synth_data(&dir, cfg.seed, &cfg.synth, &universe)?;
        (dir, format!("synthetic (seed {})", cfg.seed))
    } else {
        let dir = cfg.data_dir.clone().expect("validated");
        (dir.clone(), format!("directory {}", dir.display()))
    };
    let ds = Dataset::load(&data_dir, &universe)?;
    let checksums: BTreeMap<String, String> = ds.checksums.iter().cloned().collect();
    let ctx = Ctx::build(cfg, ds)?;

    let mut windows = BTreeMap::new();
    windows.insert("main".to_string(), ctx.window_label(ctx.lo));
    windows.insert(
        "oos".to_string(),
        ctx.window_label((ctx.lo + cfg.train_len).min(ctx.hi)),
    );
    windows.insert("post".to_string(), ctx.window_label(ctx.post_lo));
    windows.insert(
        "attribution".to_string(),
        format!("{}:{}", ctx.attribution.0, ctx.attribution.1),
    );
    windows.insert(
        "first_feasible".to_string(),
        ctx.ds.dates[ctx.ds.first_feasible()?].to_string(),
    );

    let mut files = Vec::new();
    let mut run_names = Vec::new();
    let mut skipped = BTreeMap::new();
    let expanded = experiment.expand();
    for e in &expanded {
        let dir = cfg.out_dir.join(e.name());
        std::fs::create_dir_all(&dir)?;
        let mut out = Out {
            dir,
            files: Vec::new(),
        };
        let res = match e {
            Experiment::Attribution => exp_attribution(&ctx, &mut out),
            Experiment::Tilt => exp_tilt(&ctx, &mut out),
            Experiment::Grid => exp_grid(&ctx, &mut out),
            Experiment::Benchmarks => exp_benchmarks(&ctx, &mut out),
            Experiment::Volmatch => exp_volmatch(&ctx, &mut out),
            Experiment::Walkforward => {
                exp_validation(&ctx, &mut out, "oos", ctx.lo + cfg.train_len)
            }
            Experiment::Post2022 => exp_validation(&ctx, &mut out, "post2022", ctx.post_lo),
            Experiment::Credit => exp_credit(&ctx, &mut out),
            Experiment::Diagnostics => exp_diagnostics(&ctx, &mut out),
            Experiment::All => unreachable!(),
        };
        match res {
            Ok(()) => {
                run_names.push(e.name().to_string());
                files.extend(out.files);
            }
            // Under `all`, optional inputs (factors, BAA10Y) may be absent.
            Err(Error::Coverage(msg)) if expanded.len() > 1 => {
                skipped.insert(e.name().to_string(), msg);
            }
            Err(err) => return Err(err),
        }
    }

    let mut outputs: Vec<String> = files
        .iter()
        .map(|p| -> Result<String> {
            let bytes = std::fs::read(p)?;
            Ok(format!(
                "{} {}",
                relative(&cfg.out_dir, p),
                sha256_hex(&bytes)
            ))
        })
        .collect::<Result<_>>()?;
    outputs.sort();

    // The manifest sits in out_dir; echo it as `.` so artifacts do not
    // depend on where the run was written.
    let mut echo = cfg.clone();
    echo.out_dir = PathBuf::from(".");
    let manifest = RunManifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: echo,
        data_source,
        data_checksums: checksums,
        conventions: conventions(cfg),
        windows,
        experiments_run: run_names,
        skipped,
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(cfg.out_dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}
