use std::ops::Range;
use std::path::{Path, PathBuf};

use mrp_core::experiment::{single_name, MRP_NAME};
use mrp_core::{
    build_spreads, design, estimate_moments, generate_market, make_spreads, rolling_windows,
    run_experiment, summarize, trade_spread, CointSpec, Design, ExperimentSettings, HedgeMode,
    LogPriceMatrix, NuRule, SpreadPanel, StrategyRun, WindowOutcome,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{ensure_dir, write_json, write_text, LongCsv, Metadata};

const DEFAULT_TIN: usize = 264;

/// Asset prices and the spreads built from them.
pub struct Data {
    pub prices: LogPriceMatrix<f64>,
    pub panel: SpreadPanel<f64>,
    pub source: &'static str,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BetaSidecar {
    pub metadata: Value,
    pub spec: CointSpec,
    pub seed: u64,
    pub rng: String,
    /// `r x M`, one hedge vector per row.
    pub beta: Vec<Vec<f64>>,
}

fn spec_of(cfg: &RunConfig) -> Result<CointSpec, CliError> {
    let spec = CointSpec::sized(cfg.assets, cfg.rank, cfg.samples, cfg.seed);
    spec.validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(spec)
}

fn read_beta(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("bad JSON in {}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = serde_json::from_value(doc["beta"].clone())
        .map_err(|e| CliError::data(format!("{}: `beta` is not a matrix: {e}", path.display())))?;
    let m = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::data(format!(
            "{}: `beta` must be a non-empty rectangular matrix",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
}

/// Reads `--input` (with `--beta` if given), or simulates the market.
pub fn load_data(cfg: &RunConfig) -> Result<Data, CliError> {
    match &cfg.input {
        Some(path) => {
            let prices = LogPriceMatrix::load_csv(path, cfg.scale())?;
            let hedge = match &cfg.beta {
                Some(b) => read_beta(b)?,
                None => DMatrix::identity(prices.n_assets(), prices.n_assets()),
            };
            let panel = make_spreads(&prices, &hedge)?;
            Ok(Data {
                prices,
                panel,
                source: "csv",
            })
        }
        None => {
            let market = generate_market::<f64>(&spec_of(cfg)?)?;
            let mode = if cfg.hedge_sd > 0.0 {
                HedgeMode::Perturbed { sd: cfg.hedge_sd }
            } else {
                HedgeMode::TrueBeta
            };
            let panel = build_spreads(&market, mode)?;
            Ok(Data {
                prices: market.prices,
                panel,
                source: "simulated",
            })
        }
    }
}

fn nu_rule(cfg: &RunConfig) -> NuRule<f64> {
    cfg.nu.map_or(NuRule::MeanSpreadVariance, NuRule::Fixed)
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

fn range_json(r: &Range<usize>) -> Value {
    json!([r.start, r.end])
}

fn status(files: &[PathBuf], extra: Value) -> Value {
    let mut doc =
        json!({ "written": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() });
    if let Value::Object(map) = extra {
        doc.as_object_mut().expect("object").extend(map);
    }
    doc
}

pub fn generate(cfg: &RunConfig) -> Result<Value, CliError> {
    let spec = spec_of(cfg)?;
    let market = generate_market::<f64>(&spec)?;
    let meta = Metadata::new(cfg);
    ensure_dir(&cfg.out)?;

    let mut csv = Vec::new();
    market.prices.write_csv(&mut csv)?;
    let prices_path = write_text(
        &cfg.out.join("prices.csv"),
        &(meta.csv_line() + &String::from_utf8(csv).expect("csv is utf-8")),
    )?;
    let sidecar = BetaSidecar {
        metadata: serde_json::to_value(&meta).expect("metadata serializes"),
        seed: spec.seed,
        rng: meta.rng.to_owned(),
        beta: market
            .beta
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        spec,
    };
    let beta_path = write_json(&cfg.out.join("market.json"), &sidecar)?;

    // Variance floor of the true spreads on the first training window.
    let guidance = if market.beta.nrows() >= 2 {
        let panel = build_spreads(&market, HedgeMode::TrueBeta)?;
        let tin = cfg.tin.unwrap_or(DEFAULT_TIN).min(panel.n_samples());
        let d = design_floor(&panel, 0..tin, cfg.p)?;
        json!({ "tin": tin, "p": cfg.p, "nu_min": d.0, "nu_default": d.1 })
    } else {
        Value::Null
    };
    Ok(status(
        &[prices_path, beta_path],
        json!({ "guidance": guidance }),
    ))
}

/// `(nu_min, default nu)` of the spreads on `train`.
fn design_floor(
    panel: &SpreadPanel<f64>,
    train: Range<usize>,
    p: usize,
) -> Result<(f64, f64), CliError> {
    let moments = estimate_moments(&panel.slice(train)?, p)?;
    let n = moments.dim();
    let nu_min =
        mrp_core::irgtrs::min_variance_level(moments.m0(), &mrp_core::affine_reduction(n)?)?;
    Ok((nu_min, NuRule::MeanSpreadVariance.level(&moments)))
}

fn design_json(d: &Design<f64>) -> Value {
    let r = &d.result;
    json!({
        "train": range_json(&d.train),
        "nu": d.nu,
        "nu_min": d.nu_min,
        "w": vec_of(&r.w),
        "w_p": vec_of(&d.w_p),
        "objective": r.objective(),
        "initial_objective": r.initial_objective,
        "objective_trace": r.objective_trace,
        "iterations": r.iterations,
        "converged": r.converged,
        "kkt_residual": r.kkt_residual,
        "psi": r.psi,
        "start_index": r.start_index,
        "portmanteau": d.portmanteau,
        "single_portmanteau": d.single_portmanteau,
    })
}

fn not_converged(d: &Design<f64>, window: Option<usize>) -> CliError {
    let r = &d.result;
    let at = window.map_or(String::new(), |w| format!(" in window {w}"));
    CliError::not_converged(
        format!(
            "MM iteration did not converge{at} after {} iterations",
            r.iterations
        ),
        json!({
            "window": window,
            "iterations": r.iterations,
            "objective": r.objective(),
            "kkt_residual": r.kkt_residual,
        }),
    )
}

pub fn design_cmd(cfg: &RunConfig) -> Result<Value, CliError> {
    let data = load_data(cfg)?;
    let tin = cfg.tin.unwrap_or(data.panel.n_samples());
    if tin > data.panel.n_samples() {
        return Err(CliError::data(format!(
            "--tin {tin} exceeds the {} available rows",
            data.panel.n_samples()
        )));
    }
    let d = design(&data.panel, 0..tin, &cfg.mrp(), nu_rule(cfg))?;
    let meta = Metadata::new(cfg);
    let mut doc = json!({ "metadata": meta, "config": cfg });
    doc.as_object_mut()
        .expect("object")
        .extend(design_json(&d).as_object().expect("object").clone());
    let path = write_json(&cfg.out.join("design.json"), &doc)?;
    if !d.result.converged {
        return Err(not_converged(&d, None));
    }
    Ok(status(
        &[path],
        json!({ "objective": d.result.objective(), "portmanteau": d.portmanteau }),
    ))
}

fn run_json(run: &StrategyRun<f64>, train: &Range<usize>, trade: &Range<usize>) -> Value {
    let rep = &run.report;
    json!({
        "window_id": rep.window_id,
        "train": range_json(train),
        "trade": range_json(trade),
        "rule": { "mu": run.rule.mu, "delta": run.rule.delta, "sd": run.rule.sd },
        "gross_exposure": rep.gross_exposure,
        "final_pnl": rep.final_pnl(),
        "sharpe": rep.sharpe,
        "positions": run.positions.positions,
        "transitions": run.positions.transitions.iter()
            .map(|t| json!({ "t": t.t, "from": t.from, "to": t.to }))
            .collect::<Vec<_>>(),
        "pnl": rep.pnl,
        "cum_pnl": rep.cum_pnl,
        "roi": rep.roi,
    })
}

/// Per-period trading series of one strategy. P&L fields are empty at the first
/// period of each window, which has no prior position.
fn runs_csv<'a>(
    meta: &Metadata,
    runs: impl IntoIterator<Item = (&'a Range<usize>, &'a StrategyRun<f64>)>,
) -> String {
    let mut csv = LongCsv::new(
        meta,
        &["window", "t", "z", "position", "pnl", "cum_pnl", "roi"],
    );
    for (trade, run) in runs {
        let rep = &run.report;
        for (i, (z, pos)) in run.z.iter().zip(&run.positions.positions).enumerate() {
            let t = trade.start + i;
            if i == 0 {
                csv.row(&[&rep.window_id, &t, z, pos, &"", &"", &""]);
            } else {
                csv.row(&[
                    &rep.window_id,
                    &t,
                    z,
                    pos,
                    &rep.pnl[i - 1],
                    &rep.cum_pnl[i - 1],
                    &rep.roi[i - 1],
                ]);
            }
        }
    }
    csv.finish()
}

fn read_weights(path: &Path) -> Result<DVector<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("bad JSON in {}: {e}", path.display())))?;
    let w: Vec<f64> = serde_json::from_value(doc["w"].clone())
        .map_err(|e| CliError::data(format!("{}: `w` is not a vector: {e}", path.display())))?;
    Ok(DVector::from_vec(w))
}

pub fn backtest(cfg: &RunConfig) -> Result<Value, CliError> {
    let path = cfg
        .weights
        .as_ref()
        .ok_or_else(|| CliError::usage("backtest needs --weights (a design JSON)"))?;
    let w = read_weights(path)?;
    let data = load_data(cfg)?;
    let z = data.panel.combine(&w)?;
    let w_p = mrp_core::asset_weights(data.panel.hedge(), &w)?;
    let gross = w_p.lp_norm(1);
    let windows = rolling_windows(
        data.panel.n_samples(),
        cfg.tin.unwrap_or(DEFAULT_TIN),
        cfg.tout,
        cfg.windows,
    )?;
    let z = z.as_slice();
    let runs = windows
        .iter()
        .map(|win| {
            trade_spread(
                MRP_NAME,
                &z[win.train.clone()],
                z[win.trade.clone()].to_vec(),
                gross,
                win.id,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<Value> = windows
        .iter()
        .zip(&runs)
        .map(|(win, run)| run_json(run, &win.train, &win.trade))
        .collect();
    let meta = Metadata::new(cfg);
    let series = runs_csv(&meta, windows.iter().map(|w| &w.trade).zip(&runs));
    let doc = json!({
        "metadata": meta,
        "config": cfg,
        "w": vec_of(&w),
        "w_p": vec_of(&w_p),
        "windows": reports,
    });
    let json_path = write_json(&cfg.out.join("backtest.json"), &doc)?;
    let csv_path = write_text(&cfg.out.join("backtest.csv"), &series)?;
    Ok(status(&[json_path, csv_path], Value::Null))
}

pub fn experiment(cfg: &RunConfig) -> Result<Value, CliError> {
    let data = load_data(cfg)?;
    let settings = ExperimentSettings {
        mrp: cfg.mrp(),
        nu_rule: nu_rule(cfg),
        t_in: cfg.tin.unwrap_or(DEFAULT_TIN),
        t_out: cfg.tout,
        windows: cfg.windows,
        singles: !cfg.mrp_only,
        parallel_windows: cfg.parallel_windows,
    };
    let outcomes = run_experiment(&data.panel, &settings)?;
    let meta = Metadata::new(cfg);
    ensure_dir(&cfg.out)?;
    let mut files = vec![write_json(
        &cfg.out.join("summary.json"),
        &summary_json(cfg, &data, &outcomes, &meta),
    )?];
    files.extend(write_reports(cfg, &outcomes, &meta)?);
    files.push(write_text(
        &cfg.out.join("series.csv"),
        &series_csv(&data, &outcomes, &meta),
    )?);
    files.push(write_text(
        &cfg.out.join("weights.csv"),
        &weights_csv(&data, &outcomes, &meta),
    )?);
    files.push(write_text(
        &cfg.out.join("metrics.csv"),
        &metrics_csv(&outcomes, &meta),
    )?);
    if let Some(o) = outcomes.iter().find(|o| !o.design.result.converged) {
        return Err(not_converged(&o.design, Some(o.window.id)));
    }
    Ok(status(&files, Value::Null))
}

fn summary_json(
    cfg: &RunConfig,
    data: &Data,
    outcomes: &[WindowOutcome<f64>],
    meta: &Metadata,
) -> Value {
    let strategies: Vec<Value> = summarize(outcomes)
        .into_iter()
        .map(|s| {
            json!({
                "strategy": s.name,
                "total_pnl": s.total_pnl,
                "sharpe": s.sharpe,
                "window_sharpe": s.window_sharpe,
            })
        })
        .collect();
    let windows: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            let mut v = design_json(&o.design);
            let map = v.as_object_mut().expect("object");
            map.remove("objective_trace");
            map.insert("id".into(), json!(o.window.id));
            map.insert("trade".into(), range_json(&o.window.trade));
            v
        })
        .collect();
    json!({
        "metadata": meta,
        "config": cfg,
        "data": {
            "source": data.source,
            "assets": data.prices.asset_names(),
            "spreads": data.panel.n_spreads(),
            "samples": data.panel.n_samples(),
        },
        "strategies": strategies,
        "prior_method": {
            "name": "existing MRP by portmanteau (semidefinite relaxation)",
            "available": false,
            "reason": "the prior relaxation method is not implemented; no approximation is reported",
        },
        "windows": windows,
    })
}

fn strategy_runs<'a>(
    outcomes: &'a [WindowOutcome<f64>],
    name: &str,
) -> Vec<(&'a WindowOutcome<f64>, &'a StrategyRun<f64>)> {
    outcomes
        .iter()
        .filter_map(|o| {
            let run = if name == MRP_NAME {
                Some(&o.mrp)
            } else {
                o.singles.iter().find(|s| s.name == name)
            };
            run.map(|r| (o, r))
        })
        .collect()
}

fn strategy_names(outcomes: &[WindowOutcome<f64>]) -> Vec<String> {
    let mut names = vec![MRP_NAME.to_owned()];
    if let Some(o) = outcomes.first() {
        names.extend(o.singles.iter().map(|s| s.name.clone()));
    }
    names
}

/// `reports/<strategy>.json` and `reports/<strategy>.csv` for every strategy.
fn write_reports(
    cfg: &RunConfig,
    outcomes: &[WindowOutcome<f64>],
    meta: &Metadata,
) -> Result<Vec<PathBuf>, CliError> {
    let dir = cfg.out.join("reports");
    let mut files = Vec::new();
    for name in strategy_names(outcomes) {
        let runs = strategy_runs(outcomes, &name);
        let windows: Vec<Value> = runs
            .iter()
            .map(|(o, r)| run_json(r, &o.window.train, &o.window.trade))
            .collect();
        let doc = json!({ "metadata": meta, "strategy": name, "windows": windows });
        files.push(write_json(&dir.join(format!("{name}.json")), &doc)?);
        let series = runs_csv(meta, runs.iter().map(|(o, r)| (&o.window.trade, *r)));
        files.push(write_text(&dir.join(format!("{name}.csv")), &series)?);
    }
    Ok(files)
}

/// Price-side plot data: log-prices, spreads, each window's portfolio spread
/// and every strategy's positions.
fn series_csv(data: &Data, outcomes: &[WindowOutcome<f64>], meta: &Metadata) -> String {
    let mut csv = LongCsv::new(meta, &["window", "t", "series", "value"]);
    for (j, name) in data.prices.asset_names().iter().enumerate() {
        let series = format!("logprice:{name}");
        for (t, v) in data.prices.values().column(j).iter().enumerate() {
            csv.row(&[&"", &t, &series, v]);
        }
    }
    for k in 0..data.panel.n_spreads() {
        let series = format!("spread:{}", single_name(k));
        for (t, v) in data.panel.values().column(k).iter().enumerate() {
            csv.row(&[&"", &t, &series, v]);
        }
    }
    for o in outcomes {
        let z = data
            .panel
            .combine(&o.design.result.w)
            .expect("weights match the panel");
        for t in o.window.train.start..o.window.trade.end {
            csv.row(&[&o.window.id, &t, &"mrp_spread", &z[t]]);
        }
        for run in std::iter::once(&o.mrp).chain(&o.singles) {
            let series = format!("position:{}", run.name);
            for (i, pos) in run.positions.positions.iter().enumerate() {
                csv.row(&[&o.window.id, &(o.window.trade.start + i), &series, pos]);
            }
        }
    }
    csv.finish()
}

fn weights_csv(data: &Data, outcomes: &[WindowOutcome<f64>], meta: &Metadata) -> String {
    let mut csv = LongCsv::new(meta, &["window", "kind", "name", "value"]);
    for o in outcomes {
        for (k, v) in o.design.result.w.iter().enumerate() {
            csv.row(&[&o.window.id, &"w", &single_name(k), v]);
        }
        for (name, v) in data.prices.asset_names().iter().zip(o.design.w_p.iter()) {
            csv.row(&[&o.window.id, &"w_p", name, v]);
        }
    }
    csv.finish()
}

/// Trading plot data; `t` is the end of each period.
fn metrics_csv(outcomes: &[WindowOutcome<f64>], meta: &Metadata) -> String {
    let mut csv = LongCsv::new(meta, &["window", "strategy", "t", "pnl", "cum_pnl", "roi"]);
    for name in strategy_names(outcomes) {
        for (o, run) in strategy_runs(outcomes, &name) {
            let rep = &run.report;
            for i in 0..rep.pnl.len() {
                let t = o.window.trade.start + i + 1;
                csv.row(&[
                    &o.window.id,
                    &name,
                    &t,
                    &rep.pnl[i],
                    &rep.cum_pnl[i],
                    &rep.roi[i],
                ]);
            }
        }
    }
    csv.finish()
}
