//! The rolling-window experiment: design the portfolio on each training
//! segment, trade it on the following segment, and trade every single spread
//! alongside it with its own calibrated rule.

use std::ops::Range;

use nalgebra::DVector;

use crate::backtest::{
    calibrate_rule, evaluate, rolling_windows, simulate_positions, BacktestReport, PositionSeries,
    TradingRule, Window,
};
use crate::datagen::asset_weights;
use crate::error::{MrpError, Result};
use crate::irgtrs::{affine_reduction, min_variance_level, solve_mrp, MrpConfig, MrpResult};
use crate::market::SpreadPanel;
use crate::moments::{estimate_moments, portmanteau, LagMoments};
use crate::scalar::Scalar;

/// How the variance level is set for a training segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuRule<T: Scalar> {
    Fixed(T),
    /// Mean of the single-spread variances `diag(M0)`: the portfolio carries the
    /// risk of an average spread.
    MeanSpreadVariance,
}

impl<T: Scalar> NuRule<T> {
    pub fn level(&self, moments: &LagMoments<T>) -> T {
        match *self {
            NuRule::Fixed(nu) => nu,
            NuRule::MeanSpreadVariance => moments.m0().diagonal().mean(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings<T: Scalar> {
    /// Solver settings; `mrp.nu` is replaced per window by `nu_rule`.
    pub mrp: MrpConfig<T>,
    pub nu_rule: NuRule<T>,
    pub t_in: usize,
    pub t_out: usize,
    pub windows: usize,
    /// Also trade every single spread.
    pub singles: bool,
    pub parallel_windows: bool,
}

impl<T: Scalar> ExperimentSettings<T> {
    /// Lag order 3, two windows of 264 training and 132 trading samples.
    pub fn standard_layout() -> Self {
        Self {
            mrp: MrpConfig::new(3, T::one()),
            nu_rule: NuRule::MeanSpreadVariance,
            t_in: 264,
            t_out: 132,
            windows: 2,
            singles: true,
            parallel_windows: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Design<T: Scalar> {
    pub train: Range<usize>,
    pub moments: LagMoments<T>,
    pub nu: T,
    pub nu_min: T,
    pub result: MrpResult<T>,
    /// Asset exposure of the designed portfolio.
    pub w_p: DVector<T>,
    /// Portmanteau statistic of the design and of each unit spread, in sample.
    pub portmanteau: T,
    pub single_portmanteau: Vec<T>,
}

/// Estimates the lag moments on `train` and solves the design problem there.
pub fn design<T: Scalar>(
    panel: &SpreadPanel<T>,
    train: Range<usize>,
    cfg: &MrpConfig<T>,
    nu_rule: NuRule<T>,
) -> Result<Design<T>> {
    let segment = panel.slice(train.clone())?;
    let moments = estimate_moments(&segment, cfg.p)?;
    let n = moments.dim();
    let nu = nu_rule.level(&moments);
    let nu_min = min_variance_level(moments.m0(), &affine_reduction(n)?)?;
    let mut cfg = cfg.clone();
    cfg.nu = nu;
    let result = solve_mrp(&moments, &cfg)?;
    let w_p = asset_weights(panel.hedge(), &result.w)?;
    let por = portmanteau(&result.w, &moments)?;
    let single_portmanteau = (0..n)
        .map(|k| {
            portmanteau(
                &DVector::from_fn(n, |i, _| if i == k { T::one() } else { T::zero() }),
                &moments,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Design {
        train,
        moments,
        nu,
        nu_min,
        result,
        w_p,
        portmanteau: por,
        single_portmanteau,
    })
}

#[derive(Debug, Clone)]
pub struct StrategyRun<T: Scalar> {
    pub name: String,
    pub rule: TradingRule<T>,
    /// Spread traded over the trading segment.
    pub z: Vec<T>,
    pub positions: PositionSeries,
    pub report: BacktestReport<T>,
}

/// Calibrates on `z_train`, trades `z_trade` with the final position forced flat.
pub fn trade_spread<T: Scalar>(
    name: impl Into<String>,
    z_train: &[T],
    z_trade: Vec<T>,
    gross_exposure: T,
    window_id: usize,
) -> Result<StrategyRun<T>> {
    let rule = calibrate_rule(z_train)?;
    let positions = simulate_positions(&z_trade, &rule).forced_flat_at_end();
    let report = evaluate(&z_trade, &positions, gross_exposure, window_id)?;
    Ok(StrategyRun {
        name: name.into(),
        rule,
        z: z_trade,
        positions,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct WindowOutcome<T: Scalar> {
    pub window: Window,
    pub design: Design<T>,
    pub mrp: StrategyRun<T>,
    pub singles: Vec<StrategyRun<T>>,
}

pub const MRP_NAME: &str = "mrp";

pub fn single_name(k: usize) -> String {
    format!("spread{}", k + 1)
}

pub fn run_window<T: Scalar>(
    panel: &SpreadPanel<T>,
    window: &Window,
    settings: &ExperimentSettings<T>,
) -> Result<WindowOutcome<T>> {
    let design = design(panel, window.train.clone(), &settings.mrp, settings.nu_rule)?;
    let z = panel.combine(&design.result.w)?;
    let z = z.as_slice();
    let gross = design.w_p.lp_norm(1);
    let mrp = trade_spread(
        MRP_NAME,
        &z[window.train.clone()],
        z[window.trade.clone()].to_vec(),
        gross,
        window.id,
    )?;
    let mut singles = Vec::new();
    if settings.singles {
        for k in 0..panel.n_spreads() {
            let col = panel.values().column(k);
            let s = col.as_slice();
            let gross = panel
                .hedge()
                .row(k)
                .iter()
                .fold(T::zero(), |a, h| a + h.abs());
            singles.push(trade_spread(
                single_name(k),
                &s[window.train.clone()],
                s[window.trade.clone()].to_vec(),
                gross,
                window.id,
            )?);
        }
    }
    Ok(WindowOutcome {
        window: window.clone(),
        design,
        mrp,
        singles,
    })
}

/// Runs every window, optionally on scoped threads. Results are in window order
/// either way, so outputs do not depend on scheduling.
pub fn run_experiment<T: Scalar + Send + Sync>(
    panel: &SpreadPanel<T>,
    settings: &ExperimentSettings<T>,
) -> Result<Vec<WindowOutcome<T>>> {
    settings.mrp.validate()?;
    let windows = rolling_windows(
        panel.n_samples(),
        settings.t_in,
        settings.t_out,
        settings.windows,
    )?;
    if settings.parallel_windows {
        std::thread::scope(|scope| {
            let handles: Vec<_> = windows
                .iter()
                .map(|w| scope.spawn(move || run_window(panel, w, settings)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Err(MrpError::Numerical("window worker panicked".into()))
                    })
                })
                .collect()
        })
    } else {
        windows
            .iter()
            .map(|w| run_window(panel, w, settings))
            .collect()
    }
}

/// Per-strategy totals across windows.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary<T: Scalar> {
    pub name: String,
    /// Sum of the final cumulative P&L of every window.
    pub total_pnl: T,
    /// Sharpe ratio of the ROI series of all windows joined in time order.
    pub sharpe: Option<T>,
    pub window_sharpe: Vec<Option<T>>,
}

pub fn summarize<T: Scalar>(outcomes: &[WindowOutcome<T>]) -> Vec<StrategySummary<T>> {
    let mut names = vec![MRP_NAME.to_owned()];
    if let Some(first) = outcomes.first() {
        names.extend(first.singles.iter().map(|s| s.name.clone()));
    }
    names
        .into_iter()
        .map(|name| {
            let runs: Vec<&StrategyRun<T>> = outcomes
                .iter()
                .filter_map(|o| {
                    if name == MRP_NAME {
                        Some(&o.mrp)
                    } else {
                        o.singles.iter().find(|s| s.name == name)
                    }
                })
                .collect();
            let roi: Vec<T> = runs
                .iter()
                .flat_map(|r| r.report.roi.iter().copied())
                .collect();
            StrategySummary {
                total_pnl: runs.iter().fold(T::zero(), |a, r| a + r.report.final_pnl()),
                sharpe: crate::backtest::sharpe_ratio(&roi).ok(),
                window_sharpe: runs.iter().map(|r| r.report.sharpe).collect(),
                name,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_spreads, generate_market, CointSpec, HedgeMode};

    fn panel(seed: u64) -> SpreadPanel<f64> {
        let mkt = generate_market::<f64>(&CointSpec::with_seed(seed)).unwrap();
        build_spreads(&mkt, HedgeMode::TrueBeta).unwrap()
    }

    #[test]
    fn standard_layout_runs_two_windows() {
        let out = run_experiment(&panel(1), &ExperimentSettings::standard_layout()).unwrap();
        assert_eq!(out.len(), 2);
        for o in &out {
            assert_eq!(o.singles.len(), 5);
            assert_eq!(o.mrp.z.len(), 132);
            assert_eq!(*o.mrp.positions.positions.last().unwrap(), 0);
            assert!(o.design.result.converged);
            assert!(o.design.nu >= o.design.nu_min);
            let w = &o.design.result.w;
            assert!((w.sum() - 1.0).abs() < 1e-8);
        }
        let summary = summarize(&out);
        assert_eq!(summary.len(), 6);
        assert_eq!(summary[0].name, MRP_NAME);
        let total: f64 = out.iter().map(|o| o.mrp.report.final_pnl()).sum();
        assert!((summary[0].total_pnl - total).abs() < 1e-15);
    }

    #[test]
    fn parallel_windows_match_sequential() {
        let p = panel(2);
        let mut settings = ExperimentSettings::standard_layout();
        let seq = run_experiment(&p, &settings).unwrap();
        settings.parallel_windows = true;
        let par = run_experiment(&p, &settings).unwrap();
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.design.result.w, b.design.result.w);
            assert_eq!(a.mrp.report, b.mrp.report);
        }
    }

    #[test]
    fn mrp_only_summary() {
        let mut settings = ExperimentSettings::standard_layout();
        settings.singles = false;
        let out = run_experiment(&panel(3), &settings).unwrap();
        assert_eq!(summarize(&out).len(), 1);
    }

    #[test]
    fn fixed_level_below_the_floor_is_infeasible() {
        let p = panel(4);
        let err = design(&p, 0..264, &MrpConfig::new(3, 1.0), NuRule::Fixed(1e-12)).unwrap_err();
        assert!(matches!(err, MrpError::Infeasible { .. }));
    }

    #[test]
    fn design_weights_map_to_assets() {
        let p = panel(5);
        let d = design(
            &p,
            0..264,
            &MrpConfig::new(3, 1.0),
            NuRule::MeanSpreadVariance,
        )
        .unwrap();
        let z_spreads = p.combine(&d.result.w).unwrap();
        // z computed from spreads equals w_p applied to the asset prices.
        let mkt = generate_market::<f64>(&CointSpec::with_seed(5)).unwrap();
        let z_assets = mkt.prices.values() * &d.w_p;
        assert!((z_spreads - z_assets).amax() < 1e-12);
    }
}
