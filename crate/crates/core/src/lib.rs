//! Mean-reverting portfolio design over a basket of spreads.
//!
//! The design minimizes the lag-`p` portmanteau statistic of the portfolio
//! spread subject to a fixed variance level and a unit budget. The quartic
//! objective is handled by majorization-minimization: every iteration solves a
//! generalized trust region subproblem exactly through its secular equation.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below fix the common double-precision case.

// `!(x > 0)` is the intended test: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod gtrs;
pub mod irgtrs;
mod linalg;
pub mod market;
pub mod moments;
pub mod scalar;

pub use backtest::{
    calibrate_rule, evaluate, replay, rolling_windows, sharpe_ratio, simulate_positions, trades,
    BacktestReport, PositionSeries, Trade, TradingRule, Transition, Window,
};
pub use datagen::{
    asset_weights, build_spreads, generate_market, CointSpec, HedgeMode, Mix, SyntheticMarket,
};
pub use error::{MrpError, Result};
pub use experiment::{
    design, run_experiment, run_window, summarize, trade_spread, Design, ExperimentSettings,
    NuRule, StrategyRun, StrategySummary, WindowOutcome,
};
pub use gtrs::{min_gen_eig, phi, solve_gtrs, GtrsProblem, GtrsSolution};
pub use irgtrs::{
    affine_reduction, build_majorizer, feasible_init, kkt_residual, reduce_to_gtrs, solve_mrp,
    solve_mrp_whitened, AffineReduction, MrpConfig, MrpResult,
};
pub use market::{make_spreads, LogPriceMatrix, PriceScale, SpreadPanel};
pub use moments::{
    estimate_moments, lag_objective, portmanteau, psi_bound, whiten, LagMoments, PsiMode,
    WhitenedMoments,
};
pub use scalar::Scalar;

pub type ExperimentSettingsF64 = ExperimentSettings<f64>;
pub type WindowOutcomeF64 = WindowOutcome<f64>;
pub type TradingRuleF64 = TradingRule<f64>;
pub type BacktestReportF64 = BacktestReport<f64>;
pub type SyntheticMarketF64 = SyntheticMarket<f64>;
pub type LogPriceMatrixF64 = LogPriceMatrix<f64>;
pub type SpreadPanelF64 = SpreadPanel<f64>;
pub type LagMomentsF64 = LagMoments<f64>;
pub type WhitenedMomentsF64 = WhitenedMoments<f64>;
pub type GtrsProblemF64 = GtrsProblem<f64>;
pub type GtrsSolutionF64 = GtrsSolution<f64>;
pub type MrpConfigF64 = MrpConfig<f64>;
pub type MrpResultF64 = MrpResult<f64>;
pub type AffineReductionF64 = AffineReduction<f64>;
