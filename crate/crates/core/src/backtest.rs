//! Threshold trading of a spread: in-sample calibration, the three-state
//! position machine, and P&L / ROI / Sharpe accounting over rolling windows.
//!
//! Positions are encoded `1` long, `0` flat, `-1` short. The position chosen at
//! `t` is held over `(t, t + 1]`, so it earns `z_{t+1} - z_t`.

use std::ops::Range;

use crate::error::{MrpError, Result};
use crate::scalar::Scalar;

/// Threshold as a multiple of the in-sample standard deviation.
pub const DELTA_FACTOR: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradingRule<T: Scalar> {
    /// Long-run mean of the spread.
    pub mu: T,
    pub delta: T,
    /// Sample standard deviation of the training spread.
    pub sd: T,
}

impl<T: Scalar> TradingRule<T> {
    /// Next position given the current one and the observed spread value.
    pub fn step(&self, pos: i8, z: T) -> i8 {
        let upper = self.mu + self.delta;
        let lower = self.mu - self.delta;
        match pos {
            0 if z <= lower => 1,
            0 if z >= upper => -1,
            1 if z >= upper => -1,
            1 if z >= self.mu => 0,
            -1 if z <= lower => 1,
            -1 if z <= self.mu => 0,
            held => held,
        }
    }
}

fn mean_sd<T: Scalar>(x: &[T]) -> (T, T) {
    let n = T::lit(x.len() as f64);
    let mean = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    let ss = x
        .iter()
        .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    (mean, (ss / (n - T::one())).sqrt())
}

pub fn calibrate_rule<T: Scalar>(z_train: &[T]) -> Result<TradingRule<T>> {
    if z_train.len() < 2 {
        return Err(MrpError::InsufficientLength {
            len: z_train.len(),
            needed: 2,
        });
    }
    let (mu, sd) = mean_sd(z_train);
    if !(sd > T::zero()) {
        return Err(MrpError::ZeroVariance);
    }
    Ok(TradingRule {
        mu,
        delta: T::lit(DELTA_FACTOR) * sd,
        sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub t: usize,
    pub from: i8,
    pub to: i8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionSeries {
    pub positions: Vec<i8>,
    /// Every change of position, in time order.
    pub transitions: Vec<Transition>,
}

impl PositionSeries {
    pub fn from_positions(positions: Vec<i8>) -> Self {
        let mut transitions = Vec::new();
        let mut prev = 0;
        for (t, &p) in positions.iter().enumerate() {
            if p != prev {
                transitions.push(Transition {
                    t,
                    from: prev,
                    to: p,
                });
            }
            prev = p;
        }
        Self {
            positions,
            transitions,
        }
    }

    /// Copy with the final position set to flat, so that nothing stays open
    /// past the end of a trading window.
    pub fn forced_flat_at_end(&self) -> Self {
        let mut positions = self.positions.clone();
        if let Some(last) = positions.last_mut() {
            *last = 0;
        }
        Self::from_positions(positions)
    }
}

/// Runs the position machine from flat over `z`.
pub fn simulate_positions<T: Scalar>(z: &[T], rule: &TradingRule<T>) -> PositionSeries {
    let mut pos = 0;
    let positions = z
        .iter()
        .map(|&v| {
            pos = rule.step(pos, v);
            pos
        })
        .collect();
    PositionSeries::from_positions(positions)
}

/// Re-derives every position from the rule and reports the first disagreement.
/// With `forced_flat_end` the final position must be flat instead.
pub fn replay<T: Scalar>(
    z: &[T],
    series: &PositionSeries,
    rule: &TradingRule<T>,
    forced_flat_end: bool,
) -> Result<()> {
    if z.len() != series.positions.len() {
        return Err(MrpError::Dimension(format!(
            "{} spread values for {} positions",
            z.len(),
            series.positions.len()
        )));
    }
    let mut prev = 0;
    for (t, (&v, &got)) in z.iter().zip(&series.positions).enumerate() {
        let want = if forced_flat_end && t + 1 == z.len() {
            0
        } else {
            rule.step(prev, v)
        };
        if got != want {
            return Err(MrpError::Invalid(format!(
                "position {got} at t = {t} but the rule gives {want} (from {prev}, z = {v})"
            )));
        }
        prev = got;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport<T: Scalar> {
    pub window_id: usize,
    /// `pnl[t - 1] = positions[t - 1] * (z[t] - z[t - 1])` for `t >= 1`.
    pub pnl: Vec<T>,
    pub cum_pnl: Vec<T>,
    /// P&L over the gross asset exposure `||w_p||_1`.
    pub roi: Vec<T>,
    /// `None` when the ROI series has zero spread.
    pub sharpe: Option<T>,
    pub gross_exposure: T,
}

impl<T: Scalar> BacktestReport<T> {
    pub fn final_pnl(&self) -> T {
        self.cum_pnl.last().copied().unwrap_or_else(T::zero)
    }

    pub fn sharpe(&self) -> Result<T> {
        self.sharpe.ok_or(MrpError::SharpeUndefined)
    }
}

/// Mean over sample standard deviation, risk-free rate zero, unannualized.
pub fn sharpe_ratio<T: Scalar>(roi: &[T]) -> Result<T> {
    if roi.len() < 2 {
        return Err(MrpError::SharpeUndefined);
    }
    let (mean, sd) = mean_sd(roi);
    if !(sd > T::zero()) {
        return Err(MrpError::SharpeUndefined);
    }
    Ok(mean / sd)
}

pub fn evaluate<T: Scalar>(
    z: &[T],
    series: &PositionSeries,
    gross_exposure: T,
    window_id: usize,
) -> Result<BacktestReport<T>> {
    if z.len() != series.positions.len() {
        return Err(MrpError::Dimension(format!(
            "{} spread values for {} positions",
            z.len(),
            series.positions.len()
        )));
    }
    if !(gross_exposure > T::zero()) {
        return Err(MrpError::Invalid(format!(
            "gross exposure {gross_exposure} must be positive"
        )));
    }
    let pnl: Vec<T> = z
        .windows(2)
        .zip(&series.positions)
        .map(|(w, &p)| T::lit(p as f64) * (w[1] - w[0]))
        .collect();
    let mut acc = T::zero();
    let cum_pnl = pnl
        .iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect();
    let roi: Vec<T> = pnl.iter().map(|&v| v / gross_exposure).collect();
    let sharpe = sharpe_ratio(&roi).ok();
    Ok(BacktestReport {
        window_id,
        pnl,
        cum_pnl,
        roi,
        sharpe,
        gross_exposure,
    })
}

/// A maximal run of one nonzero position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade<T: Scalar> {
    /// First period the position is held.
    pub open: usize,
    /// Period at which the position is no longer held.
    pub close: usize,
    pub side: i8,
    pub pnl: T,
}

pub fn trades<T: Scalar>(series: &PositionSeries, pnl: &[T]) -> Vec<Trade<T>> {
    let n = pnl.len();
    let mut out = Vec::new();
    let mut t = 0;
    while t < n {
        let side = series.positions[t];
        if side == 0 {
            t += 1;
            continue;
        }
        let open = t;
        let mut total = T::zero();
        while t < n && series.positions[t] == side {
            total += pnl[t];
            t += 1;
        }
        out.push(Trade {
            open,
            close: t,
            side,
            pnl: total,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub id: usize,
    pub train: Range<usize>,
    pub trade: Range<usize>,
}

/// Windows advancing by `t_out`: window `j` trains on
/// `[j t_out, j t_out + t_in)` and trades the following `t_out` samples.
pub fn rolling_windows(t: usize, t_in: usize, t_out: usize, count: usize) -> Result<Vec<Window>> {
    if t_in < 2 || t_out < 2 || count < 1 {
        return Err(MrpError::Invalid(format!(
            "window lengths must be at least 2 and count at least 1 (t_in {t_in}, t_out {t_out}, count {count})"
        )));
    }
    let needed = t_in + count * t_out;
    if t < needed {
        return Err(MrpError::InsufficientLength { len: t, needed });
    }
    Ok((0..count)
        .map(|j| {
            let start = j * t_out;
            Window {
                id: j,
                train: start..start + t_in,
                trade: start + t_in..start + t_in + t_out,
            }
        })
        .collect())
}
