//! Synthetic cointegrated log-price systems with a known cointegration basis.
//!
//! Latent factors are `r` stationary AR(1) series `q` and `M - r` random walks
//! `u`; observed log-prices are `y_t = A (q_t; u_t)` for a nonsingular mixing
//! matrix `A`. Then `beta = [I_r, 0] A^{-1}` satisfies `beta y_t = q_t`, so the
//! true spreads are exactly the simulated AR(1) series.
//!
//! Every latent series draws from its own ChaCha8 stream of the spec seed, so a
//! market is a pure function of its spec.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MrpError, Result};
use crate::market::{make_spreads, LogPriceMatrix, SpreadPanel};
use crate::scalar::Scalar;

/// Name of the generator, recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9), one stream per latent series";

/// Stream layout: latent series `j` uses stream `j`; the two streams below
/// follow after all `M` series.
const MIX_STREAM_OFFSET: u64 = 0;
const PERTURB_STREAM_OFFSET: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mix {
    /// Haar-distributed orthogonal matrix drawn from the seed.
    RandomOrthogonal,
    /// Explicit `M x M` matrix, row-major.
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CointSpec {
    /// Number of assets `M`.
    pub m: usize,
    /// Cointegration rank `r`.
    pub r: usize,
    pub ar_coeffs: Vec<f64>,
    pub spread_noise_sd: Vec<f64>,
    pub rw_noise_sd: Vec<f64>,
    pub mix: Mix,
    pub seed: u64,
    /// Sample length `T`.
    pub t: usize,
}

impl Default for CointSpec {
    /// Six assets, rank five, `T = 264 + 2 * 132`. The AR coefficients have
    /// mixed signs so that odd-lag autocorrelations can offset in a portfolio.
    fn default() -> Self {
        Self {
            m: 6,
            r: 5,
            ar_coeffs: vec![0.6, -0.5, 0.8, -0.3, 0.4],
            spread_noise_sd: vec![0.010, 0.012, 0.008, 0.015, 0.010],
            rw_noise_sd: vec![0.02],
            mix: Mix::RandomOrthogonal,
            seed: 0,
            t: 528,
        }
    }
}

impl CointSpec {
    /// Default layout with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// `m` assets of rank `r`, reusing the default AR coefficients and noise
    /// levels cyclically. Bad sizes are left for [`validate`](Self::validate).
    pub fn sized(m: usize, r: usize, t: usize, seed: u64) -> Self {
        let base = Self::default();
        let cycle = |v: &[f64], n: usize| v.iter().copied().cycle().take(n).collect::<Vec<_>>();
        Self {
            m,
            r,
            ar_coeffs: cycle(&base.ar_coeffs, r),
            spread_noise_sd: cycle(&base.spread_noise_sd, r),
            rw_noise_sd: cycle(&base.rw_noise_sd, m.saturating_sub(r)),
            mix: Mix::RandomOrthogonal,
            seed,
            t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MrpError::Invalid(msg));
        if self.m < 2 {
            return bad(format!("need at least 2 assets, got {}", self.m));
        }
        if self.r > self.m {
            return bad(format!("rank {} exceeds asset count {}", self.r, self.m));
        }
        if self.t < 2 {
            return bad(format!("sample length {} is below 2", self.t));
        }
        if self.ar_coeffs.len() != self.r || self.spread_noise_sd.len() != self.r {
            return bad(format!(
                "rank {} needs {} AR coefficients and spread noise levels",
                self.r, self.r
            ));
        }
        if self.rw_noise_sd.len() != self.m - self.r {
            return bad(format!(
                "{} random-walk noise levels expected",
                self.m - self.r
            ));
        }
        if let Some(a) = self.ar_coeffs.iter().find(|a| !(a.abs() < 1.0)) {
            return bad(format!("AR coefficient {a} is not in (-1, 1)"));
        }
        let noise = self.spread_noise_sd.iter().chain(&self.rw_noise_sd);
        if let Some(s) = noise.into_iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return bad(format!("noise level {s} must be positive"));
        }
        if let Mix::Matrix(rows) = &self.mix {
            if rows.len() != self.m || rows.iter().any(|row| row.len() != self.m) {
                return Err(MrpError::Dimension(format!(
                    "mix matrix must be {m} x {m}",
                    m = self.m
                )));
            }
        }
        Ok(())
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    fn mix_matrix(&self) -> DMatrix<f64> {
        match &self.mix {
            Mix::Matrix(rows) => DMatrix::from_fn(self.m, self.m, |i, j| rows[i][j]),
            Mix::RandomOrthogonal => {
                let mut rng = self.stream(self.m as u64 + MIX_STREAM_OFFSET);
                let g =
                    DMatrix::from_fn(self.m, self.m, |_, _| rng.sample::<f64, _>(StandardNormal));
                let qr = g.qr();
                let (mut q, r) = (qr.q(), qr.r());
                // Sign convention diag(R) > 0 makes Q Haar distributed and unique.
                for j in 0..self.m {
                    if r[(j, j)] < 0.0 {
                        q.column_mut(j).neg_mut();
                    }
                }
                q
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket<T: Scalar> {
    pub prices: LogPriceMatrix<T>,
    /// True cointegration basis, `r x M`.
    pub beta: DMatrix<T>,
    /// Mixing matrix `A`, `M x M`.
    pub mix: DMatrix<T>,
    /// Latent stationary factors `q`, `T x r`.
    pub factors: DMatrix<T>,
    pub seed_used: u64,
}

pub fn generate_market<T: Scalar>(spec: &CointSpec) -> Result<SyntheticMarket<T>> {
    spec.validate()?;
    let (m, r, t) = (spec.m, spec.r, spec.t);
    let a = spec.mix_matrix();
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| MrpError::Invalid("mix matrix is singular".into()))?;
    let cond = a.norm() * a_inv.norm();
    if !cond.is_finite() || cond > 1e12 {
        return Err(MrpError::Invalid(format!(
            "mix matrix is numerically singular (condition ~{cond:.1e})"
        )));
    }

    let mut latent = DMatrix::<f64>::zeros(t, m);
    for j in 0..m {
        let mut rng = spec.stream(j as u64);
        let mut draw = || rng.sample::<f64, _>(StandardNormal);
        if j < r {
            let (phi, sd) = (spec.ar_coeffs[j], spec.spread_noise_sd[j]);
            // Start from the stationary distribution.
            let mut q = draw() * sd / (1.0 - phi * phi).sqrt();
            for k in 0..t {
                if k > 0 {
                    q = phi * q + sd * draw();
                }
                latent[(k, j)] = q;
            }
        } else {
            let sd = spec.rw_noise_sd[j - r];
            let mut u = 0.0;
            for k in 0..t {
                if k > 0 {
                    u += sd * draw();
                }
                latent[(k, j)] = u;
            }
        }
    }

    let y = &latent * a.transpose();
    let beta = a_inv.rows(0, r).into_owned();
    let cast = |mat: &DMatrix<f64>| mat.map(T::lit);
    Ok(SyntheticMarket {
        prices: LogPriceMatrix::from_values(cast(&y))?,
        beta: cast(&beta),
        mix: cast(&a),
        factors: cast(&latent.columns(0, r).into_owned()),
        seed_used: spec.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HedgeMode {
    TrueBeta,
    /// Adds independent `N(0, sd^2)` noise to every hedge entry, standing in for
    /// estimation error of the cointegration vectors.
    Perturbed {
        sd: f64,
    },
}

pub fn build_spreads<T: Scalar>(
    market: &SyntheticMarket<T>,
    mode: HedgeMode,
) -> Result<SpreadPanel<T>> {
    if market.beta.nrows() == 0 {
        return Err(MrpError::Invalid(
            "rank 0 market has no cointegration relations".into(),
        ));
    }
    let hedge = match mode {
        HedgeMode::TrueBeta => market.beta.clone(),
        HedgeMode::Perturbed { sd } => {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(MrpError::Invalid(format!(
                    "perturbation sd {sd} is invalid"
                )));
            }
            let m = market.prices.n_assets();
            let mut rng = ChaCha8Rng::seed_from_u64(market.seed_used);
            rng.set_stream(m as u64 + PERTURB_STREAM_OFFSET);
            market
                .beta
                .map(|b| b + T::lit(sd * rng.sample::<f64, _>(StandardNormal)))
        }
    };
    make_spreads(&market.prices, &hedge)
}

/// Per-asset exposure `w_p = hedge' w` of spread weights `w`.
pub fn asset_weights<T: Scalar>(hedge: &DMatrix<T>, w: &DVector<T>) -> Result<DVector<T>> {
    if hedge.nrows() != w.len() {
        return Err(MrpError::Dimension(format!(
            "{} spread weights for a hedge with {} rows",
            w.len(),
            hedge.nrows()
        )));
    }
    Ok(hedge.transpose() * w)
}
