//! Synthetic option chains, bond spreads and stock histories.
//!
//! Chains are produced by pricing on a moneyness grid, inverting on the
//! out-of-the-money side and perturbing the implied volatilities by
//! independent multiplicative Gaussian noise. The call and put columns carry
//! the same value, so the averaged volatility has exactly the stated noise.

pub use chrono::NaiveDate;
use chrono::{Datelike, Duration, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::black_scholes::QuoteContext;
use crate::bond::YieldSpreadPoint;
use crate::calibration::IvGrid;
use crate::curve::DiscountCurve;
use crate::error::{Error, Result};
use crate::implied_vol::{invert, model_iv, Side};
use crate::io::{days_to_years, ChainDay, SpreadTable, StockRow};
use crate::mc::{effective_params, min_steps, simulate, MCModelSpec, Payoff};
use crate::pricer::ApproxParams;
use crate::TRADING_DAYS_PER_YEAR;

pub const STANDARD_MATURITY_DAYS: [u32; 8] = [91, 122, 152, 182, 273, 365, 547, 730];

/// Strikes `K = F·exp(k σ̄ √τ)` per maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGrid {
    pub maturity_days: Vec<u32>,
    pub moneyness: Vec<f64>,
}

impl SyntheticGrid {
    /// 8 maturities × 13 strikes, `k = −1.5, −1.25, …, 1.5`.
    pub fn standard() -> Self {
        Self {
            maturity_days: STANDARD_MATURITY_DAYS.to_vec(),
            moneyness: (0..13).map(|i| -1.5 + 0.25 * i as f64).collect(),
        }
    }

    pub fn strikes(&self, spot: f64, discount: f64, vol: f64, tau: f64) -> Vec<f64> {
        let fwd = spot / discount;
        self.moneyness
            .iter()
            .map(|k| fwd * (k * vol * tau.sqrt()).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Approx(ApproxParams),
    /// Monte Carlo prices; the strike grid uses the effective `σ̄`.
    Oracle {
        spec: MCModelSpec,
        n_paths: usize,
        n_steps: Option<usize>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedCell {
    pub maturity_days: u32,
    pub strike: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDay {
    pub chain: ChainDay,
    pub spot: f64,
    pub dropped: Vec<DroppedCell>,
}

/// One synthetic chain. `noise` is the relative standard deviation of the
/// implied-volatility perturbation.
pub fn gen_synthetic(
    source: &Source,
    date: &str,
    spot: f64,
    curve: &DiscountCurve,
    grid: &SyntheticGrid,
    noise: f64,
    seed: u64,
) -> Result<SyntheticDay> {
    if !(noise >= 0.0 && noise < 1.0) {
        return Err(Error::Config(format!(
            "noise level must be in [0, 1), got {noise}"
        )));
    }
    let vol = match source {
        Source::Approx(p) => {
            p.validate()?;
            p.avg_var.sqrt()
        }
        Source::Oracle { spec, .. } => effective_params(&MCModelSpec {
            x0: spot,
            ..spec.clone()
        })?
        .avg_var
        .sqrt(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = IvGrid {
        maturities: Vec::new(),
        strikes: Vec::new(),
        call_iv: Vec::new(),
        put_iv: Vec::new(),
    };
    let mut dropped = Vec::new();
    for &d in &grid.maturity_days {
        let tau = days_to_years(d);
        let b = curve.discount(tau)?;
        let strikes = grid.strikes(spot, b, vol, tau);
        let ctxs: Vec<QuoteContext> = strikes
            .iter()
            .map(|&k| QuoteContext::new(spot, k, b, tau))
            .collect::<Result<_>>()?;
        let ivs: Vec<Result<f64>> = match source {
            Source::Approx(p) => ctxs.iter().map(|c| model_iv(p, c)).collect(),
            Source::Oracle {
                spec,
                n_paths,
                n_steps,
                seed: mc_seed,
            } => {
                let spec = MCModelSpec {
                    x0: spot,
                    ..spec.clone()
                };
                let payoffs: Vec<Payoff> = ctxs
                    .iter()
                    .map(|c| match Side::otm(c) {
                        Side::Call => Payoff::Call(c.strike()),
                        Side::Put => Payoff::Put(c.strike()),
                    })
                    .collect();
                let steps = n_steps.unwrap_or(0).max(min_steps(tau, spec.eps));
                let mc = simulate(&spec, tau, steps, *n_paths, *mc_seed, &payoffs)?;
                ctxs.iter()
                    .zip(&mc)
                    .map(|(c, e)| invert(Side::otm(c), e.mean, c))
                    .collect()
            }
        };
        let mut row = (Vec::new(), Vec::new());
        for ((k, iv), _) in strikes.iter().zip(ivs).zip(&ctxs) {
            let z: f64 = StandardNormal.sample(&mut rng);
            match iv {
                Ok(v) => {
                    row.0.push(*k);
                    row.1.push(v * (1.0 + noise * z));
                }
                Err(e) => dropped.push(DroppedCell {
                    maturity_days: d,
                    strike: *k,
                    reason: e.to_string(),
                }),
            }
        }
        if row.0.is_empty() {
            continue;
        }
        out.maturities.push(tau);
        out.strikes.push(row.0);
        out.call_iv.push(row.1.clone());
        out.put_iv.push(row.1);
    }
    if out.maturities.is_empty() {
        return Err(Error::Config(
            "every synthetic cell failed to invert".into(),
        ));
    }
    Ok(SyntheticDay {
        chain: ChainDay {
            date: date.to_string(),
            grid: out,
        },
        spot,
        dropped,
    })
}

/// Business days starting at `start` (weekends skipped).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Daily closes whose log returns alternate `±σ̄/√252`, so that the
/// zero-mean realized variance over any even or odd window equals `σ̄²`.
pub fn stock_history(dates: &[NaiveDate], spot_last: f64, avg_var: f64) -> Vec<StockRow> {
    let a = (avg_var / TRADING_DAYS_PER_YEAR).sqrt();
    let n = dates.len();
    let mut closes = vec![spot_last; n];
    for i in (0..n.saturating_sub(1)).rev() {
        let r = if (n - 1 - i) % 2 == 1 { a } else { -a };
        closes[i] = closes[i + 1] / r.exp();
    }
    dates
        .iter()
        .zip(closes)
        .map(|(d, close)| StockRow {
            date: d.to_string(),
            close,
        })
        .collect()
}

/// Flat bond-spread term structure at `λ̄`.
pub fn flat_spreads(lambda_bar: f64) -> Result<Vec<YieldSpreadPoint>> {
    [0.5, 1.0, 2.0, 5.0]
        .iter()
        .map(|&t| YieldSpreadPoint::new(t, lambda_bar))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub days: Vec<SyntheticDay>,
    pub stock: Vec<StockRow>,
    pub spreads: SpreadTable,
}

/// `n_days` business days of chains with fixed parameters, each day drawing
/// fresh IV noise. A year of stock history precedes the first day.
pub fn gen_panel(
    params: &ApproxParams,
    start: NaiveDate,
    n_days: usize,
    spot: f64,
    curve: &DiscountCurve,
    grid: &SyntheticGrid,
    noise: f64,
    seed: u64,
) -> Result<Panel> {
    let history = TRADING_DAYS_PER_YEAR as usize;
    let all = business_days(start - Duration::days(400), 2 * history + n_days);
    let first = all
        .iter()
        .position(|d| *d >= start)
        .expect("enough business days");
    let dates = &all[first - history..first + n_days];
    let closes = stock_history(dates, spot, params.avg_var);
    let spreads_pts = flat_spreads(params.lambda_bar)?;
    let mut days = Vec::with_capacity(n_days);
    let mut spreads = SpreadTable::new();
    for (i, row) in closes[history..].iter().enumerate() {
        let day_seed = seed
            .wrapping_add(i as u64)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
        days.push(gen_synthetic(
            &Source::Approx(*params),
            &row.date,
            row.close,
            curve,
            grid,
            noise,
            day_seed,
        )?);
        spreads.insert(row.date.clone(), spreads_pts.clone());
    }
    Ok(Panel {
        days,
        stock: closes,
        spreads,
    })
}

/// Default seven-parameter generator used by the synthetic-data command.
/// The leverage-like signs (`V₁ᵋ > 0`, `V₃ᵋ > 0`) make an intensity-only
/// family overstate `λ̄`.
pub fn reference_params() -> ApproxParams {
    ApproxParams::seven_param(
        0.04385,
        0.2922 * 0.2922,
        [0.002, 0.001, 0.004],
        [0.0005, 0.0005, 0.002],
    )
    .expect("valid reference parameters")
}
