//! Daily calibration of the approximation families to an option chain.
//!
//! Prices are matched in the vega-weighted sense
//! `Σ ((O_obs − O_model)/vega)²`, which approximates the sum of squared
//! implied-volatility errors. Because model prices are affine in the
//! correction slots, the inner problem at fixed `λ̄` is a weighted linear
//! least-squares solve (scheme A). Scheme B profiles that solve over `λ̄`.

use argmin::core::{CostFunction, Executor};
use argmin::solver::brent::BrentOpt;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::black_scholes::{bs_call, bs_put, vega, LevelParams, QuoteContext};
use crate::curve::DiscountCurve;
use crate::error::{domain, Error, Result};
use crate::implied_vol::{invert, Side};
use crate::pricer::{price_basis, price_call, price_put, ApproxParams, ModelKind};
use crate::TRADING_DAYS_PER_YEAR;

/// Upper end of the `λ̄` search range (1/year).
pub const LAMBDA_MAX: f64 = 0.5;
const LAMBDA_SEEDS: usize = 5;
const LAMBDA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub maturity: f64,
    pub strike: f64,
    pub observed_price: f64,
    pub observed_iv: f64,
    pub side: Side,
    pub discount: f64,
    pub market_vega: f64,
}

impl OptionQuote {
    pub fn context(&self, spot: f64) -> Result<QuoteContext> {
        QuoteContext::new(spot, self.strike, self.discount, self.maturity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionChain {
    pub date: String,
    pub spot: f64,
    /// `σ̄²`, usually a historical variance estimate.
    pub avg_var: f64,
    /// Sorted by maturity, then strike.
    pub quotes: Vec<OptionQuote>,
}

impl OptionChain {
    pub fn new(
        date: impl Into<String>,
        spot: f64,
        avg_var: f64,
        mut quotes: Vec<OptionQuote>,
    ) -> Result<Self> {
        if !(spot > 0.0) {
            return Err(domain(format!("spot must be positive, got {spot}")));
        }
        if !(avg_var > 0.0 && avg_var.is_finite()) {
            return Err(domain(format!("σ̄² must be positive, got {avg_var}")));
        }
        for q in &quotes {
            if !(q.market_vega > 0.0) {
                return Err(domain(format!(
                    "quote T={} K={} has nonpositive vega {}",
                    q.maturity, q.strike, q.market_vega
                )));
            }
        }
        quotes.sort_by(|a, b| {
            a.maturity
                .total_cmp(&b.maturity)
                .then(a.strike.total_cmp(&b.strike))
        });
        Ok(Self {
            date: date.into(),
            spot,
            avg_var,
            quotes,
        })
    }

    pub fn maturities(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.quotes.iter().map(|q| q.maturity).collect();
        m.dedup();
        m
    }

    /// Keeps the quotes whose maturity (in calendar days) is listed.
    pub fn filter_maturity_days(&self, days: &[u32]) -> Self {
        let keep = |t: f64| {
            days.iter()
                .any(|&d| (t * crate::DAYS_PER_YEAR - d as f64).abs() < 1e-6)
        };
        Self {
            quotes: self
                .quotes
                .iter()
                .copied()
                .filter(|q| keep(q.maturity))
                .collect(),
            ..self.clone()
        }
    }

    pub fn with_avg_var(&self, avg_var: f64) -> Self {
        Self {
            avg_var,
            ..self.clone()
        }
    }
}

/// Call and put implied volatilities on a strike × maturity grid. Strikes may
/// differ between maturities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvGrid {
    pub maturities: Vec<f64>,
    pub strikes: Vec<Vec<f64>>,
    pub call_iv: Vec<Vec<f64>>,
    pub put_iv: Vec<Vec<f64>>,
}

/// One quote per grid cell on its out-of-the-money side, priced at the
/// average of the call and put implied volatilities.
pub fn build_otm_chain(
    date: &str,
    grid: &IvGrid,
    spot: f64,
    curve: &DiscountCurve,
    avg_var: f64,
) -> Result<OptionChain> {
    let n = grid.maturities.len();
    if grid.strikes.len() != n || grid.call_iv.len() != n || grid.put_iv.len() != n {
        return Err(domain("call/put grids do not match the maturity list"));
    }
    let mut quotes = Vec::new();
    for (i, &tau) in grid.maturities.iter().enumerate() {
        let ks = &grid.strikes[i];
        if grid.call_iv[i].len() != ks.len() || grid.put_iv[i].len() != ks.len() {
            return Err(domain(format!(
                "call/put grids do not match at maturity {tau}"
            )));
        }
        let b = curve.discount(tau)?;
        for (j, &k) in ks.iter().enumerate() {
            let (c, p) = (grid.call_iv[i][j], grid.put_iv[i][j]);
            if !(c > 0.0 && p > 0.0 && c.is_finite() && p.is_finite()) {
                return Err(domain(format!(
                    "missing or nonpositive IV at T={tau}, K={k}"
                )));
            }
            let iv = 0.5 * (c + p);
            let ctx = QuoteContext::new(spot, k, b, tau)?;
            let side = Side::otm(&ctx);
            let price = match side {
                Side::Call => bs_call(&ctx, iv),
                Side::Put => bs_put(&ctx, iv),
            };
            quotes.push(OptionQuote {
                maturity: tau,
                strike: k,
                observed_price: price,
                observed_iv: iv,
                side,
                discount: b,
                market_vega: vega(&ctx, iv, 0.0)?,
            });
        }
    }
    OptionChain::new(date, spot, avg_var, quotes)
}

fn model_price(params: &ApproxParams, q: &OptionQuote, spot: f64) -> Result<f64> {
    let ctx = q.context(spot)?;
    Ok(match q.side {
        Side::Call => price_call(params, &ctx)?.value,
        Side::Put => price_put(params, &ctx)?.value,
    })
}

fn quote_error(i: usize, q: &OptionQuote, e: Error) -> Error {
    Error::QuotePricing {
        index: i,
        maturity: q.maturity,
        strike: q.strike,
        source: Box::new(e),
    }
}

/// Vega-weighted residuals `(O_obs − O_model)/vega`.
pub fn residuals(chain: &OptionChain, params: &ApproxParams) -> Result<Vec<f64>> {
    chain
        .quotes
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            model_price(params, q, chain.spot)
                .map(|m| (q.observed_price - m) / q.market_vega)
                .map_err(|e| quote_error(i, q, e))
        })
        .collect()
}

/// `Σ ((O_obs − O_model)/vega)²`.
pub fn objective(chain: &OptionChain, params: &ApproxParams) -> Result<f64> {
    Ok(residuals(chain, params)?.iter().map(|r| r * r).sum())
}

/// Exact model implied volatility per quote, on the quote's side.
pub fn model_ivs(chain: &OptionChain, params: &ApproxParams) -> Vec<Result<f64>> {
    chain
        .quotes
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            model_price(params, q, chain.spot)
                .and_then(|m| invert(q.side, m, &q.context(chain.spot)?))
                .map_err(|e| quote_error(i, q, e))
        })
        .collect()
}

/// `Σ (I_obs − I_model)²` with model volatilities from exact inversion.
pub fn iv_objective(chain: &OptionChain, params: &ApproxParams) -> Result<f64> {
    let mut s = 0.0;
    for (q, iv) in chain.quotes.iter().zip(model_ivs(chain, params)) {
        let d = q.observed_iv - iv?;
        s += d * d;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// `λ̄` fixed, usually from the shortest-maturity bond spread.
    A,
    /// `λ̄` fitted together with the corrections.
    B,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Scheme::A),
            "B" | "b" => Ok(Scheme::B),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaSource {
    Spread(f64),
    Fitted,
    /// The SV-only family pins `λ̄ = 0`.
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDiagnostics {
    pub n_quotes: usize,
    pub n_free: usize,
    pub rank: usize,
    pub rank_deficient: bool,
    /// Ratio of extreme singular values of the column-scaled design matrix.
    pub condition: f64,
    /// Standard errors of the free slots from the linear model
    /// (`s² (XᵀX)⁻¹` with `s²` the residual variance); `None` without
    /// residual degrees of freedom or at full rank deficiency.
    pub std_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: ApproxParams,
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub scheme: Scheme,
    pub lambda_source: LambdaSource,
    pub diagnostics: LinearDiagnostics,
    /// Several separated local minima of the `λ̄` profile were found.
    pub non_unimodal: bool,
    /// Local minima of the profile `(λ̄, objective)` found by the multistart.
    pub lambda_minima: Vec<(f64, f64)>,
}

fn solve_linear(
    chain: &OptionChain,
    kind: ModelKind,
    lambda_bar: f64,
) -> Result<(ApproxParams, Vec<f64>, LinearDiagnostics)> {
    let lambda_bar = if kind.lambda_is_free() {
        lambda_bar
    } else {
        0.0
    };
    let lv = LevelParams::new(chain.avg_var, lambda_bar)?;
    let free: Vec<usize> = (0..6).filter(|&j| kind.free_slots()[j]).collect();
    let n = chain.quotes.len();
    let p = free.len();
    if n == 0 {
        return Err(Error::Calibration("empty option chain".into()));
    }
    let rows: Vec<(f64, Vec<f64>)> = chain
        .quotes
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let ctx = q.context(chain.spot).map_err(|e| quote_error(i, q, e))?;
            let b =
                price_basis(&ctx, &lv, q.side == Side::Put).map_err(|e| quote_error(i, q, e))?;
            let w = 1.0 / q.market_vega;
            Ok((
                (q.observed_price - b.base) * w,
                free.iter().map(|&j| b.columns[j] * w).collect(),
            ))
        })
        .collect::<Result<_>>()?;

    let y = DVector::from_iterator(n, rows.iter().map(|r| r.0));
    let mut x = DMatrix::zeros(n, p);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.1.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            x.column_mut(j).scale_mut(1.0 / nj);
        }
    }

    let mut slots = [0.0; 6];
    let mut rank = 0;
    let mut condition = f64::INFINITY;
    let mut std_errors = None;
    if p > 0 {
        let svd = x.clone().svd(true, true);
        let s = &svd.singular_values;
        let smax = s.max();
        let tol = smax * (n.max(p) as f64) * f64::EPSILON;
        rank = s.iter().filter(|&&v| v > tol).count();
        let smin = s.min();
        condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        let beta = svd
            .solve(&y, tol)
            .map_err(|e| Error::Calibration(format!("least-squares solve failed: {e}")))?;
        for (k, &j) in free.iter().enumerate() {
            slots[j] = if norms[k] > 0.0 {
                beta[k] / norms[k]
            } else {
                0.0
            };
        }
        if rank == p && n > p {
            let fitted = &x * &beta;
            let rss = (&y - fitted).norm_squared();
            let s2 = rss / (n - p) as f64;
            let v_t = svd.v_t.as_ref().expect("SVD computed with V");
            let se: Vec<f64> = (0..p)
                .map(|k| {
                    let var: f64 = (0..p).map(|r| (v_t[(r, k)] / s[r]).powi(2)).sum();
                    (s2 * var).sqrt() / norms[k]
                })
                .collect();
            std_errors = Some(se);
        }
    }
    let params = ApproxParams::from_slots(kind, lambda_bar, chain.avg_var, slots)?;
    let res = residuals(chain, &params)?;
    Ok((
        params,
        res,
        LinearDiagnostics {
            n_quotes: n,
            n_free: p,
            rank,
            rank_deficient: rank < p,
            condition,
            std_errors,
        },
    ))
}

/// Scheme A: exact least-squares fit of the family's free corrections at a
/// fixed `λ̄` (ignored, and pinned to zero, for the SV-only family).
pub fn calibrate_fixed_lambda(
    chain: &OptionChain,
    kind: ModelKind,
    lambda_bar: f64,
) -> Result<CalibrationResult> {
    let (params, residuals, diagnostics) = solve_linear(chain, kind, lambda_bar)?;
    Ok(CalibrationResult {
        objective: residuals.iter().map(|r| r * r).sum(),
        params,
        residuals,
        scheme: Scheme::A,
        lambda_source: if kind.lambda_is_free() {
            LambdaSource::Spread(lambda_bar)
        } else {
            LambdaSource::Pinned
        },
        diagnostics,
        non_unimodal: false,
        lambda_minima: Vec::new(),
    })
}

/// Objective of the inner linear fit as a function of `λ̄`.
pub fn lambda_profile(chain: &OptionChain, kind: ModelKind, lambda_bar: f64) -> Result<f64> {
    let (_, res, _) = solve_linear(chain, kind, lambda_bar)?;
    Ok(res.iter().map(|r| r * r).sum())
}

struct Profile<'a> {
    chain: &'a OptionChain,
    kind: ModelKind,
}

impl CostFunction for Profile<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, lambda: &f64) -> std::result::Result<f64, argmin::core::Error> {
        lambda_profile(self.chain, self.kind, *lambda)
            .map_err(|e| argmin::core::Error::msg(e.to_string()))
    }
}

/// Scheme B: `λ̄ ∈ [0, LAMBDA_MAX]` minimized by Brent's method on five
/// equal subintervals, with the exact linear fit inside.
pub fn calibrate_free_lambda(chain: &OptionChain, kind: ModelKind) -> Result<CalibrationResult> {
    if !kind.lambda_is_free() {
        let mut r = calibrate_fixed_lambda(chain, kind, 0.0)?;
        r.scheme = Scheme::B;
        return Ok(r);
    }
    let width = LAMBDA_MAX / LAMBDA_SEEDS as f64;
    let mut found: Vec<(f64, f64, bool)> = Vec::new();
    for s in 0..LAMBDA_SEEDS {
        let (a, b) = (s as f64 * width, (s + 1) as f64 * width);
        let solver = BrentOpt::new(a, b).set_tolerance(1e-10, LAMBDA_TOL / 3.0);
        let res = Executor::new(Profile { chain, kind }, solver)
            .configure(|st| st.max_iters(200))
            .run()
            .map_err(|e| Error::Calibration(format!("λ̄ search failed on [{a}, {b}]: {e}")))?;
        let st = res.state();
        let x = st.best_param.unwrap_or(0.5 * (a + b));
        let fx = st.best_cost;
        let edge = LAMBDA_TOL;
        let interior_edge = (x - a < edge && s > 0) || (b - x < edge && s + 1 < LAMBDA_SEEDS);
        found.push((x, fx, !interior_edge));
    }
    // Brent never evaluates the ends of its interval; the range ends are
    // candidates of their own.
    for end in [0.0, LAMBDA_MAX] {
        let f_end = lambda_profile(chain, kind, end)?;
        found.push((end, f_end, false));
    }
    let best = found
        .iter()
        .copied()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("nonempty candidate list");
    let mut minima: Vec<(f64, f64)> = Vec::new();
    for &(x, fx, genuine) in &found {
        let is_best = x == best.0;
        if (genuine || is_best) && minima.iter().all(|m| (m.0 - x).abs() > 1e-3) {
            minima.push((x, fx));
        }
    }
    minima.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (params, residuals, diagnostics) = solve_linear(chain, kind, best.0)?;
    Ok(CalibrationResult {
        objective: residuals.iter().map(|r| r * r).sum(),
        params,
        residuals,
        scheme: Scheme::B,
        lambda_source: LambdaSource::Fitted,
        diagnostics,
        non_unimodal: minima.len() > 1,
        lambda_minima: minima,
    })
}

/// Annualized zero-mean realized variance of the last `window` daily log
/// returns.
pub fn historical_vol(closing_prices: &[f64], window: usize) -> Result<f64> {
    if window == 0 {
        return Err(domain("historical window must be positive"));
    }
    if closing_prices.len() < window + 1 {
        return Err(Error::Calibration(format!(
            "need {} prices for a {window}-day window, got {}",
            window + 1,
            closing_prices.len()
        )));
    }
    if closing_prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(domain("closing prices must be positive"));
    }
    let tail = &closing_prices[closing_prices.len() - window - 1..];
    let ss: f64 = tail.windows(2).map(|w| (w[1] / w[0]).ln().powi(2)).sum();
    Ok(ss / window as f64 * TRADING_DAYS_PER_YEAR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implied_vol::model_iv;

    fn chain_from(params: &ApproxParams) -> OptionChain {
        let curve = DiscountCurve::flat(0.045);
        let spot = 100.0;
        let mut quotes = Vec::new();
        for days in [91.0, 182.0, 365.0, 730.0] {
            let tau = days / 365.0;
            let b = curve.discount(tau).unwrap();
            for k in [80.0, 90.0, 100.0, 110.0, 120.0] {
                let ctx = QuoteContext::new(spot, k, b, tau).unwrap();
                let side = Side::otm(&ctx);
                let iv = model_iv(params, &ctx).unwrap();
                let price = match side {
                    Side::Call => price_call(params, &ctx).unwrap().value,
                    Side::Put => price_put(params, &ctx).unwrap().value,
                };
                quotes.push(OptionQuote {
                    maturity: tau,
                    strike: k,
                    observed_price: price,
                    observed_iv: iv,
                    side,
                    discount: b,
                    market_vega: vega(&ctx, iv, 0.0).unwrap(),
                });
            }
        }
        OptionChain::new("2006-01-03", spot, params.avg_var, quotes).unwrap()
    }

    fn truth() -> ApproxParams {
        ApproxParams::seven_param(
            0.03,
            0.06,
            [0.0003, 0.0006, 0.0002],
            [-0.0001, 0.0002, -0.0003],
        )
        .unwrap()
    }

    #[test]
    fn objective_is_zero_at_truth_and_one_for_unit_vega_error() {
        let p = truth();
        let chain = chain_from(&p);
        assert!(objective(&chain, &p).unwrap() < 1e-18);
        let mut one = chain.clone();
        one.quotes.truncate(1);
        one.quotes[0].observed_price += one.quotes[0].market_vega;
        assert!((objective(&one, &p).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scheme_a_recovers_truth() {
        let p = truth();
        let chain = chain_from(&p);
        let r = calibrate_fixed_lambda(&chain, ModelKind::SevenParam, p.lambda_bar).unwrap();
        for (a, b) in r.params.slots().iter().zip(p.slots()) {
            assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
        }
        assert!(r.objective < 1e-20);
        assert!(!r.diagnostics.rank_deficient);
    }

    #[test]
    fn nested_families_fit_worse() {
        let chain = chain_from(&truth());
        let f7 = calibrate_fixed_lambda(&chain, ModelKind::SevenParam, 0.03)
            .unwrap()
            .objective;
        let f5 = calibrate_fixed_lambda(&chain, ModelKind::FiveParam, 0.03)
            .unwrap()
            .objective;
        let f3 = calibrate_fixed_lambda(&chain, ModelKind::ThreeParam, 0.03)
            .unwrap()
            .objective;
        let fsv = calibrate_fixed_lambda(&chain, ModelKind::SvOnly, 0.03)
            .unwrap()
            .objective;
        assert!(f7 < f5 && f5 < f3 && f5 < fsv, "{f7} {f5} {f3} {fsv}");
    }

    #[test]
    fn scheme_b_recovers_lambda() {
        let p = truth();
        let chain = chain_from(&p);
        let r = calibrate_free_lambda(&chain, ModelKind::SevenParam).unwrap();
        assert!(
            (r.params.lambda_bar - p.lambda_bar).abs() < 1e-4,
            "{:?}",
            r.lambda_minima
        );
        let sv = calibrate_free_lambda(&chain, ModelKind::SvOnly).unwrap();
        assert_eq!(sv.params.lambda_bar, 0.0);
    }

    #[test]
    fn vega_scaling_leaves_argmin() {
        let p = truth();
        let mut chain = chain_from(&p);
        for (i, q) in chain.quotes.iter_mut().enumerate() {
            q.observed_price *= 1.0 + 1e-3 * ((i % 7) as f64 - 3.0);
        }
        let a = calibrate_fixed_lambda(&chain, ModelKind::FiveParam, 0.03).unwrap();
        let mut scaled = chain.clone();
        for q in scaled.quotes.iter_mut() {
            q.market_vega *= 3.7;
        }
        let b = calibrate_fixed_lambda(&scaled, ModelKind::FiveParam, 0.03).unwrap();
        for (x, y) in a.params.slots().iter().zip(b.params.slots()) {
            assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-6));
        }
        assert!((a.objective - b.objective * 3.7 * 3.7).abs() < 1e-9 * a.objective);
    }

    #[test]
    fn historical_variance() {
        assert_eq!(historical_vol(&[10.0; 30], 20).unwrap(), 0.0);
        let mut prices = vec![100.0];
        for i in 0..252 {
            let r: f64 = if i % 2 == 0 { 0.01 } else { -0.01 };
            prices.push(prices.last().unwrap() * r.exp());
        }
        let v = historical_vol(&prices, 252).unwrap();
        assert!((v - 0.0001 * 252.0).abs() < 1e-12);
        assert!(historical_vol(&prices[..10], 20).is_err());
    }

    #[test]
    fn otm_chain_from_grid() {
        let curve = DiscountCurve::flat(0.04);
        let grid = IvGrid {
            maturities: vec![0.25, 1.0],
            strikes: vec![vec![50.0, 100.0, 150.0], vec![60.0, 100.0, 140.0]],
            call_iv: vec![vec![0.3, 0.25, 0.2]; 2],
            put_iv: vec![vec![0.3, 0.27, 0.22]; 2],
        };
        let c = build_otm_chain("d", &grid, 100.0, &curve, 0.04).unwrap();
        assert_eq!(c.quotes.len(), 6);
        let low = c.quotes[0];
        assert_eq!(low.side, Side::Put);
        assert!(low.observed_price > 0.0 && low.observed_price < 0.01);
        assert!((c.quotes[1].observed_iv - 0.26).abs() < 1e-15);
        let mut bad = grid.clone();
        bad.put_iv[1].pop();
        assert!(build_otm_chain("d", &bad, 100.0, &curve, 0.04).is_err());
    }
}
