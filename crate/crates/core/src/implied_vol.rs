//! Implied volatilities: exact inversion, the `I₀` expansion and surfaces.
//!
//! Implied volatilities are quoted against a zero-rate Black-Scholes price
//! on the discounted strike `K·B(t,T)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::black_scholes::{
    bs_call, bs_put, c00_call, c00_put, greek_blocks, vega, LevelParams, QuoteContext,
};
use crate::curve::DiscountCurve;
use crate::error::{domain, Error, Result};
use crate::pricer::{price_call, price_put, ApproxParams, ModelKind};

pub const VOL_MIN: f64 = 1e-4;
pub const VOL_MAX: f64 = 5.0;

const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Call,
    Put,
}

impl Side {
    /// The out-of-the-money side at a strike: put iff `K B < x`.
    pub fn otm(ctx: &QuoteContext) -> Side {
        if ctx.discounted_strike() < ctx.spot() {
            Side::Put
        } else {
            Side::Call
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Call => "call",
            Side::Put => "put",
        }
    }
}

fn reference_price(side: Side, ctx: &QuoteContext, sigma: f64) -> f64 {
    match side {
        Side::Call => bs_call(ctx, sigma),
        Side::Put => bs_put(ctx, sigma),
    }
}

/// Arbitrage bounds of the zero-rate reference price.
fn reference_bounds(side: Side, ctx: &QuoteContext) -> (f64, f64) {
    let kb = ctx.discounted_strike();
    match side {
        Side::Call => ((ctx.spot() - kb).max(0.0), ctx.spot()),
        Side::Put => ((kb - ctx.spot()).max(0.0), kb),
    }
}

/// Zero-rate Black-Scholes implied volatility of a call or put price.
///
/// The price is first mapped to the out-of-the-money side by parity and
/// Newton steps are taken on its logarithm, which stays well scaled in the
/// wings; steps leaving the current bracket fall back to bisection.
pub fn invert(side: Side, price: f64, ctx: &QuoteContext) -> Result<f64> {
    if ctx.tau() == 0.0 || ctx.strike() == 0.0 {
        return Err(domain(
            "implied volatility needs positive maturity and strike",
        ));
    }
    let (lower, upper) = reference_bounds(side, ctx);
    if !(price.is_finite() && price > lower && price < upper) {
        return Err(Error::PriceOutOfBounds {
            price,
            lower,
            upper,
        });
    }
    let otm = Side::otm(ctx);
    let kb = ctx.discounted_strike();
    let target = match (side, otm) {
        (Side::Call, Side::Put) => price - ctx.spot() + kb,
        (Side::Put, Side::Call) => price + ctx.spot() - kb,
        _ => price,
    };
    let out_of_bracket = Error::VolOutOfBracket {
        price,
        min: VOL_MIN,
        max: VOL_MAX,
    };
    if !(target > 0.0) {
        return Err(out_of_bracket);
    }
    let p_lo = reference_price(otm, ctx, VOL_MIN);
    let p_hi = reference_price(otm, ctx, VOL_MAX);
    if target < p_lo || target > p_hi {
        return Err(out_of_bracket);
    }

    let ln_target = target.ln();
    let log_moneyness = (ctx.spot() / kb).ln();
    let mut lo = VOL_MIN;
    let mut hi = VOL_MAX;
    let mut sigma = (2.0 * log_moneyness.abs() / ctx.tau())
        .sqrt()
        .clamp(0.05, 2.0);
    for _ in 0..MAX_ITER {
        let p = reference_price(otm, ctx, sigma);
        if p == target {
            return Ok(sigma);
        }
        if p > target {
            hi = sigma;
        } else {
            lo = sigma;
        }
        if hi - lo <= 1e-15 * hi {
            return Ok(sigma);
        }
        let v = vega(ctx, sigma, 0.0)?;
        let newton = if p > 0.0 && v > 0.0 {
            sigma - (p.ln() - ln_target) * p / v
        } else {
            f64::NAN
        };
        if newton > lo && newton < hi {
            let step = (newton - sigma).abs();
            sigma = newton;
            if step <= 1e-14 * sigma {
                return Ok(sigma);
            }
        } else {
            sigma = 0.5 * (lo + hi);
        }
    }
    let residual = (reference_price(otm, ctx, sigma) - target).abs();
    Err(Error::NoConvergence {
        iterations: MAX_ITER,
        residual,
    })
}

/// Implied volatility of a call price.
pub fn invert_bs(price: f64, ctx: &QuoteContext) -> Result<f64> {
    invert(Side::Call, price, ctx)
}

/// Implied volatility of a put price.
pub fn invert_bs_put(price: f64, ctx: &QuoteContext) -> Result<f64> {
    invert(Side::Put, price, ctx)
}

/// Inverts whichever of a call/put pair is out of the money; the two
/// are assumed to satisfy parity.
pub fn invert_otm(call: f64, put: f64, ctx: &QuoteContext) -> Result<f64> {
    match Side::otm(ctx) {
        Side::Call => invert(Side::Call, call, ctx),
        Side::Put => invert(Side::Put, put, ctx),
    }
}

/// `I₀`, the zero-rate volatility reproducing `C₀₀`.
pub fn i0(ctx: &QuoteContext, lv: &LevelParams) -> Result<f64> {
    if ctx.tau() == 0.0 || ctx.strike() == 0.0 {
        return Err(domain("I₀ needs positive maturity and strike"));
    }
    if lv.lambda_bar == 0.0 {
        return Ok(lv.vol());
    }
    invert_otm(c00_call(ctx, lv), c00_put(ctx, lv), ctx)
}

/// First-order implied-volatility expansion around `I₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IVExpansion {
    pub i0: f64,
    pub corr_eps: f64,
    pub corr_delta: f64,
    pub total: f64,
}

/// Corrections obtained by dividing the price corrections by the vega at
/// `I₀`. In closed form, for instance, a lone `V₂ᵋ` contributes
/// `−V₂ᵋ e^{(d₁² − d̃₁²)/2} / σ̄`.
pub fn iv_corrections(params: &ApproxParams, ctx: &QuoteContext) -> Result<IVExpansion> {
    let lv = params.level();
    let base = i0(ctx, &lv)?;
    let g = greek_blocks(ctx, &lv)?;
    let v0 = vega(ctx, base, 0.0)?;
    if !(v0 > 0.0) {
        return Err(domain("vega at I₀ underflows; expansion undefined"));
    }
    let gs = g.as_array();
    let dot = |v: [f64; 3]| v.iter().zip(gs).map(|(a, b)| a * b).sum::<f64>();
    let tau = ctx.tau();
    let corr_eps = -tau * dot(params.v_eps) / v0;
    let corr_delta = tau * tau * dot(params.v_delta) / v0;
    Ok(IVExpansion {
        i0: base,
        corr_eps,
        corr_delta,
        total: base + corr_eps + corr_delta,
    })
}

/// Exact implied volatility of the model price at one quote, inverted on
/// the out-of-the-money side.
pub fn model_iv(params: &ApproxParams, ctx: &QuoteContext) -> Result<f64> {
    let call = price_call(params, ctx)?;
    let put = price_put(params, ctx)?;
    let (side, q) = match Side::otm(ctx) {
        Side::Call => (Side::Call, call),
        Side::Put => (Side::Put, put),
    };
    if !q.arbitrage_ok {
        let (lower, upper) = reference_bounds(side, ctx);
        return Err(Error::PriceOutOfBounds {
            price: q.value,
            lower,
            upper,
        });
    }
    invert(side, q.value, ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellFlag {
    Ok,
    /// Corrected price left the no-arbitrage bounds.
    Arbitrage,
    /// Implied volatility outside the solver bracket.
    Bracket,
    NoConvergence,
    Domain,
}

impl CellFlag {
    pub fn label(self) -> &'static str {
        match self {
            CellFlag::Ok => "ok",
            CellFlag::Arbitrage => "arbitrage",
            CellFlag::Bracket => "bracket",
            CellFlag::NoConvergence => "no_convergence",
            CellFlag::Domain => "domain",
        }
    }

    pub fn parse(s: &str) -> Option<CellFlag> {
        [
            CellFlag::Ok,
            CellFlag::Arbitrage,
            CellFlag::Bracket,
            CellFlag::NoConvergence,
            CellFlag::Domain,
        ]
        .into_iter()
        .find(|f| f.label() == s)
    }

    fn of_error(e: &Error) -> CellFlag {
        match e {
            Error::PriceOutOfBounds { .. } => CellFlag::Arbitrage,
            Error::VolOutOfBracket { .. } => CellFlag::Bracket,
            Error::NoConvergence { .. } => CellFlag::NoConvergence,
            _ => CellFlag::Domain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceMethod {
    /// Exact inversion of the corrected price.
    Exact,
    /// `I₀ + corrections`.
    Expansion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub spot: f64,
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
    /// `iv[i][j]` at maturity `i` and strike `j`; `NaN` where flagged.
    pub iv: Vec<Vec<f64>>,
    pub flags: Vec<Vec<CellFlag>>,
    pub kind: ModelKind,
    pub params: ApproxParams,
    pub method: SurfaceMethod,
}

impl SurfaceGrid {
    /// Smile at maturity index `i` restricted to populated cells.
    pub fn smile(&self, i: usize) -> Vec<(f64, f64)> {
        self.strikes
            .iter()
            .zip(&self.iv[i])
            .zip(&self.flags[i])
            .filter(|(_, f)| **f == CellFlag::Ok)
            .map(|((&k, &v), _)| (k, v))
            .collect()
    }
}

/// Implied-volatility surface of a model on a strike × maturity grid.
pub fn surface(
    params: &ApproxParams,
    spot: f64,
    strikes: &[f64],
    maturities: &[f64],
    curve: &DiscountCurve,
    method: SurfaceMethod,
) -> Result<SurfaceGrid> {
    if strikes.is_empty() || maturities.is_empty() {
        return Err(domain("surface needs at least one strike and one maturity"));
    }
    if strikes
        .iter()
        .chain(maturities)
        .any(|v| !(v.is_finite() && *v > 0.0))
    {
        return Err(domain("surface strikes and maturities must be positive"));
    }
    params.validate()?;
    let cells: Vec<(usize, usize)> = (0..maturities.len())
        .flat_map(|i| (0..strikes.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<(f64, CellFlag)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let tau = maturities[i];
            let res = curve
                .discount(tau)
                .and_then(|b| QuoteContext::new(spot, strikes[j], b, tau))
                .and_then(|ctx| match method {
                    SurfaceMethod::Exact => model_iv(params, &ctx),
                    SurfaceMethod::Expansion => iv_corrections(params, &ctx).map(|e| e.total),
                });
            match res {
                Ok(v) if v.is_finite() && v > 0.0 => (v, CellFlag::Ok),
                Ok(_) => (f64::NAN, CellFlag::Domain),
                Err(e) => (f64::NAN, CellFlag::of_error(&e)),
            }
        })
        .collect();
    let n = strikes.len();
    let iv = values
        .chunks(n)
        .map(|row| row.iter().map(|c| c.0).collect())
        .collect();
    let flags = values
        .chunks(n)
        .map(|row| row.iter().map(|c| c.1).collect())
        .collect();
    Ok(SurfaceGrid {
        spot,
        strikes: strikes.to_vec(),
        maturities: maturities.to_vec(),
        iv,
        flags,
        kind: params.kind,
        params: *params,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(k: f64, tau: f64) -> QuoteContext {
        QuoteContext::with_rate(100.0, k, 0.04, tau).unwrap()
    }

    #[test]
    fn round_trip_both_sides() {
        for k in [60.0, 90.0, 100.0, 120.0, 180.0] {
            for tau in [0.1, 1.0, 2.0] {
                for s in [0.05, 0.25, 1.0, 2.0] {
                    let c = ctx(k, tau);
                    let call = bs_call(&c, s);
                    let put = bs_put(&c, s);
                    let iv = invert_otm(call, put, &c).unwrap();
                    assert!((iv - s).abs() < 1e-8, "k={k} tau={tau} s={s} iv={iv}");
                }
            }
        }
        let c = ctx(100.0, 1.0);
        let p = bs_call(&c, 0.25);
        assert!((invert_bs(p, &c).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn bounds_are_errors() {
        let c = ctx(90.0, 1.0);
        let lower = 100.0 - c.discounted_strike();
        assert!(matches!(
            invert_bs(lower, &c),
            Err(Error::PriceOutOfBounds { .. })
        ));
        assert!(matches!(
            invert_bs(100.0, &c),
            Err(Error::PriceOutOfBounds { .. })
        ));
        let atf = QuoteContext::new(100.0, 100.0 / c.discount(), c.discount(), 1.0).unwrap();
        let tiny = bs_call(&atf, 0.5 * VOL_MIN);
        assert!(matches!(
            invert_bs(tiny, &atf),
            Err(Error::VolOutOfBracket { .. })
        ));
    }

    #[test]
    fn default_risk_lifts_put_wing() {
        let lv = LevelParams::from_vol(0.2922, 0.04385).unwrap();
        let b = (-0.047771f64 * 273.0 / 365.0).exp();
        for k in [6.0, 7.0, 8.0] {
            let c = QuoteContext::new(8.62, k, b, 273.0 / 365.0).unwrap();
            assert!(i0(&c, &lv).unwrap() > 0.2922);
        }
    }

    #[test]
    fn i0_flat_without_default_and_decreasing_with() {
        let flat = LevelParams::from_vol(0.2, 0.0).unwrap();
        assert_eq!(i0(&ctx(80.0, 0.5), &flat).unwrap(), 0.2);
        let lv = LevelParams::from_vol(0.2, 0.02).unwrap();
        let f = ctx(100.0, 0.5).forward();
        let a = i0(&ctx(0.8 * f, 0.5), &lv).unwrap();
        let m = i0(&ctx(f, 0.5), &lv).unwrap();
        let b = i0(&ctx(1.2 * f, 0.5), &lv).unwrap();
        assert!(a > m && m > b, "{a} {m} {b}");
    }

    #[test]
    fn v2_only_correction_closed_form() {
        let p = ApproxParams::five_param(0.02, 0.04, [0.0, 0.003], [0.0, 0.0]).unwrap();
        let c = ctx(95.0, 0.75);
        let e = iv_corrections(&p, &c).unwrap();
        let lv = p.level();
        let (dt1, _) = crate::black_scholes::d_tilde(&c, &lv).unwrap();
        let i = e.i0;
        let d1 = ((100.0 / c.discounted_strike()).ln() + 0.5 * i * i * 0.75) / (i * 0.75f64.sqrt());
        let expected = -0.003 * ((d1 * d1 - dt1 * dt1) / 2.0).exp() / 0.2;
        assert!(
            (e.corr_eps - expected).abs() < 1e-12,
            "{} vs {expected}",
            e.corr_eps
        );
        assert_eq!(e.corr_delta, 0.0);
    }

    #[test]
    fn expansion_error_is_second_order() {
        let base = ApproxParams::seven_param(
            0.02,
            0.04,
            [-0.0015, 0.001, -0.005],
            [-0.001, -0.001, -0.06],
        )
        .unwrap();
        let c = ctx(105.0, 1.0);
        let mut prev: Option<(f64, f64)> = None;
        for s in [1.0, 0.5, 0.25, 0.125] {
            let mut p = base;
            p.v_eps = base.v_eps.map(|v| v * s);
            p.v_delta = base.v_delta.map(|v| v * s);
            let exact = model_iv(&p, &c).unwrap();
            let e = iv_corrections(&p, &c).unwrap();
            let err = (exact - e.total).abs();
            let size = e.corr_eps.abs() + e.corr_delta.abs();
            if let Some((pe, ps)) = prev {
                // error/size must shrink like the scale
                assert!(err / size < 0.6 * pe / ps, "s={s}");
            }
            prev = Some((err, size));
        }
    }

    #[test]
    fn flat_surface_without_corrections() {
        let p = ApproxParams::sv_only(0.04, [0.0, 0.0], [0.0, 0.0]).unwrap();
        let g = surface(
            &p,
            100.0,
            &[70.0, 100.0, 130.0],
            &[0.25, 1.0],
            &DiscountCurve::flat(0.04),
            SurfaceMethod::Exact,
        )
        .unwrap();
        for row in &g.iv {
            for v in row {
                assert!((v - 0.2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unreachable_cells_are_flagged() {
        let p = ApproxParams::three_param(0.02, 0.04, 0.5, 0.0).unwrap();
        let g = surface(
            &p,
            100.0,
            &[20.0, 100.0, 400.0],
            &[0.25],
            &DiscountCurve::flat(0.04),
            SurfaceMethod::Exact,
        )
        .unwrap();
        assert!(g.flags[0].iter().any(|f| *f != CellFlag::Ok));
        for (v, f) in g.iv[0].iter().zip(&g.flags[0]) {
            assert_eq!(v.is_nan(), *f != CellFlag::Ok);
        }
    }
}
