//! Black-Scholes building blocks for the defaultable leading-order price.
//!
//! The leading-order call is a Black-Scholes call with volatility
//! `σ̄ = √⟨σ²⟩`, discounted strike `K·B(t,T)` and an extra rate bump `λ̄`:
//!
//! ```text
//! C₀₀ = x N(d̃₁) − K B e^{−λ̄τ} N(d̃₂)
//! d̃₁,₂ = [ln(x / (K B)) + (λ̄ ± σ̄²/2) τ] / (σ̄ √τ)
//! ```
//!
//! The approximation families correct `C₀₀` with three operator blocks:
//! `G1 = x ∂ₓ(x² ∂ₓₓC₀₀)`, `G2 = x² ∂ₓₓC₀₀` and `G3 = x ∂ₓC₀₀ − C₀₀`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{domain, Result};

/// Standard normal cumulative distribution function.
///
/// Evaluated through `erfc`, which keeps full relative accuracy in the
/// lower tail.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Market inputs of a single European quote.
///
/// `discount` is the riskless zero-coupon bond `B(t,T)` and `tau = T − t`
/// in years.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteContext {
    spot: f64,
    strike: f64,
    discount: f64,
    tau: f64,
}

impl QuoteContext {
    pub fn new(spot: f64, strike: f64, discount: f64, tau: f64) -> Result<Self> {
        if !(spot.is_finite() && spot > 0.0) {
            return Err(domain(format!("spot must be positive, got {spot}")));
        }
        if !(strike.is_finite() && strike >= 0.0) {
            return Err(domain(format!("strike must be non-negative, got {strike}")));
        }
        if !(discount.is_finite() && discount > 0.0 && discount <= 1.0) {
            return Err(domain(format!(
                "discount must lie in (0, 1], got {discount}"
            )));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(domain(format!(
                "time to maturity must be non-negative, got {tau}"
            )));
        }
        Ok(Self {
            spot,
            strike,
            discount,
            tau,
        })
    }

    /// Context with a flat continuously-compounded riskless rate.
    pub fn with_rate(spot: f64, strike: f64, rate: f64, tau: f64) -> Result<Self> {
        Self::new(spot, strike, (-rate * tau).exp(), tau)
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `K·B(t,T)`.
    pub fn discounted_strike(&self) -> f64 {
        self.strike * self.discount
    }

    /// Riskless forward `x / B(t,T)`.
    pub fn forward(&self) -> f64 {
        self.spot / self.discount
    }

    pub fn with_strike(&self, strike: f64) -> Result<Self> {
        Self::new(self.spot, strike, self.discount, self.tau)
    }

    pub fn with_spot(&self, spot: f64) -> Result<Self> {
        Self::new(spot, self.strike, self.discount, self.tau)
    }
}

/// Leading-order level parameters shared by option and bond prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelParams {
    /// `σ̄² = ⟨σ²⟩` in 1/year.
    pub avg_var: f64,
    /// `λ̄ = β⟨σ²⟩ + ⟨f⟩` in 1/year.
    pub lambda_bar: f64,
}

impl LevelParams {
    pub fn new(avg_var: f64, lambda_bar: f64) -> Result<Self> {
        if !(avg_var.is_finite() && avg_var > 0.0) {
            return Err(domain(format!(
                "average variance must be positive, got {avg_var}"
            )));
        }
        if !(lambda_bar.is_finite() && lambda_bar >= 0.0) {
            return Err(domain(format!("λ̄ must be non-negative, got {lambda_bar}")));
        }
        Ok(Self {
            avg_var,
            lambda_bar,
        })
    }

    /// Level parameters from a volatility rather than a variance.
    pub fn from_vol(vol: f64, lambda_bar: f64) -> Result<Self> {
        Self::new(vol * vol, lambda_bar)
    }

    pub fn vol(&self) -> f64 {
        self.avg_var.sqrt()
    }
}

/// `(d̃₁, d̃₂)` of the leading-order price.
pub fn d_tilde(ctx: &QuoteContext, lv: &LevelParams) -> Result<(f64, f64)> {
    if ctx.tau == 0.0 {
        return Err(domain("d̃ undefined at zero time to maturity"));
    }
    if ctx.strike == 0.0 {
        return Err(domain("d̃ undefined at zero strike"));
    }
    Ok(d_pair(ctx, lv.vol(), lv.lambda_bar))
}

#[inline]
fn d_pair(ctx: &QuoteContext, vol: f64, rate_level: f64) -> (f64, f64) {
    let total_vol = vol * ctx.tau.sqrt();
    let d1 = ((ctx.spot / ctx.discounted_strike()).ln() + (rate_level + 0.5 * vol * vol) * ctx.tau)
        / total_vol;
    (d1, d1 - total_vol)
}

/// Leading-order call `C₀₀`.
pub fn c00_call(ctx: &QuoteContext, lv: &LevelParams) -> f64 {
    if ctx.strike == 0.0 {
        return ctx.spot;
    }
    if ctx.tau == 0.0 {
        return (ctx.spot - ctx.discounted_strike()).max(0.0);
    }
    let (d1, d2) = d_pair(ctx, lv.vol(), lv.lambda_bar);
    let kb = ctx.discounted_strike() * (-lv.lambda_bar * ctx.tau).exp();
    ctx.spot * norm_cdf(d1) - kb * norm_cdf(d2)
}

/// Leading-order put, the parity partner of [`c00_call`].
///
/// Split as `K B (1 − e^{−λ̄τ})` (the value paid on default before `T`) plus a
/// Black-Scholes put at rate level `λ̄`, which avoids cancellation in the
/// left wing.
pub fn c00_put(ctx: &QuoteContext, lv: &LevelParams) -> f64 {
    if ctx.strike == 0.0 {
        return 0.0;
    }
    if ctx.tau == 0.0 {
        return (ctx.discounted_strike() - ctx.spot).max(0.0);
    }
    let (d1, d2) = d_pair(ctx, lv.vol(), lv.lambda_bar);
    let kb = ctx.discounted_strike();
    let survival = (-lv.lambda_bar * ctx.tau).exp();
    let default_leg = -kb * (-lv.lambda_bar * ctx.tau).exp_m1();
    default_leg + kb * survival * norm_cdf(-d2) - ctx.spot * norm_cdf(-d1)
}

/// The three operator blocks applied to `C₀₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreekBlocks {
    /// `x ∂ₓ(x² ∂ₓₓC₀₀)`
    pub g1: f64,
    /// `x² ∂ₓₓC₀₀`
    pub g2: f64,
    /// `x ∂ₓC₀₀ − C₀₀`
    pub g3: f64,
}

impl GreekBlocks {
    pub fn as_array(&self) -> [f64; 3] {
        [self.g1, self.g2, self.g3]
    }
}

/// Closed forms of the greek blocks:
/// `G2 = x N'(d̃₁)/(σ̄√τ)`, `G3 = K B e^{−λ̄τ} N(d̃₂)`, `G1 = G2 (1 − d̃₁/(σ̄√τ))`.
pub fn greek_blocks(ctx: &QuoteContext, lv: &LevelParams) -> Result<GreekBlocks> {
    if ctx.tau == 0.0 {
        return Err(domain("greek blocks undefined at zero time to maturity"));
    }
    if ctx.strike == 0.0 {
        return Ok(GreekBlocks {
            g1: 0.0,
            g2: 0.0,
            g3: 0.0,
        });
    }
    let total_vol = lv.vol() * ctx.tau.sqrt();
    let (d1, d2) = d_pair(ctx, lv.vol(), lv.lambda_bar);
    let g2 = ctx.spot * norm_pdf(d1) / total_vol;
    let g3 = ctx.discounted_strike() * (-lv.lambda_bar * ctx.tau).exp() * norm_cdf(d2);
    let g1 = g2 * (1.0 - d1 / total_vol);
    Ok(GreekBlocks { g1, g2, g3 })
}

/// Black-Scholes vega `∂C/∂σ = x N'(d₁) √τ` at volatility `sigma` and rate
/// level `rate_level` on top of the discounted strike.
pub fn vega(ctx: &QuoteContext, sigma: f64, rate_level: f64) -> Result<f64> {
    if ctx.tau == 0.0 {
        return Err(domain("vega undefined at zero time to maturity"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(domain(format!("volatility must be positive, got {sigma}")));
    }
    if ctx.strike == 0.0 {
        return Ok(0.0);
    }
    let (d1, _) = d_pair(ctx, sigma, rate_level);
    Ok(ctx.spot * norm_pdf(d1) * ctx.tau.sqrt())
}

/// Zero-rate Black-Scholes call on the discounted strike, the reference
/// price used for implied volatilities.
pub fn bs_call(ctx: &QuoteContext, sigma: f64) -> f64 {
    c00_call(
        ctx,
        &LevelParams {
            avg_var: sigma * sigma,
            lambda_bar: 0.0,
        },
    )
}

/// Zero-rate Black-Scholes put on the discounted strike.
pub fn bs_put(ctx: &QuoteContext, sigma: f64) -> f64 {
    c00_put(
        ctx,
        &LevelParams {
            avg_var: sigma * sigma,
            lambda_bar: 0.0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig5_ctx() -> (QuoteContext, LevelParams) {
        let tau = 273.0 / 365.0;
        let ctx = QuoteContext::new(8.62, 8.62, (-0.047771f64 * tau).exp(), tau).unwrap();
        (ctx, LevelParams::from_vol(0.2922, 0.04385).unwrap())
    }

    #[test]
    fn norm_cdf_symmetry_and_saturation() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(38.0) - 1.0).abs() <= 1e-15);
        for i in -400..=400 {
            let x = i as f64 * 0.1;
            assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() <= 1e-15, "x={x}");
        }
    }

    #[test]
    fn norm_cdf_matches_quadrature_of_density() {
        let integral = quadrature::double_exponential::integrate(norm_pdf, -40.0, 1.0, 1e-15);
        assert!((norm_cdf(1.0) - integral.integral).abs() <= 1e-12);
        // 40-digit reference
        assert!((norm_cdf(1.0) - 0.8413447460685429485852).abs() <= 1e-15);
    }

    #[test]
    fn norm_cdf_monotone() {
        let mut prev = 0.0;
        for i in -1000..=1000 {
            let v = norm_cdf(i as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn d_tilde_at_the_forward() {
        let ctx = QuoteContext::new(100.0 * 0.95, 100.0, 0.95, 0.5).unwrap();
        let lv = LevelParams::from_vol(0.3, 0.0).unwrap();
        let (d1, d2) = d_tilde(&ctx, &lv).unwrap();
        let half = 0.5 * 0.3 * 0.5f64.sqrt();
        assert!((d1 - half).abs() < 1e-15);
        assert!((d2 + half).abs() < 1e-15);
    }

    #[test]
    fn d_tilde_reference_values() {
        let (ctx, lv) = fig5_ctx();
        let (d1, d2) = d_tilde(&ctx, &lv).unwrap();
        // high-precision evaluation of the same formula
        assert!((d1 - 0.397527905397384278).abs() < 1e-14);
        assert!((d2 - 0.144822167595868938).abs() < 1e-14);
        assert!((d1 - d2 - 0.2922 * ctx.tau().sqrt()).abs() < 1e-14);
    }

    #[test]
    fn d_tilde_domain_errors() {
        let lv = LevelParams::from_vol(0.2, 0.0).unwrap();
        let zero_tau = QuoteContext::new(100.0, 100.0, 1.0, 0.0).unwrap();
        assert!(d_tilde(&zero_tau, &lv).is_err());
        let zero_k = QuoteContext::new(100.0, 0.0, 1.0, 1.0).unwrap();
        assert!(d_tilde(&zero_k, &lv).is_err());
    }

    #[test]
    fn c00_limits() {
        let lv = LevelParams::from_vol(0.2, 0.03).unwrap();
        let zero_k = QuoteContext::new(100.0, 0.0, 0.97, 1.0).unwrap();
        assert_eq!(c00_call(&zero_k, &lv), 100.0);
        let expiry = QuoteContext::new(100.0, 90.0, 1.0, 0.0).unwrap();
        assert_eq!(c00_call(&expiry, &lv), 10.0);
        assert_eq!(c00_put(&expiry, &lv), 0.0);
    }

    #[test]
    fn c00_is_black_scholes_with_bumped_rate() {
        let ctx = QuoteContext::with_rate(100.0, 100.0, 0.04, 1.0).unwrap();
        let lv = LevelParams::from_vol(0.2, 0.02).unwrap();
        // Black-Scholes at r = 0.06, σ = 0.2, 40-digit reference
        assert!((c00_call(&ctx, &lv) - 10.989549152625987857).abs() < 1e-12);
        let (ctx5, lv5) = fig5_ctx();
        assert!((c00_call(&ctx5, &lv5) - 1.1539241791079839116).abs() < 1e-13);
    }

    #[test]
    fn c00_rejects_negative_inputs() {
        assert!(QuoteContext::new(-1.0, 100.0, 1.0, 1.0).is_err());
        assert!(QuoteContext::new(100.0, -1.0, 1.0, 1.0).is_err());
        assert!(QuoteContext::new(100.0, 100.0, 1.2, 1.0).is_err());
        assert!(QuoteContext::new(100.0, 100.0, 1.0, -0.1).is_err());
        assert!(LevelParams::new(0.04, -0.01).is_err());
        assert!(LevelParams::new(0.0, 0.01).is_err());
    }

    #[test]
    fn greek_blocks_zero_strike_and_g1_zero() {
        let lv = LevelParams::from_vol(0.25, 0.05).unwrap();
        let zero_k = QuoteContext::new(100.0, 0.0, 0.97, 1.0).unwrap();
        let g = greek_blocks(&zero_k, &lv).unwrap();
        assert_eq!(g.as_array(), [0.0, 0.0, 0.0]);

        // d̃₁ = σ̄√τ at x = K B e^{−λ̄τ} e^{σ̄²τ/2}
        let (k, b, tau) = (100.0, 0.97, 1.0);
        let x = k * b * (-0.05f64 * tau).exp() * (0.5 * 0.0625 * tau).exp();
        let ctx = QuoteContext::new(x, k, b, tau).unwrap();
        let g = greek_blocks(&ctx, &lv).unwrap();
        assert!(g.g1.abs() < 1e-12 * x, "G1 = {}", g.g1);
        assert!(greek_blocks(&ctx.with_spot(x).unwrap(), &lv).is_ok());
        assert!(greek_blocks(&QuoteContext::new(x, k, b, 0.0).unwrap(), &lv).is_err());
    }

    #[test]
    fn vega_identities() {
        let ctx = QuoteContext::new(100.0, 100.0, 1.0, 1.0).unwrap();
        let v = vega(&ctx, 0.2, 0.0).unwrap();
        let h = 1e-5;
        let fd = (bs_call(&ctx, 0.2 + h) - bs_call(&ctx, 0.2 - h)) / (2.0 * h);
        assert!((v - fd).abs() < 1e-7);
        assert!((v - 100.0 * norm_pdf(0.1)).abs() < 1e-12);

        let lv = LevelParams::from_vol(0.2, 0.0).unwrap();
        let g = greek_blocks(&ctx, &lv).unwrap();
        assert!((v - ctx.tau() * 0.2 * g.g2).abs() <= 1e-12 * v);

        let deep = QuoteContext::new(100.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(vega(&deep, 0.2, 0.0).unwrap(), 0.0);
        assert!(vega(
            &QuoteContext::new(100.0, 100.0, 1.0, 0.0).unwrap(),
            0.2,
            0.0
        )
        .is_err());
    }
}
