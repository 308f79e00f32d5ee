//! Approximate option prices of the four model families.
//!
//! Every family prices a call as
//!
//! ```text
//! C̃ = C₀₀ − τ (V₁ᵋ G1 + V₂ᵋ G2 + V₃ᵋ G3) + τ² (V₁ᵟ G1 + V₂ᵟ G2 + V₃ᵟ G3)
//! ```
//!
//! with some of the group parameters pinned to zero:
//!
//! | family       | free scalars                         |
//! |--------------|--------------------------------------|
//! | `SevenParam` | λ̄, V₁ᵋ, V₂ᵋ, V₃ᵋ, V₁ᵟ, V₂ᵟ, V₃ᵟ      |
//! | `FiveParam`  | λ̄, V₁ᵋ, V₂ᵋ, V₁ᵟ, V₂ᵟ                |
//! | `ThreeParam` | λ̄, Vᵋ, Vᵟ (the G2 coefficients)      |
//! | `SvOnly`     | V₁ᵋ, V₂ᵋ, V₁ᵟ, V₂ᵟ with λ̄ = 0        |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::black_scholes::{
    c00_call, c00_put, greek_blocks, GreekBlocks, LevelParams, QuoteContext,
};
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    SevenParam,
    FiveParam,
    ThreeParam,
    SvOnly,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::SevenParam,
        ModelKind::FiveParam,
        ModelKind::ThreeParam,
        ModelKind::SvOnly,
    ];

    /// Which of the six correction slots
    /// `[V₁ᵋ, V₂ᵋ, V₃ᵋ, V₁ᵟ, V₂ᵟ, V₃ᵟ]` the family leaves free.
    pub fn free_slots(self) -> [bool; 6] {
        match self {
            ModelKind::SevenParam => [true; 6],
            ModelKind::FiveParam | ModelKind::SvOnly => [true, true, false, true, true, false],
            ModelKind::ThreeParam => [false, true, false, false, true, false],
        }
    }

    pub fn lambda_is_free(self) -> bool {
        !matches!(self, ModelKind::SvOnly)
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::SevenParam => "7p",
            ModelKind::FiveParam => "5p",
            ModelKind::ThreeParam => "3p",
            ModelKind::SvOnly => "sv",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "7p" | "seven" | "7" => Ok(ModelKind::SevenParam),
            "5p" | "five" | "5" => Ok(ModelKind::FiveParam),
            "3p" | "three" | "3" => Ok(ModelKind::ThreeParam),
            "sv" | "svonly" | "sv-only" => Ok(ModelKind::SvOnly),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Calibratable group parameters of one family for one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxParams {
    pub kind: ModelKind,
    pub lambda_bar: f64,
    pub avg_var: f64,
    /// `[V₁ᵋ, V₂ᵋ, V₃ᵋ]`
    pub v_eps: [f64; 3],
    /// `[V₁ᵟ, V₂ᵟ, V₃ᵟ]`
    pub v_delta: [f64; 3],
}

impl ApproxParams {
    /// Checked constructor; rejects parameters that break the family's
    /// zero pattern.
    pub fn new(
        kind: ModelKind,
        lambda_bar: f64,
        avg_var: f64,
        v_eps: [f64; 3],
        v_delta: [f64; 3],
    ) -> Result<Self> {
        let p = Self {
            kind,
            lambda_bar,
            avg_var,
            v_eps,
            v_delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn seven_param(
        lambda_bar: f64,
        avg_var: f64,
        v_eps: [f64; 3],
        v_delta: [f64; 3],
    ) -> Result<Self> {
        Self::new(ModelKind::SevenParam, lambda_bar, avg_var, v_eps, v_delta)
    }

    pub fn five_param(
        lambda_bar: f64,
        avg_var: f64,
        v_eps: [f64; 2],
        v_delta: [f64; 2],
    ) -> Result<Self> {
        Self::new(
            ModelKind::FiveParam,
            lambda_bar,
            avg_var,
            [v_eps[0], v_eps[1], 0.0],
            [v_delta[0], v_delta[1], 0.0],
        )
    }

    pub fn three_param(lambda_bar: f64, avg_var: f64, v_eps: f64, v_delta: f64) -> Result<Self> {
        Self::new(
            ModelKind::ThreeParam,
            lambda_bar,
            avg_var,
            [0.0, v_eps, 0.0],
            [0.0, v_delta, 0.0],
        )
    }

    pub fn sv_only(avg_var: f64, v_eps: [f64; 2], v_delta: [f64; 2]) -> Result<Self> {
        Self::new(
            ModelKind::SvOnly,
            0.0,
            avg_var,
            [v_eps[0], v_eps[1], 0.0],
            [v_delta[0], v_delta[1], 0.0],
        )
    }

    pub fn validate(&self) -> Result<()> {
        LevelParams::new(self.avg_var, self.lambda_bar)?;
        let slots = self.slots();
        if slots.iter().any(|v| !v.is_finite()) {
            return Err(domain("group parameters must be finite"));
        }
        for (i, (&free, &v)) in self.kind.free_slots().iter().zip(slots.iter()).enumerate() {
            if !free && v != 0.0 {
                return Err(domain(format!(
                    "{} family requires correction slot {i} to be zero, got {v}",
                    self.kind
                )));
            }
        }
        if self.kind == ModelKind::SvOnly && self.lambda_bar != 0.0 {
            return Err(domain("SV-only family requires λ̄ = 0"));
        }
        Ok(())
    }

    pub fn level(&self) -> LevelParams {
        LevelParams {
            avg_var: self.avg_var,
            lambda_bar: self.lambda_bar,
        }
    }

    /// `[V₁ᵋ, V₂ᵋ, V₃ᵋ, V₁ᵟ, V₂ᵟ, V₃ᵟ]`
    pub fn slots(&self) -> [f64; 6] {
        [
            self.v_eps[0],
            self.v_eps[1],
            self.v_eps[2],
            self.v_delta[0],
            self.v_delta[1],
            self.v_delta[2],
        ]
    }

    /// Parameters of `kind` built from six slot values; slots the family
    /// pins are dropped.
    pub fn from_slots(
        kind: ModelKind,
        lambda_bar: f64,
        avg_var: f64,
        slots: [f64; 6],
    ) -> Result<Self> {
        let mut s = slots;
        for (v, free) in s.iter_mut().zip(kind.free_slots()) {
            if !free {
                *v = 0.0;
            }
        }
        let lambda_bar = if kind.lambda_is_free() {
            lambda_bar
        } else {
            0.0
        };
        Self::new(
            kind,
            lambda_bar,
            avg_var,
            [s[0], s[1], s[2]],
            [s[3], s[4], s[5]],
        )
    }

    /// Projection onto a (nested) family: pinned slots are zeroed and
    /// `λ̄` is dropped for the SV-only family.
    pub fn restrict_to(&self, kind: ModelKind) -> Result<Self> {
        Self::from_slots(kind, self.lambda_bar, self.avg_var, self.slots())
    }
}

/// A corrected price and whether it respects the no-arbitrage bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceQuality {
    pub value: f64,
    pub arbitrage_ok: bool,
}

const BOUND_SLACK: f64 = 1e-12;

/// Call bounds `[max(x − K B e^{−λ̄τ}, 0), x]`.
pub fn call_bounds(ctx: &QuoteContext, lambda_bar: f64) -> (f64, f64) {
    let kb = ctx.discounted_strike() * (-lambda_bar * ctx.tau()).exp();
    ((ctx.spot() - kb).max(0.0), ctx.spot())
}

/// Put bounds implied by the call bounds and parity.
pub fn put_bounds(ctx: &QuoteContext, lambda_bar: f64) -> (f64, f64) {
    let kb = ctx.discounted_strike();
    let default_leg = -kb * (-lambda_bar * ctx.tau()).exp_m1();
    (default_leg.max(kb - ctx.spot()).max(0.0), kb)
}

fn quality(value: f64, (lo, hi): (f64, f64), scale: f64) -> PriceQuality {
    let slack = BOUND_SLACK * scale;
    PriceQuality {
        value,
        arbitrage_ok: value.is_finite() && value >= lo - slack && value <= hi + slack,
    }
}

/// Price correction `C̃ − C₀₀` from the greek blocks, evaluated the way each
/// family's formula is written.
fn correction(params: &ApproxParams, tau: f64, g: &GreekBlocks) -> f64 {
    let [e1, e2, e3] = params.v_eps;
    let [d1, d2, d3] = params.v_delta;
    let tau2 = tau * tau;
    match params.kind {
        ModelKind::SevenParam => {
            -tau * (e1 * g.g1 + e2 * g.g2 + e3 * g.g3) + tau2 * (d1 * g.g1 + d2 * g.g2 + d3 * g.g3)
        }
        ModelKind::FiveParam | ModelKind::SvOnly => {
            -tau * (e1 * g.g1 + e2 * g.g2) + tau2 * (d1 * g.g1 + d2 * g.g2)
        }
        ModelKind::ThreeParam => (-tau * e2 + tau2 * d2) * g.g2,
    }
}

fn check_tau(ctx: &QuoteContext) -> Result<()> {
    if ctx.tau() == 0.0 {
        return Err(domain(
            "approximate prices require positive time to maturity",
        ));
    }
    Ok(())
}

/// Approximate call price.
pub fn price_call(params: &ApproxParams, ctx: &QuoteContext) -> Result<PriceQuality> {
    check_tau(ctx)?;
    let lv = params.level();
    let g = greek_blocks(ctx, &lv)?;
    let value = c00_call(ctx, &lv) + correction(params, ctx.tau(), &g);
    Ok(quality(value, call_bounds(ctx, lv.lambda_bar), ctx.spot()))
}

/// Approximate put price; satisfies `C̃ − P̃ = x − K B` by construction.
pub fn price_put(params: &ApproxParams, ctx: &QuoteContext) -> Result<PriceQuality> {
    check_tau(ctx)?;
    let lv = params.level();
    let g = greek_blocks(ctx, &lv)?;
    let value = c00_put(ctx, &lv) + correction(params, ctx.tau(), &g);
    Ok(quality(value, put_bounds(ctx, lv.lambda_bar), ctx.spot()))
}

/// Linear structure of the price in the six correction slots: the
/// leading-order price and the coefficient of each slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceBasis {
    pub base: f64,
    pub columns: [f64; 6],
}

/// `C̃ = base + Σ columns[j] · slot[j]` for a call (`put = false`) or put.
pub fn price_basis(ctx: &QuoteContext, lv: &LevelParams, put: bool) -> Result<PriceBasis> {
    check_tau(ctx)?;
    let g = greek_blocks(ctx, lv)?;
    let tau = ctx.tau();
    let tau2 = tau * tau;
    let base = if put {
        c00_put(ctx, lv)
    } else {
        c00_call(ctx, lv)
    };
    Ok(PriceBasis {
        base,
        columns: [
            -tau * g.g1,
            -tau * g.g2,
            -tau * g.g3,
            tau2 * g.g1,
            tau2 * g.g2,
            tau2 * g.g3,
        ],
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Algebraic nesting of the families at one quote:
/// 7p with V₃'s zeroed equals 5p, 5p with V₁'s zeroed equals 3p, and 5p
/// with `λ̄ = 0` equals SV-only, each to 1e−12 relative.
pub fn nesting_check(params7: &ApproxParams, ctx: &QuoteContext) -> bool {
    let run = || -> Result<bool> {
        let p = params7.restrict_to(ModelKind::SevenParam)?;
        let mut seven_no_v3 = p;
        seven_no_v3.v_eps[2] = 0.0;
        seven_no_v3.v_delta[2] = 0.0;
        let five = p.restrict_to(ModelKind::FiveParam)?;
        let ok_75 = rel_close(
            price_call(&seven_no_v3, ctx)?.value,
            price_call(&five, ctx)?.value,
            1e-12,
        );

        let mut five_no_v1 = five;
        five_no_v1.v_eps[0] = 0.0;
        five_no_v1.v_delta[0] = 0.0;
        let three = five.restrict_to(ModelKind::ThreeParam)?;
        let ok_53 = rel_close(
            price_call(&five_no_v1, ctx)?.value,
            price_call(&three, ctx)?.value,
            1e-12,
        );

        let mut five_no_lambda = five;
        five_no_lambda.lambda_bar = 0.0;
        let sv = five.restrict_to(ModelKind::SvOnly)?;
        let ok_5sv = rel_close(
            price_call(&five_no_lambda, ctx)?.value,
            price_call(&sv, ctx)?.value,
            1e-12,
        );
        Ok(ok_75 && ok_53 && ok_5sv)
    };
    run().unwrap_or(false)
}
