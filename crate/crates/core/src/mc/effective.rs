//! Group parameters implied by a concrete five-factor model.
//!
//! Averages `⟨·⟩` are taken against the invariant laws of the fast factors,
//! `N(m, v²)` for `Y` and `N(m̃, ṽ²)` for `Q`, at the current slow state
//! `(z, u)`. The Poisson solutions enter only through their derivatives:
//!
//! ```text
//! φ'(y) = 1/(v² ψ(y)) ∫_{−∞}^{y} (σ²(s,z) − ⟨σ²⟩) ψ(s) ds
//! ```
//!
//! and likewise `φ̃'` for `f − ⟨f⟩` in `q`. With
//! `A = ⟨σ φ'⟩`, `B = ⟨Λ φ'⟩`, `C = ⟨Λ̃ φ̃'⟩`:
//!
//! ```text
//! V₁ᵋ = √(ε/2) v ρ₁ A
//! V₂ᵋ = √(2ε) (β v ρ₁ A − v B / 2)
//! V₃ᵋ = −√(2ε) (β v B + ṽ C)
//! V₁ᵟ = (√δ/4) ρ₂ ⟨σ⟩ g ⟨σ²⟩_z
//! V₂ᵟ = (√δ/2) (β ρ₂ ⟨σ⟩ g ⟨σ²⟩_z − g ⟨Γ⟩ ⟨σ²⟩_z / 2)
//! V₃ᵟ = −(√δ/2) (β g ⟨Γ⟩ ⟨σ²⟩_z + g̃ ⟨Γ̃⟩ ⟨f⟩_u)
//! ```
//!
//! Terms with `φ̃` differentiated in `y` or `φ` in `q` vanish because each
//! Poisson solution depends on one fast variable only. The bond corrections
//! are `L = V₃ᵋ` and `L̃ = −√δ (β g ⟨Γ⟩ ⟨σ²⟩_z + g̃ ⟨Γ̃⟩ ⟨f⟩_u) = 2V₃ᵟ`.

use std::cell::Cell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bond::BondParams;
use crate::error::{Error, Result};
use crate::mc::model::MCModelSpec;
use crate::pricer::ApproxParams;

/// Half-width of the integration window in standard deviations.
const WINDOW: f64 = 12.0;
const REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub params: ApproxParams,
    pub bond: BondParams,
    /// `⟨σ²⟩` at the initial slow state.
    pub avg_var: f64,
    /// `⟨f⟩` at the initial slow state.
    pub avg_f: f64,
    /// Largest quadrature error estimate relative to its integral.
    pub quad_error: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    #[inline]
    pub fn pdf(&self, y: f64) -> f64 {
        let t = (y - self.mean) / self.sd;
        (-0.5 * t * t).exp() / (self.sd * (2.0 * PI).sqrt())
    }

    pub fn lo(&self) -> f64 {
        self.mean - WINDOW * self.sd
    }

    pub fn hi(&self) -> f64 {
        self.mean + WINDOW * self.sd
    }
}

/// Double-exponential quadrature over equal pieces no wider than `unit`;
/// returns the integral and the summed error estimate.
fn pieces<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, unit: f64, target: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let n = (((b - a).abs() / unit).ceil() as usize).max(1);
    let w = (b - a) / n as f64;
    let mut total = 0.0;
    let mut err = 0.0;
    for i in 0..n {
        let lo = a + i as f64 * w;
        let hi = if i + 1 == n { b } else { lo + w };
        let o = quadrature::double_exponential::integrate(f, lo, hi, target / n as f64);
        total += o.integral;
        err += o.error_estimate;
    }
    (total, err)
}

struct Quad {
    worst: f64,
}

impl Quad {
    fn integrate<F: Fn(f64) -> f64>(&mut self, f: F, law: Gaussian, scale: f64) -> Result<f64> {
        let scale = scale.max(1e-300);
        let target = REL_TOL * scale;
        let (integral, err) = pieces(&f, law.lo(), law.hi(), law.sd, target * 1e-2);
        if !integral.is_finite() || err > target {
            return Err(Error::Quadrature {
                achieved: err / scale,
                target: REL_TOL,
            });
        }
        self.worst = self.worst.max(err / scale);
        Ok(integral)
    }

    /// `⟨h⟩` under `law`.
    fn mean<F: Fn(f64) -> f64>(&mut self, law: Gaussian, h: F, scale: f64) -> Result<f64> {
        self.integrate(|y| h(y) * law.pdf(y), law, scale)
    }

    /// `⟨w φ'⟩` where `φ'` solves the Poisson equation with source
    /// `src − ⟨src⟩` under `law`.
    fn poisson_bracket<W, S>(&mut self, law: Gaussian, w: W, src: S, src_scale: f64) -> Result<f64>
    where
        W: Fn(f64) -> f64,
        S: Fn(f64) -> f64,
    {
        let avg = self.mean(law, &src, src_scale)?;
        let centered = |s: f64| (src(s) - avg) * law.pdf(s);
        let inner_err = Cell::new(0.0f64);
        // G(y) = ∫_{−∞}^{y} centered = −∫_{y}^{∞} centered, taken from the nearer tail
        let big_g = |y: f64| -> f64 {
            let (val, err) = if y <= law.mean {
                pieces(&centered, law.lo(), y, law.sd, 1e-14 * src_scale)
            } else {
                let (v, e) = pieces(&centered, y, law.hi(), law.sd, 1e-14 * src_scale);
                (-v, e)
            };
            inner_err.set(inner_err.get().max(err));
            val
        };
        let scale = src_scale * law.sd;
        let v = self.integrate(|y| w(y) * big_g(y), law, scale)? / (law.sd * law.sd);
        if inner_err.get() > REL_TOL * src_scale {
            return Err(Error::Quadrature {
                achieved: inner_err.get() / src_scale,
                target: REL_TOL,
            });
        }
        Ok(v)
    }
}

/// Averages and Poisson brackets needed by the group parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Brackets {
    pub avg_var: f64,
    pub avg_sigma: f64,
    pub avg_f: f64,
    pub avg_var_z: f64,
    pub avg_f_u: f64,
    pub avg_gamma: f64,
    pub avg_gamma_tilde: f64,
    /// `⟨σ φ'⟩`
    pub sigma_phi: f64,
    /// `⟨Λ φ'⟩`
    pub lambda_phi: f64,
    /// `⟨Λ̃ φ̃'⟩`
    pub lambda_tilde_phi: f64,
    pub quad_error: f64,
}

pub fn brackets(spec: &MCModelSpec) -> Result<Brackets> {
    let ly = Gaussian {
        mean: spec.m,
        sd: spec.v,
    };
    let lq = Gaussian {
        mean: spec.m_tilde,
        sd: spec.v_tilde,
    };
    let (z, u) = (spec.z0, spec.u0);
    let s = &spec.sigma;
    let var_scale = s.range().1.powi(2).max(1e-12);
    let f_scale = spec.f.range().1.abs().max(1e-12);
    let mut q = Quad { worst: 0.0 };

    let avg_var = q.mean(ly, |y| s.eval(y, z).powi(2), var_scale)?;
    let avg_sigma = q.mean(ly, |y| s.eval(y, z), var_scale.sqrt())?;
    let avg_f = q.mean(lq, |x| spec.f.eval(x, u), f_scale)?;
    let avg_var_z = q.mean(ly, |y| 2.0 * s.eval(y, z) * s.d_slow(y, z), var_scale)?;
    let avg_f_u = q.mean(lq, |x| spec.f.d_slow(x, u), f_scale)?;
    let gamma = &spec.market_gamma;
    let gamma_t = &spec.market_gamma_tilde;
    let avg_gamma = q.mean(ly, |y| gamma.eval(y, z), gamma.range().1.abs().max(1.0))?;
    let avg_gamma_tilde = q.mean(lq, |x| gamma_t.eval(x, u), gamma_t.range().1.abs().max(1.0))?;

    let sigma_phi = q.poisson_bracket(ly, |y| s.eval(y, z), |y| s.eval(y, z).powi(2), var_scale)?;
    let lam = &spec.market_lambda;
    let lambda_phi =
        q.poisson_bracket(ly, |y| lam.eval(y, z), |y| s.eval(y, z).powi(2), var_scale)?;
    let lam_t = &spec.market_lambda_tilde;
    let lambda_tilde_phi =
        q.poisson_bracket(lq, |x| lam_t.eval(x, u), |x| spec.f.eval(x, u), f_scale)?;

    Ok(Brackets {
        avg_var,
        avg_sigma,
        avg_f,
        avg_var_z,
        avg_f_u,
        avg_gamma,
        avg_gamma_tilde,
        sigma_phi,
        lambda_phi,
        lambda_tilde_phi,
        quad_error: q.worst,
    })
}

/// Seven-parameter group parameters and bond corrections of a model at its
/// initial slow state.
pub fn effective_params(spec: &MCModelSpec) -> Result<EffectiveParams> {
    spec.validate()?;
    let b = brackets(spec)?;
    assemble(spec, &b)
}

pub(crate) fn assemble(spec: &MCModelSpec, b: &Brackets) -> Result<EffectiveParams> {
    let (eps, delta) = (spec.eps, spec.delta);
    let (v, vt, beta) = (spec.v, spec.v_tilde, spec.beta);
    let g = spec.g.eval(spec.z0);
    let gt = spec.g_tilde.eval(spec.u0);
    let se = (2.0 * eps).sqrt();
    let sd = delta.sqrt();

    let v1e = (eps / 2.0).sqrt() * v * spec.rho1 * b.sigma_phi;
    let v2e = se * (beta * v * spec.rho1 * b.sigma_phi - 0.5 * v * b.lambda_phi);
    let v3e = -se * (beta * v * b.lambda_phi + vt * b.lambda_tilde_phi);

    let lev = spec.rho2 * b.avg_sigma * g * b.avg_var_z;
    let slow_var = g * b.avg_gamma * b.avg_var_z;
    let slow_f = gt * b.avg_gamma_tilde * b.avg_f_u;
    let v1d = 0.25 * sd * lev;
    let v2d = 0.5 * sd * (beta * lev - 0.5 * slow_var);
    let v3d = -0.5 * sd * (beta * slow_var + slow_f);

    let lambda_bar = beta * b.avg_var + b.avg_f;
    let params =
        ApproxParams::seven_param(lambda_bar, b.avg_var, [v1e, v2e, v3e], [v1d, v2d, v3d])?;
    let bond = BondParams::new(lambda_bar, v3e, 2.0 * v3d)?;
    Ok(EffectiveParams {
        params,
        bond,
        avg_var: b.avg_var,
        avg_f: b.avg_f,
        quad_error: b.quad_error,
    })
}
