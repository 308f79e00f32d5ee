//! Path simulation of the five-factor model.
//!
//! Default is integrated out: every payoff is weighted by the survival
//! factor `e^{−∫λ}` instead of sampling a default time. Per step of length
//! `h`:
//!
//! - `ln S` takes a log-Euler step with drift `r + λ − σ²/2`, and `∫λ`
//!   accumulates the left-point intensity, which keeps the discrete
//!   discounted defaultable stock an exact martingale;
//! - the fast factors take the exact Ornstein-Uhlenbeck step with the
//!   market-price-of-risk drift frozen over the step;
//! - the slow factors take an Euler step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::correlation::{StepNoise, DIM};
use crate::mc::model::MCModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payoff {
    Call(f64),
    Put(f64),
    /// Zero-recovery zero-coupon bond with unit face.
    Bond,
    /// `e^{−rT} S_T e^{−∫λ}`, whose mean is the initial stock price.
    DiscountedStock,
}

impl Payoff {
    #[inline]
    fn value(&self, discount: f64, survival: f64, s: f64) -> f64 {
        match *self {
            Payoff::Call(k) => discount * survival * (s - k).max(0.0),
            Payoff::Put(k) => discount * (k - survival * k.min(s)),
            Payoff::Bond => discount * survival,
            Payoff::DiscountedStock => discount * survival * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

/// Smallest admissible step count: `⌈T·100 / min(1, 10ε)⌉`.
pub fn min_steps(maturity: f64, eps: f64) -> usize {
    (maturity * 100.0 / (10.0 * eps).min(1.0)).ceil() as usize
}

/// Pairs per work unit; fixed so the reduction order never depends on the
/// thread count.
const CHUNK_PAIRS: usize = 1024;

#[derive(Clone, Copy)]
struct PathEnd {
    s: f64,
    survival: f64,
}

struct Stepper<'a> {
    spec: &'a MCModelSpec,
    noise: StepNoise,
    h: f64,
    n_steps: usize,
    sy: f64,
    sq: f64,
    sd: f64,
}

impl Stepper<'_> {
    fn run(&self, normals: &[[f64; DIM]], sign: f64) -> PathEnd {
        let p = self.spec;
        let (mut ln_s, mut y, mut z, mut q, mut u) = (p.x0.ln(), p.y0, p.z0, p.q0, p.u0);
        let mut int_lambda = 0.0;
        let h = self.h;
        let a_decay = self.noise.decay;
        let eps_root2 = (2.0 * p.eps).sqrt();
        for zn in normals.iter().take(self.n_steps) {
            let zs = zn.map(|v| sign * v);
            let w = self.noise.apply(&zs);
            let sig = p.sigma.eval(y, z);
            let lam = p.beta * sig * sig + p.f.eval(q, u);
            ln_s += (p.rate + lam - 0.5 * sig * sig) * h + sig * w[0];
            int_lambda += lam * h;

            let mu_y = p.m - p.v * eps_root2 * p.market_lambda.eval(y, z);
            let mu_q = p.m_tilde - p.v_tilde * eps_root2 * p.market_lambda_tilde.eval(q, u);
            let g = p.g.eval(z);
            let gt = p.g_tilde.eval(u);
            let z_next = z
                + (p.delta * p.c.eval(z) - self.sd * g * p.market_gamma.eval(y, z)) * h
                + self.sd * g * w[2];
            let u_next = u
                + (p.delta * p.c_tilde.eval(u) - self.sd * gt * p.market_gamma_tilde.eval(q, u))
                    * h
                + self.sd * gt * w[4];
            y = mu_y + (y - mu_y) * a_decay + self.sy * w[1];
            q = mu_q + (q - mu_q) * a_decay + self.sq * w[3];
            z = z_next;
            u = u_next;
        }
        PathEnd {
            s: ln_s.exp(),
            survival: (-int_lambda).exp(),
        }
    }
}

#[derive(Clone)]
struct Sums {
    x: Vec<f64>,
    xx: Vec<f64>,
    xc: Vec<f64>,
    c: f64,
    cc: f64,
}

impl Sums {
    fn new(np: usize) -> Self {
        Sums {
            x: vec![0.0; np],
            xx: vec![0.0; np],
            xc: vec![0.0; np],
            c: 0.0,
            cc: 0.0,
        }
    }

    fn merge(&mut self, o: &Sums) {
        for k in 0..self.x.len() {
            self.x[k] += o.x[k];
            self.xx[k] += o.xx[k];
            self.xc[k] += o.xc[k];
        }
        self.c += o.c;
        self.cc += o.cc;
    }
}

/// Runs the antithetic pairs and accumulates payoff sums together with
/// cross sums against the discounted stock.
fn run_paths(
    spec: &MCModelSpec,
    maturity: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    payoffs: &[Payoff],
) -> Result<Sums> {
    spec.validate()?;
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(Error::Config(format!(
            "maturity must be positive, got {maturity}"
        )));
    }
    let needed = min_steps(maturity, spec.eps);
    if n_steps < needed {
        return Err(Error::Config(format!(
            "{n_steps} steps too coarse for T = {maturity}, ε = {}: need at least {needed}",
            spec.eps
        )));
    }
    if n_paths < 2 || n_paths % 2 != 0 {
        return Err(Error::Config(format!(
            "antithetic sampling needs an even path count ≥ 2, got {n_paths}"
        )));
    }
    let h = maturity / n_steps as f64;
    let stepper = Stepper {
        spec,
        noise: StepNoise::new(spec, h)?,
        h,
        n_steps,
        sy: spec.v * 2f64.sqrt() / spec.eps.sqrt(),
        sq: spec.v_tilde * 2f64.sqrt() / spec.eps.sqrt(),
        sd: spec.delta.sqrt(),
    };
    let discount = (-spec.rate * maturity).exp();
    let n_pairs = n_paths / 2;
    let n_chunks = n_pairs.div_ceil(CHUNK_PAIRS);
    let np = payoffs.len();

    let partials: Vec<Sums> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Sums::new(np);
            let mut normals = vec![[0.0; DIM]; n_steps];
            let start = c * CHUNK_PAIRS;
            let end = (start + CHUNK_PAIRS).min(n_pairs);
            for pair in start..end {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(pair as u64);
                for zn in normals.iter_mut() {
                    for v in zn.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                }
                let up = stepper.run(&normals, 1.0);
                let down = stepper.run(&normals, -1.0);
                let pair_mean = |pay: Payoff| {
                    0.5 * (pay.value(discount, up.survival, up.s)
                        + pay.value(discount, down.survival, down.s))
                };
                let cv = pair_mean(Payoff::DiscountedStock);
                acc.c += cv;
                acc.cc += cv * cv;
                for (k, &pay) in payoffs.iter().enumerate() {
                    let val = pair_mean(pay);
                    acc.x[k] += val;
                    acc.xx[k] += val * val;
                    acc.xc[k] += val * cv;
                }
            }
            acc
        })
        .collect();

    let mut total = Sums::new(np);
    for p in &partials {
        total.merge(p);
    }
    Ok(total)
}

/// Monte Carlo estimates of several payoffs at one maturity, all computed
/// from the same antithetic paths.
///
/// Path pair `i` draws its normals from a ChaCha8 stream keyed by `(seed, i)`,
/// so results do not depend on how pairs are scheduled across threads.
pub fn simulate(
    spec: &MCModelSpec,
    maturity: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    payoffs: &[Payoff],
) -> Result<Vec<MCEstimate>> {
    let t = run_paths(spec, maturity, n_steps, n_paths, seed, payoffs)?;
    let n = (n_paths / 2) as f64;
    Ok((0..payoffs.len())
        .map(|k| {
            let mean = t.x[k] / n;
            let var = if n > 1.0 {
                ((t.xx[k] - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            MCEstimate {
                mean,
                std_error: (var / n).sqrt(),
                n_paths,
                n_steps,
                seed,
            }
        })
        .collect())
}

/// Like [`simulate`], with the discounted stock (mean `x0`) as a control
/// variate and the regression coefficient estimated from the same paths.
pub fn simulate_controlled(
    spec: &MCModelSpec,
    maturity: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    payoffs: &[Payoff],
) -> Result<Vec<MCEstimate>> {
    let t = run_paths(spec, maturity, n_steps, n_paths, seed, payoffs)?;
    let n = (n_paths / 2) as f64;
    let mc = t.c / n;
    let var_c = (t.cc / n - mc * mc).max(0.0);
    Ok((0..payoffs.len())
        .map(|k| {
            let mx = t.x[k] / n;
            let var_x = (t.xx[k] / n - mx * mx).max(0.0);
            let cov = t.xc[k] / n - mx * mc;
            let beta = if var_c > 0.0 { cov / var_c } else { 0.0 };
            let mean = mx - beta * (mc - spec.x0);
            let resid = (var_x - beta * cov).max(0.0) * n / (n - 1.0).max(1.0);
            MCEstimate {
                mean,
                std_error: (resid / n).sqrt(),
                n_paths,
                n_steps,
                seed,
            }
        })
        .collect())
}

/// Single-payoff convenience wrapper of [`simulate`].
pub fn simulate_price(
    spec: &MCModelSpec,
    payoff: Payoff,
    maturity: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<MCEstimate> {
    Ok(simulate(spec, maturity, n_steps, n_paths, seed, &[payoff])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::black_scholes::{c00_call, LevelParams, QuoteContext};

    #[test]
    fn step_control() {
        assert_eq!(min_steps(1.0, 0.1), 100);
        assert_eq!(min_steps(1.0, 0.01), 1000);
        assert_eq!(min_steps(0.5, 1.0), 50);
        let spec = MCModelSpec::constant(0.2, 0.02, 0.0, 0.04, 100.0);
        assert!(simulate_price(&spec, Payoff::Bond, 1.0, 50, 100, 1).is_err());
        assert!(simulate_price(&spec, Payoff::Bond, 1.0, 100, 101, 1).is_err());
    }

    #[test]
    fn constant_model_matches_closed_form() {
        let spec = MCModelSpec::constant(0.25, 0.03, 0.2, 0.04, 100.0);
        let est = simulate(
            &spec,
            1.0,
            100,
            40_000,
            11,
            &[Payoff::Call(105.0), Payoff::Bond],
        )
        .unwrap();
        let lambda = 0.2 * 0.0625 + 0.03;
        let ctx = QuoteContext::with_rate(100.0, 105.0, 0.04, 1.0).unwrap();
        let exact = c00_call(&ctx, &LevelParams::from_vol(0.25, lambda).unwrap());
        assert!(
            (est[0].mean - exact).abs() < 3.0 * est[0].std_error,
            "{est:?} vs {exact}"
        );
        let bond = (-(0.04f64 + lambda)).exp();
        // survival is deterministic here, so the bond estimator is exact
        assert!((est[1].mean - bond).abs() < 1e-12);
    }

    #[test]
    fn parity_is_pathwise_and_reproducible() {
        let spec = MCModelSpec::logistic_test_family(0.1, 0.05);
        let pays = [
            Payoff::Call(95.0),
            Payoff::Put(95.0),
            Payoff::DiscountedStock,
        ];
        let a = simulate(&spec, 0.5, 50, 2000, 3, &pays).unwrap();
        let b = simulate(&spec, 0.5, 50, 2000, 3, &pays).unwrap();
        assert_eq!(a, b);
        let d = (-0.04f64 * 0.5).exp();
        let parity = a[0].mean - a[1].mean - (a[2].mean - d * 95.0);
        assert!(parity.abs() < 1e-10);
        let c = simulate(&spec, 0.5, 50, 2000, 4, &pays).unwrap();
        assert_ne!(a[0].mean, c[0].mean);
    }

    #[test]
    fn discounted_stock_is_a_martingale() {
        let spec = MCModelSpec::logistic_test_family(0.1, 0.05);
        let e = simulate_price(&spec, Payoff::DiscountedStock, 1.0, 100, 20_000, 5).unwrap();
        assert!((e.mean - 100.0).abs() < 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn fast_factor_has_its_invariant_variance() {
        // with Λ = 0 the exact OU step keeps Y ~ N(m, v²) stationary
        let mut spec = MCModelSpec::logistic_test_family(0.05, 0.01);
        spec.market_lambda = crate::mc::model::Func2::Constant(0.0);
        spec.y0 = 0.0;
        let h = 0.01;
        let sn = StepNoise::new(&spec, h).unwrap();
        let stepper = Stepper {
            spec: &spec,
            noise: sn,
            h,
            n_steps: 1,
            sy: spec.v * 2f64.sqrt() / spec.eps.sqrt(),
            sq: spec.v_tilde * 2f64.sqrt() / spec.eps.sqrt(),
            sd: spec.delta.sqrt(),
        };
        let var_step = stepper.sy * stepper.sy * (1.0 - sn.decay * sn.decay) * spec.eps / 2.0;
        let stationary = var_step / (1.0 - sn.decay * sn.decay);
        assert!((stationary - spec.v * spec.v).abs() < 1e-12);
    }

    #[test]
    fn control_variate_shrinks_error_without_bias() {
        let spec = MCModelSpec::constant(0.25, 0.03, 0.2, 0.04, 100.0);
        let pays = [Payoff::Call(80.0), Payoff::Call(100.0)];
        let plain = simulate(&spec, 1.0, 100, 40_000, 5, &pays).unwrap();
        let cv = simulate_controlled(&spec, 1.0, 100, 40_000, 5, &pays).unwrap();
        let ctx = QuoteContext::with_rate(100.0, 80.0, 0.04, 1.0).unwrap();
        let exact = c00_call(
            &ctx,
            &LevelParams::from_vol(0.25, 0.2 * 0.0625 + 0.03).unwrap(),
        );
        assert!((cv[0].mean - exact).abs() < 3.0 * cv[0].std_error);
        for (p, c) in plain.iter().zip(&cv) {
            assert!(c.std_error < 0.7 * p.std_error, "{p:?} {c:?}");
        }
    }
}
