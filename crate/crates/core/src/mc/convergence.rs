//! Empirical check of the approximation error against the oracle.

use serde::{Deserialize, Serialize};

use crate::black_scholes::QuoteContext;
use crate::error::{Error, Result};
use crate::mc::effective::effective_params;
use crate::mc::model::MCModelSpec;
use crate::mc::sim::{min_steps, simulate_controlled, Payoff};
use crate::pricer::price_call;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub delta: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    /// `max_K |MC − approximation|`
    pub max_error: f64,
    pub worst_strike: f64,
    /// Largest Monte Carlo standard error over the chain.
    pub noise: f64,
    /// `ε|ln ε| + δ`
    pub scale: f64,
    pub ratio: f64,
    /// Noise exceeds half the measured error.
    pub inconclusive: bool,
}

/// Ladder points: the two ladders are zipped, a ladder of length one is
/// broadcast against the other.
pub fn ladder_points(eps_ladder: &[f64], delta_ladder: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = eps_ladder.len().max(delta_ladder.len());
    let ok_len = |l: &[f64]| l.len() == 1 || l.len() == n;
    if eps_ladder.is_empty()
        || delta_ladder.is_empty()
        || !ok_len(eps_ladder)
        || !ok_len(delta_ladder)
    {
        return Err(Error::Config(
            "ε and δ ladders must be nonempty and of equal length unless one has a single value"
                .into(),
        ));
    }
    let at = |l: &[f64], i: usize| if l.len() == 1 { l[0] } else { l[i] };
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| (at(eps_ladder, i), at(delta_ladder, i)))
        .collect();
    for w in pts.windows(2) {
        let (e0, d0) = w[0];
        let (e1, d1) = w[1];
        if e1 > e0 || d1 > d0 || (e1 == e0 && d1 == d0) {
            return Err(Error::Config("ladders must be strictly decreasing".into()));
        }
    }
    if pts.iter().any(|&(e, d)| !(e > 0.0 && d > 0.0)) {
        return Err(Error::Config("ladder values must be positive".into()));
    }
    Ok(pts)
}

/// Runs the oracle at every ladder point with the same seed and compares
/// calls on `strikes` at `maturity` with the seven-parameter approximation
/// built from the model's effective parameters. The step count is the
/// larger of `n_steps` and the admissible minimum.
pub fn convergence_study(
    template: &MCModelSpec,
    eps_ladder: &[f64],
    delta_ladder: &[f64],
    strikes: &[f64],
    maturity: f64,
    n_paths: usize,
    n_steps: Option<usize>,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if strikes.is_empty() {
        return Err(Error::Config(
            "convergence study needs at least one strike".into(),
        ));
    }
    let points = ladder_points(eps_ladder, delta_ladder)?;
    let payoffs: Vec<Payoff> = strikes.iter().map(|&k| Payoff::Call(k)).collect();
    let discount = (-template.rate * maturity).exp();
    points
        .into_iter()
        .map(|(eps, delta)| {
            let spec = template.with_scales(eps, delta);
            let eff = effective_params(&spec)?;
            let n_steps = n_steps.unwrap_or(0).max(min_steps(maturity, eps));
            let mc = simulate_controlled(&spec, maturity, n_steps, n_paths, seed, &payoffs)?;
            let mut max_error = 0.0;
            let mut worst_strike = strikes[0];
            let mut noise: f64 = 0.0;
            for (&k, est) in strikes.iter().zip(&mc) {
                let ctx = QuoteContext::new(spec.x0, k, discount, maturity)?;
                let approx = price_call(&eff.params, &ctx)?.value;
                let err = (est.mean - approx).abs();
                if err > max_error {
                    max_error = err;
                    worst_strike = k;
                }
                noise = noise.max(est.std_error);
            }
            let scale = eps * eps.ln().abs() + delta;
            Ok(ConvergenceRow {
                eps,
                delta,
                n_steps,
                n_paths,
                max_error,
                worst_strike,
                noise,
                scale,
                ratio: max_error / scale,
                inconclusive: noise > 0.5 * max_error,
            })
        })
        .collect()
}
