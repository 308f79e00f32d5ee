//! Riskless zero curve.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Continuously compounded zero rates at increasing pillar maturities,
/// interpolated linearly in the rate and extrapolated flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountCurve {
    pillars: Vec<(f64, f64)>,
}

impl DiscountCurve {
    pub fn new(pillars: Vec<(f64, f64)>) -> Result<Self> {
        if pillars.is_empty() {
            return Err(domain("discount curve needs at least one pillar"));
        }
        for (i, &(t, z)) in pillars.iter().enumerate() {
            if !(t.is_finite() && t >= 0.0) || !z.is_finite() {
                return Err(domain(format!("invalid pillar ({t}, {z})")));
            }
            if i > 0 && t <= pillars[i - 1].0 {
                return Err(domain(format!(
                    "pillar maturities must be strictly increasing ({} then {t})",
                    pillars[i - 1].0
                )));
            }
        }
        Ok(Self { pillars })
    }

    pub fn flat(rate: f64) -> Self {
        Self {
            pillars: vec![(1.0, rate)],
        }
    }

    pub fn pillars(&self) -> &[(f64, f64)] {
        &self.pillars
    }

    pub fn zero_rate(&self, t: f64) -> f64 {
        let p = &self.pillars;
        let (t0, z0) = p[0];
        let (tn, zn) = p[p.len() - 1];
        if t <= t0 {
            return z0;
        }
        if t >= tn {
            return zn;
        }
        let i = p.partition_point(|&(ti, _)| ti <= t);
        let (ta, za) = p[i - 1];
        let (tb, zb) = p[i];
        za + (zb - za) * (t - ta) / (tb - ta)
    }

    /// `B(0, t) = e^{−z(t) t}`; errors for negative or non-finite `t`, or
    /// when the curve implies a discount factor above one.
    pub fn discount(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(domain(format!(
                "discount maturity must be nonnegative, got {t}"
            )));
        }
        let b = (-self.zero_rate(t) * t).exp();
        if b > 1.0 {
            return Err(domain(format!(
                "negative zero rate gives discount {b} > 1 at t = {t}"
            )));
        }
        Ok(b)
    }
}
