//! Zero-recovery defaultable bonds and yield spreads.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// `l_tilde` multiplies `τ²/2` in the price and has units of 1/year².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondParams {
    pub lambda_bar: f64,
    pub l: f64,
    pub l_tilde: f64,
}

impl BondParams {
    pub fn new(lambda_bar: f64, l: f64, l_tilde: f64) -> Result<Self> {
        if !(lambda_bar.is_finite() && lambda_bar >= 0.0) {
            return Err(domain(format!("λ̄ must be nonnegative, got {lambda_bar}")));
        }
        if !l.is_finite() || !l_tilde.is_finite() {
            return Err(domain("bond correction parameters must be finite"));
        }
        Ok(Self {
            lambda_bar,
            l,
            l_tilde,
        })
    }

    pub fn leading_order(lambda_bar: f64) -> Result<Self> {
        Self::new(lambda_bar, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldSpreadPoint {
    pub maturity: f64,
    pub spread: f64,
}

impl YieldSpreadPoint {
    pub fn new(maturity: f64, spread: f64) -> Result<Self> {
        if !(maturity.is_finite() && maturity > 0.0) {
            return Err(domain(format!(
                "spread maturity must be positive, got {maturity}"
            )));
        }
        if !(spread.is_finite() && spread >= 0.0) {
            return Err(domain(format!("spread must be nonnegative, got {spread}")));
        }
        Ok(Self { maturity, spread })
    }
}

/// `B̂ = B e^{−λ̄τ} (1 + Lτ − L̃τ²/2)` per unit face.
pub fn bhat(bp: &BondParams, discount: f64, tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(domain(format!(
            "bond maturity must be nonnegative, got {tau}"
        )));
    }
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(domain(format!(
            "discount factor must lie in (0, 1], got {discount}"
        )));
    }
    let corr = 1.0 + bp.l * tau - 0.5 * bp.l_tilde * tau * tau;
    Ok(discount * (-bp.lambda_bar * tau).exp() * corr)
}

/// Leading-order identification: the intensity equals the spread.
pub fn spread_to_lambda(pt: &YieldSpreadPoint) -> f64 {
    pt.spread
}

/// The shortest-maturity point of a spread curve.
pub fn shortest(points: &[YieldSpreadPoint]) -> Option<YieldSpreadPoint> {
    points
        .iter()
        .copied()
        .min_by(|a, b| a.maturity.total_cmp(&b.maturity))
}

/// Continuously compounded spread `−ln(price/(face B))/τ`.
pub fn implied_spread(price: f64, face: f64, discount: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(domain(format!(
            "spread maturity must be positive, got {tau}"
        )));
    }
    if !(face > 0.0 && discount > 0.0 && discount <= 1.0) {
        return Err(domain("face must be positive and discount in (0, 1]"));
    }
    let riskless = face * discount;
    if !(price > 0.0) {
        return Err(domain(format!("bond price must be positive, got {price}")));
    }
    if price > riskless * (1.0 + 4.0 * f64::EPSILON) {
        return Err(domain(format!(
            "bond price {price} exceeds riskless value {riskless}"
        )));
    }
    Ok((-(price / riskless).ln() / tau).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_order_values() {
        let bp = BondParams::leading_order(0.0).unwrap();
        assert_eq!(bhat(&bp, 0.9, 2.0).unwrap(), 0.9);
        let bp = BondParams::leading_order(0.04385).unwrap();
        assert_eq!(bhat(&bp, 0.9, 0.0).unwrap(), 0.9);
        assert!((bhat(&bp, 0.9, 2.0).unwrap() - 0.9 * (-0.0877f64).exp()).abs() < 1e-15);
        assert!(bhat(&bp, 0.9, -1.0).is_err());
    }

    #[test]
    fn corrected_value() {
        let bp = BondParams::new(0.04385, 0.002, 0.0005).unwrap();
        let b = (-0.047f64 * 2.0).exp();
        let v = bhat(&bp, b, 2.0).unwrap();
        let expected = b * (-0.0877f64).exp() * (1.0 + 0.004 - 0.001);
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn spreads() {
        let pt = YieldSpreadPoint::new(0.5, 0.04385).unwrap();
        assert_eq!(spread_to_lambda(&pt), 0.04385);
        assert_eq!(
            spread_to_lambda(&YieldSpreadPoint::new(1.0, 0.0).unwrap()),
            0.0
        );
        assert_eq!(implied_spread(0.9, 1.0, 0.9, 1.5).unwrap(), 0.0);
        let tau = 3.0;
        let s = implied_spread(0.9 * (-0.05f64 * tau).exp(), 1.0, 0.9, tau).unwrap();
        assert!((s - 0.05).abs() < 1e-14);
        assert!(implied_spread(0.95, 1.0, 0.9, 1.0).is_err());
        assert!(YieldSpreadPoint::new(0.0, 0.01).is_err());
    }

    #[test]
    fn shortest_point() {
        let pts = [
            YieldSpreadPoint::new(2.0, 0.05).unwrap(),
            YieldSpreadPoint::new(0.5, 0.03).unwrap(),
            YieldSpreadPoint::new(1.0, 0.04).unwrap(),
        ];
        assert_eq!(shortest(&pts).unwrap().spread, 0.03);
        assert!(shortest(&[]).is_none());
    }
}
