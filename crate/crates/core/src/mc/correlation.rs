//! Correlation structure of the five Brownian drivers.
//!
//! Ordering is `(W⁰, W¹, W², W³, W⁴)`: the stock, the fast and slow
//! volatility factors, then the fast and slow intensity factors. The
//! intensity block `(W³, W⁴)` is independent of the first three.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mc::model::MCModelSpec;

pub const DIM: usize = 5;

type Mat = [[f64; DIM]; DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationMatrix(pub Mat);

impl CorrelationMatrix {
    pub fn new(rho1: f64, rho2: f64, rho12: f64, rho34: f64) -> Self {
        let mut m = [[0.0; DIM]; DIM];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m[0][1] = rho1;
        m[1][0] = rho1;
        m[0][2] = rho2;
        m[2][0] = rho2;
        m[1][2] = rho12;
        m[2][1] = rho12;
        m[3][4] = rho34;
        m[4][3] = rho34;
        Self(m)
    }

    pub fn from_spec(spec: &MCModelSpec) -> Self {
        Self::new(spec.rho1, spec.rho2, spec.rho12, spec.rho34)
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        cholesky(&self.0).map(Cholesky)
    }
}

/// Lower-triangular factor `L` with `L Lᵀ` equal to the factored matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cholesky(pub Mat);

impl Cholesky {
    #[inline]
    pub fn apply(&self, z: &[f64; DIM]) -> [f64; DIM] {
        let mut out = [0.0; DIM];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.0[i];
            let mut s = 0.0;
            for k in 0..=i {
                s += row[k] * z[k];
            }
            *o = s;
        }
        out
    }
}

/// Cholesky factorization of a symmetric positive semidefinite matrix.
///
/// Zero pivots are accepted when the rest of their column vanishes too;
/// otherwise the error names the first leading principal minor that is
/// negative.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    let scale = (0..DIM).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * scale;
    let mut l = [[0.0; DIM]; DIM];
    for j in 0..DIM {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -tol {
            return Err(Error::NotPositiveSemidefinite { order: j + 1 });
        }
        if d <= tol {
            for i in j + 1..DIM {
                let r = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if r.abs() > tol.sqrt() * 1e-3 {
                    return Err(Error::NotPositiveSemidefinite { order: i + 1 });
                }
            }
            continue;
        }
        let pivot = d.sqrt();
        l[j][j] = pivot;
        for i in j + 1..DIM {
            let r = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = r / pivot;
        }
    }
    Ok(l)
}

/// One draw of the five correlated Brownian increments over `dt`.
pub fn correlated_increments<R: Rng + ?Sized>(chol: &Cholesky, dt: f64, rng: &mut R) -> [f64; DIM] {
    let mut z = [0.0; DIM];
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
    let sd = dt.sqrt();
    chol.apply(&z).map(|w| w * sd)
}

/// Joint Gaussian noise of one simulation step of length `h`.
///
/// Components 1 and 3 are the stochastic integrals
/// `∫₀ʰ e^{−(h−s)/ε} dWⁱ_s` that drive the exact Ornstein-Uhlenbeck update of
/// the fast factors; the others are plain increments `ΔWⁱ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepNoise {
    pub h: f64,
    pub decay: f64,
    factor: Cholesky,
}

impl StepNoise {
    pub fn new(spec: &MCModelSpec, h: f64) -> Result<Self> {
        let corr = CorrelationMatrix::from_spec(spec).0;
        let a = 1.0 / spec.eps;
        let e1 = -(-a * h).exp_m1() / a;
        let e2 = -(-2.0 * a * h).exp_m1() / (2.0 * a);
        let integrated = [false, true, false, true, false];
        let mut cov = [[0.0; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                let kernel = match (integrated[i], integrated[j]) {
                    (false, false) => h,
                    (true, true) => e2,
                    _ => e1,
                };
                cov[i][j] = corr[i][j] * kernel;
            }
        }
        // Normalize to a correlation matrix so the PSD tolerance is scale free.
        let sd: Vec<f64> = (0..DIM).map(|i| cov[i][i].sqrt()).collect();
        let mut r = cov;
        for i in 0..DIM {
            for j in 0..DIM {
                r[i][j] = cov[i][j] / (sd[i] * sd[j]);
            }
        }
        let mut l = cholesky(&r)?;
        for (i, row) in l.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v *= sd[i];
            }
        }
        Ok(Self {
            h,
            decay: (-a * h).exp(),
            factor: Cholesky(l),
        })
    }

    #[inline]
    pub fn apply(&self, z: &[f64; DIM]) -> [f64; DIM] {
        self.factor.apply(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_corr(chol: &Cholesky, n: usize, i: usize, j: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut sij, mut sii, mut sjj) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let w = correlated_increments(chol, 0.01, &mut rng);
            sij += w[i] * w[j];
            sii += w[i] * w[i];
            sjj += w[j] * w[j];
        }
        sij / (sii * sjj).sqrt()
    }

    #[test]
    fn independent_when_uncorrelated() {
        let chol = CorrelationMatrix::new(0.0, 0.0, 0.0, 0.0)
            .cholesky()
            .unwrap();
        let n = 200_000;
        let tol = 3.0 / (n as f64).sqrt();
        for (i, j) in [(0, 1), (0, 3), (2, 4), (3, 4)] {
            assert!(sample_corr(&chol, n, i, j).abs() < tol);
        }
    }

    #[test]
    fn leverage_correlation_is_reproduced() {
        let chol = CorrelationMatrix::new(-0.5, 0.0, 0.0, 0.0)
            .cholesky()
            .unwrap();
        let n = 200_000;
        let c = sample_corr(&chol, n, 0, 1);
        assert!((c + 0.5).abs() < 3.0 / (n as f64).sqrt(), "{c}");
    }

    #[test]
    fn impossible_correlation_fails_at_order_three() {
        match CorrelationMatrix::new(1.0, 1.0, 0.0, 0.0).cholesky() {
            Err(Error::NotPositiveSemidefinite { order }) => assert_eq!(order, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(CorrelationMatrix::new(1.0, 1.0, 1.0, 1.0)
            .cholesky()
            .is_ok());
    }

    #[test]
    fn block_structure_is_exact() {
        let l = CorrelationMatrix::new(-0.5, 0.3, 0.2, 0.4)
            .cholesky()
            .unwrap()
            .0;
        for i in 3..DIM {
            for k in 0..3 {
                assert_eq!(l[i][k], 0.0);
            }
        }
    }

    #[test]
    fn step_noise_covariance() {
        let mut spec = MCModelSpec::logistic_test_family(0.05, 0.01);
        spec.rho1 = -0.6;
        let h = 0.01;
        let sn = StepNoise::new(&spec, h).unwrap();
        let a = 1.0 / spec.eps;
        let e1 = -(-a * h).exp_m1() / a;
        let e2 = -(-2.0 * a * h).exp_m1() / (2.0 * a);
        let l = sn.factor.0;
        let cov = |i: usize, j: usize| (0..DIM).map(|k| l[i][k] * l[j][k]).sum::<f64>();
        assert!((cov(0, 0) - h).abs() < 1e-15);
        assert!((cov(1, 1) - e2).abs() < 1e-15);
        assert!((cov(0, 1) - spec.rho1 * e1).abs() < 1e-15);
        assert!((cov(3, 4) - spec.rho34 * e1).abs() < 1e-15);
        assert_eq!(cov(0, 3), 0.0);
    }
}
