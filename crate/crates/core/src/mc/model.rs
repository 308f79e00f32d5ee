//! Five-factor model specification and its plain-text config format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Functions of one slow factor: slow drifts `c`, `c̃` and vols `g`, `g̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Func1 {
    Constant(f64),
    /// `a + b·z`
    Linear {
        a: f64,
        b: f64,
    },
    /// `κ(θ − z)`
    MeanReverting {
        kappa: f64,
        theta: f64,
    },
}

impl Func1 {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            Func1::Constant(c) => c,
            Func1::Linear { a, b } => a + b * z,
            Func1::MeanReverting { kappa, theta } => kappa * (theta - z),
        }
    }

    fn parse(words: &[&str]) -> std::result::Result<Self, String> {
        let nums = numbers(&words[1..])?;
        match (words[0], nums.as_slice()) {
            ("constant", [c]) => Ok(Func1::Constant(*c)),
            ("linear", [a, b]) => Ok(Func1::Linear { a: *a, b: *b }),
            ("ou", [kappa, theta]) => Ok(Func1::MeanReverting {
                kappa: *kappa,
                theta: *theta,
            }),
            _ => Err(format!(
                "expected 'constant c', 'linear a b' or 'ou kappa theta', got '{}'",
                words.join(" ")
            )),
        }
    }
}

impl fmt::Display for Func1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Func1::Constant(c) => write!(f, "constant {c}"),
            Func1::Linear { a, b } => write!(f, "linear {a} {b}"),
            Func1::MeanReverting { kappa, theta } => write!(f, "ou {kappa} {theta}"),
        }
    }
}

/// Functions of a (fast, slow) factor pair: `σ(y,z)`, `f(q,u)` and the
/// market prices of risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Func2 {
    Constant(f64),
    /// `lo + (hi − lo) / (1 + e^{−(a·fast + b·slow + c)})`
    Logistic {
        lo: f64,
        hi: f64,
        a: f64,
        b: f64,
        c: f64,
    },
    /// `√(a + b·tanh(fast + slow))`, so that the square is `a + b tanh`.
    SqrtTanh {
        a: f64,
        b: f64,
    },
}

#[inline]
fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl Func2 {
    #[inline]
    pub fn eval(&self, fast: f64, slow: f64) -> f64 {
        match *self {
            Func2::Constant(c) => c,
            Func2::Logistic { lo, hi, a, b, c } => {
                lo + (hi - lo) * logistic(a * fast + b * slow + c)
            }
            Func2::SqrtTanh { a, b } => (a + b * (fast + slow).tanh()).sqrt(),
        }
    }

    /// Partial derivative in the slow argument.
    pub fn d_slow(&self, fast: f64, slow: f64) -> f64 {
        match *self {
            Func2::Constant(_) => 0.0,
            Func2::Logistic { lo, hi, a, b, c } => {
                let s = logistic(a * fast + b * slow + c);
                (hi - lo) * b * s * (1.0 - s)
            }
            Func2::SqrtTanh { a, b } => {
                let t = (fast + slow).tanh();
                b * (1.0 - t * t) / (2.0 * (a + b * t).sqrt())
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Func2::Constant(_))
    }

    /// Infimum and supremum over the plane.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Func2::Constant(c) => (c, c),
            Func2::Logistic { lo, hi, a, b, .. } => {
                if a == 0.0 && b == 0.0 {
                    let v = self.eval(0.0, 0.0);
                    (v, v)
                } else {
                    (lo.min(hi), lo.max(hi))
                }
            }
            Func2::SqrtTanh { a, b } => ((a - b.abs()).max(0.0).sqrt(), (a + b.abs()).sqrt()),
        }
    }

    fn parse(words: &[&str]) -> std::result::Result<Self, String> {
        let nums = numbers(&words[1..])?;
        match (words[0], nums.as_slice()) {
            ("constant", [c]) => Ok(Func2::Constant(*c)),
            ("logistic", [lo, hi]) => Ok(Func2::Logistic {
                lo: *lo,
                hi: *hi,
                a: 1.0,
                b: 1.0,
                c: 0.0,
            }),
            ("logistic", [lo, hi, a, b, c]) => Ok(Func2::Logistic {
                lo: *lo,
                hi: *hi,
                a: *a,
                b: *b,
                c: *c,
            }),
            ("sqrt-tanh", [a, b]) => Ok(Func2::SqrtTanh { a: *a, b: *b }),
            _ => Err(format!(
                "expected 'constant c', 'logistic lo hi [a b c]' or 'sqrt-tanh a b', got '{}'",
                words.join(" ")
            )),
        }
    }
}

impl fmt::Display for Func2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Func2::Constant(c) => write!(f, "constant {c}"),
            Func2::Logistic { lo, hi, a, b, c } => write!(f, "logistic {lo} {hi} {a} {b} {c}"),
            Func2::SqrtTanh { a, b } => write!(f, "sqrt-tanh {a} {b}"),
        }
    }
}

fn numbers(words: &[&str]) -> std::result::Result<Vec<f64>, String> {
    words
        .iter()
        .map(|w| {
            w.parse::<f64>()
                .map_err(|_| format!("'{w}' is not a number"))
        })
        .collect()
}

/// Full specification of the five-factor model.
///
/// The fast factors `Y`, `Q` are Ornstein-Uhlenbeck processes on time scale
/// `ε` with invariant laws `N(m, v²)` and `N(m̃, ṽ²)`; the slow factors
/// `Z`, `U` move on time scale `1/δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCModelSpec {
    pub eps: f64,
    pub delta: f64,
    pub m: f64,
    pub v: f64,
    pub m_tilde: f64,
    pub v_tilde: f64,
    pub c: Func1,
    pub g: Func1,
    pub c_tilde: Func1,
    pub g_tilde: Func1,
    pub sigma: Func2,
    pub f: Func2,
    pub beta: f64,
    pub market_lambda: Func2,
    pub market_gamma: Func2,
    pub market_lambda_tilde: Func2,
    pub market_gamma_tilde: Func2,
    pub rho1: f64,
    pub rho2: f64,
    pub rho12: f64,
    pub rho34: f64,
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub q0: f64,
    pub u0: f64,
    pub rate: f64,
}

impl MCModelSpec {
    /// Constant volatility `σ₀` and idiosyncratic intensity `f₀`.
    pub fn constant(sigma0: f64, f0: f64, beta: f64, rate: f64, x0: f64) -> Self {
        Self {
            eps: 0.1,
            delta: 0.01,
            m: 0.0,
            v: 1.0,
            m_tilde: 0.0,
            v_tilde: 1.0,
            c: Func1::MeanReverting {
                kappa: 1.0,
                theta: 0.0,
            },
            g: Func1::Constant(1.0),
            c_tilde: Func1::MeanReverting {
                kappa: 1.0,
                theta: 0.0,
            },
            g_tilde: Func1::Constant(1.0),
            sigma: Func2::Constant(sigma0),
            f: Func2::Constant(f0),
            beta,
            market_lambda: Func2::Constant(0.0),
            market_gamma: Func2::Constant(0.0),
            market_lambda_tilde: Func2::Constant(0.0),
            market_gamma_tilde: Func2::Constant(0.0),
            rho1: 0.0,
            rho2: 0.0,
            rho12: 0.0,
            rho34: 0.0,
            x0,
            y0: 0.0,
            z0: 0.0,
            q0: 0.0,
            u0: 0.0,
            rate,
        }
    }

    /// The logistic test family: `σ = σ_lo + (σ_hi − σ_lo)·logistic(y + z)`,
    /// `f = f_lo + (f_hi − f_lo)·logistic(q + u)`, constant market prices of
    /// risk and OU slow factors.
    pub fn logistic_test_family(eps: f64, delta: f64) -> Self {
        Self {
            eps,
            delta,
            m: 0.0,
            v: 1.0,
            m_tilde: 0.0,
            v_tilde: 1.0,
            c: Func1::MeanReverting {
                kappa: 1.0,
                theta: 0.0,
            },
            g: Func1::Constant(2.0),
            c_tilde: Func1::MeanReverting {
                kappa: 1.0,
                theta: 0.0,
            },
            g_tilde: Func1::Constant(2.0),
            sigma: Func2::Logistic {
                lo: 0.1,
                hi: 0.5,
                a: 1.0,
                b: 1.0,
                c: 0.0,
            },
            f: Func2::Logistic {
                lo: 0.01,
                hi: 0.05,
                a: 1.0,
                b: 1.0,
                c: 0.0,
            },
            beta: 0.1,
            market_lambda: Func2::Constant(0.2),
            market_gamma: Func2::Constant(0.5),
            market_lambda_tilde: Func2::Constant(0.2),
            market_gamma_tilde: Func2::Constant(0.5),
            rho1: -0.6,
            rho2: -0.7,
            rho12: 0.2,
            rho34: 0.3,
            x0: 100.0,
            y0: 0.0,
            z0: 0.0,
            q0: 0.0,
            u0: 0.0,
            rate: 0.04,
        }
    }

    pub fn with_scales(&self, eps: f64, delta: f64) -> Self {
        Self {
            eps,
            delta,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.eps > 0.0 && self.eps.is_finite())
            || !(self.delta > 0.0 && self.delta.is_finite())
        {
            return bad(format!(
                "ε and δ must be positive, got {} and {}",
                self.eps, self.delta
            ));
        }
        if !(self.v > 0.0) || !(self.v_tilde > 0.0) {
            return bad("fast-factor vols v and ṽ must be positive".into());
        }
        if !(self.x0 > 0.0) {
            return bad(format!(
                "initial stock price must be positive, got {}",
                self.x0
            ));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("leverage β must be nonnegative, got {}", self.beta));
        }
        let (slo, _) = self.sigma.range();
        let (flo, _) = self.f.range();
        if !(slo > 0.0) {
            return bad("σ must be strictly positive".into());
        }
        if !(flo > 0.0) && !self.f.is_constant() {
            return bad("f must be strictly positive".into());
        }
        if self.f.is_constant() && !(flo >= 0.0) {
            return bad("constant f must be nonnegative".into());
        }
        for (name, r) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho12", self.rho12),
            ("rho34", self.rho34),
        ] {
            if !(-1.0..=1.0).contains(&r) {
                return bad(format!("{name} = {r} outside [-1, 1]"));
            }
        }
        if let Func2::SqrtTanh { a, b } = self.sigma {
            if a <= b.abs() {
                return bad("sqrt-tanh σ requires a > |b|".into());
            }
        }
        crate::mc::correlation::CorrelationMatrix::from_spec(self).cholesky()?;
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Unlisted keys keep
    /// the values of the logistic test family.
    pub fn parse_config(text: &str, origin: &str) -> Result<Self> {
        let mut spec = Self::logistic_test_family(0.1, 0.01);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim();
            let words: Vec<&str> = value.split_whitespace().collect();
            if words.is_empty() {
                return Err(err(format!("missing value for '{key}'")));
            }
            let scalar = || -> std::result::Result<f64, String> {
                match words.as_slice() {
                    [w] => w
                        .parse::<f64>()
                        .map_err(|_| format!("'{w}' is not a number")),
                    _ => Err(format!("'{key}' takes a single number")),
                }
            };
            let res: std::result::Result<(), String> = (|| {
                match key {
                    "eps" => spec.eps = scalar()?,
                    "delta" => spec.delta = scalar()?,
                    "m" => spec.m = scalar()?,
                    "v" => spec.v = scalar()?,
                    "m_tilde" => spec.m_tilde = scalar()?,
                    "v_tilde" => spec.v_tilde = scalar()?,
                    "beta" => spec.beta = scalar()?,
                    "rho1" => spec.rho1 = scalar()?,
                    "rho2" => spec.rho2 = scalar()?,
                    "rho12" => spec.rho12 = scalar()?,
                    "rho34" => spec.rho34 = scalar()?,
                    "x0" => spec.x0 = scalar()?,
                    "y0" => spec.y0 = scalar()?,
                    "z0" => spec.z0 = scalar()?,
                    "q0" => spec.q0 = scalar()?,
                    "u0" => spec.u0 = scalar()?,
                    "rate" => spec.rate = scalar()?,
                    "c" => spec.c = Func1::parse(&words)?,
                    "g" => spec.g = Func1::parse(&words)?,
                    "c_tilde" => spec.c_tilde = Func1::parse(&words)?,
                    "g_tilde" => spec.g_tilde = Func1::parse(&words)?,
                    "sigma" => spec.sigma = Func2::parse(&words)?,
                    "f" => spec.f = Func2::parse(&words)?,
                    "lambda" => spec.market_lambda = Func2::parse(&words)?,
                    "gamma" => spec.market_gamma = Func2::parse(&words)?,
                    "lambda_tilde" => spec.market_lambda_tilde = Func2::parse(&words)?,
                    "gamma_tilde" => spec.market_gamma_tilde = Func2::parse(&words)?,
                    other => return Err(format!("unknown key '{other}'")),
                }
                Ok(())
            })();
            res.map_err(err)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_config(&text, &path.display().to_string())
    }

    /// Config text that [`MCModelSpec::parse_config`] reads back.
    pub fn to_config(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("eps", self.eps.to_string());
        put("delta", self.delta.to_string());
        put("m", self.m.to_string());
        put("v", self.v.to_string());
        put("m_tilde", self.m_tilde.to_string());
        put("v_tilde", self.v_tilde.to_string());
        put("c", self.c.to_string());
        put("g", self.g.to_string());
        put("c_tilde", self.c_tilde.to_string());
        put("g_tilde", self.g_tilde.to_string());
        put("sigma", self.sigma.to_string());
        put("f", self.f.to_string());
        put("beta", self.beta.to_string());
        put("lambda", self.market_lambda.to_string());
        put("gamma", self.market_gamma.to_string());
        put("lambda_tilde", self.market_lambda_tilde.to_string());
        put("gamma_tilde", self.market_gamma_tilde.to_string());
        put("rho1", self.rho1.to_string());
        put("rho2", self.rho2.to_string());
        put("rho12", self.rho12.to_string());
        put("rho34", self.rho34.to_string());
        put("x0", self.x0.to_string());
        put("y0", self.y0.to_string());
        put("z0", self.z0.to_string());
        put("q0", self.q0.to_string());
        put("u0", self.u0.to_string());
        put("rate", self.rate.to_string());
        s
    }
}
