use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use creditvol::calibration::Scheme;
use creditvol::implied_vol::SurfaceMethod;
use creditvol::io::{self, days_to_years};
use creditvol::mc::MCModelSpec;
use creditvol::synthetic::{reference_params, SyntheticGrid};
use creditvol::workflows::{self, RunConfig, SimulateConfig, SyntheticSource};
use creditvol::{ApproxParams, DiscountCurve, Error, ModelKind, Result};

#[derive(Parser)]
#[command(
    name = "creditvol",
    version,
    about = "Defaultable-stock option pricing, calibration and Monte Carlo checks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Approximate call and put prices on a strike × maturity grid.
    Price(PriceArgs),
    /// Implied-volatility surface of a model.
    Surface(SurfaceArgs),
    /// Daily calibration of one or more families to an option chain.
    Calibrate(CalibrateArgs),
    /// Option-implied λ̄ per day against the bond spread.
    SpreadSeries(CalibrateArgs),
    /// Approximation error against the Monte Carlo oracle along an (ε, δ) ladder.
    Simulate(SimulateArgs),
    /// Synthetic chain, curve, spread and stock files.
    GenSynthetic(SyntheticArgs),
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, default_value = "7p")]
    model: ModelKind,
    /// λ̄ (ignored for sv).
    #[arg(long = "lambda")]
    lambda_bar: Option<f64>,
    /// σ̄² (or give --vol).
    #[arg(long)]
    avg_var: Option<f64>,
    /// σ̄.
    #[arg(long, conflicts_with = "avg_var")]
    vol: Option<f64>,
    /// Free ε-slots of the family: 3 for 7p, 2 for 5p/sv (V₁, V₂), 1 for 3p.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    v_eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    v_delta: Option<Vec<f64>>,
    /// Use the family's built-in surface parameters.
    #[arg(long)]
    preset: bool,
}

impl ParamArgs {
    fn params(&self) -> Result<ApproxParams> {
        if self.preset {
            return Ok(workflows::surface_preset(self.model));
        }
        let var = match (self.avg_var, self.vol) {
            (Some(v), _) => v,
            (None, Some(s)) => s * s,
            (None, None) => return Err(Error::Config("give --avg-var, --vol or --preset".into())),
        };
        let l = self.lambda_bar.unwrap_or(0.0);
        let ve = self.v_eps.clone().unwrap_or_default();
        let vd = self.v_delta.clone().unwrap_or_default();
        let want = match self.model {
            ModelKind::SevenParam => 3,
            ModelKind::FiveParam | ModelKind::SvOnly => 2,
            ModelKind::ThreeParam => 1,
        };
        let pad = |v: &[f64], name: &str| -> Result<Vec<f64>> {
            match v.len() {
                0 => Ok(vec![0.0; want]),
                n if n == want => Ok(v.to_vec()),
                n => Err(Error::Config(format!(
                    "--{name} takes {want} values for {}, got {n}",
                    self.model
                ))),
            }
        };
        let (ve, vd) = (pad(&ve, "v-eps")?, pad(&vd, "v-delta")?);
        match self.model {
            ModelKind::SevenParam => {
                ApproxParams::seven_param(l, var, [ve[0], ve[1], ve[2]], [vd[0], vd[1], vd[2]])
            }
            ModelKind::FiveParam => {
                ApproxParams::five_param(l, var, [ve[0], ve[1]], [vd[0], vd[1]])
            }
            ModelKind::SvOnly => ApproxParams::sv_only(var, [ve[0], ve[1]], [vd[0], vd[1]]),
            ModelKind::ThreeParam => ApproxParams::three_param(l, var, ve[0], vd[0]),
        }
    }
}

#[derive(Args)]
struct MarketArgs {
    #[arg(long)]
    spot: Option<f64>,
    /// Flat continuously compounded rate, used without --curve.
    #[arg(long, default_value_t = 0.04)]
    rate: f64,
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    strikes: Option<Vec<f64>>,
    /// Maturities in calendar days.
    #[arg(long, value_delimiter = ',')]
    maturities: Option<Vec<u32>>,
}

impl MarketArgs {
    fn curve(&self) -> Result<DiscountCurve> {
        match &self.curve {
            Some(p) => io::load_curve(p),
            None => Ok(DiscountCurve::flat(self.rate)),
        }
    }

    fn grid(&self) -> (f64, Vec<f64>, Vec<f64>) {
        let (spot, strikes, mats) = workflows::default_surface_grid();
        (
            self.spot.unwrap_or(spot),
            self.strikes.clone().unwrap_or(strikes),
            self.maturities
                .as_ref()
                .map(|m| m.iter().map(|&d| days_to_years(d)).collect())
                .unwrap_or(mats),
        )
    }
}

#[derive(Args)]
struct PriceArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Expansion,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Families to fit, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "7p,5p,3p,sv")]
    model: Vec<ModelKind>,
    #[arg(long, default_value = "A")]
    scheme: Scheme,
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    spreads: Option<PathBuf>,
    /// Closing prices (date,close): spot and historical variance.
    #[arg(long)]
    stock: Option<PathBuf>,
    #[arg(long)]
    spot: Option<f64>,
    #[arg(long)]
    avg_var: Option<f64>,
    #[arg(long, default_value_t = 252)]
    vol_window: usize,
    /// Maturities to pool, in calendar days.
    #[arg(long, value_delimiter = ',')]
    maturities: Option<Vec<u32>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl CalibrateArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            models: self.model.clone(),
            scheme: self.scheme,
            maturities: self.maturities.clone(),
            chain: self.chain.clone(),
            curve: self.curve.clone(),
            spreads: self.spreads.clone(),
            stock: self.stock.clone(),
            spot: self.spot,
            avg_var: self.avg_var,
            vol_window: self.vol_window,
            out: self.out.clone(),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file (key = value); the logistic test family when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.01")]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    delta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    strikes: Option<Vec<f64>>,
    #[arg(long, default_value_t = 365)]
    maturity_days: u32,
    #[arg(long, default_value_t = 500_000)]
    paths: usize,
    /// Time steps; never below the admissible minimum.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SyntheticArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Price with the Monte Carlo oracle from this model file instead.
    #[arg(long, conflicts_with = "preset")]
    oracle: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 200_000)]
    paths: usize,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 20)]
    days: usize,
    #[arg(long, default_value = "2006-01-09")]
    start: chrono_date::Date,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 8.62)]
    spot: f64,
    #[arg(long, default_value_t = 0.047771)]
    rate: f64,
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

mod chrono_date {
    #[derive(Clone, Copy)]
    pub struct Date(pub creditvol::synthetic::NaiveDate);

    impl std::str::FromStr for Date {
        type Err = String;

        fn from_str(s: &str) -> Result<Self, String> {
            s.parse().map(Date).map_err(|e| format!("'{s}': {e}"))
        }
    }
}

fn load_spec(path: Option<&PathBuf>, eps: Option<f64>, delta: Option<f64>) -> Result<MCModelSpec> {
    let mut spec = match path {
        Some(p) => MCModelSpec::load(p)?,
        None => MCModelSpec::logistic_test_family(0.01, 0.01),
    };
    if let Some(e) = eps {
        spec.eps = e;
    }
    if let Some(d) = delta {
        spec.delta = d;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Price(a) => {
            let params = a.params.params()?;
            let (spot, strikes, mats) = a.market.grid();
            let rows =
                workflows::cmd_price(&params, spot, &strikes, &mats, &a.market.curve()?, &a.out)?;
            let bad = rows.iter().filter(|r| !r.arbitrage_ok).count();
            println!(
                "{} prices written to {} ({bad} outside no-arbitrage bounds)",
                rows.len(),
                a.out.display()
            );
        }
        Cmd::Surface(a) => {
            let params = a.params.params()?;
            let (spot, strikes, mats) = a.market.grid();
            let method = match a.method {
                MethodArg::Exact => SurfaceMethod::Exact,
                MethodArg::Expansion => SurfaceMethod::Expansion,
            };
            let curve = a.market.curve()?;
            let (grid, path) =
                workflows::cmd_surface(&params, spot, &strikes, &mats, &curve, method, &a.out)?;
            for s in workflows::smile_shapes(&grid, &curve)? {
                println!(
                    "T={:.4} cells={} skew={:.5} wing_range={:.5}",
                    s.maturity, s.populated, s.skew, s.wing_range
                );
            }
            println!("surface written to {}", path.display());
        }
        Cmd::Calibrate(a) => {
            let all = workflows::cmd_calibrate(&a.config())?;
            for (kind, fits) in &all {
                for f in fits {
                    println!(
                        "{} {kind}: λ̄={:.6} objective={:.3e} max|ΔI|={}",
                        f.date,
                        f.result.params.lambda_bar,
                        f.result.objective,
                        f.max_abs_iv_error()
                            .map_or("n/a".into(), |v| format!("{v:.3e}"))
                    );
                }
            }
            println!("results written to {}", a.out.display());
        }
        Cmd::SpreadSeries(a) => {
            let all = workflows::cmd_spread_series(&a.config())?;
            for (kind, rows) in &all {
                let mean = rows.iter().map(|r| r.fitted_lambda).sum::<f64>() / rows.len() as f64;
                println!("{kind}: {} days, mean fitted λ̄ {mean:.6}", rows.len());
            }
            println!("series written to {}", a.out.display());
        }
        Cmd::Simulate(a) => {
            let model = load_spec(a.config.as_ref(), None, None)?;
            let strikes = a
                .strikes
                .unwrap_or_else(|| (0..13).map(|i| 70.0 + 5.0 * i as f64).collect());
            let rows = workflows::cmd_simulate(&SimulateConfig {
                model,
                eps: a.eps,
                delta: a.delta,
                strikes,
                maturity: days_to_years(a.maturity_days),
                paths: a.paths,
                steps: a.steps,
                seed: a.seed,
                out: a.out.clone(),
            })?;
            for r in &rows {
                println!(
                    "ε={} δ={} steps={} max_error={:.5} noise={:.5} ratio={:.4}{}",
                    r.eps,
                    r.delta,
                    r.n_steps,
                    r.max_error,
                    r.noise,
                    r.ratio,
                    if r.inconclusive {
                        " (inconclusive)"
                    } else {
                        ""
                    }
                );
            }
            println!(
                "table written to {}",
                a.out.join("convergence.csv").display()
            );
        }
        Cmd::GenSynthetic(a) => {
            let curve = match &a.curve {
                Some(p) => io::load_curve(p)?,
                None => DiscountCurve::flat(a.rate),
            };
            let source = match &a.oracle {
                Some(p) => SyntheticSource::Oracle {
                    spec: load_spec(Some(p), a.eps, a.delta)?,
                    date: a.start.0.to_string(),
                    n_paths: a.paths,
                    n_steps: a.steps,
                },
                None => SyntheticSource::Approx {
                    params: if a.params.avg_var.is_none()
                        && a.params.vol.is_none()
                        && !a.params.preset
                    {
                        reference_params().restrict_to(a.params.model)?
                    } else {
                        a.params.params()?
                    },
                    start: a.start.0,
                    days: a.days,
                },
            };
            let grid = SyntheticGrid::standard();
            let rep = workflows::cmd_gen_synthetic(
                &source, a.spot, &curve, &grid, a.noise, a.seed, &a.out,
            )?;
            for (date, c) in &rep.dropped {
                eprintln!(
                    "dropped {date} T={}d K={}: {}",
                    c.maturity_days, c.strike, c.reason
                );
            }
            println!(
                "{} days, {} quotes, {} dropped cells; wrote {}",
                rep.days,
                rep.quotes,
                rep.dropped.len(),
                rep.files
                    .iter()
                    .map(|f| f.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
