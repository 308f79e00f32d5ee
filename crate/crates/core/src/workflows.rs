//! Command workflows behind the CLI. Each writes CSV (and JSON detail)
//! files into an output directory and returns what it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::black_scholes::QuoteContext;
use crate::bond::{shortest, spread_to_lambda};
use crate::calibration::{
    build_otm_chain, calibrate_fixed_lambda, calibrate_free_lambda, historical_vol, model_ivs,
    CalibrationResult, OptionChain, Scheme,
};
use crate::curve::DiscountCurve;
use crate::error::{Error, Result};
use crate::implied_vol::{surface, SurfaceGrid, SurfaceMethod};
use crate::io::{self, years_to_days, ChainDay, FitRow, SeriesRow, SpreadTable, StockRow};
use crate::mc::{convergence_study, ConvergenceRow, MCModelSpec};
use crate::pricer::{price_call, price_put, ApproxParams, ModelKind};
use crate::synthetic::{gen_panel, gen_synthetic, Source, SyntheticGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub maturity_days: u32,
    pub strike: f64,
    pub call: f64,
    pub put: f64,
    pub arbitrage_ok: bool,
}

pub fn cmd_price(
    params: &ApproxParams,
    spot: f64,
    strikes: &[f64],
    maturities: &[f64],
    curve: &DiscountCurve,
    out: &Path,
) -> Result<Vec<PriceRow>> {
    let mut rows = Vec::new();
    for &tau in maturities {
        let b = curve.discount(tau)?;
        for &k in strikes {
            let ctx = QuoteContext::new(spot, k, b, tau)?;
            let c = price_call(params, &ctx)?;
            let p = price_put(params, &ctx)?;
            rows.push(PriceRow {
                maturity_days: years_to_days(tau),
                strike: k,
                call: c.value,
                put: p.value,
                arbitrage_ok: c.arbitrage_ok && p.arbitrage_ok,
            });
        }
    }
    let path = out.join(format!("prices_{}.csv", params.kind.label()));
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

pub fn cmd_surface(
    params: &ApproxParams,
    spot: f64,
    strikes: &[f64],
    maturities: &[f64],
    curve: &DiscountCurve,
    method: SurfaceMethod,
    out: &Path,
) -> Result<(SurfaceGrid, PathBuf)> {
    let grid = surface(params, spot, strikes, maturities, curve, method)?;
    let path = out.join(format!("surface_{}.csv", params.kind.label()));
    io::write_surface(&path, &grid)?;
    Ok((grid, path))
}

/// Inputs shared by the calibration commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub models: Vec<ModelKind>,
    pub scheme: Scheme,
    /// Maturities to pool, in calendar days; all when `None`.
    pub maturities: Option<Vec<u32>>,
    pub chain: PathBuf,
    pub curve: PathBuf,
    pub spreads: Option<PathBuf>,
    /// Closing prices; supplies the spot and the historical variance.
    pub stock: Option<PathBuf>,
    pub spot: Option<f64>,
    pub avg_var: Option<f64>,
    pub vol_window: usize,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let files = [
            Some(&self.chain),
            Some(&self.curve),
            self.spreads.as_ref(),
            self.stock.as_ref(),
        ];
        for f in files.into_iter().flatten() {
            if !f.is_file() {
                return Err(Error::Config(format!(
                    "input file {} not found",
                    f.display()
                )));
            }
        }
        if self.models.is_empty() {
            return Err(Error::Config("no model family selected".into()));
        }
        if self.scheme == Scheme::A
            && self.spreads.is_none()
            && self.models.iter().any(|m| m.lambda_is_free())
        {
            return Err(Error::Config("scheme A needs a bond spread file".into()));
        }
        if self.stock.is_none() && (self.spot.is_none() || self.avg_var.is_none()) {
            return Err(Error::Config(
                "give a stock file, or both a spot and an average variance".into(),
            ));
        }
        if self.vol_window == 0 {
            return Err(Error::Config("volatility window must be positive".into()));
        }
        Ok(())
    }
}

struct Inputs {
    days: Vec<ChainDay>,
    curve: DiscountCurve,
    spreads: Option<SpreadTable>,
    stock: Option<Vec<StockRow>>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    cfg.validate()?;
    Ok(Inputs {
        days: io::load_chain(&cfg.chain)?,
        curve: io::load_curve(&cfg.curve)?,
        spreads: cfg.spreads.as_deref().map(io::load_spreads).transpose()?,
        stock: cfg.stock.as_deref().map(io::load_stock).transpose()?,
    })
}

fn day_chain(cfg: &RunConfig, inp: &Inputs, day: &ChainDay) -> Result<OptionChain> {
    let (spot, avg_var) = match &inp.stock {
        Some(rows) => {
            let upto = rows.partition_point(|r| r.date.as_str() <= day.date.as_str());
            if upto == 0 || rows[upto - 1].date != day.date {
                return Err(Error::Config(format!("no closing price for {}", day.date)));
            }
            let closes: Vec<f64> = rows[..upto].iter().map(|r| r.close).collect();
            let spot = cfg.spot.unwrap_or(closes[upto - 1]);
            let v = match cfg.avg_var {
                Some(v) => v,
                None => historical_vol(&closes, cfg.vol_window)
                    .map_err(|e| Error::Calibration(format!("{}: {e}", day.date)))?,
            };
            (spot, v)
        }
        None => (
            cfg.spot.expect("validated"),
            cfg.avg_var.expect("validated"),
        ),
    };
    let chain = build_otm_chain(&day.date, &day.grid, spot, &inp.curve, avg_var)?;
    let chain = match &cfg.maturities {
        Some(m) => chain.filter_maturity_days(m),
        None => chain,
    };
    if chain.quotes.is_empty() {
        return Err(Error::Config(format!(
            "no quotes left on {} after the maturity filter",
            day.date
        )));
    }
    Ok(chain)
}

fn bond_spread(inp: &Inputs, date: &str) -> Option<f64> {
    inp.spreads
        .as_ref()
        .and_then(|t| t.get(date))
        .and_then(|pts| shortest(pts))
        .map(|p| spread_to_lambda(&p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFit {
    pub date: String,
    pub spot: f64,
    pub bond_spread: Option<f64>,
    pub result: CalibrationResult,
    pub fit: Vec<FitRow>,
}

impl DayFit {
    pub fn max_abs_iv_error(&self) -> Option<f64> {
        self.fit
            .iter()
            .map(|r| r.residual.map(f64::abs))
            .try_fold(0.0f64, |m, r| r.map(|v| m.max(v)))
    }
}

fn fit_rows(chain: &OptionChain, params: &ApproxParams) -> Vec<FitRow> {
    chain
        .quotes
        .iter()
        .zip(model_ivs(chain, params))
        .map(|(q, iv)| {
            let model = iv.ok();
            FitRow {
                maturity_days: years_to_days(q.maturity),
                strike: q.strike,
                side: q.side.label().to_string(),
                observed_iv: q.observed_iv,
                model_iv: model,
                residual: model.map(|m| q.observed_iv - m),
            }
        })
        .collect()
}

fn calibrate_day(cfg: &RunConfig, inp: &Inputs, day: &ChainDay, kind: ModelKind) -> Result<DayFit> {
    let chain = day_chain(cfg, inp, day)?;
    let spread = bond_spread(inp, &day.date);
    let result = match cfg.scheme {
        Scheme::A if kind.lambda_is_free() => {
            let l =
                spread.ok_or_else(|| Error::Config(format!("no bond spread for {}", day.date)))?;
            calibrate_fixed_lambda(&chain, kind, l)?
        }
        Scheme::A => calibrate_fixed_lambda(&chain, kind, 0.0)?,
        Scheme::B => calibrate_free_lambda(&chain, kind)?,
    };
    let fit = fit_rows(&chain, &result.params);
    Ok(DayFit {
        date: day.date.clone(),
        spot: chain.spot,
        bond_spread: spread,
        result,
        fit,
    })
}

fn calibrate_all(cfg: &RunConfig, inp: &Inputs) -> Result<BTreeMap<ModelKind, Vec<DayFit>>> {
    let mut out = BTreeMap::new();
    for &kind in &cfg.models {
        let fits: Vec<DayFit> = inp
            .days
            .par_iter()
            .map(|d| {
                calibrate_day(cfg, inp, d, kind)
                    .map_err(|e| Error::Calibration(format!("{} {kind}: {e}", d.date)))
            })
            .collect::<Result<_>>()?;
        out.insert(kind, fits);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SummaryRow<'a> {
    date: &'a str,
    model: &'a str,
    scheme: &'a str,
    lambda_bar: f64,
    avg_var: f64,
    v1_eps: f64,
    v2_eps: f64,
    v3_eps: f64,
    v1_delta: f64,
    v2_delta: f64,
    v3_delta: f64,
    objective: f64,
    rank_deficient: bool,
    non_unimodal: bool,
}

/// Per-day fits for every requested family. Writes `fit_<date>_<model>.csv`,
/// `calibration.csv` and `calibration.json` into the output directory.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<BTreeMap<ModelKind, Vec<DayFit>>> {
    let inp = load_inputs(cfg)?;
    let all = calibrate_all(cfg, &inp)?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut summary = csv::Writer::from_path(cfg.out.join("calibration.csv"))?;
    let scheme = match cfg.scheme {
        Scheme::A => "A",
        Scheme::B => "B",
    };
    for (kind, fits) in &all {
        for f in fits {
            io::write_fit(
                &cfg.out.join(format!("fit_{}_{}.csv", f.date, kind.label())),
                &f.fit,
            )?;
            let p = &f.result.params;
            summary.serialize(SummaryRow {
                date: &f.date,
                model: kind.label(),
                scheme,
                lambda_bar: p.lambda_bar,
                avg_var: p.avg_var,
                v1_eps: p.v_eps[0],
                v2_eps: p.v_eps[1],
                v3_eps: p.v_eps[2],
                v1_delta: p.v_delta[0],
                v2_delta: p.v_delta[1],
                v3_delta: p.v_delta[2],
                objective: f.result.objective,
                rank_deficient: f.result.diagnostics.rank_deficient,
                non_unimodal: f.result.non_unimodal,
            })?;
        }
    }
    summary.flush()?;
    let detail: BTreeMap<&str, &Vec<DayFit>> = all.iter().map(|(k, v)| (k.label(), v)).collect();
    io::write_json(&cfg.out.join("calibration.json"), &detail)?;
    Ok(all)
}

/// Option-implied `λ̄` per day (scheme B) against the shortest bond spread.
/// Writes `spread_series_<model>.csv`.
pub fn cmd_spread_series(cfg: &RunConfig) -> Result<BTreeMap<ModelKind, Vec<SeriesRow>>> {
    let cfg = RunConfig {
        scheme: Scheme::B,
        ..cfg.clone()
    };
    let inp = load_inputs(&cfg)?;
    let all = calibrate_all(&cfg, &inp)?;
    let mut out = BTreeMap::new();
    for (kind, fits) in all {
        let rows: Vec<SeriesRow> = fits
            .iter()
            .map(|f| SeriesRow {
                date: f.date.clone(),
                fitted_lambda: f.result.params.lambda_bar,
                bond_spread: f.bond_spread,
            })
            .collect();
        io::write_spread_series(
            &cfg.out.join(format!("spread_series_{}.csv", kind.label())),
            &rows,
        )?;
        out.insert(kind, rows);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub model: MCModelSpec,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub strikes: Vec<f64>,
    pub maturity: f64,
    pub paths: usize,
    pub steps: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

/// Approximation error against the Monte Carlo oracle along an `(ε, δ)`
/// ladder. Writes `convergence.csv`.
pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<Vec<ConvergenceRow>> {
    let rows = convergence_study(
        &cfg.model,
        &cfg.eps,
        &cfg.delta,
        &cfg.strikes,
        cfg.maturity,
        cfg.paths,
        cfg.steps,
        cfg.seed,
    )?;
    io::write_convergence(&cfg.out.join("convergence.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub days: usize,
    pub quotes: usize,
    pub dropped: Vec<(String, crate::synthetic::DroppedCell)>,
    pub files: Vec<PathBuf>,
}

pub enum SyntheticSource {
    /// A panel of `days` business days starting on `start`.
    Approx {
        params: ApproxParams,
        start: chrono::NaiveDate,
        days: usize,
    },
    /// A single day priced by the Monte Carlo oracle.
    Oracle {
        spec: MCModelSpec,
        date: String,
        n_paths: usize,
        n_steps: Option<usize>,
    },
}

/// Writes `chain.csv`, `curve.csv`, `spreads.csv` and `stock.csv` (the
/// latter two for approximation panels only).
pub fn cmd_gen_synthetic(
    source: &SyntheticSource,
    spot: f64,
    curve: &DiscountCurve,
    grid: &SyntheticGrid,
    noise: f64,
    seed: u64,
    out: &Path,
) -> Result<SyntheticReport> {
    let mut files = vec![out.join("chain.csv"), out.join("curve.csv")];
    let (days, dropped) = match source {
        SyntheticSource::Approx {
            params,
            start,
            days,
        } => {
            let panel = gen_panel(params, *start, *days, spot, curve, grid, noise, seed)?;
            io::write_spreads(&out.join("spreads.csv"), &panel.spreads)?;
            io::write_stock(&out.join("stock.csv"), &panel.stock)?;
            files.push(out.join("spreads.csv"));
            files.push(out.join("stock.csv"));
            let dropped = panel
                .days
                .iter()
                .flat_map(|d| d.dropped.iter().map(|c| (d.chain.date.clone(), c.clone())))
                .collect();
            (
                panel.days.into_iter().map(|d| d.chain).collect::<Vec<_>>(),
                dropped,
            )
        }
        SyntheticSource::Oracle {
            spec,
            date,
            n_paths,
            n_steps,
        } => {
            let src = Source::Oracle {
                spec: spec.clone(),
                n_paths: *n_paths,
                n_steps: *n_steps,
                seed,
            };
            let day = gen_synthetic(&src, date, spot, curve, grid, noise, seed)?;
            let dropped = day
                .dropped
                .iter()
                .map(|c| (date.clone(), c.clone()))
                .collect();
            (vec![day.chain], dropped)
        }
    };
    io::write_chain(&out.join("chain.csv"), &days)?;
    io::write_curve(&out.join("curve.csv"), curve)?;
    Ok(SyntheticReport {
        days: days.len(),
        quotes: days
            .iter()
            .map(|d| d.grid.strikes.iter().map(Vec::len).sum::<usize>())
            .sum(),
        dropped,
        files,
    })
}

/// Named parameter sets for surfaces: `σ̄ = 0.2` and `λ̄ = 0.02` (zero for
/// `sv`), one per family.
pub fn surface_preset(kind: ModelKind) -> ApproxParams {
    let var = 0.04;
    match kind {
        ModelKind::ThreeParam => ApproxParams::three_param(0.02, var, 0.0015, 0.001),
        ModelKind::FiveParam => {
            ApproxParams::five_param(0.02, var, [-0.0015, 0.001], [-0.001, -0.001])
        }
        ModelKind::SvOnly => ApproxParams::sv_only(var, [-0.0015, 0.001], [-0.001, -0.001]),
        ModelKind::SevenParam => {
            ApproxParams::seven_param(0.02, var, [-0.0015, 0.001, -0.005], [-0.001, -0.001, -0.06])
        }
    }
    .expect("valid preset")
}

/// Default surface grid: 13 strikes 70..130 around a spot of 100 and the
/// standard chain maturities.
pub fn default_surface_grid() -> (f64, Vec<f64>, Vec<f64>) {
    let strikes = (0..13).map(|i| 70.0 + 5.0 * i as f64).collect();
    let maturities = crate::synthetic::STANDARD_MATURITY_DAYS
        .iter()
        .map(|&d| io::days_to_years(d))
        .collect();
    (100.0, strikes, maturities)
}

/// Shape summary of one surface row, over its populated cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileShape {
    pub maturity: f64,
    pub populated: usize,
    /// `(I(K_lo) − I(K_hi)) / ln(K_hi/K_lo)` between the extreme populated
    /// strikes; positive for a put skew.
    pub skew: f64,
    pub decreasing: bool,
    /// Largest `|I(K) − I(K_atm)|`, with `K_atm` the populated strike nearest
    /// the forward.
    pub wing_range: f64,
}

pub fn smile_shapes(grid: &SurfaceGrid, curve: &DiscountCurve) -> Result<Vec<SmileShape>> {
    let mut out = Vec::new();
    for (i, &tau) in grid.maturities.iter().enumerate() {
        let fwd = grid.spot / curve.discount(tau)?;
        let pts = grid.smile(i);
        let (skew, decreasing, wing_range) = if pts.len() >= 2 {
            let (k0, i0) = pts[0];
            let (k1, i1) = pts[pts.len() - 1];
            let atm = pts
                .iter()
                .min_by(|a, b| (a.0 / fwd).ln().abs().total_cmp(&(b.0 / fwd).ln().abs()))
                .expect("nonempty")
                .1;
            (
                (i0 - i1) / (k1 / k0).ln(),
                pts.windows(2).all(|w| w[1].1 < w[0].1),
                pts.iter().map(|p| (p.1 - atm).abs()).fold(0.0, f64::max),
            )
        } else {
            (f64::NAN, false, f64::NAN)
        };
        out.push(SmileShape {
            maturity: tau,
            populated: pts.len(),
            skew,
            decreasing,
            wing_range,
        });
    }
    Ok(out)
}
