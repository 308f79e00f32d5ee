//! CSV loaders and writers.
//!
//! Every file is header-first and comma-separated. Maturities are carried in
//! calendar days in chain, surface and fit files and converted to years at
//! this boundary. Floats are written in shortest round-trip form, so every
//! emitted file reloads losslessly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bond::YieldSpreadPoint;
use crate::calibration::IvGrid;
use crate::curve::DiscountCurve;
use crate::error::{Error, Result};
use crate::implied_vol::{CellFlag, SurfaceGrid};
use crate::mc::ConvergenceRow;
use crate::DAYS_PER_YEAR;

pub const CHAIN_HEADER: [&str; 5] = ["date", "maturity_days", "strike", "call_iv", "put_iv"];
pub const CURVE_HEADER: [&str; 2] = ["maturity_years", "zero_rate"];
pub const SPREAD_HEADER: [&str; 3] = ["date", "maturity_years", "spread"];
pub const STOCK_HEADER: [&str; 2] = ["date", "close"];
pub const SURFACE_HEADER: [&str; 4] = ["maturity_days", "strike", "iv", "flag"];
pub const FIT_HEADER: [&str; 6] = [
    "maturity_days",
    "strike",
    "side",
    "observed_iv",
    "model_iv",
    "residual",
];
pub const SERIES_HEADER: [&str; 3] = ["date", "fitted_lambda", "bond_spread"];

pub fn days_to_years(days: u32) -> f64 {
    days as f64 / DAYS_PER_YEAR
}

pub fn years_to_days(t: f64) -> u32 {
    (t * DAYS_PER_YEAR).round() as u32
}

fn parse_err(origin: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_string(),
        line,
        message: message.into(),
    }
}

/// Rows of a CSV source with their 1-based line numbers.
fn read_rows<T: DeserializeOwned, R: Read>(
    src: R,
    origin: &str,
    header: &[&str],
) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(src);
    let found = rdr
        .headers()
        .map_err(|e| parse_err(origin, 1, e.to_string()))?
        .clone();
    if found.is_empty() {
        return Err(parse_err(origin, 1, "empty file"));
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_err(
            origin,
            1,
            format!(
                "expected header '{}', found '{}'",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(origin, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row: T = rec
            .deserialize(Some(&found))
            .map_err(|e| parse_err(origin, line, e.to_string()))?;
        out.push((line, row));
    }
    if out.is_empty() {
        return Err(parse_err(origin, 2, "no data rows"));
    }
    Ok(out)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| parse_err(&path.display().to_string(), 0, e.to_string()))
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn positive(origin: &str, line: usize, name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(parse_err(
            origin,
            line,
            format!("{name} must be positive, got {v}"),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ChainRow<'a> {
    date: &'a str,
    maturity_days: u32,
    strike: f64,
    call_iv: f64,
    put_iv: f64,
}

#[derive(Debug, Deserialize)]
struct ChainRowOwned {
    date: String,
    maturity_days: u32,
    strike: f64,
    call_iv: f64,
    put_iv: f64,
}

/// One quote date of raw call/put implied volatilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDay {
    pub date: String,
    pub grid: IvGrid,
}

pub fn parse_chain<R: Read>(src: R, origin: &str) -> Result<Vec<ChainDay>> {
    type Cells = BTreeMap<u32, Vec<(f64, f64, f64, usize)>>;
    let mut days: BTreeMap<String, Cells> = BTreeMap::new();
    for (line, r) in read_rows::<ChainRowOwned, _>(src, origin, &CHAIN_HEADER)? {
        if r.maturity_days == 0 {
            return Err(parse_err(origin, line, "maturity_days must be positive"));
        }
        positive(origin, line, "strike", r.strike)?;
        positive(origin, line, "call_iv", r.call_iv)?;
        positive(origin, line, "put_iv", r.put_iv)?;
        days.entry(r.date)
            .or_default()
            .entry(r.maturity_days)
            .or_default()
            .push((r.strike, r.call_iv, r.put_iv, line));
    }
    let mut out = Vec::new();
    for (date, mats) in days {
        let mut grid = IvGrid {
            maturities: Vec::new(),
            strikes: Vec::new(),
            call_iv: Vec::new(),
            put_iv: Vec::new(),
        };
        for (d, mut cells) in mats {
            cells.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = cells.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(parse_err(
                    origin,
                    w[1].3,
                    format!("duplicate strike {} at {date}, {d} days", w[1].0),
                ));
            }
            grid.maturities.push(days_to_years(d));
            grid.strikes.push(cells.iter().map(|c| c.0).collect());
            grid.call_iv.push(cells.iter().map(|c| c.1).collect());
            grid.put_iv.push(cells.iter().map(|c| c.2).collect());
        }
        out.push(ChainDay { date, grid });
    }
    Ok(out)
}

pub fn load_chain(path: &Path) -> Result<Vec<ChainDay>> {
    parse_chain(open(path)?, &path.display().to_string())
}

pub fn write_chain(path: &Path, days: &[ChainDay]) -> Result<()> {
    let mut rows = Vec::new();
    for day in days {
        let g = &day.grid;
        for (i, &t) in g.maturities.iter().enumerate() {
            for j in 0..g.strikes[i].len() {
                rows.push(ChainRow {
                    date: &day.date,
                    maturity_days: years_to_days(t),
                    strike: g.strikes[i][j],
                    call_iv: g.call_iv[i][j],
                    put_iv: g.put_iv[i][j],
                });
            }
        }
    }
    write_rows(path, &CHAIN_HEADER, &rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    maturity_years: f64,
    zero_rate: f64,
}

pub fn parse_curve<R: Read>(src: R, origin: &str) -> Result<DiscountCurve> {
    let rows = read_rows::<CurveRow, _>(src, origin, &CURVE_HEADER)?;
    for w in rows.windows(2) {
        if !(w[1].1.maturity_years > w[0].1.maturity_years) {
            return Err(parse_err(
                origin,
                w[1].0,
                "pillar maturities must be strictly increasing",
            ));
        }
    }
    for (line, r) in &rows {
        positive(origin, *line, "maturity_years", r.maturity_years)?;
        if !r.zero_rate.is_finite() {
            return Err(parse_err(origin, *line, "zero_rate must be finite"));
        }
    }
    DiscountCurve::new(
        rows.iter()
            .map(|(_, r)| (r.maturity_years, r.zero_rate))
            .collect(),
    )
}

pub fn load_curve(path: &Path) -> Result<DiscountCurve> {
    parse_curve(open(path)?, &path.display().to_string())
}

pub fn write_curve(path: &Path, curve: &DiscountCurve) -> Result<()> {
    let rows: Vec<CurveRow> = curve
        .pillars()
        .iter()
        .map(|&(maturity_years, zero_rate)| CurveRow {
            maturity_years,
            zero_rate,
        })
        .collect();
    write_rows(path, &CURVE_HEADER, &rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct SpreadRow {
    date: String,
    maturity_years: f64,
    spread: f64,
}

/// Bond yield spreads keyed by date.
pub type SpreadTable = BTreeMap<String, Vec<YieldSpreadPoint>>;

pub fn parse_spreads<R: Read>(src: R, origin: &str) -> Result<SpreadTable> {
    let mut out = SpreadTable::new();
    for (line, r) in read_rows::<SpreadRow, _>(src, origin, &SPREAD_HEADER)? {
        let pt = YieldSpreadPoint::new(r.maturity_years, r.spread)
            .map_err(|e| parse_err(origin, line, e.to_string()))?;
        out.entry(r.date).or_default().push(pt);
    }
    Ok(out)
}

pub fn load_spreads(path: &Path) -> Result<SpreadTable> {
    parse_spreads(open(path)?, &path.display().to_string())
}

pub fn write_spreads(path: &Path, table: &SpreadTable) -> Result<()> {
    let rows: Vec<SpreadRow> = table
        .iter()
        .flat_map(|(d, pts)| {
            pts.iter().map(move |p| SpreadRow {
                date: d.clone(),
                maturity_years: p.maturity,
                spread: p.spread,
            })
        })
        .collect();
    write_rows(path, &SPREAD_HEADER, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockRow {
    pub date: String,
    pub close: f64,
}

/// Closing prices sorted by date.
pub fn parse_stock<R: Read>(src: R, origin: &str) -> Result<Vec<StockRow>> {
    let mut rows = Vec::new();
    for (line, r) in read_rows::<StockRow, _>(src, origin, &STOCK_HEADER)? {
        positive(origin, line, "close", r.close)?;
        rows.push(r);
    }
    rows.sort_by(|a, b| a.date.cmp(&b.date));
    if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(parse_err(
            origin,
            0,
            format!("duplicate date {}", w[1].date),
        ));
    }
    Ok(rows)
}

pub fn load_stock(path: &Path) -> Result<Vec<StockRow>> {
    parse_stock(open(path)?, &path.display().to_string())
}

pub fn write_stock(path: &Path, rows: &[StockRow]) -> Result<()> {
    write_rows(path, &STOCK_HEADER, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub maturity_days: u32,
    pub strike: f64,
    /// Empty where the cell is flagged.
    pub iv: Option<f64>,
    pub flag: String,
}

pub fn write_surface(path: &Path, grid: &SurfaceGrid) -> Result<()> {
    let mut rows = Vec::new();
    for (i, &t) in grid.maturities.iter().enumerate() {
        for (j, &k) in grid.strikes.iter().enumerate() {
            let flag = grid.flags[i][j];
            rows.push(SurfaceRow {
                maturity_days: years_to_days(t),
                strike: k,
                iv: (flag == CellFlag::Ok).then_some(grid.iv[i][j]),
                flag: flag.label().to_string(),
            });
        }
    }
    write_rows(path, &SURFACE_HEADER, &rows)
}

pub fn parse_surface<R: Read>(src: R, origin: &str) -> Result<Vec<SurfaceRow>> {
    let rows = read_rows::<SurfaceRow, _>(src, origin, &SURFACE_HEADER)?;
    for (line, r) in &rows {
        if CellFlag::parse(&r.flag).is_none() {
            return Err(parse_err(
                origin,
                *line,
                format!("unknown flag '{}'", r.flag),
            ));
        }
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn load_surface(path: &Path) -> Result<Vec<SurfaceRow>> {
    parse_surface(open(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub maturity_days: u32,
    pub strike: f64,
    pub side: String,
    pub observed_iv: f64,
    /// Empty where the model price could not be inverted.
    pub model_iv: Option<f64>,
    /// `observed_iv − model_iv`.
    pub residual: Option<f64>,
}

pub fn write_fit(path: &Path, rows: &[FitRow]) -> Result<()> {
    write_rows(path, &FIT_HEADER, rows)
}

pub fn parse_fit<R: Read>(src: R, origin: &str) -> Result<Vec<FitRow>> {
    Ok(read_rows::<FitRow, _>(src, origin, &FIT_HEADER)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

pub fn load_fit(path: &Path) -> Result<Vec<FitRow>> {
    parse_fit(open(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub date: String,
    pub fitted_lambda: f64,
    /// Empty on days without a bond quote.
    pub bond_spread: Option<f64>,
}

pub fn write_spread_series(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    write_rows(path, &SERIES_HEADER, rows)
}

pub fn parse_spread_series<R: Read>(src: R, origin: &str) -> Result<Vec<SeriesRow>> {
    Ok(read_rows::<SeriesRow, _>(src, origin, &SERIES_HEADER)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

pub fn load_spread_series(path: &Path) -> Result<Vec<SeriesRow>> {
    parse_spread_series(open(path)?, &path.display().to_string())
}

pub const CONVERGENCE_HEADER: [&str; 10] = [
    "eps",
    "delta",
    "n_steps",
    "n_paths",
    "max_error",
    "worst_strike",
    "noise",
    "scale",
    "ratio",
    "inconclusive",
];

pub fn write_convergence(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    write_rows(path, &CONVERGENCE_HEADER, rows)
}

pub fn load_convergence(path: &Path) -> Result<Vec<ConvergenceRow>> {
    Ok(read_rows::<ConvergenceRow, _>(
        open(path)?,
        &path.display().to_string(),
        &CONVERGENCE_HEADER,
    )?
    .into_iter()
    .map(|(_, r)| r)
    .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pillar_curve_extrapolates_flat() {
        let c = parse_curve(
            "maturity_years,zero_rate\n1.0,0.047771\n".as_bytes(),
            "c.csv",
        )
        .unwrap();
        let t = 273.0 / 365.0;
        assert!((c.discount(t).unwrap() - (-0.047771f64 * t).exp()).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(
            parse_curve("".as_bytes(), "c.csv"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_curve("maturity_years,zero_rate\n".as_bytes(), "c.csv"),
            Err(Error::Parse { .. })
        ));
        let e = parse_curve(
            "maturity_years,zero_rate\n1,0.04\n0.5,0.04\n".as_bytes(),
            "c.csv",
        )
        .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let text = "date,maturity_days,strike,call_iv,put_iv\n2006-01-03,91,8,0.3,0.31\n2006-01-03,91,9,-0.3,0.31\n";
        let e = parse_chain(text.as_bytes(), "chain.csv").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        assert!(e.to_string().starts_with("chain.csv:3:"));
        let e = parse_chain(
            "date,maturity_days,strike,call_iv,put_iv\nx,91,abc,0.3,0.3\n".as_bytes(),
            "c",
        )
        .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(parse_chain("date,strike\nx,1\n".as_bytes(), "c").is_err());
    }

    #[test]
    fn chain_groups_by_date_and_maturity() {
        let text = "date,maturity_days,strike,call_iv,put_iv\n\
                    d1,182,10,0.3,0.3\nd1,91,9,0.31,0.32\nd1,91,8,0.33,0.34\nd2,91,8,0.2,0.2\n";
        let days = parse_chain(text.as_bytes(), "c").unwrap();
        assert_eq!(days.len(), 2);
        let g = &days[0].grid;
        assert_eq!(g.maturities, vec![91.0 / 365.0, 182.0 / 365.0]);
        assert_eq!(g.strikes[0], vec![8.0, 9.0]);
        assert_eq!(g.put_iv[0], vec![0.34, 0.32]);
        let dup = "date,maturity_days,strike,call_iv,put_iv\nd,91,8,0.3,0.3\nd,91,8,0.3,0.3\n";
        assert!(matches!(
            parse_chain(dup.as_bytes(), "c"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let day = ChainDay {
            date: "2006-01-03".into(),
            grid: IvGrid {
                maturities: vec![91.0 / 365.0],
                strikes: vec![vec![7.1234567890123, 8.62]],
                call_iv: vec![vec![0.1 + 0.2, 0.2922]],
                put_iv: vec![vec![1.0 / 3.0, 0.29]],
            },
        };
        let p = dir.path().join("chain.csv");
        write_chain(&p, std::slice::from_ref(&day)).unwrap();
        assert_eq!(load_chain(&p).unwrap(), vec![day]);

        let curve = DiscountCurve::new(vec![(0.25, 0.0451), (1.0, 0.047771)]).unwrap();
        let p = dir.path().join("curve.csv");
        write_curve(&p, &curve).unwrap();
        assert_eq!(load_curve(&p).unwrap(), curve);

        let mut spreads = SpreadTable::new();
        spreads.insert(
            "d".into(),
            vec![YieldSpreadPoint::new(0.5, 0.04385).unwrap()],
        );
        let p = dir.path().join("spreads.csv");
        write_spreads(&p, &spreads).unwrap();
        assert_eq!(load_spreads(&p).unwrap(), spreads);

        let series = vec![
            SeriesRow {
                date: "d".into(),
                fitted_lambda: 0.0412345678901,
                bond_spread: None,
            },
            SeriesRow {
                date: "e".into(),
                fitted_lambda: 0.05,
                bond_spread: Some(0.04385),
            },
        ];
        let p = dir.path().join("series.csv");
        write_spread_series(&p, &series).unwrap();
        assert_eq!(load_spread_series(&p).unwrap(), series);

        let fit = vec![FitRow {
            maturity_days: 273,
            strike: 8.0,
            side: "put".into(),
            observed_iv: 0.31,
            model_iv: Some(0.305),
            residual: Some(0.31 - 0.305),
        }];
        let p = dir.path().join("fit.csv");
        write_fit(&p, &fit).unwrap();
        assert_eq!(load_fit(&p).unwrap(), fit);
    }
}
