use std::path::Path;

use creditvol::black_scholes::{LevelParams, QuoteContext};
use creditvol::calibration::Scheme;
use creditvol::implied_vol::{i0, CellFlag, SurfaceMethod};
use creditvol::io;
use creditvol::mc::MCModelSpec;
use creditvol::synthetic::{reference_params, NaiveDate, SyntheticGrid};
use creditvol::workflows::{
    cmd_calibrate, cmd_gen_synthetic, cmd_price, cmd_spread_series, cmd_surface,
    default_surface_grid, surface_preset, RunConfig, SyntheticSource,
};
use creditvol::{DiscountCurve, ModelKind};

fn panel(dir: &Path, days: usize) {
    let src = SyntheticSource::Approx {
        params: reference_params(),
        start: NaiveDate::from_ymd_opt(2006, 1, 9).unwrap(),
        days,
    };
    let rep = cmd_gen_synthetic(
        &src,
        8.62,
        &DiscountCurve::flat(0.047771),
        &SyntheticGrid::standard(),
        0.0,
        1,
        dir,
    )
    .unwrap();
    assert_eq!(rep.days, days);
    assert!(rep.dropped.is_empty());
    assert_eq!(rep.quotes, 104 * days);
}

fn config(dir: &Path, scheme: Scheme) -> RunConfig {
    RunConfig {
        models: ModelKind::ALL.to_vec(),
        scheme,
        maturities: None,
        chain: dir.join("chain.csv"),
        curve: dir.join("curve.csv"),
        spreads: Some(dir.join("spreads.csv")),
        stock: Some(dir.join("stock.csv")),
        spot: None,
        avg_var: None,
        vol_window: 252,
        out: dir.to_path_buf(),
    }
}

#[test]
fn noiseless_panel_calibrates_exactly() {
    let dir = tempfile::tempdir().unwrap();
    panel(dir.path(), 2);
    let fits = cmd_calibrate(&config(dir.path(), Scheme::A)).unwrap();
    let seven = &fits[&ModelKind::SevenParam];
    assert_eq!(seven.len(), 2);
    for d in seven {
        assert!(d.max_abs_iv_error().unwrap() < 1e-8, "{}", d.date);
        assert!((d.result.params.avg_var - reference_params().avg_var).abs() < 1e-12);
        let loaded = io::load_fit(&dir.path().join(format!("fit_{}_7p.csv", d.date))).unwrap();
        assert_eq!(loaded.len(), 104);
    }
    assert!(fits[&ModelKind::ThreeParam][0].max_abs_iv_error().unwrap() > 1e-4);
    assert!(dir.path().join("calibration.csv").is_file());
    assert!(dir.path().join("calibration.json").is_file());
}

#[test]
fn maturity_filter_restricts_quotes() {
    let dir = tempfile::tempdir().unwrap();
    panel(dir.path(), 1);
    let mut cfg = config(dir.path(), Scheme::A);
    cfg.models = vec![ModelKind::SevenParam];
    cfg.maturities = Some(vec![91, 365]);
    let fits = cmd_calibrate(&cfg).unwrap();
    assert_eq!(fits[&ModelKind::SevenParam][0].fit.len(), 26);
    cfg.maturities = Some(vec![10]);
    assert!(cmd_calibrate(&cfg).is_err());
}

#[test]
fn spread_series_tracks_truth_for_seven_param() {
    let dir = tempfile::tempdir().unwrap();
    panel(dir.path(), 2);
    let series = cmd_spread_series(&config(dir.path(), Scheme::B)).unwrap();
    let truth = reference_params().lambda_bar;
    for row in &series[&ModelKind::SevenParam] {
        assert!((row.fitted_lambda - truth).abs() < 1e-4);
        assert!((row.bond_spread.unwrap() - truth).abs() < 1e-12);
    }
    assert!(series[&ModelKind::ThreeParam]
        .iter()
        .all(|r| r.fitted_lambda > truth));
    let loaded = io::load_spread_series(&dir.path().join("spread_series_7p.csv")).unwrap();
    assert_eq!(loaded, series[&ModelKind::SevenParam]);
}

#[test]
fn missing_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Scheme::A);
    assert!(matches!(
        cmd_calibrate(&cfg),
        Err(creditvol::Error::Config(_))
    ));
}

#[test]
fn three_param_surface_is_monotone_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let curve = DiscountCurve::flat(0.04);
    let (spot, strikes, mats) = default_surface_grid();
    let (grid, path) = cmd_surface(
        &surface_preset(ModelKind::ThreeParam),
        spot,
        &strikes,
        &mats,
        &curve,
        SurfaceMethod::Exact,
        dir.path(),
    )
    .unwrap();
    for i in 0..mats.len() {
        let smile = grid.smile(i);
        assert!(smile.len() >= 3);
        assert!(smile.windows(2).all(|w| w[1].1 < w[0].1), "maturity {i}");
    }
    let rows = io::load_surface(&path).unwrap();
    assert_eq!(rows.len(), strikes.len() * mats.len());
    let ok = grid
        .flags
        .iter()
        .flatten()
        .filter(|f| **f == CellFlag::Ok)
        .count();
    assert_eq!(rows.iter().filter(|r| r.iv.is_some()).count(), ok);
}

#[test]
fn price_rows_satisfy_parity() {
    let dir = tempfile::tempdir().unwrap();
    let curve = DiscountCurve::flat(0.03);
    let rows = cmd_price(
        &reference_params(),
        10.0,
        &[8.0, 10.0, 12.0],
        &[0.5, 1.0],
        &curve,
        dir.path(),
    )
    .unwrap();
    assert_eq!(rows.len(), 6);
    for (i, r) in rows.iter().enumerate() {
        let b = curve.discount([0.5, 1.0][i / 3]).unwrap();
        assert!(((r.call - r.put) - (10.0 - b * r.strike)).abs() < 1e-12);
    }
    assert!(dir.path().join("prices_7p.csv").is_file());
}

#[test]
fn oracle_chain_of_constant_model_is_flat_leading_order() {
    let dir = tempfile::tempdir().unwrap();
    let spec = MCModelSpec::constant(0.3, 0.02, 0.1, 0.04, 10.0);
    let lambda = 0.1 * 0.09 + 0.02;
    let src = SyntheticSource::Oracle {
        spec,
        date: "2006-01-09".into(),
        n_paths: 20_000,
        n_steps: None,
    };
    let curve = DiscountCurve::flat(0.04);
    let grid = SyntheticGrid {
        maturity_days: vec![182, 365],
        moneyness: vec![-1.0, 0.0, 1.0],
    };
    let rep = cmd_gen_synthetic(&src, 10.0, &curve, &grid, 0.0, 3, dir.path()).unwrap();
    assert_eq!(rep.days, 1);
    let day = &io::load_chain(&dir.path().join("chain.csv")).unwrap()[0];
    for (i, &tau) in day.grid.maturities.iter().enumerate() {
        for (j, &k) in day.grid.strikes[i].iter().enumerate() {
            let ctx = QuoteContext::new(10.0, k, curve.discount(tau).unwrap(), tau).unwrap();
            let exact = i0(&ctx, &LevelParams::from_vol(0.3, lambda).unwrap()).unwrap();
            // survival is deterministic, so antithetic pairs price almost exactly
            assert!((day.grid.call_iv[i][j] - exact).abs() < 5e-3, "{tau} {k}");
        }
    }
}
