use creditvol::calibration::{
    build_otm_chain, calibrate_fixed_lambda, calibrate_free_lambda, historical_vol, iv_objective,
    objective, OptionChain,
};
use creditvol::synthetic::{gen_synthetic, reference_params, Source, SyntheticGrid};
use creditvol::{ApproxParams, DiscountCurve, ModelKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SPOT: f64 = 8.62;

fn chain(truth: &ApproxParams, noise: f64, seed: u64) -> OptionChain {
    let curve = DiscountCurve::flat(0.047771);
    let day = gen_synthetic(
        &Source::Approx(*truth),
        "d",
        SPOT,
        &curve,
        &SyntheticGrid::standard(),
        noise,
        seed,
    )
    .unwrap();
    build_otm_chain(
        &day.chain.date,
        &day.chain.grid,
        day.spot,
        &curve,
        truth.avg_var,
    )
    .unwrap()
}

#[test]
fn standard_grid_gives_104_quotes() {
    assert_eq!(chain(&reference_params(), 0.0, 1).quotes.len(), 104);
}

#[test]
fn noiseless_fit_is_exact_for_every_family() {
    let truth = reference_params();
    for kind in ModelKind::ALL {
        let t = truth.restrict_to(kind).unwrap();
        let ch = chain(&t, 0.0, 1);
        let fit = calibrate_fixed_lambda(&ch, kind, t.lambda_bar).unwrap();
        for (a, b) in fit.params.slots().iter().zip(t.slots()) {
            assert!(
                (a - b).abs() <= 1e-8 * b.abs().max(1e-6),
                "{kind}: {a} vs {b}"
            );
        }
        assert!(fit.objective < 1e-20, "{kind}: {}", fit.objective);
    }
}

#[test]
fn noisy_estimates_are_within_reported_errors() {
    let truth = reference_params();
    let ch = chain(&truth, 0.002, 3);
    let fit = calibrate_fixed_lambda(&ch, ModelKind::SevenParam, truth.lambda_bar).unwrap();
    let se = fit.diagnostics.std_errors.clone().unwrap();
    let mut outside = 0;
    for ((a, b), s) in fit.params.slots().iter().zip(truth.slots()).zip(&se) {
        if (a - b).abs() > 4.0 * s {
            outside += 1;
        }
    }
    assert!(
        outside <= 1,
        "{:?} vs {:?} se {se:?}",
        fit.params.slots(),
        truth.slots()
    );
}

#[test]
fn linear_fit_is_a_stationary_point() {
    let truth = reference_params();
    let ch = chain(&truth, 0.01, 4);
    let fit = calibrate_fixed_lambda(&ch, ModelKind::SevenParam, truth.lambda_bar).unwrap();
    let base = objective(&ch, &fit.params).unwrap();
    for j in 0..6 {
        let mut s = fit.params.slots();
        let h = 1e-4 * s[j].abs().max(1e-4);
        s[j] += h;
        let up = objective(
            &ch,
            &ApproxParams::seven_param(
                truth.lambda_bar,
                truth.avg_var,
                [s[0], s[1], s[2]],
                [s[3], s[4], s[5]],
            )
            .unwrap(),
        )
        .unwrap();
        s[j] -= 2.0 * h;
        let down = objective(
            &ch,
            &ApproxParams::seven_param(
                truth.lambda_bar,
                truth.avg_var,
                [s[0], s[1], s[2]],
                [s[3], s[4], s[5]],
            )
            .unwrap(),
        )
        .unwrap();
        assert!(
            up >= base * (1.0 - 1e-9) && down >= base * (1.0 - 1e-9),
            "slot {j}"
        );
    }
}

#[test]
fn price_and_iv_objectives_agree() {
    let truth = reference_params();
    let ch = chain(&truth, 0.01, 5);
    let fit = calibrate_fixed_lambda(&ch, ModelKind::SevenParam, truth.lambda_bar).unwrap();
    let by_price = fit.objective;
    let by_iv = iv_objective(&ch, &fit.params).unwrap();
    assert!(
        (by_price - by_iv).abs() <= 0.1 * by_iv,
        "{by_price} vs {by_iv}"
    );
}

#[test]
fn free_lambda_recovers_truth_without_noise() {
    let truth = reference_params();
    let fit = calibrate_free_lambda(&chain(&truth, 0.0, 1), ModelKind::SevenParam).unwrap();
    assert!((fit.params.lambda_bar - truth.lambda_bar).abs() < 1e-4);
    assert!(!fit.non_unimodal);
}

#[test]
fn three_param_overstates_intensity() {
    let truth = reference_params();
    let fit = calibrate_free_lambda(&chain(&truth, 0.0, 1), ModelKind::ThreeParam).unwrap();
    assert!(fit.params.lambda_bar > truth.lambda_bar);
}

#[test]
fn default_free_data_gives_small_intensity() {
    let truth = reference_params().restrict_to(ModelKind::SvOnly).unwrap();
    let fit = calibrate_free_lambda(&chain(&truth, 0.0, 1), ModelKind::SevenParam).unwrap();
    assert!(fit.params.lambda_bar < 1e-3, "{}", fit.params.lambda_bar);
}

#[test]
fn historical_vol_of_lognormal_walk() {
    let sigma: f64 = 0.3;
    let n = 252;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let step = Normal::new(0.0, sigma / 252f64.sqrt()).unwrap();
    let mut p = vec![50.0];
    for _ in 0..n {
        let last = *p.last().unwrap();
        p.push(last * f64::exp(step.sample(&mut rng)));
    }
    let v = historical_vol(&p, n).unwrap();
    // 99.9% chi-square band with 252 degrees of freedom
    let (lo, hi) = (184.6 / 252.0, 332.5 / 252.0);
    assert!(v > lo * sigma * sigma && v < hi * sigma * sigma, "{v}");
    assert!(historical_vol(&p, n + 1).is_err());
}
