use lddc_core::hardy::{analyze, AnalysisConfig};
use lddc_core::lddc::{
    ideal_controller_frf, internal_stability, loewner_fit, reduce, relative_rms_error,
    split_stable, LoewnerOptions,
};
use lddc_core::models::{logspace, FrequencyResponseData, RationalModel, C64};
use lddc_core::plants::{hydro_surrogate, simulate_step};
use lddc_core::refmodel::{build_achievable, Branch};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn unstable_plant_end_to_end() {
    let plant = RationalModel::from_zpk(
        &[c(-2.0, 0.0), c(-0.5, 0.0)],
        &[c(1.0, 0.0), c(-3.0, 0.0), c(-0.2, 0.0)],
        1.0,
    )
    .unwrap();
    let data =
        FrequencyResponseData::from_model(&plant, &logspace(1e-2, 1e2, 400), "plant").unwrap();
    let report = analyze(&data, &AnalysisConfig::default()).unwrap();
    assert_eq!(report.rhp_poles.len(), 1);
    assert!((report.rhp_poles[0] - c(1.0, 0.0)).norm() < 1e-6);
    assert!(report.rhp_zeros.is_empty());

    let reference = build_achievable(&RationalModel::first_order(0.25).unwrap(), &report).unwrap();
    assert_eq!(reference.branch, Branch::UnstableMP);
    let ideal = ideal_controller_frf(&data, &reference.achieved).unwrap();
    let fit = loewner_fit(&ideal, &LoewnerOptions::default()).unwrap();
    assert!(fit.node_residual < 1e-9);
    let (k, anti) = split_stable(&fit.model).unwrap();
    assert_eq!(anti.order(), 0);

    let verdict = internal_stability(&plant, &k).unwrap();
    assert!(verdict.stable);
    for (w, _) in data.iter() {
        let want = reference.achieved.eval_jw(w).unwrap();
        let got = verdict.complementary.eval_jw(w).unwrap();
        assert!((got - want).norm() <= 1e-6 * want.norm());
    }

    let errs: Vec<f64> = (1..=k.order())
        .map(|n| relative_rms_error(&reduce(&k, n, data.omegas()).unwrap(), &ideal).unwrap())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

#[test]
fn integrating_plant_tracks_without_overshoot() {
    let (plant, data) = hydro_surrogate().unwrap();
    let report = analyze(&data, &AnalysisConfig::default()).unwrap();
    assert!(report.has_integrator);
    assert!(report.rhp_poles.is_empty() && report.rhp_zeros.is_empty());

    let reference =
        build_achievable(&RationalModel::second_order(1e-4, 1.0).unwrap(), &report).unwrap();
    assert_eq!(reference.branch, Branch::StableMP);
    let ideal = ideal_controller_frf(&data, &reference.achieved).unwrap();
    let k = split_stable(
        &loewner_fit(&ideal, &LoewnerOptions::default())
            .unwrap()
            .model,
    )
    .unwrap()
    .0;
    let verdict = internal_stability(&plant, &k).unwrap();
    assert!(verdict.stable);
    let step = simulate_step(&verdict.complementary, 2e5, 100.0).unwrap();
    let peak = step.y.iter().copied().fold(f64::MIN, f64::max);
    assert!(peak <= 1.0 + 1e-6);
    assert!((1.0 - step.y.last().unwrap()).abs() < 1e-6);
}
