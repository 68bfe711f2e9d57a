//! Whole-pipeline acceptance runs.
//!
//! Each check prints one verdict line before asserting, so a full run
//! under `--nocapture` reads as a checklist. Oracles are built in this
//! file from first principles: materialized perturbed series fed to the
//! real detectors, an unpruned partition search, and a dense kernel
//! solve.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use varsig::harness::{ChangepointPlan, InferenceEngine, QqReport, Scenario, StopPlan};
use varsig::{
    binary_segmentation, conditioned_density, cusum_stat, cusum_stat_phi, decompose_w,
    exact_p_value, gp_direct_p, lr_phi_coeffs, lr_stat, lr_stat_phi, naive_p_hat, pelt,
    perturb_series, power_p_value, reconstruct_squares, run_detection_accuracy, run_qq,
    selection_set, two_sided_bounds, Algorithm, Conditioning, DetectionResult, GpSurrogate,
    PhiPath, PowerEngine, SamplerConfig, StatKind, StopRule, TimeSeries, Window, WindowSpec,
};

fn verdict(name: &str, pass: bool, detail: String) {
    println!("{name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

/// Zero-mean Gaussian segments with the given lengths and standard
/// deviations.
fn gaussian(seed: u64, segments: &[(usize, f64)]) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    for &(len, sd) in segments {
        for _ in 0..len {
            let z: f64 = rng.sample(StandardNormal);
            values.push(z * sd);
        }
    }
    TimeSeries::new(values, 0.0).expect("finite draws")
}

fn base_scenario(name: &str, length: usize, h: usize) -> Scenario {
    Scenario {
        name: name.into(),
        length,
        replicates: 500,
        seed: 0,
        mu: 0.0,
        variances: vec![1.0],
        changepoints: ChangepointPlan::Fixed(vec![]),
        window: WindowSpec::Fixed(h),
        stat: StatKind::Cusum,
        algorithm: Algorithm::Binseg,
        stop: StopPlan::Pilot,
        engine: InferenceEngine::Exact,
        conditioning: Conditioning::TauInModel,
        sampler: SamplerConfig::default(),
        n_w: 1,
        pilot_replicates: 200,
        wbs_intervals: 100,
    }
}

/// Detects with a fixed model size and returns the inference inputs for
/// the first changepoint whose window fits.
fn first_tested_change(
    series: &TimeSeries,
    count: usize,
    h: usize,
) -> Option<(PhiPath, DetectionResult, usize)> {
    let result = binary_segmentation(series, StatKind::Cusum, StopRule::Count(count)).ok()?;
    let &tau = result.changepoints.first()?;
    WindowSpec::Fixed(h).resolve(tau, series.len())?;
    let window = Window::new(tau, h, series.len()).ok()?;
    let path = PhiPath::new(series.clone(), window).ok()?;
    Some((path, result, tau))
}

// The no-change calibration runs are shared by the uniformity check and
// the naive contrast.
static H0_EXACT: OnceLock<Vec<QqReport>> = OnceLock::new();

fn h0_exact_runs() -> &'static [QqReport] {
    H0_EXACT.get_or_init(|| {
        [10, 20]
            .iter()
            .map(|&h| {
                run_qq(&base_scenario(&format!("h0-exact-h{h}"), 200, h)).expect("the run succeeds")
            })
            .collect()
    })
}

#[test]
fn exact_engine_p_values_are_uniform_without_a_change() {
    let runs = h0_exact_runs();
    let detail = runs
        .iter()
        .map(|r| format!("{}: n={} ks={:.4} p={:.4}", r.scenario, r.tested, r.ks_stat, r.ks_p_value))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        "exact engine null calibration",
        runs.iter().all(|r| r.ks_p_value >= 0.01),
        detail,
    );
}

#[test]
fn naive_p_values_fail_the_same_uniformity_test() {
    let runs = h0_exact_runs();
    let detail = runs
        .iter()
        .map(|r| format!("{}: naive ks={:.4} p={:.2e}", r.scenario, r.naive_ks_stat, r.naive_ks_p_value))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        "unconditional p-values are anti-conservative",
        runs.iter().all(|r| r.naive_ks_p_value <= 0.001),
        detail,
    );
}

#[test]
fn localization_rates_match_the_reference_table() {
    let mut scenario = base_scenario("reference-table", 400, 10);
    scenario.replicates = 200;
    scenario.variances = vec![1.0, 4.0, 0.25, 1.0];
    scenario.changepoints = ChangepointPlan::Fixed(vec![100, 200, 300]);
    scenario.stop = StopPlan::Count(3);
    let report = run_detection_accuracy(&scenario, 10).expect("the run succeeds");
    let targets = [
        (StatKind::Cusum, [0.755, 0.972, 0.012]),
        (StatKind::Lr, [0.915, 0.992, 0.914]),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (row, (stat, target)) in report.rows.iter().zip(&targets) {
        assert_eq!(row.stat, *stat);
        for (rate, expected) in row.hit_rates.iter().zip(target) {
            pass &= (rate - expected).abs() <= 0.10;
        }
        details.push(format!("{:?} {:?} vs {:?}", row.stat, row.hit_rates, target));
    }
    verdict("hit rates near the reference values", pass, details.join("; "));
}

#[test]
fn selection_sets_agree_with_detector_reruns_on_a_grid() {
    // Instances usable at both model sizes: the first changepoint must
    // carry a full window.
    let mut instances = Vec::new();
    for seed in 0..400u64 {
        if instances.len() == 50 {
            break;
        }
        let series = if seed % 2 == 0 {
            gaussian(seed, &[(100, 1.0)])
        } else {
            gaussian(seed, &[(50, 1.0), (50, 2.0)])
        };
        let usable = [1usize, 2]
            .iter()
            .all(|&k| first_tested_change(&series, k, 10).is_some());
        if usable {
            instances.push(series);
        }
    }
    assert_eq!(instances.len(), 50, "not enough usable instances");

    let (checked, mismatched) = instances
        .par_iter()
        .map(|series| {
            let mut checked = 0usize;
            let mut mismatched = 0usize;
            for k in [1usize, 2] {
                let (path, result, tau) =
                    first_tested_change(series, k, 10).expect("screened above");
                let sel =
                    selection_set(&path, &result, Conditioning::TauInModel).expect("cusum binseg");
                for i in 0..1000 {
                    let phi = (i as f64 + 0.5) / 1000.0;
                    let near_endpoint = sel
                        .set
                        .intervals()
                        .iter()
                        .any(|&(a, b)| (phi - a).abs() <= 1e-8 || (phi - b).abs() <= 1e-8);
                    if near_endpoint {
                        continue;
                    }
                    let rerun = binary_segmentation(
                        &perturb_series(&path, phi),
                        StatKind::Cusum,
                        StopRule::Count(k),
                    )
                    .expect("perturbed series stays valid");
                    let holds = rerun.changepoints.binary_search(&tau).is_ok();
                    checked += 1;
                    mismatched += (sel.set.contains(phi) != holds) as usize;
                }
            }
            (checked, mismatched)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    verdict(
        "analytic selection sets match grid replays",
        mismatched == 0 && checked > 90_000,
        format!("{checked} grid points checked, {mismatched} disagreements"),
    );
}

#[test]
fn surrogate_engine_stays_calibrated_at_both_design_budgets() {
    let run = |n_design: usize| {
        let mut scenario = base_scenario(&format!("h0-gp-n{n_design}"), 200, 20);
        scenario.replicates = 300;
        scenario.seed = 4;
        scenario.stat = StatKind::Lr;
        scenario.engine = InferenceEngine::Gp;
        scenario.sampler.n_design = n_design;
        scenario.sampler.length_scale = 100.0;
        run_qq(&scenario).expect("the run succeeds")
    };
    let full = run(100);
    let half = run(50);
    let small_fraction =
        half.rows.iter().filter(|r| r.p_value <= 0.05).count() as f64 / half.rows.len() as f64;
    verdict(
        "surrogate calibration across design budgets",
        full.ks_p_value >= 0.01 && small_fraction <= 0.07,
        format!(
            "n=100: ks p={:.4} over {}; n=50: Pr(p<=0.05)={:.4} over {}",
            full.ks_p_value,
            full.tested,
            small_fraction,
            half.tested
        ),
    );
}

#[test]
fn surrogate_p_values_track_the_exact_engine() {
    let mut cases = Vec::new();
    for seed in 0..300u64 {
        if cases.len() == 30 {
            break;
        }
        let series = gaussian(1000 + seed, &[(100, 1.0), (100, 1.5)]);
        if let Some(case) = first_tested_change(&series, 1, 20) {
            cases.push((seed, case));
        }
    }
    assert_eq!(cases.len(), 30, "not enough usable instances");
    let diffs: Vec<f64> = cases
        .par_iter()
        .map(|(seed, (path, result, _))| {
            let exact = exact_p_value(path, result, Conditioning::TauInModel)
                .expect("cusum binseg")
                .p_value;
            let config = SamplerConfig {
                n_design: 200,
                seed: *seed,
                ..SamplerConfig::default()
            };
            let surrogate = gp_direct_p(path, result, Conditioning::TauInModel, &config)
                .expect("the surrogate runs")
                .p_value;
            (exact - surrogate).abs()
        })
        .collect();
    let close = diffs.iter().filter(|d| **d <= 0.05).count();
    let worst = diffs.iter().cloned().fold(0.0, f64::max);
    verdict(
        "surrogate within 0.05 of exact on 90% of instances",
        close >= 27,
        format!("{close}/30 within 0.05, worst gap {worst:.4}"),
    );
}

#[test]
fn stratified_proposals_cut_the_baseline_estimator_variance() {
    // A moderate variance change leaves the selection set on an off-center
    // shoulder, where every proposal shape still reaches it. Center-heavy
    // no-change sets starve the flattest proposal instead.
    let h = 20usize;
    let series = gaussian(1003, &[(100, 1.0), (100, 1.5)]);
    let (path, result, _) = first_tested_change(&series, 1, h).expect("the window fits");

    let mut pass = true;
    let mut details = Vec::new();
    for k in [1.0f64, 5.0, 50.0] {
        let shape = h as f64 / (2.0 * k);
        let estimate = |stratified: bool| -> (f64, f64) {
            let ps: Vec<f64> = (0..200u64)
                .into_par_iter()
                .map(|rep| {
                    let config = SamplerConfig {
                        n_is: 200,
                        seed: rep.wrapping_mul(0x9E37_79B9) ^ (k as u64),
                        stratified,
                        proposal: Some((shape, shape)),
                        ..SamplerConfig::default()
                    };
                    naive_p_hat(&path, &result, Conditioning::TauInModel, &config)
                        .expect("the set has mass under every proposal")
                        .p_value
                })
                .collect();
            let mean = ps.iter().sum::<f64>() / ps.len() as f64;
            let var = ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (ps.len() - 1) as f64;
            (mean, var)
        };
        let (mean_s, var_s) = estimate(true);
        let (mean_p, var_p) = estimate(false);
        let se = (var_s / 200.0 + var_p / 200.0).sqrt();
        pass &= var_s <= 0.5 * var_p && (mean_s - mean_p).abs() <= 2.0 * se;
        details.push(format!(
            "shape {shape}: var {:.2e} vs {:.2e}, means {:.4}/{:.4}",
            var_s, var_p, mean_s, mean_p
        ));
    }
    verdict(
        "stratification halves the estimator variance",
        pass,
        details.join("; "),
    );
}

#[test]
fn p_value_curves_are_insensitive_to_the_kernel_length_scale() {
    let h = 20usize;
    let (path, result, _) = (0..50u64)
        .find_map(|seed| first_tested_change(&gaussian(2000 + seed, &[(60, 1.0), (60, 3.0)]), 1, h))
        .expect("some instance fits");
    let scales = [1.0f64, 10.0, 100.0, 1000.0];
    let curves: Vec<Vec<f64>> = scales
        .iter()
        .map(|&l| {
            let config = SamplerConfig {
                n_design: 100,
                length_scale: l,
                seed: 42,
                ..SamplerConfig::default()
            };
            let density = conditioned_density(&path, &result, Conditioning::TauInModel, &config)
                .expect("the surrogate fits");
            (1..100)
                .map(|i| {
                    let phi = i as f64 / 100.0;
                    let (lo, hi) = two_sided_bounds(phi, h);
                    density.cdf(lo) + 1.0 - density.cdf(hi)
                })
                .collect()
        })
        .collect();
    let mut sup = 0.0f64;
    for a in 0..curves.len() {
        for b in a + 1..curves.len() {
            for (x, y) in curves[a].iter().zip(&curves[b]) {
                sup = sup.max((x - y).abs());
            }
        }
    }
    verdict(
        "length scales 1..1000 give the same p-curve",
        sup <= 0.05,
        format!("sup distance {sup:.4} over {} grid points", curves[0].len()),
    );
}

#[test]
fn shape_averaged_p_values_stay_uniform_and_gain_power() {
    let mut pass = true;
    let mut details = Vec::new();
    for n_w in [1usize, 5, 20] {
        let mut scenario = base_scenario(&format!("h0-averaged-nw{n_w}"), 100, 10);
        scenario.replicates = 300;
        scenario.seed = 7;
        scenario.stop = StopPlan::Count(1);
        scenario.n_w = n_w;
        let report = run_qq(&scenario).expect("the run succeeds");
        pass &= report.ks_p_value >= 0.01;
        details.push(format!("n_w={n_w}: ks p={:.4}", report.ks_p_value));
    }

    // On a real change, averaging over nuisance shapes sharpens the test.
    let mut singles = Vec::new();
    let mut averaged = Vec::new();
    for seed in 0..30u64 {
        let series = gaussian(3000 + seed, &[(60, 1.0), (60, 3.0)]);
        let Some((path, result, tau)) = first_tested_change(&series, 1, 12) else {
            continue;
        };
        if tau.abs_diff(60) > 6 {
            continue;
        }
        let config = SamplerConfig {
            seed,
            ..SamplerConfig::default()
        };
        let p = |n_w| {
            power_p_value(
                &path,
                &result,
                Conditioning::TauInModel,
                PowerEngine::Exact,
                n_w,
                &config,
            )
            .expect("the exact engine applies")
            .p_value
        };
        singles.push(p(1));
        averaged.push(p(5));
    }
    let n = singles.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m1, m5) = (mean(&singles), mean(&averaged));
    pass &= n >= 8 && m5 < m1;
    details.push(format!("power over {n} instances: mean p {m5:.4} (averaged) vs {m1:.4}"));
    verdict("shape averaging keeps validity and gains power", pass, details.join("; "));
}

/// Unpruned optimal-partition search over the same cost and penalty.
fn exhaustive_partition(prefix: &[f64], penalty: f64) -> Vec<usize> {
    let n = prefix.len() - 1;
    let cost = |s: usize, e: usize| {
        let len = (e - s) as f64;
        len * ((prefix[e] - prefix[s]) / len).ln()
    };
    let mut best = vec![f64::INFINITY; n + 1];
    let mut back = vec![0usize; n + 1];
    best[0] = -penalty;
    for t in 2..=n {
        for s in (0..=t - 2).filter(|&s| s == 0 || s >= 2) {
            if !best[s].is_finite() {
                continue;
            }
            let total = best[s] + cost(s, t) + penalty;
            if total < best[t] {
                best[t] = total;
                back[t] = s;
            }
        }
    }
    let mut cps = Vec::new();
    let mut t = n;
    while t > 0 {
        if back[t] > 0 {
            cps.push(back[t]);
        }
        t = back[t];
    }
    cps.reverse();
    cps
}

#[test]
fn algebraic_and_search_properties_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut pass = true;
    let mut details = Vec::new();

    // The window reparameterization round-trips the centered squares.
    let mut worst_roundtrip = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(30..200);
        let mu = rng.random_range(-2.0..2.0);
        let sd = rng.random_range(0.5..3.0);
        let values: Vec<f64> = (0..n)
            .map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let series = TimeSeries::new(values, mu).expect("finite draws");
        let h = rng.random_range(2..=n / 2);
        let tau = rng.random_range(h..=n - h);
        let window = Window::new(tau, h, n).expect("fits by construction");
        let frame = decompose_w(&series, &window).expect("window has mass");
        let rebuilt = reconstruct_squares(&frame);
        let mean_sq: f64 =
            window.range().map(|t| series.centered_sq(t)).sum::<f64>() / (2 * h) as f64;
        for (t, sq) in window.range().zip(&rebuilt) {
            let original = series.centered_sq(t);
            worst_roundtrip =
                worst_roundtrip.max((sq - original).abs() / original.max(mean_sq));
        }
    }
    pass &= worst_roundtrip <= 1e-10;
    details.push(format!("roundtrip {worst_roundtrip:.2e}"));

    // Perturbation conserves the window total and never touches the rest.
    // The statistic forms in phi agree with direct re-evaluation.
    let mut worst_conservation = 0.0f64;
    let mut outside_touched = false;
    let mut worst_cusum = 0.0f64;
    let mut worst_lr = 0.0f64;
    for trial in 0..200 {
        let series = gaussian(6000 + trial, &[(50, 1.0), (50, 2.0)]);
        let n = series.len();
        let h = rng.random_range(5..=20);
        let tau = rng.random_range(h..=n - h);
        let window = Window::new(tau, h, n).expect("fits by construction");
        let Ok(path) = PhiPath::new(series.clone(), window) else {
            continue;
        };
        let phi = rng.random_range(1e-6..1.0 - 1e-6);
        let perturbed = perturb_series(&path, phi);
        let total = |s: &TimeSeries| window.range().map(|t| s.centered_sq(t)).sum::<f64>();
        let (before, after) = (total(&series), total(&perturbed));
        worst_conservation = worst_conservation.max((before - after).abs() / before);
        outside_touched |= (0..n)
            .filter(|t| !window.range().contains(t))
            .any(|t| series.values()[t] != perturbed.values()[t]);

        // Random segment and split, constrained only to be well-formed.
        let s = rng.random_range(0..n - 4);
        let e = rng.random_range(s + 4..=n);
        let k = rng.random_range(s + 2..e - 1);
        let squares: Vec<f64> = (0..n).map(|t| perturbed.centered_sq(t)).collect();
        let direct = cusum_stat(&squares, s, e, k);
        let affine = cusum_stat_phi(&path, s, e, k, phi);
        worst_cusum = worst_cusum.max((direct - affine).abs() / direct.abs().max(1.0));
        if let (Ok(direct), Ok(affine)) = (
            lr_stat(&perturbed, s, e, k),
            lr_stat_phi(&lr_phi_coeffs(&path, s, e, k), phi),
        ) {
            worst_lr = worst_lr.max((direct - affine).abs() / direct.abs().max(1.0));
        }
    }
    pass &= worst_conservation <= 1e-10 && !outside_touched;
    pass &= worst_cusum <= 1e-9 && worst_lr <= 1e-9;
    details.push(format!(
        "conservation {worst_conservation:.2e}, statistics in phi {worst_cusum:.2e}/{worst_lr:.2e}"
    ));

    // The pruned partition search returns the exhaustive optimum.
    let mut partitions_agree = true;
    for len in [10usize, 16, 24, 33, 40] {
        for penalty in [4.0f64, 12.0, 35.0] {
            let series = gaussian(
                7000 + len as u64,
                &[(len / 2, 1.0), (len - len / 2, 2.5)],
            );
            let found = pelt(&series, penalty).expect("penalized search runs");
            let oracle = exhaustive_partition(&series.squared_prefix(), penalty);
            partitions_agree &= found.changepoints == oracle;
        }
    }
    pass &= partitions_agree;
    details.push(format!("pruned search exact: {partitions_agree}"));

    // The two-point posterior mean equals a dense kernel solve.
    let mut worst_gp = 0.0f64;
    for trial in 0..40 {
        let m = rng.random_range(3..12);
        let scale = if trial % 2 == 0 { 0.7 } else { 1.6 };
        let mut xs: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let surrogate =
            GpSurrogate::fit(xs.iter().cloned().zip(ys.iter().cloned()), scale)
                .expect("points are distinct");
        let rate = 1.0 / (2.0 * scale * scale);
        let m = xs.len();
        let kernel = nalgebra::DMatrix::from_fn(m, m, |i, j| {
            (-rate * (xs[i] - xs[j]).abs()).exp()
        });
        let alpha = kernel
            .lu()
            .solve(&nalgebra::DVector::from_vec(ys.clone()))
            .expect("kernel matrix is positive definite");
        for q in 0..60 {
            let x = -0.2 + 1.4 * q as f64 / 59.0;
            let dense: f64 = (0..m)
                .map(|i| (-rate * (x - xs[i]).abs()).exp() * alpha[i])
                .sum();
            worst_gp = worst_gp.max((surrogate.mean(x) - dense).abs());
        }
    }
    pass &= worst_gp <= 1e-8;
    details.push(format!("posterior mean vs dense solve {worst_gp:.2e}"));

    verdict("algebraic and search properties", pass, details.join("; "));
}
