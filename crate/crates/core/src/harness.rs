//! Scenario-driven simulation studies.
//!
//! A scenario bundles a data-generating design (length, changepoints,
//! segment variances), a detector, and an inference configuration, all
//! reproducible from one master seed: replicate `r` draws from stream `r`
//! of that seed, so any replicate can be regenerated in isolation. The
//! runners aggregate replicates into calibration (QQ) and localization
//! (hit-rate) summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{
    binary_segmentation, pelt, wild_binary_segmentation, Algorithm, DetectionResult, StatKind,
    StopRule,
};
use crate::error::{Error, Result};
use crate::exact::exact_p_value;
use crate::mc::{gp_direct_p, gp_is_p, naive_p_hat, SamplerConfig};
use crate::perturb::PhiPath;
use crate::power::{power_p_value, PowerEngine};
use crate::pvalue::{unconditional_two_sided_p, Conditioning};
use crate::series::{TimeSeries, Window, WindowSpec};
use crate::stats::{ks_pvalue, ks_statistic_uniform};

/// Keeps pilot calibration draws off the replicate streams.
const PILOT_SALT: u64 = 0x51AB_1E5C_A11B_07E5;

/// Where the true changepoints of a replicate come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangepointPlan {
    /// The same locations in every replicate; empty for a no-change design.
    Fixed(Vec<usize>),
    /// This many locations drawn per replicate, uniform over the admissible
    /// range with pairwise gaps and boundary gaps of at least the window
    /// half-width.
    Random(usize),
}

impl ChangepointPlan {
    fn count(&self) -> usize {
        match self {
            ChangepointPlan::Fixed(v) => v.len(),
            ChangepointPlan::Random(k) => *k,
        }
    }
}

/// How the detector's stop parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopPlan {
    Threshold(f64),
    Count(usize),
    Penalty(f64),
    /// Threshold calibrated so a no-change pilot run accepts the root split
    /// about half the time: the pilot median of the root's best score.
    Pilot,
}

/// Which p-value routine the replicates use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceEngine {
    Exact,
    Gp,
    GpIs,
    Naive,
}

/// A complete simulation design, parseable from a flat key-value file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub length: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mu: f64,
    /// One variance per segment, `changepoint count + 1` entries.
    pub variances: Vec<f64>,
    pub changepoints: ChangepointPlan,
    pub window: WindowSpec,
    pub stat: StatKind,
    pub algorithm: Algorithm,
    pub stop: StopPlan,
    pub engine: InferenceEngine,
    pub conditioning: Conditioning,
    pub sampler: SamplerConfig,
    /// Shape samples for the averaged p-value; 1 disables averaging.
    pub n_w: usize,
    pub pilot_replicates: usize,
    pub wbs_intervals: usize,
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(vec![]);
    }
    value
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| Error::invalid_config(format!("{key}: cannot parse '{}'", tok.trim())))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::invalid_config(format!("{key}: cannot parse '{value}'")))
}

impl Scenario {
    /// Parses the flat `key = value` format: one pair per line, `#` starts
    /// a comment, keys are kebab-case, lists are comma-separated.
    ///
    /// # Errors
    /// Fails on unknown keys, unparseable values, missing required keys
    /// (`name`, `length`, `h`, `stop`), or inconsistent fields, naming the
    /// offending field.
    pub fn parse(text: &str) -> Result<Scenario> {
        let mut name = None;
        let mut length = None;
        let mut replicates = 500usize;
        let mut seed = 0u64;
        let mut mu = 0.0f64;
        let mut variances = vec![1.0f64];
        let mut changepoints = ChangepointPlan::Fixed(vec![]);
        let mut window = None;
        let mut stat = StatKind::Cusum;
        let mut algorithm = Algorithm::Binseg;
        let mut stop = None;
        let mut engine = InferenceEngine::Exact;
        let mut conditioning = Conditioning::TauInModel;
        let mut sampler = SamplerConfig::default();
        let mut n_w = 1usize;
        let mut pilot_replicates = 200usize;
        let mut wbs_intervals = 100usize;

        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::invalid_config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    line_no + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            match key {
                "name" => name = Some(value.to_string()),
                "length" => length = Some(parse_scalar(value, key)?),
                "replicates" => replicates = parse_scalar(value, key)?,
                "seed" => seed = parse_scalar(value, key)?,
                "mu" => mu = parse_scalar(value, key)?,
                "variances" => variances = parse_list(value, key)?,
                "changepoints" => {
                    changepoints = match value.strip_prefix("random:") {
                        Some(k) => ChangepointPlan::Random(parse_scalar(k.trim(), key)?),
                        None => ChangepointPlan::Fixed(parse_list(value, key)?),
                    }
                }
                "h" => {
                    window = Some(if value == "full" {
                        WindowSpec::Full
                    } else {
                        WindowSpec::Fixed(parse_scalar(value, key)?)
                    })
                }
                "stat" => {
                    stat = match value {
                        "cusum" => StatKind::Cusum,
                        "lr" => StatKind::Lr,
                        _ => return Err(Error::invalid_config(format!("stat: unknown '{value}'"))),
                    }
                }
                "algorithm" => {
                    algorithm = match value {
                        "binseg" => Algorithm::Binseg,
                        "wbs" => Algorithm::Wbs,
                        "pelt" => Algorithm::Pelt,
                        _ => {
                            return Err(Error::invalid_config(format!(
                                "algorithm: unknown '{value}'"
                            )))
                        }
                    }
                }
                "stop" => {
                    stop = Some(if value == "pilot" {
                        StopPlan::Pilot
                    } else if let Some(v) = value.strip_prefix("threshold:") {
                        StopPlan::Threshold(parse_scalar(v.trim(), key)?)
                    } else if let Some(v) = value.strip_prefix("count:") {
                        StopPlan::Count(parse_scalar(v.trim(), key)?)
                    } else if let Some(v) = value.strip_prefix("penalty:") {
                        StopPlan::Penalty(parse_scalar(v.trim(), key)?)
                    } else {
                        return Err(Error::invalid_config(format!(
                            "stop: expected pilot, threshold:<x>, count:<k>, or penalty:<x>, got '{value}'"
                        )));
                    })
                }
                "engine" => {
                    engine = match value {
                        "exact" => InferenceEngine::Exact,
                        "gp" => InferenceEngine::Gp,
                        "gp-is" => InferenceEngine::GpIs,
                        "naive" => InferenceEngine::Naive,
                        _ => {
                            return Err(Error::invalid_config(format!("engine: unknown '{value}'")))
                        }
                    }
                }
                "conditioning" => {
                    conditioning = match value {
                        "tau-in-model" => Conditioning::TauInModel,
                        "full-model" => Conditioning::FullModel,
                        _ => {
                            return Err(Error::invalid_config(format!(
                                "conditioning: unknown '{value}'"
                            )))
                        }
                    }
                }
                "n-design" => sampler.n_design = parse_scalar(value, key)?,
                "n-is" => sampler.n_is = parse_scalar(value, key)?,
                "length-scale" => sampler.length_scale = parse_scalar(value, key)?,
                "stratified" => sampler.stratified = parse_scalar(value, key)?,
                "early-stop" => sampler.early_stop = parse_scalar(value, key)?,
                "pool-design" => sampler.pool_design = parse_scalar(value, key)?,
                "proposal" => {
                    let pair: Vec<f64> = parse_list(value, key)?;
                    if pair.len() != 2 {
                        return Err(Error::invalid_config("proposal: expected two shapes"));
                    }
                    sampler.proposal = Some((pair[0], pair[1]));
                }
                "n-w" => n_w = parse_scalar(value, key)?,
                "pilot-replicates" => pilot_replicates = parse_scalar(value, key)?,
                "wbs-intervals" => wbs_intervals = parse_scalar(value, key)?,
                _ => return Err(Error::invalid_config(format!("unknown key '{key}'"))),
            }
        }

        let scenario = Scenario {
            name: name.ok_or_else(|| Error::invalid_config("missing key 'name'"))?,
            length: length.ok_or_else(|| Error::invalid_config("missing key 'length'"))?,
            replicates,
            seed,
            mu,
            variances,
            changepoints,
            window: window.ok_or_else(|| Error::invalid_config("missing key 'h'"))?,
            stat,
            algorithm,
            stop: stop.ok_or_else(|| Error::invalid_config("missing key 'stop'"))?,
            engine,
            conditioning,
            sampler,
            n_w,
            pilot_replicates,
            wbs_intervals,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<()> {
        if self.length < 4 {
            return Err(Error::invalid_config("length: must be at least 4"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid_config("replicates: must be positive"));
        }
        if self.variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid_config("variances: must be positive"));
        }
        if self.variances.len() != self.changepoints.count() + 1 {
            return Err(Error::invalid_config(format!(
                "variances: need one per segment, got {} for {} changepoints",
                self.variances.len(),
                self.changepoints.count()
            )));
        }
        if let ChangepointPlan::Fixed(cps) = &self.changepoints {
            if cps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid_config("changepoints: must be increasing"));
            }
            if cps.iter().any(|&c| c == 0 || c >= self.length) {
                return Err(Error::invalid_config(
                    "changepoints: must lie strictly inside the series",
                ));
            }
        }
        if let ChangepointPlan::Random(k) = self.changepoints {
            let WindowSpec::Fixed(h) = self.window else {
                return Err(Error::invalid_config(
                    "changepoints: the random plan needs a fixed window half-width",
                ));
            };
            if k == 0 {
                return Err(Error::invalid_config("changepoints: random count is zero"));
            }
            if (k + 1) * h > self.length {
                return Err(Error::invalid_config(
                    "changepoints: series too short for the gap rule",
                ));
            }
        }
        if matches!(self.stop, StopPlan::Penalty(_)) != (self.algorithm == Algorithm::Pelt) {
            return Err(Error::invalid_config(
                "stop: penalty and the pelt algorithm imply each other",
            ));
        }
        if self.algorithm == Algorithm::Pelt && self.stat == StatKind::Cusum {
            return Err(Error::invalid_config(
                "algorithm: pelt always uses the likelihood cost; set stat = lr",
            ));
        }
        if self.engine == InferenceEngine::Exact
            && (self.stat != StatKind::Cusum || self.algorithm == Algorithm::Pelt)
        {
            return Err(Error::invalid_config(
                "engine: exact requires a cusum detector; use engine = gp",
            ));
        }
        if self.n_w == 0 {
            return Err(Error::invalid_config("n-w: must be at least 1"));
        }
        if self.n_w > 1 && matches!(self.engine, InferenceEngine::GpIs | InferenceEngine::Naive) {
            return Err(Error::invalid_config(
                "n-w: shape averaging supports the exact and gp engines only",
            ));
        }
        if matches!(self.stop, StopPlan::Pilot) && self.pilot_replicates == 0 {
            return Err(Error::invalid_config("pilot-replicates: must be positive"));
        }
        Ok(())
    }
}

/// Random changepoints: uniform over `[h, T - h]` subject to pairwise gaps
/// of at least `h`, by rejection.
fn draw_changepoints(rng: &mut ChaCha8Rng, count: usize, length: usize, h: usize) -> Vec<usize> {
    debug_assert!((count + 1) * h <= length);
    loop {
        let mut cps: Vec<usize> = (0..count)
            .map(|_| rng.random_range(h..=length - h))
            .collect();
        cps.sort_unstable();
        if cps.windows(2).all(|w| w[1] - w[0] >= h) {
            return cps;
        }
    }
}

/// One replicate's data and its true changepoints, reproducible from the
/// scenario seed and the replicate index alone.
pub fn generate(scenario: &Scenario, replicate: usize) -> (TimeSeries, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(replicate as u64);
    let cps = match &scenario.changepoints {
        ChangepointPlan::Fixed(v) => v.clone(),
        ChangepointPlan::Random(k) => {
            let WindowSpec::Fixed(h) = scenario.window else {
                unreachable!("validated at parse time");
            };
            draw_changepoints(&mut rng, *k, scenario.length, h)
        }
    };
    let mut values = Vec::with_capacity(scenario.length);
    let mut segment = 0usize;
    for t in 0..scenario.length {
        if segment < cps.len() && t >= cps[segment] {
            segment += 1;
        }
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        values.push(scenario.mu + z * scenario.variances[segment].sqrt());
    }
    (
        TimeSeries::new(values, scenario.mu).expect("generated series is valid"),
        cps,
    )
}

/// Best root-split score of a detector on one series, used for threshold
/// calibration.
fn root_score(
    series: &TimeSeries,
    stat: StatKind,
    algorithm: Algorithm,
    wbs_intervals: usize,
    wbs_seed: u64,
) -> Result<Option<f64>> {
    // An unreachable threshold records the root evaluation and stops.
    let probe = StopRule::Threshold(f64::INFINITY);
    let result = match algorithm {
        Algorithm::Binseg => binary_segmentation(series, stat, probe)?,
        Algorithm::Wbs => {
            wild_binary_segmentation(series, stat, probe, wbs_intervals, wbs_seed)?
        }
        Algorithm::Pelt => {
            return Err(Error::invalid_config(
                "penalized searches have no threshold to calibrate",
            ))
        }
    };
    Ok(result.steps.first().map(|s| s.value.abs()))
}

/// Threshold giving a no-change false-detection rate of about one half:
/// the median best root score over pilot replicates generated with the
/// scenario's first segment variance.
pub fn calibrate_lambda(scenario: &Scenario) -> Result<f64> {
    let sd = scenario.variances[0].sqrt();
    let scores: Vec<f64> = (0..scenario.pilot_replicates)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ PILOT_SALT);
            rng.set_stream(i as u64);
            let values: Vec<f64> = (0..scenario.length)
                .map(|_| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    scenario.mu + z * sd
                })
                .collect();
            let series = TimeSeries::new(values, scenario.mu).expect("pilot series is valid");
            let wbs_seed = rng.random();
            root_score(
                &series,
                scenario.stat,
                scenario.algorithm,
                scenario.wbs_intervals,
                wbs_seed,
            )?
            .ok_or_else(|| Error::invalid_input("pilot series yielded no root split"))
        })
        .collect::<Result<_>>()?;
    let mut sorted = scores;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores must not be NaN"));
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

fn resolve_stop(scenario: &Scenario) -> Result<(StopRule, Option<f64>)> {
    Ok(match scenario.stop {
        StopPlan::Threshold(l) => (StopRule::Threshold(l), Some(l)),
        StopPlan::Count(k) => (StopRule::Count(k), None),
        StopPlan::Penalty(b) => (StopRule::Penalty(b), None),
        StopPlan::Pilot => {
            let l = calibrate_lambda(scenario)?;
            (StopRule::Threshold(l), Some(l))
        }
    })
}

fn detect(
    scenario: &Scenario,
    series: &TimeSeries,
    stop: StopRule,
    stat: StatKind,
    wbs_seed: u64,
) -> Result<DetectionResult> {
    match scenario.algorithm {
        Algorithm::Binseg => binary_segmentation(series, stat, stop),
        Algorithm::Wbs => {
            wild_binary_segmentation(series, stat, stop, scenario.wbs_intervals, wbs_seed)
        }
        Algorithm::Pelt => {
            let StopRule::Penalty(beta) = stop else {
                unreachable!("validated at parse time");
            };
            pelt(series, beta)
        }
    }
}

/// Mixes the replicate and changepoint indices into the sampler seed so
/// every tested changepoint gets its own random streams.
fn sampler_seed(master: u64, replicate: usize, index: usize) -> u64 {
    master
        ^ (replicate as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

fn infer(
    scenario: &Scenario,
    path: &PhiPath,
    result: &DetectionResult,
    seed: u64,
) -> Result<f64> {
    let config = SamplerConfig {
        seed,
        ..scenario.sampler
    };
    let report = match (scenario.engine, scenario.n_w) {
        (InferenceEngine::Exact, 1) => exact_p_value(path, result, scenario.conditioning)?,
        (InferenceEngine::Exact, _) => power_p_value(
            path,
            result,
            scenario.conditioning,
            PowerEngine::Exact,
            scenario.n_w,
            &config,
        )?,
        (InferenceEngine::Gp, 1) => gp_direct_p(path, result, scenario.conditioning, &config)?,
        (InferenceEngine::Gp, _) => power_p_value(
            path,
            result,
            scenario.conditioning,
            PowerEngine::Gp,
            scenario.n_w,
            &config,
        )?,
        (InferenceEngine::GpIs, _) => gp_is_p(path, result, scenario.conditioning, &config)?,
        (InferenceEngine::Naive, _) => naive_p_hat(path, result, scenario.conditioning, &config)?,
    };
    Ok(report.p_value)
}

/// One point of a QQ summary: a sorted p-value against its uniform plotting
/// position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub p_value: f64,
    pub expected: f64,
}

/// Calibration summary over a scenario's replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqReport {
    pub scenario: String,
    /// Calibrated threshold when the stop plan asked for one.
    pub lambda: Option<f64>,
    pub replicates: usize,
    /// Post-selection p-values, sorted, with uniform plotting positions.
    pub rows: Vec<QqRow>,
    /// Uncorrected two-sided p-values for the same changepoints.
    pub naive_rows: Vec<QqRow>,
    pub ks_stat: f64,
    pub ks_p_value: f64,
    pub naive_ks_stat: f64,
    pub naive_ks_p_value: f64,
    /// Changepoints across all replicates, before any skipping.
    pub detected: usize,
    /// P-values actually produced.
    pub tested: usize,
    pub skipped_no_detection: usize,
    pub skipped_window: usize,
    pub failed_inference: usize,
}

#[derive(Default)]
struct ReplicateOutcome {
    ps: Vec<(f64, f64)>,
    detected: usize,
    no_detection: bool,
    skipped_window: usize,
    failed_inference: usize,
}

fn run_replicate(scenario: &Scenario, replicate: usize, stop: StopRule) -> Result<ReplicateOutcome> {
    let (series, _) = generate(scenario, replicate);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ PILOT_SALT.rotate_left(17));
    rng.set_stream(replicate as u64);
    let wbs_seed: u64 = rng.random();
    let result = detect(scenario, &series, stop, scenario.stat, wbs_seed)?;
    let mut outcome = ReplicateOutcome {
        detected: result.changepoints.len(),
        no_detection: result.changepoints.is_empty(),
        ..Default::default()
    };
    for (index, &tau) in result.changepoints.iter().enumerate() {
        let Some(h) = scenario.window.resolve(tau, scenario.length) else {
            outcome.skipped_window += 1;
            continue;
        };
        let window = Window::new(tau, h, scenario.length).expect("resolved window fits");
        let Ok(path) = PhiPath::new(series.clone(), window) else {
            outcome.failed_inference += 1;
            continue;
        };
        let naive = unconditional_two_sided_p(path.phi_obs(), h);
        match infer(
            scenario,
            &path,
            &result,
            sampler_seed(scenario.seed, replicate, index),
        ) {
            Ok(p) => outcome.ps.push((p, naive)),
            Err(_) => outcome.failed_inference += 1,
        }
    }
    Ok(outcome)
}

fn qq_rows(mut ps: Vec<f64>) -> Vec<QqRow> {
    ps.sort_by(|a, b| a.partial_cmp(b).expect("p-values must not be NaN"));
    let n = ps.len();
    ps.into_iter()
        .enumerate()
        .map(|(i, p)| QqRow {
            p_value: p,
            expected: (i + 1) as f64 / (n + 1) as f64,
        })
        .collect()
}

/// Runs every replicate, tests every detected changepoint whose window
/// fits, and summarizes calibration: sorted post-selection p-values next
/// to the uncorrected ones, with KS statistics against uniformity.
/// Inference failures are excluded and counted.
///
/// # Errors
/// Fails when calibration or detection itself fails, or when no replicate
/// yields a testable changepoint.
pub fn run_qq(scenario: &Scenario) -> Result<QqReport> {
    let (stop, lambda) = resolve_stop(scenario)?;
    let outcomes: Vec<ReplicateOutcome> = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_replicate(scenario, r, stop))
        .collect::<Result<_>>()?;
    let mut ps = Vec::new();
    let mut naive_ps = Vec::new();
    let mut report = QqReport {
        scenario: scenario.name.clone(),
        lambda,
        replicates: scenario.replicates,
        rows: vec![],
        naive_rows: vec![],
        ks_stat: f64::NAN,
        ks_p_value: f64::NAN,
        naive_ks_stat: f64::NAN,
        naive_ks_p_value: f64::NAN,
        detected: 0,
        tested: 0,
        skipped_no_detection: 0,
        skipped_window: 0,
        failed_inference: 0,
    };
    for outcome in outcomes {
        report.detected += outcome.detected;
        report.skipped_no_detection += outcome.no_detection as usize;
        report.skipped_window += outcome.skipped_window;
        report.failed_inference += outcome.failed_inference;
        for (p, naive) in outcome.ps {
            ps.push(p);
            naive_ps.push(naive);
        }
    }
    report.tested = ps.len();
    if ps.is_empty() {
        return Err(Error::invalid_input(
            "no replicate yielded a testable changepoint",
        ));
    }
    report.ks_stat = ks_statistic_uniform(&ps);
    report.ks_p_value = ks_pvalue(ps.len(), report.ks_stat);
    report.naive_ks_stat = ks_statistic_uniform(&naive_ps);
    report.naive_ks_p_value = ks_pvalue(naive_ps.len(), report.naive_ks_stat);
    report.rows = qq_rows(ps);
    report.naive_rows = qq_rows(naive_ps);
    Ok(report)
}

/// Hit rates of one statistic against the true changepoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub stat: StatKind,
    /// Fraction of replicates with some estimate within the radius of true
    /// changepoint `j`.
    pub hit_rates: Vec<f64>,
}

/// Localization summary over a scenario's replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub scenario: String,
    pub radius: usize,
    pub replicates: usize,
    pub rows: Vec<AccuracyRow>,
}

/// Hit proportions per true changepoint, for both statistics under the
/// scenario's search settings: the fraction of replicates in which some
/// estimated changepoint lands within `radius` of each truth.
///
/// # Errors
/// Fails when the scenario has no changepoints or detection fails.
pub fn run_detection_accuracy(scenario: &Scenario, radius: usize) -> Result<AccuracyReport> {
    let truths = scenario.changepoints.count();
    if truths == 0 {
        return Err(Error::invalid_config(
            "localization needs a scenario with changepoints",
        ));
    }
    let mut rows = Vec::new();
    for stat in [StatKind::Cusum, StatKind::Lr] {
        // Pilot thresholds are scale-bound to their statistic.
        let (stop, _) = resolve_stop(&Scenario {
            stat,
            ..scenario.clone()
        })?;
        let hits: Vec<Vec<bool>> = (0..scenario.replicates)
            .into_par_iter()
            .map(|r| -> Result<Vec<bool>> {
                let (series, cps) = generate(scenario, r);
                let mut rng =
                    ChaCha8Rng::seed_from_u64(scenario.seed ^ PILOT_SALT.rotate_left(17));
                rng.set_stream(r as u64);
                let wbs_seed: u64 = rng.random();
                let result = detect(scenario, &series, stop, stat, wbs_seed)?;
                Ok(cps
                    .iter()
                    .map(|&truth| {
                        result
                            .changepoints
                            .iter()
                            .any(|&est| est.abs_diff(truth) <= radius)
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        let mut rates = vec![0.0; truths];
        for rep in &hits {
            for (j, &hit) in rep.iter().enumerate() {
                rates[j] += hit as usize as f64;
            }
        }
        for rate in &mut rates {
            *rate /= scenario.replicates as f64;
        }
        rows.push(AccuracyRow {
            stat,
            hit_rates: rates,
        });
    }
    Ok(AccuracyReport {
        scenario: scenario.name.clone(),
        radius,
        replicates: scenario.replicates,
        rows,
    })
}

/// Step-down multiple-testing decisions at the given level: the smallest
/// p-value is compared against `alpha / m`, the next against
/// `alpha / (m - 1)`, and so on, stopping at the first failure.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        p_values[i]
            .partial_cmp(&p_values[j])
            .expect("p-values must not be NaN")
    });
    let mut decisions = vec![false; m];
    for (rank, &idx) in order.iter().enumerate() {
        if p_values[idx] <= alpha / (m - rank) as f64 {
            decisions[idx] = true;
        } else {
            break;
        }
    }
    decisions
}
