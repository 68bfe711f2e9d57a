//! Analytic selection sets for CUSUM detectors.
//!
//! Every decision a CUSUM detector makes is a comparison of statistics that
//! are affine in the window share, so "the detector follows this exact
//! trace" is a finite system of affine inequalities in `phi`, and the set
//! of shares on which the trace is followed is an interval. The selection
//! set (all shares where the conditioning event holds) is assembled by an
//! axis walk: replay the detector at the midpoint of an unresolved region,
//! turn the realized trace into inequalities, solve them to the interval
//! around that midpoint, classify it by whether the event holds, and
//! recurse on what remains.
//!
//! The LR statistic is not affine in the share (its trace regions are not
//! intervals in general), so LR and PELT detectors go through the Monte
//! Carlo engine instead.

use serde::{Deserialize, Serialize};

use crate::detect::engine::EngineRun;
use crate::detect::{Algorithm, DetectionResult, SegmentStat, StatKind, StopRule};
use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::perturb::{cusum_phi_coeff, PhiPath};
use crate::pvalue::{two_sided_bounds, truncated_beta_tail_prob, Conditioning, Method, PValueReport};
use crate::replay::{PhiDetector, ReplaySpec};

/// Regions narrower than this are classified by a midpoint replay instead
/// of being subdivided further.
const MIN_WIDTH: f64 = 1e-12;
/// Hard cap on replays per selection-set construction.
const MAX_REPLAYS: usize = 200_000;

/// An affine inequality in the share: `intercept + slope * phi >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiConstraint {
    pub intercept: f64,
    pub slope: f64,
}

impl PhiConstraint {
    /// Whether the share satisfies the inequality.
    pub fn holds_at(&self, phi: f64) -> bool {
        self.intercept + self.slope * phi >= 0.0
    }
}

/// Intersects affine inequalities with `[0, 1]`.
///
/// Returns the interval of shares satisfying every constraint, or `None`
/// when it is empty.
pub fn solve_interval(constraints: &[PhiConstraint]) -> Option<(f64, f64)> {
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for c in constraints {
        if c.slope == 0.0 {
            if c.intercept < 0.0 {
                return None;
            }
        } else {
            let bound = -c.intercept / c.slope;
            if c.slope > 0.0 {
                lo = lo.max(bound);
            } else {
                hi = hi.min(bound);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// One candidate statistic: the range it was scanned in, the split, and
/// the affine form of its value.
struct Candidate {
    range: (usize, usize),
    k: usize,
    intercept: f64,
    slope: f64,
}

/// All split candidates the detector compares within segment `[s, e)`:
/// for plain binary segmentation the segment's own splits, for WBS also
/// every drawn interval contained in the segment.
fn segment_candidates(path: &PhiPath, spec: &ReplaySpec, s: usize, e: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut push_range = |a: usize, b: usize| {
        for k in a + 1..b {
            let (intercept, slope) = cusum_phi_coeff(path, a, b, k);
            out.push(Candidate {
                range: (a, b),
                k,
                intercept,
                slope,
            });
        }
    };
    if spec.algorithm == Algorithm::Wbs {
        for &(a, b) in spec.intervals.iter().filter(|&&(a, b)| s <= a && b <= e) {
            push_range(a, b);
        }
    }
    push_range(s, e);
    out
}

/// Constraints saying the winner dominates a rival in absolute value:
/// `sign * G(winner) >= +G(rival)` and `>= -G(rival)`.
fn dominance_pair(
    out: &mut Vec<PhiConstraint>,
    sign: f64,
    winner: (f64, f64),
    rival: (f64, f64),
) {
    let (wi, ws) = winner;
    let (ri, rs) = rival;
    out.push(PhiConstraint {
        intercept: sign * wi - ri,
        slope: sign * ws - rs,
    });
    out.push(PhiConstraint {
        intercept: sign * wi + ri,
        slope: sign * ws + rs,
    });
}

/// The winner entry of a step among its candidates.
fn winner_coeffs<'c>(
    candidates: &'c [Candidate],
    step: &SegmentStat,
) -> Result<&'c Candidate> {
    let range = step.source.unwrap_or((step.start, step.end));
    let k = step.split.expect("recorded steps carry a split");
    candidates
        .iter()
        .find(|c| c.range == range && c.k == k)
        .ok_or_else(|| {
            Error::invalid_config(format!(
                "step split {k} in range {range:?} is not among the trace candidates"
            ))
        })
}

/// Inequalities pinning one threshold-mode step of a plain binary
/// segmentation trace: for an accepted step, the winning split clears the
/// threshold and dominates every other candidate in absolute value; for a
/// rejected step, every candidate stays inside the threshold band.
///
/// The step's `value` supplies the sign of the winning statistic, so it
/// must come from a trace evaluated on this same path.
pub fn step_inequalities(
    path: &PhiPath,
    step: &SegmentStat,
    threshold: Option<f64>,
) -> Vec<PhiConstraint> {
    let spec = ReplaySpec {
        algorithm: Algorithm::Binseg,
        stat: StatKind::Cusum,
        stop: StopRule::Threshold(threshold.unwrap_or(f64::INFINITY)),
        intervals: vec![],
    };
    let candidates = segment_candidates(path, &spec, step.start, step.end);
    let mut out = Vec::new();
    if step.accepted {
        let winner = winner_coeffs(&candidates, step).expect("step split is a candidate");
        let sign = if step.value >= 0.0 { 1.0 } else { -1.0 };
        if let Some(lambda) = threshold {
            out.push(PhiConstraint {
                intercept: sign * winner.intercept - lambda,
                slope: sign * winner.slope,
            });
        }
        let w = (winner.intercept, winner.slope);
        for c in &candidates {
            if c.range == winner.range && c.k == winner.k {
                continue;
            }
            dominance_pair(&mut out, sign, w, (c.intercept, c.slope));
        }
    } else if let Some(lambda) = threshold {
        for c in &candidates {
            out.push(PhiConstraint {
                intercept: lambda - c.intercept,
                slope: -c.slope,
            });
            out.push(PhiConstraint {
                intercept: lambda + c.intercept,
                slope: c.slope,
            });
        }
    }
    out
}

/// Inequalities for a whole trace, reconstructing the engine's decisions.
fn trace_constraints(
    path: &PhiPath,
    spec: &ReplaySpec,
    run: &EngineRun,
) -> Result<Vec<PhiConstraint>> {
    let mut out = Vec::new();
    match spec.stop {
        StopRule::Threshold(lambda) => {
            for step in &run.steps {
                let candidates = segment_candidates(path, spec, step.start, step.end);
                if step.accepted {
                    let winner = winner_coeffs(&candidates, step)?;
                    let sign = if step.value >= 0.0 { 1.0 } else { -1.0 };
                    out.push(PhiConstraint {
                        intercept: sign * winner.intercept - lambda,
                        slope: sign * winner.slope,
                    });
                    let w = (winner.intercept, winner.slope);
                    for c in &candidates {
                        if c.range == winner.range && c.k == winner.k {
                            continue;
                        }
                        dominance_pair(&mut out, sign, w, (c.intercept, c.slope));
                    }
                } else {
                    for c in &candidates {
                        out.push(PhiConstraint {
                            intercept: lambda - c.intercept,
                            slope: -c.slope,
                        });
                        out.push(PhiConstraint {
                            intercept: lambda + c.intercept,
                            slope: c.slope,
                        });
                    }
                }
            }
        }
        StopRule::Count(_) => {
            // Rebuild the active segment set round by round: the accepted
            // split must dominate every candidate of every active segment.
            let mut active: Vec<(usize, usize)> = vec![(0, path.len())];
            for step in &run.steps {
                let seg = (step.start, step.end);
                let own = segment_candidates(path, spec, seg.0, seg.1);
                let winner = winner_coeffs(&own, step)?;
                let sign = if step.value >= 0.0 { 1.0 } else { -1.0 };
                let w = (winner.intercept, winner.slope);
                let win_range = winner.range;
                let win_k = winner.k;
                for &(s, e) in &active {
                    let store;
                    let rivals: &[Candidate] = if (s, e) == seg {
                        &own
                    } else {
                        store = segment_candidates(path, spec, s, e);
                        &store
                    };
                    for c in rivals {
                        if (s, e) == seg && c.range == win_range && c.k == win_k {
                            continue;
                        }
                        dominance_pair(&mut out, sign, w, (c.intercept, c.slope));
                    }
                }
                let k = step.split.expect("accepted steps carry a split");
                active.retain(|&x| x != seg);
                active.push((seg.0, k));
                active.push((k, seg.1));
            }
        }
        StopRule::Penalty(_) => {
            return Err(Error::invalid_config(
                "penalized searches have no affine trace decomposition",
            ));
        }
    }
    Ok(out)
}

fn event_holds(
    run: &EngineRun,
    conditioning: Conditioning,
    observed: &[usize],
    tau: usize,
) -> bool {
    match conditioning {
        Conditioning::TauInModel => run.changepoints.binary_search(&tau).is_ok(),
        Conditioning::FullModel => run.changepoints == observed,
    }
}

/// The selection set with diagnostics from its construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSet {
    pub set: IntervalUnion,
    /// Detector replays spent building the set.
    pub replays: usize,
    /// Regions that had to be classified by midpoint replay because they
    /// fell below the width floor, plus solver fallbacks.
    pub boundary_warnings: usize,
}

/// All shares at which the conditioning event holds for this detector,
/// exactly (up to endpoint classification at width `1e-12`).
///
/// # Errors
/// Fails for detectors without affine traces (LR or PELT) and when the
/// replay budget is exhausted.
pub fn selection_set(
    path: &PhiPath,
    result: &DetectionResult,
    conditioning: Conditioning,
) -> Result<SelectionSet> {
    if result.stat != StatKind::Cusum || result.algorithm == Algorithm::Pelt {
        return Err(Error::invalid_config(
            "exact selection sets require a CUSUM detector; use the Monte Carlo engine",
        ));
    }
    let spec = ReplaySpec::from_result(result)?;
    let detector = PhiDetector::new(path, spec)?;
    let tau = path.window().tau_hat();
    selection_set_with(&detector, &result.changepoints, conditioning, tau)
}

/// Axis walk over the unit interval with a caller-supplied replay detector.
pub(crate) fn selection_set_with(
    detector: &PhiDetector<'_>,
    observed: &[usize],
    conditioning: Conditioning,
    tau: usize,
) -> Result<SelectionSet> {
    let path = detector.path();
    let mut pending = vec![(0.0_f64, 1.0_f64)];
    let mut kept: Vec<(f64, f64)> = Vec::new();
    let mut warnings = 0usize;
    while let Some((lo, hi)) = pending.pop() {
        if hi <= lo {
            continue;
        }
        if detector.replay_count() > MAX_REPLAYS {
            return Err(Error::invalid_config(format!(
                "selection set did not resolve within {MAX_REPLAYS} replays"
            )));
        }
        let mid = 0.5 * (lo + hi);
        let run = detector.run(mid)?;
        let holds = event_holds(&run, conditioning, observed, tau);
        if hi - lo < MIN_WIDTH {
            warnings += 1;
            if holds {
                kept.push((lo, hi));
            }
            continue;
        }
        let constraints = trace_constraints(path, detector.spec(), &run)?;
        let solved = solve_interval(&constraints)
            .map(|(a, b)| (a.max(lo), b.min(hi)))
            .filter(|&(a, b)| a <= mid && mid <= b && a < b);
        match solved {
            Some((a, b)) => {
                if holds {
                    kept.push((a, b));
                }
                if a > lo {
                    pending.push((lo, a));
                }
                if b < hi {
                    pending.push((b, hi));
                }
            }
            None => {
                // The trace interval degenerated numerically; bisect.
                warnings += 1;
                pending.push((lo, mid));
                pending.push((mid, hi));
            }
        }
    }
    Ok(SelectionSet {
        set: IntervalUnion::new(kept),
        replays: detector.replay_count(),
        boundary_warnings: warnings,
    })
}

/// Post-selection p-value for the changepoint the path's window is built
/// around: the two-sided Beta tail, truncated to the selection set.
///
/// # Errors
/// Fails when the tested changepoint is not among the detected ones, for
/// non-CUSUM detectors, and when the selection set's Beta mass underflows.
pub fn exact_p_value(
    path: &PhiPath,
    result: &DetectionResult,
    conditioning: Conditioning,
) -> Result<PValueReport> {
    let tau = path.window().tau_hat();
    if result.changepoints.binary_search(&tau).is_err() {
        return Err(Error::invalid_config(format!(
            "changepoint {tau} is not among the detected ones {:?}",
            result.changepoints
        )));
    }
    let sel = selection_set(path, result, conditioning)?;
    let h = path.window().h();
    let phi_obs = path.phi_obs();
    let (lo, hi) = two_sided_bounds(phi_obs, h);
    let p = truncated_beta_tail_prob(&sel.set, lo, hi, h)?;
    let mut report = PValueReport {
        tau_hat: tau,
        p_value: p,
        phi_obs,
        phi_lower: lo,
        phi_upper: hi,
        method: Method::ExactCusum,
        conditioning,
        diagnostics: Default::default(),
    };
    let a = h as f64 / 2.0;
    report
        .diagnostics
        .insert("replays".into(), sel.replays as f64);
    report
        .diagnostics
        .insert("pieces".into(), sel.set.intervals().len() as f64);
    report
        .diagnostics
        .insert("set_measure".into(), sel.set.measure());
    report
        .diagnostics
        .insert("set_beta_mass".into(), sel.set.beta_mass(a, a));
    report
        .diagnostics
        .insert("boundary_warnings".into(), sel.boundary_warnings as f64);
    report.diagnostics.insert(
        "phi_obs_in_set".into(),
        if sel.set.contains(phi_obs) { 1.0 } else { 0.0 },
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{binary_segmentation, wild_binary_segmentation};
    use crate::perturb::perturb_series;
    use crate::series::{TimeSeries, Window};
    use crate::stats::{ks_pvalue, ks_statistic_uniform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(seed: u64, n: usize, cp: Option<(usize, f64)>) -> TimeSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n)
            .map(|i| {
                let sd = match cp {
                    Some((at, s2)) if i >= at => s2,
                    _ => 1.0,
                };
                let z: f64 = rng.sample(StandardNormal);
                z * sd
            })
            .collect();
        TimeSeries::new(values, 0.0).unwrap()
    }

    #[test]
    fn solver_intersects_halflines_exactly() {
        // phi <= 1/2, phi >= 1/4, and one vacuous constraint.
        let cs = [
            PhiConstraint { intercept: 1.0, slope: -2.0 },
            PhiConstraint { intercept: -0.25, slope: 1.0 },
            PhiConstraint { intercept: 3.0, slope: 1.0 },
        ];
        assert_eq!(solve_interval(&cs), Some((0.25, 0.5)));
        // infeasible constant
        assert_eq!(
            solve_interval(&[PhiConstraint { intercept: -1.0, slope: 0.0 }]),
            None
        );
        // bound outside the unit interval clips to empty
        assert_eq!(
            solve_interval(&[PhiConstraint { intercept: -2.0, slope: 1.0 }]),
            None
        );
        // no constraints: the whole unit interval
        assert_eq!(solve_interval(&[]), Some((0.0, 1.0)));
    }

    fn detect_tau(result: &DetectionResult, near: usize) -> usize {
        *result
            .changepoints
            .iter()
            .min_by_key(|c| c.abs_diff(near))
            .unwrap()
    }

    /// The definitive check: membership in the computed set must agree
    /// with rerunning the real detector on the materialized perturbed
    /// series, across a fine grid of shares.
    #[test]
    fn set_membership_agrees_with_detector_reruns() {
        let configs: Vec<(u64, StopRule, bool)> = vec![
            (101, StopRule::Count(1), false),
            (102, StopRule::Count(2), false),
            (103, StopRule::Threshold(2.8), false),
            (104, StopRule::Count(2), true),
            (105, StopRule::Threshold(2.8), true),
        ];
        for (seed, stop, wild) in configs {
            let series = gaussian(seed, 100, Some((50, 1.9)));
            let result = if wild {
                wild_binary_segmentation(&series, StatKind::Cusum, stop, 50, seed).unwrap()
            } else {
                binary_segmentation(&series, StatKind::Cusum, stop).unwrap()
            };
            if result.changepoints.is_empty() {
                continue;
            }
            let tau = detect_tau(&result, 50);
            let h = 10.min(tau).min(100 - tau);
            let window = Window::new(tau, h, 100).unwrap();
            let path = PhiPath::new(series.clone(), window).unwrap();
            for conditioning in [Conditioning::TauInModel, Conditioning::FullModel] {
                let sel = selection_set(&path, &result, conditioning).unwrap();
                let endpoints: Vec<f64> = sel
                    .set
                    .intervals()
                    .iter()
                    .flat_map(|&(a, b)| [a, b])
                    .collect();
                for i in 1..1000 {
                    let phi = i as f64 / 1000.0;
                    if endpoints.iter().any(|e| (e - phi).abs() < 1e-8) {
                        continue;
                    }
                    let moved = perturb_series(&path, phi);
                    let rerun = if wild {
                        crate::detect::wild_binary_segmentation_with_intervals(
                            &moved,
                            StatKind::Cusum,
                            stop,
                            result.intervals.clone().unwrap(),
                        )
                        .unwrap()
                    } else {
                        binary_segmentation(&moved, StatKind::Cusum, stop).unwrap()
                    };
                    let holds = match conditioning {
                        Conditioning::TauInModel => rerun.changepoints.contains(&tau),
                        Conditioning::FullModel => rerun.changepoints == result.changepoints,
                    };
                    assert_eq!(
                        holds,
                        sel.set.contains(phi),
                        "seed={seed} stop={stop:?} wild={wild} {conditioning:?} phi={phi}"
                    );
                }
            }
        }
    }

    #[test]
    fn observed_share_is_always_in_the_set() {
        for seed in 200..212 {
            let series = gaussian(seed, 80, Some((40, 2.0)));
            let result =
                binary_segmentation(&series, StatKind::Cusum, StopRule::Count(1)).unwrap();
            let tau = result.changepoints[0];
            let h = 8.min(tau).min(80 - tau);
            if h == 0 {
                continue;
            }
            let window = Window::new(tau, h, 80).unwrap();
            let path = PhiPath::new(series, window).unwrap();
            let sel = selection_set(&path, &result, Conditioning::TauInModel).unwrap();
            assert!(
                sel.set.contains(path.phi_obs()),
                "seed={seed}: phi_obs={} not in {:?}",
                path.phi_obs(),
                sel.set.intervals()
            );
        }
    }

    #[test]
    fn full_model_event_implies_membership_event() {
        let series = gaussian(50, 120, Some((60, 2.2)));
        let result = binary_segmentation(&series, StatKind::Cusum, StopRule::Count(2)).unwrap();
        let tau = detect_tau(&result, 60);
        let window = Window::new(tau, 10, 120).unwrap();
        let path = PhiPath::new(series, window).unwrap();
        let full = selection_set(&path, &result, Conditioning::FullModel).unwrap();
        let member = selection_set(&path, &result, Conditioning::TauInModel).unwrap();
        assert!(full.set.measure() <= member.set.measure() + 1e-12);
        for i in 1..400 {
            let phi = i as f64 / 400.0;
            if full.set.contains(phi) {
                assert!(member.set.contains(phi), "phi={phi}");
            }
        }
    }

    #[test]
    fn accepted_step_inequalities_hold_at_the_observed_share() {
        let series = gaussian(77, 90, Some((45, 2.5)));
        let result =
            binary_segmentation(&series, StatKind::Cusum, StopRule::Threshold(3.0)).unwrap();
        assert!(!result.changepoints.is_empty());
        let tau = detect_tau(&result, 45);
        let window = Window::new(tau, 9, 90).unwrap();
        let path = PhiPath::new(series, window).unwrap();
        for step in &result.steps {
            let cs = step_inequalities(&path, step, Some(3.0));
            for (i, c) in cs.iter().enumerate() {
                assert!(
                    c.intercept + c.slope * path.phi_obs() >= -1e-9,
                    "constraint {i} of step {step:?} fails at phi_obs"
                );
            }
        }
    }

    #[test]
    fn non_cusum_detectors_are_rejected() {
        let series = gaussian(31, 60, Some((30, 2.0)));
        let result = binary_segmentation(&series, StatKind::Lr, StopRule::Count(1)).unwrap();
        let tau = result.changepoints[0];
        let window = Window::new(tau, 6, 60).unwrap();
        let path = PhiPath::new(series, window).unwrap();
        assert!(matches!(
            selection_set(&path, &result, Conditioning::TauInModel),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn p_value_report_is_complete_and_deterministic() {
        let series = gaussian(88, 100, Some((50, 2.0)));
        let result = binary_segmentation(&series, StatKind::Cusum, StopRule::Count(1)).unwrap();
        let tau = result.changepoints[0];
        let window = Window::new(tau, 10, 100).unwrap();
        let path = PhiPath::new(series, window).unwrap();
        let a = exact_p_value(&path, &result, Conditioning::TauInModel).unwrap();
        let b = exact_p_value(&path, &result, Conditioning::TauInModel).unwrap();
        assert_eq!(a, b);
        assert!(a.p_value >= 0.0 && a.p_value <= 1.0);
        assert_eq!(a.diagnostics["phi_obs_in_set"], 1.0);
        assert!((a.phi_lower + a.phi_upper - 1.0).abs() < 1e-12);
        assert_eq!(a.method, Method::ExactCusum);
    }

    /// Small-scale null calibration: under no change, detected-and-tested
    /// p-values are uniform. The full-scale version lives in the
    /// acceptance suite; this is a fast regression guard.
    #[test]
    fn null_p_values_look_uniform() {
        let reps = 240;
        let h = 8;
        let mut ps = Vec::new();
        for seed in 0..reps {
            let series = gaussian(3000 + seed, 60, None);
            let result =
                binary_segmentation(&series, StatKind::Cusum, StopRule::Count(1)).unwrap();
            let tau = result.changepoints[0];
            if tau < h || tau + h > 60 {
                continue;
            }
            let window = Window::new(tau, h, 60).unwrap();
            let path = PhiPath::new(series, window).unwrap();
            let report = exact_p_value(&path, &result, Conditioning::TauInModel).unwrap();
            ps.push(report.p_value);
        }
        assert!(ps.len() > 100, "too few usable replicates: {}", ps.len());
        let d = ks_statistic_uniform(&ps);
        let p = ks_pvalue(ps.len(), d);
        assert!(p > 1e-3, "null p-values not uniform: KS p = {p}");
    }
}
