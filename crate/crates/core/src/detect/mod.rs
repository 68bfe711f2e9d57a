//! Changepoint detectors for variance changes.
//!
//! All detectors work on the centered squares of the series. Binary
//! segmentation and its wild variant support a threshold stop (split while
//! the statistic clears `lambda`) and a fixed-count stop (greedily place
//! `count` splits, best segment first). PELT minimizes a penalized variance
//! cost over all partitions.

pub(crate) mod engine;
pub(crate) mod pelt;
pub(crate) mod scan;

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use engine::{run_count, run_threshold, EngineRun, PlainPicker, SegmentPicker, WbsPicker};
use scan::{CusumScan, LrScan};

/// Split statistic used by a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatKind {
    /// CUSUM mean-shift statistic on centered squares.
    Cusum,
    /// Gaussian variance likelihood ratio.
    Lr,
}

/// Search strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Binseg,
    Wbs,
    Pelt,
}

/// When a detector stops splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Split while the statistic magnitude reaches this value.
    Threshold(f64),
    /// Place exactly this many splits (fewer if the series runs out).
    Count(usize),
    /// Per-segment penalty for PELT.
    Penalty(f64),
}

/// One segment evaluation made by a detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentStat {
    /// Segment bounds, half-open.
    pub start: usize,
    pub end: usize,
    /// For WBS, the drawn interval the winning statistic came from; `None`
    /// when it came from scanning the segment itself.
    pub source: Option<(usize, usize)>,
    /// Best split location (left part is `[start, split)`).
    pub split: Option<usize>,
    /// Statistic value at the best split; signed for CUSUM.
    pub value: f64,
    /// +1 variance increase, -1 decrease.
    pub direction: i8,
    /// Whether the detector split here.
    pub accepted: bool,
}

/// Everything a detector run produced, sufficient to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub algorithm: Algorithm,
    pub stat: StatKind,
    pub stop: StopRule,
    /// Sorted ascending; entry `k` means the change falls between
    /// observations `k - 1` and `k` (`k` observations precede it).
    pub changepoints: Vec<usize>,
    /// Direction per changepoint: +1 variance increase, -1 decrease.
    pub directions: Vec<i8>,
    /// Segment evaluations in detector order. Threshold runs record every
    /// scanned segment; count runs record the accepted splits.
    pub steps: Vec<SegmentStat>,
    /// Intervals drawn for WBS, in draw order; reused verbatim by replays.
    pub intervals: Option<Vec<(usize, usize)>>,
}

/// CUSUM mean-shift statistic at a split of `[start, end)` of `y`.
///
/// The left part is `[start, split)`, the right `[split, end)`. Positive
/// values mean the left mean is larger. When `y` holds centered squares, a
/// negative value at a variance change means the variance went up.
pub fn cusum_stat(y: &[f64], start: usize, end: usize, split: usize) -> f64 {
    assert!(start < split && split < end && end <= y.len());
    let n1 = (split - start) as f64;
    let n2 = (end - split) as f64;
    let mean_left = y[start..split].iter().sum::<f64>() / n1;
    let mean_right = y[split..end].iter().sum::<f64>() / n2;
    (n1 * n2 / (n1 + n2)).sqrt() * (mean_left - mean_right)
}

/// Variance likelihood-ratio statistic at a split of `[start, end)`.
///
/// Twice the log likelihood gain of giving the two sides separate variances
/// instead of one pooled variance, with the known mean of `series`.
///
/// # Errors
/// Fails when either side has zero sum of squares.
pub fn lr_stat(series: &TimeSeries, start: usize, end: usize, split: usize) -> Result<f64> {
    if !(start < split && split < end && end <= series.len()) {
        return Err(Error::invalid_config(format!(
            "split {split} does not partition [{start}, {end})"
        )));
    }
    let s1: f64 = (start..split).map(|t| series.centered_sq(t)).sum();
    let s2: f64 = (split..end).map(|t| series.centered_sq(t)).sum();
    scan::lr_from_sums(start, end, split, s1, s2)
}

fn package(
    run: EngineRun,
    algorithm: Algorithm,
    stat: StatKind,
    stop: StopRule,
    intervals: Option<Vec<(usize, usize)>>,
) -> DetectionResult {
    DetectionResult {
        algorithm,
        stat,
        stop,
        changepoints: run.changepoints,
        directions: run.directions,
        steps: run.steps,
        intervals,
    }
}

fn run_engine<P: SegmentPicker>(picker: &P, n: usize, stop: StopRule) -> Result<EngineRun> {
    let keep_going = |_k: usize| ControlFlow::<()>::Continue(());
    match stop {
        StopRule::Threshold(lambda) => {
            if !(lambda > 0.0) {
                return Err(Error::invalid_config("threshold must be positive"));
            }
            run_threshold(picker, n, lambda, keep_going)
        }
        StopRule::Count(k) => {
            if k == 0 {
                return Err(Error::invalid_config("split count must be positive"));
            }
            run_count(picker, n, k, keep_going)
        }
        StopRule::Penalty(_) => Err(Error::invalid_config(
            "penalty stop is only available with the PELT algorithm",
        )),
    }
}

/// Binary segmentation over the chosen statistic.
pub fn binary_segmentation(
    series: &TimeSeries,
    stat: StatKind,
    stop: StopRule,
) -> Result<DetectionResult> {
    let prefix = series.squared_prefix();
    let n = series.len();
    let run = match stat {
        StatKind::Cusum => run_engine(&PlainPicker(&CusumScan { prefix: &prefix }), n, stop)?,
        StatKind::Lr => run_engine(&PlainPicker(&LrScan { prefix: &prefix }), n, stop)?,
    };
    Ok(package(run, Algorithm::Binseg, stat, stop, None))
}

/// Uniform draw of interval pairs `(s, e)` with `e - s >= 4`, by rejection.
pub(crate) fn draw_wbs_intervals(
    n_intervals: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if n < 4 {
        return Err(Error::invalid_input(
            "series too short to draw length-4 intervals",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_intervals);
    while out.len() < n_intervals {
        let a = rng.random_range(0..=n);
        let b = rng.random_range(0..=n);
        let (s, e) = if a < b { (a, b) } else { (b, a) };
        if e - s >= 4 {
            out.push((s, e));
        }
    }
    Ok(out)
}

/// Wild binary segmentation: like binary segmentation, but each segment's
/// statistic is the best over drawn subintervals of the segment (and the
/// segment itself).
pub fn wild_binary_segmentation(
    series: &TimeSeries,
    stat: StatKind,
    stop: StopRule,
    n_intervals: usize,
    seed: u64,
) -> Result<DetectionResult> {
    let intervals = draw_wbs_intervals(n_intervals, series.len(), seed)?;
    wild_binary_segmentation_with_intervals(series, stat, stop, intervals)
}

/// WBS over a caller-supplied interval list (stored on the result and
/// reused verbatim when the run is replayed).
pub fn wild_binary_segmentation_with_intervals(
    series: &TimeSeries,
    stat: StatKind,
    stop: StopRule,
    intervals: Vec<(usize, usize)>,
) -> Result<DetectionResult> {
    let n = series.len();
    if let Some(&(s, e)) = intervals.iter().find(|&&(s, e)| e <= s || e > n) {
        return Err(Error::invalid_config(format!(
            "drawn interval ({s}, {e}) is not a subinterval of [0, {n})"
        )));
    }
    let prefix = series.squared_prefix();
    let run = match stat {
        StatKind::Cusum => {
            let scan = CusumScan { prefix: &prefix };
            run_engine(
                &WbsPicker {
                    scan: &scan,
                    intervals: &intervals,
                },
                n,
                stop,
            )?
        }
        StatKind::Lr => {
            let scan = LrScan { prefix: &prefix };
            run_engine(
                &WbsPicker {
                    scan: &scan,
                    intervals: &intervals,
                },
                n,
                stop,
            )?
        }
    };
    Ok(package(run, Algorithm::Wbs, stat, stop, Some(intervals)))
}

/// Penalized exact search over all partitions (segments of length >= 2)
/// with the Gaussian variance cost.
pub fn pelt(series: &TimeSeries, penalty: f64) -> Result<DetectionResult> {
    if !(penalty > 0.0) {
        return Err(Error::invalid_config("penalty must be positive"));
    }
    let prefix = series.squared_prefix();
    let changepoints = pelt::run_pelt(&prefix, penalty, 2)?;
    // Direction per change: compare mean squares of the flanking segments.
    let mut bounds = vec![0];
    bounds.extend(&changepoints);
    bounds.push(series.len());
    let directions = (1..bounds.len() - 1)
        .map(|i| {
            let (s, k, e) = (bounds[i - 1], bounds[i], bounds[i + 1]);
            let left = (prefix[k] - prefix[s]) / (k - s) as f64;
            let right = (prefix[e] - prefix[k]) / (e - k) as f64;
            if right > left {
                1
            } else {
                -1
            }
        })
        .collect();
    Ok(DetectionResult {
        algorithm: Algorithm::Pelt,
        stat: StatKind::Lr,
        stop: StopRule::Penalty(penalty),
        changepoints,
        directions,
        steps: vec![],
        intervals: None,
    })
}
