use std::ops::ControlFlow;

use crate::detect::scan::{Split, SplitScan};
use crate::detect::SegmentStat;
use crate::error::Result;

/// A chosen split together with the candidate range it was found in (the
/// segment itself for plain binary segmentation, a drawn interval for the
/// wild variant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Picked {
    pub split: Split,
    /// `None` when the statistic was scanned over the segment itself.
    pub source: Option<(usize, usize)>,
}

/// Strategy for finding the best split of one segment.
pub(crate) trait SegmentPicker {
    fn pick(&self, s: usize, e: usize) -> Result<Option<Picked>>;
}

/// Scan the segment itself (plain binary segmentation).
pub(crate) struct PlainPicker<'a, S: SplitScan>(pub &'a S);

impl<S: SplitScan> SegmentPicker for PlainPicker<'_, S> {
    fn pick(&self, s: usize, e: usize) -> Result<Option<Picked>> {
        Ok(self
            .0
            .best_split(s, e)?
            .map(|split| Picked { split, source: None }))
    }
}

/// Scan every drawn interval contained in the segment, plus the segment
/// itself (wild binary segmentation). Candidates are compared by score,
/// ties by smaller split index; the drawn intervals keep their stored order
/// so replays are deterministic.
pub(crate) struct WbsPicker<'a, S: SplitScan> {
    pub scan: &'a S,
    pub intervals: &'a [(usize, usize)],
}

impl<S: SplitScan> SegmentPicker for WbsPicker<'_, S> {
    fn pick(&self, s: usize, e: usize) -> Result<Option<Picked>> {
        let mut best: Option<Picked> = None;
        let candidates = self
            .intervals
            .iter()
            .filter(|(a, b)| s <= *a && *b <= e)
            .map(|&(a, b)| (a, b, Some((a, b))))
            .chain(std::iter::once((s, e, None)));
        for (a, b, source) in candidates {
            if let Some(split) = self.scan.best_split(a, b)? {
                let better = best.as_ref().is_none_or(|cur| {
                    split.score > cur.split.score
                        || (split.score == cur.split.score && split.k < cur.split.k)
                });
                if better {
                    best = Some(Picked { split, source });
                }
            }
        }
        Ok(best)
    }
}

/// Trace of one detector run.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EngineRun {
    pub steps: Vec<SegmentStat>,
    /// Sorted ascending.
    pub changepoints: Vec<usize>,
    /// Direction per changepoint, aligned with `changepoints`.
    pub directions: Vec<i8>,
    /// True when an early-stop callback ended the run before the detector
    /// itself would have stopped.
    pub stopped_early: bool,
}

fn finish(mut steps: Vec<SegmentStat>, accepted: Vec<(usize, i8)>, stopped_early: bool) -> EngineRun {
    let mut accepted = accepted;
    accepted.sort_by_key(|&(k, _)| k);
    steps.shrink_to_fit();
    EngineRun {
        steps,
        changepoints: accepted.iter().map(|&(k, _)| k).collect(),
        directions: accepted.iter().map(|&(_, d)| d).collect(),
        stopped_early,
    }
}

fn to_stat(seg: (usize, usize), picked: &Picked, accepted: bool) -> SegmentStat {
    SegmentStat {
        start: seg.0,
        end: seg.1,
        source: picked.source,
        split: Some(picked.split.k),
        value: picked.split.value,
        direction: picked.split.direction,
        accepted,
    }
}

/// Threshold-mode segmentation: depth-first, splitting whenever the score
/// reaches `lambda`, recursing into the left half before the right.
///
/// `on_accept` sees each accepted split in acceptance order and can stop
/// the run early.
pub(crate) fn run_threshold<P: SegmentPicker>(
    picker: &P,
    n: usize,
    lambda: f64,
    mut on_accept: impl FnMut(usize) -> ControlFlow<()>,
) -> Result<EngineRun> {
    let mut steps = Vec::new();
    let mut accepted = Vec::new();
    let mut stack = vec![(0usize, n)];
    while let Some((s, e)) = stack.pop() {
        let Some(picked) = picker.pick(s, e)? else {
            continue;
        };
        let accept = picked.split.score >= lambda;
        steps.push(to_stat((s, e), &picked, accept));
        if accept {
            let k = picked.split.k;
            accepted.push((k, picked.split.direction));
            if on_accept(k).is_break() {
                return Ok(finish(steps, accepted, true));
            }
            stack.push((k, e));
            stack.push((s, k));
        }
    }
    Ok(finish(steps, accepted, false))
}

/// Fixed-count segmentation: repeatedly split the segment whose best
/// candidate scores highest, until `count` splits are placed or no segment
/// can be split. Only accepted splits are recorded as steps.
pub(crate) fn run_count<P: SegmentPicker>(
    picker: &P,
    n: usize,
    count: usize,
    mut on_accept: impl FnMut(usize) -> ControlFlow<()>,
) -> Result<EngineRun> {
    let mut steps = Vec::new();
    let mut accepted = Vec::new();
    let mut active: Vec<((usize, usize), Option<Picked>)> = vec![((0, n), picker.pick(0, n)?)];
    while accepted.len() < count {
        let best_idx = active
            .iter()
            .enumerate()
            .filter_map(|(i, (_, p))| p.as_ref().map(|p| (i, p.split.score, p.split.k)))
            .max_by(|a, b| {
                a.1.partial_cmp(&b.1)
                    .expect("split scores must not be NaN")
                    .then(b.2.cmp(&a.2))
            })
            .map(|(i, _, _)| i);
        let Some(i) = best_idx else {
            break;
        };
        let ((s, e), picked) = active.swap_remove(i);
        let picked = picked.expect("chosen segment has a split");
        let k = picked.split.k;
        steps.push(to_stat((s, e), &picked, true));
        accepted.push((k, picked.split.direction));
        if on_accept(k).is_break() {
            return Ok(finish(steps, accepted, true));
        }
        active.push(((s, k), picker.pick(s, k)?));
        active.push(((k, e), picker.pick(k, e)?));
    }
    Ok(finish(steps, accepted, false))
}
