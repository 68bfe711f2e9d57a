use serde::{Deserialize, Serialize};

use crate::beta::beta_interval_mass;

/// A finite union of disjoint closed subintervals of `[0, 1]`.
///
/// Construction normalizes the pieces: clamps to the unit interval, drops
/// empty pieces, sorts, and merges any that overlap or touch. The invariant
/// afterwards is `intervals[i].1 < intervals[i+1].0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        IntervalUnion { intervals: vec![] }
    }

    /// The whole unit interval.
    pub fn full() -> Self {
        IntervalUnion {
            intervals: vec![(0.0, 1.0)],
        }
    }

    /// Normalizes an arbitrary collection of pieces into a disjoint union.
    pub fn new(pieces: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut v: Vec<(f64, f64)> = pieces
            .into_iter()
            .map(|(lo, hi)| (lo.max(0.0), hi.min(1.0)))
            .filter(|&(lo, hi)| hi > lo)
            .collect();
        v.sort_by(|x, y| x.partial_cmp(y).expect("interval endpoints must not be NaN"));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (lo, hi) in v {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        IntervalUnion { intervals: out }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Lebesgue measure of the union.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Probability mass under Beta(a, b).
    pub fn beta_mass(&self, a: f64, b: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(lo, hi)| beta_interval_mass(lo, hi, a, b))
            .sum()
    }

    /// Intersection with a single interval `[lo, hi]`.
    pub fn intersect(&self, lo: f64, hi: f64) -> IntervalUnion {
        IntervalUnion::new(
            self.intervals
                .iter()
                .map(|&(a, b)| (a.max(lo), b.min(hi)))
                .filter(|&(a, b)| b > a)
                .collect::<Vec<_>>(),
        )
    }
}
