use crate::error::{Error, Result};

/// Best split found inside one candidate range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Split {
    /// Split location: left part is `[s, k)`, right part `[k, e)`.
    pub k: usize,
    /// Magnitude compared against thresholds (|G| for CUSUM, the LR value).
    pub score: f64,
    /// Signed statistic value at `k`.
    pub value: f64,
    /// +1 for a variance increase left to right, -1 for a decrease.
    pub direction: i8,
}

/// A split statistic scanned over all admissible split points of a segment.
pub(crate) trait SplitScan {
    /// Highest-scoring split strictly inside `[s, e)`, or `None` when the
    /// segment is too short to have any candidate. Ties go to the smallest
    /// split index.
    fn best_split(&self, s: usize, e: usize) -> Result<Option<Split>>;
}

/// CUSUM mean-shift scan over prefix sums of the working sequence (centered
/// squares, when detecting variance changes).
pub(crate) struct CusumScan<'a> {
    /// `prefix[t]` is the sum of the working values over `[0, t)`.
    pub prefix: &'a [f64],
}

/// G statistic at split `k` of `[s, e)` from the prefix sums.
pub(crate) fn cusum_from_prefix(prefix: &[f64], s: usize, e: usize, k: usize) -> f64 {
    let n1 = (k - s) as f64;
    let n2 = (e - k) as f64;
    let mean_left = (prefix[k] - prefix[s]) / n1;
    let mean_right = (prefix[e] - prefix[k]) / n2;
    (n1 * n2 / (n1 + n2)).sqrt() * (mean_left - mean_right)
}

/// Direction encoded by a CUSUM value on centered squares: negative G means
/// the right side is larger, i.e. a variance increase.
pub(crate) fn cusum_direction(g: f64) -> i8 {
    if g > 0.0 {
        -1
    } else {
        1
    }
}

impl SplitScan for CusumScan<'_> {
    fn best_split(&self, s: usize, e: usize) -> Result<Option<Split>> {
        if e - s < 2 {
            return Ok(None);
        }
        let mut best: Option<Split> = None;
        for k in s + 1..e {
            let g = cusum_from_prefix(self.prefix, s, e, k);
            let score = g.abs();
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Split {
                    k,
                    score,
                    value: g,
                    direction: cusum_direction(g),
                });
            }
        }
        Ok(best)
    }
}

/// Gaussian variance likelihood-ratio scan over prefix sums of centered
/// squares.
pub(crate) struct LrScan<'a> {
    pub prefix: &'a [f64],
}

/// LR value at split `k` of `[s, e)` from sums of centered squares.
///
/// Twice the log likelihood gain of fitting separate variances on the two
/// sides over one pooled variance:
/// `n*ln(S/n) - n1*ln(S1/n1) - n2*ln(S2/n2)`.
pub(crate) fn lr_from_sums(
    s: usize,
    e: usize,
    k: usize,
    s1: f64,
    s2: f64,
) -> Result<f64> {
    if s1 <= 0.0 || s2 <= 0.0 {
        return Err(Error::DegenerateSegment {
            start: s,
            end: e,
            reason: format!("zero sum of squares on one side of split {k}"),
        });
    }
    let n1 = (k - s) as f64;
    let n2 = (e - k) as f64;
    let n = n1 + n2;
    let total = s1 + s2;
    Ok(n * (total / n).ln() - n1 * (s1 / n1).ln() - n2 * (s2 / n2).ln())
}

impl SplitScan for LrScan<'_> {
    fn best_split(&self, s: usize, e: usize) -> Result<Option<Split>> {
        if e - s < 4 {
            return Ok(None);
        }
        let mut best: Option<Split> = None;
        for k in s + 2..=e - 2 {
            let s1 = self.prefix[k] - self.prefix[s];
            let s2 = self.prefix[e] - self.prefix[k];
            let lr = lr_from_sums(s, e, k, s1, s2)?;
            if best.as_ref().is_none_or(|b| lr > b.score) {
                let n1 = (k - s) as f64;
                let n2 = (e - k) as f64;
                let direction = if s2 / n2 > s1 / n1 { 1 } else { -1 };
                best = Some(Split {
                    k,
                    score: lr,
                    value: lr,
                    direction,
                });
            }
        }
        Ok(best)
    }
}
