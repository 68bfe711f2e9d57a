//! Counterfactual series indexed by the window share.
//!
//! Rescaling the left half of the window by `sqrt(phi / phi_obs)` and the
//! right half by `sqrt((1 - phi) / (1 - phi_obs))` moves the share to `phi`
//! while conserving the window's total sum of squares and leaving everything
//! outside the window untouched. Every centered square of the perturbed
//! series is affine in `phi`, so segment sums of squares, and through them
//! the detector statistics, have closed forms in `phi`. That is what makes
//! replaying a detector across `phi` cheap and what the exact selection-set
//! construction differentiates against.

use crate::error::{Error, Result};
use crate::phi::phi_statistic;
use crate::series::{TimeSeries, Window};

/// A series, a tested window, and precomputed affine forms of the perturbed
/// centered squares: entry `t` of the perturbed squares equals
/// `a[t] + b[t] * phi`.
#[derive(Debug, Clone)]
pub struct PhiPath {
    base: TimeSeries,
    window: Window,
    phi_obs: f64,
    /// Prefix sums of the `a` coefficients, length `n + 1`.
    a_prefix: Vec<f64>,
    /// Prefix sums of the `b` coefficients, length `n + 1`.
    b_prefix: Vec<f64>,
}

impl PhiPath {
    /// Builds the path for a series and window.
    ///
    /// # Errors
    /// Fails when the window does not fit the series or its share statistic
    /// is degenerate (either side with zero sum of squares).
    pub fn new(series: TimeSeries, window: Window) -> Result<Self> {
        let phi_obs = phi_statistic(&series, &window)?;
        let n = series.len();
        let mut a_prefix = Vec::with_capacity(n + 1);
        let mut b_prefix = Vec::with_capacity(n + 1);
        a_prefix.push(0.0);
        b_prefix.push(0.0);
        let (mut acc_a, mut acc_b) = (0.0, 0.0);
        for t in 0..n {
            let sq = series.centered_sq(t);
            let (a, b) = if window.left_range().contains(&t) {
                (0.0, sq / phi_obs)
            } else if window.right_range().contains(&t) {
                (sq / (1.0 - phi_obs), -sq / (1.0 - phi_obs))
            } else {
                (sq, 0.0)
            };
            acc_a += a;
            acc_b += b;
            a_prefix.push(acc_a);
            b_prefix.push(acc_b);
        }
        Ok(PhiPath {
            base: series,
            window,
            phi_obs,
            a_prefix,
            b_prefix,
        })
    }

    pub fn base(&self) -> &TimeSeries {
        &self.base
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn phi_obs(&self) -> f64 {
        self.phi_obs
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Sum of perturbed centered squares over `[s, e)` as
    /// `(intercept, slope)`: the sum at share `phi` is
    /// `intercept + slope * phi`.
    pub fn sum_sq_affine(&self, s: usize, e: usize) -> (f64, f64) {
        (
            self.a_prefix[e] - self.a_prefix[s],
            self.b_prefix[e] - self.b_prefix[s],
        )
    }

    /// The perturbed centered square at one index, `a[t] + b[t] * phi`.
    pub fn square_at(&self, t: usize, phi: f64) -> f64 {
        let (a, b) = self.sum_sq_affine(t, t + 1);
        a + b * phi
    }
}

/// The series whose window share equals `phi`, obtained by rescaling the
/// residuals of the two window halves (signs and everything outside the
/// window are unchanged). At `phi = phi_obs` this is the base series,
/// bit for bit.
pub fn perturb_series(path: &PhiPath, phi: f64) -> TimeSeries {
    debug_assert!((0.0..=1.0).contains(&phi));
    let window = path.window;
    let mu = path.base.mu();
    let left_scale = (phi / path.phi_obs).sqrt();
    let right_scale = ((1.0 - phi) / (1.0 - path.phi_obs)).sqrt();
    let mut values = path.base.values().to_vec();
    if phi != path.phi_obs {
        for t in window.left_range() {
            values[t] = mu + left_scale * (values[t] - mu);
        }
        for t in window.right_range() {
            values[t] = mu + right_scale * (values[t] - mu);
        }
    }
    TimeSeries::new(values, mu).expect("perturbation preserves validity")
}

/// CUSUM statistic of the perturbed series at split `k` of `[s, e)`, as an
/// affine function of `phi`: returns `(intercept, slope)`.
pub fn cusum_phi_coeff(path: &PhiPath, s: usize, e: usize, k: usize) -> (f64, f64) {
    debug_assert!(s < k && k < e && e <= path.len());
    let n1 = (k - s) as f64;
    let n2 = (e - k) as f64;
    let g0 = (n1 * n2 / (n1 + n2)).sqrt();
    let (int_left, slope_left) = path.sum_sq_affine(s, k);
    let (int_right, slope_right) = path.sum_sq_affine(k, e);
    (
        g0 * (int_left / n1 - int_right / n2),
        g0 * (slope_left / n1 - slope_right / n2),
    )
}

/// Affine forms of all CUSUM split statistics of `[s, e)`, indexed by
/// `k - s - 1` for splits `k` strictly inside.
pub fn cusum_phi_coeffs(path: &PhiPath, s: usize, e: usize) -> Vec<(f64, f64)> {
    (s + 1..e).map(|k| cusum_phi_coeff(path, s, e, k)).collect()
}

/// Affine forms behind the variance LR statistic at a split: per-side sums
/// of squares as functions of the share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrPhiCoeffs {
    pub start: usize,
    pub end: usize,
    pub split: usize,
    /// Left sum of squares is `left_intercept + left_slope * phi`.
    pub left_intercept: f64,
    pub left_slope: f64,
    /// Right sum of squares is `right_intercept + right_slope * phi`.
    pub right_intercept: f64,
    pub right_slope: f64,
}

/// Extracts the affine sum-of-squares forms for split `tau` of `[s, e)`.
pub fn lr_phi_coeffs(path: &PhiPath, s: usize, e: usize, tau: usize) -> LrPhiCoeffs {
    debug_assert!(s < tau && tau < e && e <= path.len());
    let (left_intercept, left_slope) = path.sum_sq_affine(s, tau);
    let (right_intercept, right_slope) = path.sum_sq_affine(tau, e);
    LrPhiCoeffs {
        start: s,
        end: e,
        split: tau,
        left_intercept,
        left_slope,
        right_intercept,
        right_slope,
    }
}

/// Variance LR statistic of the perturbed series at the coefficients'
/// split, evaluated at share `phi`.
///
/// # Errors
/// Fails if either side's sum of squares is non-positive at this `phi`.
pub fn lr_stat_phi(coeffs: &LrPhiCoeffs, phi: f64) -> Result<f64> {
    let s1 = coeffs.left_intercept + coeffs.left_slope * phi;
    let s2 = coeffs.right_intercept + coeffs.right_slope * phi;
    if s1 <= 0.0 || s2 <= 0.0 {
        return Err(Error::DegenerateSegment {
            start: coeffs.start,
            end: coeffs.end,
            reason: format!("zero sum of squares at share {phi}"),
        });
    }
    let n1 = (coeffs.split - coeffs.start) as f64;
    let n2 = (coeffs.end - coeffs.split) as f64;
    let n = n1 + n2;
    Ok(n * ((s1 + s2) / n).ln() - n1 * (s1 / n1).ln() - n2 * (s2 / n2).ln())
}

/// CUSUM statistic of the perturbed series: affine form evaluated at `phi`.
pub fn cusum_stat_phi(path: &PhiPath, s: usize, e: usize, k: usize, phi: f64) -> f64 {
    let (intercept, slope) = cusum_phi_coeff(path, s, e, k);
    intercept + slope * phi
}
