//! The window share statistic and its cascade decomposition.
//!
//! For a window of half-width `h` around a changepoint, `phi` is the share
//! of the window's centered sum of squares that falls on the left side.
//! Under the no-change null with Gaussian noise, `phi ~ Beta(h/2, h/2)`.
//!
//! The rest of the window's shape is carried by nested partial-sum ratios
//! `W_i = P_i / P_{i+1}` computed outwards-in on each side, where `P_i` is
//! the sum of the first `i` centered squares of that side. Under the null
//! the `W_i` are Beta(i/2, 1/2), and `{W_i on both sides, phi, C0^2}` are
//! mutually independent, which is what lets the power routine resample
//! window shapes while holding `phi` fixed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{TimeSeries, Window};

/// Share of the window sum of squares on the left of the changepoint.
///
/// # Errors
/// Fails when either side of the window has zero sum of squares: the share
/// is then 0 or 1 and carries no usable information.
pub fn phi_statistic(series: &TimeSeries, window: &Window) -> Result<f64> {
    if window.end() > series.len() {
        return Err(Error::invalid_config(format!(
            "window [{}, {}) leaves the series [0, {})",
            window.start(),
            window.end(),
            series.len()
        )));
    }
    let left: f64 = window.left_range().map(|t| series.centered_sq(t)).sum();
    let right: f64 = window.right_range().map(|t| series.centered_sq(t)).sum();
    if left <= 0.0 || right <= 0.0 {
        return Err(Error::DegenerateSegment {
            start: window.start(),
            end: window.end(),
            reason: "one side of the window has zero sum of squares".into(),
        });
    }
    Ok(left / (left + right))
}

/// A window's sum of squares split into scale, share, and shape.
///
/// `reconstruct_squares` rebuilds the `2h` centered squares exactly from
/// these fields, so the triple `(c0_sq, phi_obs, w_left/w_right)` is a
/// lossless reparameterization of the window's squared values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiFrame {
    pub window: Window,
    /// Left share of the window sum of squares.
    pub phi_obs: f64,
    /// Total window sum of squares.
    pub c0_sq: f64,
    /// Partial-sum ratios of the left side, `w_left[i-1] = P_i / P_{i+1}`
    /// for `i = 1..h-1`, taken from the window edge inwards.
    pub w_left: Vec<f64>,
    /// Same for the right side, taken from the changepoint outwards.
    pub w_right: Vec<f64>,
}

/// Ratios `P_i / P_{i+1}` of nested partial sums of `sq`.
fn nested_ratios(sq: &[f64]) -> Result<Vec<f64>> {
    let mut partial = Vec::with_capacity(sq.len());
    let mut acc = 0.0;
    for v in sq {
        acc += v;
        partial.push(acc);
    }
    let mut w = Vec::with_capacity(sq.len().saturating_sub(1));
    for i in 1..sq.len() {
        if partial[i] <= 0.0 {
            return Err(Error::invalid_input(
                "window partial sum of squares vanished; shape ratios are undefined",
            ));
        }
        w.push(partial[i - 1] / partial[i]);
    }
    Ok(w)
}

/// Splits the window of `series` into the `PhiFrame` parameterization.
pub fn decompose_w(series: &TimeSeries, window: &Window) -> Result<PhiFrame> {
    let phi_obs = phi_statistic(series, window)?;
    let left_sq: Vec<f64> = window.left_range().map(|t| series.centered_sq(t)).collect();
    let right_sq: Vec<f64> = window.right_range().map(|t| series.centered_sq(t)).collect();
    let c0_sq = left_sq.iter().sum::<f64>() + right_sq.iter().sum::<f64>();
    Ok(PhiFrame {
        window: *window,
        phi_obs,
        c0_sq,
        w_left: nested_ratios(&left_sq)?,
        w_right: nested_ratios(&right_sq)?,
    })
}

/// Squares of one side from its shape ratios and total `side_sum`.
///
/// Entry `i` (0-based) is `(1 - W_i) * prod_{k>i} W_k * side_sum` with
/// `W_0 = 0`, which telescopes back to `P_{i+1} - P_i`.
fn side_squares(w: &[f64], side_sum: f64) -> Vec<f64> {
    let h = w.len() + 1;
    // suffix[i] = prod_{k=i..h-1} W_k (1-based k), empty product = 1
    let mut suffix = vec![1.0; h + 1];
    for i in (1..h).rev() {
        suffix[i] = w[i - 1] * suffix[i + 1];
    }
    (0..h)
        .map(|i| {
            let w_prev = if i == 0 { 0.0 } else { w[i - 1] };
            (1.0 - w_prev) * suffix[i + 1] * side_sum
        })
        .collect()
}

/// Rebuilds the `2h` centered squares of the window, in series order.
pub fn reconstruct_squares(frame: &PhiFrame) -> Vec<f64> {
    let mut out = side_squares(&frame.w_left, frame.c0_sq * frame.phi_obs);
    out.extend(side_squares(
        &frame.w_right,
        frame.c0_sq * (1.0 - frame.phi_obs),
    ));
    out
}
