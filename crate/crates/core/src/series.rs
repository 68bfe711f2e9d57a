use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

/// A univariate series with known mean.
///
/// All statistics in this crate operate on centered squares
/// `(x[t] - mu)^2`, so the mean is carried with the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    mu: f64,
}

impl TimeSeries {
    /// Wraps raw observations and their (known) mean.
    ///
    /// # Errors
    /// Fails if fewer than two observations are given or any value is
    /// non-finite.
    pub fn new(values: Vec<f64>, mu: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid_input(format!(
                "need at least 2 observations, got {}",
                values.len()
            )));
        }
        if !mu.is_finite() {
            return Err(Error::invalid_input("mean must be finite"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid_input(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(TimeSeries { values, mu })
    }

    /// Wraps observations, centering them at their sample mean.
    pub fn with_sample_mean(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid_input("empty series"));
        }
        let mu = values.iter().sum::<f64>() / values.len() as f64;
        Self::new(values, mu)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Centered observation `x[t] - mu`.
    pub fn centered(&self, t: usize) -> f64 {
        self.values[t] - self.mu
    }

    /// Centered square `(x[t] - mu)^2`.
    pub fn centered_sq(&self, t: usize) -> f64 {
        let c = self.values[t] - self.mu;
        c * c
    }

    /// Prefix sums of centered squares; entry `t` is the sum over `[0, t)`.
    pub fn squared_prefix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for v in &self.values {
            let c = v - self.mu;
            acc += c * c;
            out.push(acc);
        }
        out
    }
}

/// Symmetric test window of half-width `h` around a changepoint.
///
/// A changepoint at index `k` splits the series between observations
/// `k - 1` and `k`, so `k` counts the observations before the change. The
/// window covers `[k - h, k + h)`: `h` points on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    tau_hat: usize,
    h: usize,
}

impl Window {
    /// Builds a window and checks it fits inside a series of length `n`.
    ///
    /// # Errors
    /// Fails when `h == 0` or the window would leave `[0, n)`.
    pub fn new(tau_hat: usize, h: usize, n: usize) -> Result<Self> {
        if h == 0 {
            return Err(Error::invalid_config("window half-width must be positive"));
        }
        if tau_hat < h || tau_hat + h > n {
            return Err(Error::invalid_config(format!(
                "window of half-width {h} around changepoint {tau_hat} leaves the series [0, {n})"
            )));
        }
        Ok(Window { tau_hat, h })
    }

    pub fn tau_hat(&self) -> usize {
        self.tau_hat
    }

    pub fn h(&self) -> usize {
        self.h
    }

    /// Indices strictly before the change: `[tau_hat - h, tau_hat)`.
    pub fn left_range(&self) -> Range<usize> {
        self.tau_hat - self.h..self.tau_hat
    }

    /// Indices from the change on: `[tau_hat, tau_hat + h)`.
    pub fn right_range(&self) -> Range<usize> {
        self.tau_hat..self.tau_hat + self.h
    }

    /// The full window `[tau_hat - h, tau_hat + h)`.
    pub fn range(&self) -> Range<usize> {
        self.tau_hat - self.h..self.tau_hat + self.h
    }

    pub fn start(&self) -> usize {
        self.tau_hat - self.h
    }

    pub fn end(&self) -> usize {
        self.tau_hat + self.h
    }
}

/// How to choose the window half-width for each detected changepoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowSpec {
    /// The same half-width everywhere; changepoints closer than `h` to a
    /// series edge cannot be tested.
    Fixed(usize),
    /// The largest symmetric window that fits: `h = min(tau_hat, n - tau_hat)`.
    Full,
}

impl WindowSpec {
    /// Resolves the half-width for a changepoint in a series of length `n`,
    /// or `None` when no valid window exists.
    pub fn resolve(&self, tau_hat: usize, n: usize) -> Option<usize> {
        let max_h = tau_hat.min(n.saturating_sub(tau_hat));
        match *self {
            WindowSpec::Fixed(h) => (h > 0 && h <= max_h).then_some(h),
            WindowSpec::Full => (max_h > 0).then_some(max_h),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_rejects_short_and_non_finite() {
        assert!(TimeSeries::new(vec![1.0], 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN], 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0, 2.0], f64::INFINITY).is_err());
        assert!(TimeSeries::new(vec![1.0, 2.0], 0.0).is_ok());
    }

    #[test]
    fn squared_prefix_accumulates_centered_squares() {
        let s = TimeSeries::new(vec![3.0, 1.0, 2.0], 2.0).unwrap();
        assert_eq!(s.squared_prefix(), vec![0.0, 1.0, 2.0, 2.0]);
        assert_eq!(s.centered(1), -1.0);
        assert_eq!(s.centered_sq(0), 1.0);
    }

    #[test]
    fn window_bounds_are_validated() {
        assert!(Window::new(5, 5, 10).is_ok());
        assert!(Window::new(4, 5, 10).is_err());
        assert!(Window::new(6, 5, 10).is_err());
        assert!(Window::new(5, 0, 10).is_err());
        let w = Window::new(7, 3, 12).unwrap();
        assert_eq!(w.left_range(), 4..7);
        assert_eq!(w.right_range(), 7..10);
        assert_eq!(w.range(), 4..10);
    }

    #[test]
    fn window_spec_resolution() {
        assert_eq!(WindowSpec::Fixed(10).resolve(50, 200), Some(10));
        assert_eq!(WindowSpec::Fixed(10).resolve(5, 200), None);
        assert_eq!(WindowSpec::Fixed(10).resolve(195, 200), None);
        assert_eq!(WindowSpec::Full.resolve(30, 200), Some(30));
        assert_eq!(WindowSpec::Full.resolve(170, 200), Some(30));
        assert_eq!(WindowSpec::Full.resolve(0, 200), None);
    }
}
