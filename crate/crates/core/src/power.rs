//! P-values averaged over resampled window shapes.
//!
//! The share is independent of the window's shape ratios under the null,
//! but the selection set is not: it is a function of the whole series, so
//! conditioning on the observed shape costs power. Averaging the truncated
//! tail's numerator and denominator over shape ratios redrawn from their
//! null Beta laws marginalizes that conditioning: each resample keeps the
//! observed share, scale, residual signs, and everything outside the
//! window, rebuilds the window squares from fresh ratios, and contributes
//! one numerator and denominator pair. The first sample is always the
//! observed series itself, so a single-sample run reproduces the
//! non-averaged p-value bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::beta_quantile;
use crate::detect::{Algorithm, DetectionResult, StatKind};
use crate::error::{Error, Result};
use crate::exact::selection_set_with;
use crate::mc::{density_with_stream, SamplerConfig};
use crate::perturb::PhiPath;
use crate::phi::{decompose_w, reconstruct_squares, PhiFrame};
use crate::pvalue::{truncated_masses, two_sided_bounds, Conditioning, Method, PValueReport};
use crate::replay::{PhiDetector, ReplaySpec};
use crate::series::TimeSeries;

/// Separates the shape-resampling stream family from the sampler streams
/// that share the same user seed.
const W_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// How each resampled series is turned into a numerator and denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerEngine {
    /// Analytic selection set per resample (CUSUM detectors).
    Exact,
    /// Surrogate-conditioned density per resample.
    Gp,
}

/// Rebuilds the series with fresh shape ratios: same share, same scale,
/// same residual signs, untouched outside the window.
pub(crate) fn resample_path(base: &PhiPath, frame: &PhiFrame, seed: u64, j: u64) -> Result<PhiPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ W_SEED_SALT);
    rng.set_stream(j);
    let mut fresh = frame.clone();
    for side in [&mut fresh.w_left, &mut fresh.w_right] {
        for (i, w) in side.iter_mut().enumerate() {
            let u: f64 = rng.random_range(0.0..1.0);
            let a = (i + 1) as f64 / 2.0;
            *w = beta_quantile(u.clamp(1e-16, 1.0 - 1e-16), a, 0.5);
        }
    }
    let squares = reconstruct_squares(&fresh);
    let series = base.base();
    let mu = series.mu();
    let mut values = series.values().to_vec();
    for (offset, t) in frame.window.range().enumerate() {
        let sign = if series.centered(t) < 0.0 { -1.0 } else { 1.0 };
        values[t] = mu + sign * squares[offset].sqrt();
    }
    PhiPath::new(TimeSeries::new(values, mu)?, frame.window)
}

/// Averaged post-selection p-value over `n_w` window shapes.
///
/// The two-sided rejection bounds always come from the observed share. Per
/// sample `j`, the exact engine integrates the truncated Beta masses over
/// the analytic selection set, while the surrogate engine fits its density
/// from design replays on stream `2 j + 1` of the configured seed, which
/// makes the first sample's estimate identical to the direct surrogate
/// p-value. Numerators and denominators are summed before dividing.
///
/// # Errors
/// Fails when the tested changepoint was not detected, the exact engine is
/// asked for a non-CUSUM detector, or every sample's selection mass is
/// zero.
pub fn power_p_value(
    path: &PhiPath,
    result: &DetectionResult,
    conditioning: Conditioning,
    engine: PowerEngine,
    n_w: usize,
    config: &SamplerConfig,
) -> Result<PValueReport> {
    if n_w == 0 {
        return Err(Error::invalid_config("need at least 1 shape sample"));
    }
    let tau = path.window().tau_hat();
    if result.changepoints.binary_search(&tau).is_err() {
        return Err(Error::invalid_config(format!(
            "changepoint {tau} is not among the detected ones {:?}",
            result.changepoints
        )));
    }
    if engine == PowerEngine::Exact
        && (result.stat != StatKind::Cusum || result.algorithm == Algorithm::Pelt)
    {
        return Err(Error::invalid_config(
            "the exact engine requires a CUSUM detector; use the surrogate engine",
        ));
    }
    let spec = ReplaySpec::from_result(result)?;
    let frame = decompose_w(path.base(), path.window())?;
    let observed = &result.changepoints;
    let h = path.window().h();
    let phi_obs = path.phi_obs();
    let (lo, hi) = two_sided_bounds(phi_obs, h);

    // Samples are independent; the merge below runs in index order so the
    // floating-point sums are deterministic.
    let samples: Vec<(f64, f64, usize)> = (0..n_w as u64)
        .into_par_iter()
        .map(|j| -> Result<(f64, f64, usize)> {
            let resampled;
            let sample_path: &PhiPath = if j == 0 {
                path
            } else {
                resampled = resample_path(path, &frame, config.seed, j)?;
                &resampled
            };
            let detector = PhiDetector::new(sample_path, spec.clone())?;
            let (num, den) = match engine {
                PowerEngine::Exact => {
                    let sel = selection_set_with(&detector, observed, conditioning, tau)?;
                    truncated_masses(&sel.set, lo, hi, h)
                }
                PowerEngine::Gp => {
                    let (density, _) =
                        density_with_stream(&detector, observed, conditioning, config, 2 * j + 1)?;
                    density.unnorm_tail_and_total(lo, hi)
                }
            };
            Ok((num, den, detector.replay_count()))
        })
        .collect::<Result<_>>()?;
    let mut num_sum = 0.0;
    let mut den_sum = 0.0;
    let mut replays = 0usize;
    let mut degenerate = 0usize;
    for &(num, den, spent) in &samples {
        if den < 1e-300 {
            degenerate += 1;
        }
        num_sum += num;
        den_sum += den;
        replays += spent;
    }
    if den_sum < 1e-300 {
        return Err(Error::EmptySelection);
    }
    let method = match engine {
        PowerEngine::Exact => Method::ExactCusum,
        PowerEngine::Gp => Method::McGp,
    };
    let mut report = PValueReport {
        tau_hat: tau,
        p_value: (num_sum / den_sum).clamp(0.0, 1.0),
        phi_obs,
        phi_lower: lo,
        phi_upper: hi,
        method,
        conditioning,
        diagnostics: Default::default(),
    };
    report.diagnostics.insert("w_samples".into(), n_w as f64);
    report.diagnostics.insert("replays".into(), replays as f64);
    report
        .diagnostics
        .insert("degenerate_samples".into(), degenerate as f64);
    report.diagnostics.insert("num_mass".into(), num_sum);
    report.diagnostics.insert("den_mass".into(), den_sum);
    Ok(report)
}
