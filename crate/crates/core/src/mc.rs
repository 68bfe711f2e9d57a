//! Monte Carlo p-values for detectors without analytic selection sets.
//!
//! The selection indicator is a function of the share alone, so it can be
//! learned from replays: evaluate it at design shares drawn from the null
//! Beta law, interpolate with a Gaussian process whose exponential kernel
//! makes the posterior mean a two-point formula, and multiply the clamped
//! mean into the null density on a fixed grid. The resulting conditioned
//! density yields the tail probability directly, or serves as a proposal
//! for importance sampling with exact indicator replays. A plain weighted
//! estimator without the surrogate is included as the baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::{beta_pdf, beta_quantile};
use crate::detect::DetectionResult;
use crate::error::{Error, Result};
use crate::perturb::PhiPath;
use crate::pvalue::{two_sided_bounds, Conditioning, Method, PValueReport};
use crate::replay::PhiDetector;

/// Grid resolution of the conditioned density.
const CELLS: usize = 4096;
/// Design shares closer than this are merged.
const MERGE_GAP: f64 = 1e-12;

/// Tuning for the Monte Carlo engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Design replays used to fit the surrogate.
    pub n_design: usize,
    /// Draws for the importance-sampling and baseline estimators.
    pub n_is: usize,
    /// Kernel length scale; the kernel is `exp(-|d| / (2 l^2))`.
    pub length_scale: f64,
    pub seed: u64,
    /// Stop indicator replays as soon as the outcome is decided.
    pub early_stop: bool,
    /// Reuse design replays as extra importance-sampling draws.
    pub pool_design: bool,
    /// Beta shape pair for the baseline proposal; the null law when absent.
    pub proposal: Option<(f64, f64)>,
    /// Stratify uniform layers before inverting the proposal CDF.
    pub stratified: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_design: 100,
            n_is: 100,
            length_scale: 100.0,
            seed: 0,
            early_stop: true,
            pool_design: true,
            proposal: None,
            stratified: true,
        }
    }
}

impl SamplerConfig {
    fn validate(&self) -> Result<()> {
        if self.n_design < 2 {
            return Err(Error::invalid_config("need at least 2 design replays"));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::invalid_config("length scale must be positive"));
        }
        if let Some((c, d)) = self.proposal {
            if !(c > 0.0 && d > 0.0 && c.is_finite() && d.is_finite()) {
                return Err(Error::invalid_config("proposal shapes must be positive"));
            }
        }
        Ok(())
    }
}

/// Uniform layers on `(0, 1)`: one per draw, optionally stratified so layer
/// `i` falls in `(i/n, (i+1)/n)`. Clamped away from the endpoints so
/// quantile transforms stay strictly inside the unit interval.
fn uniform_layers(n: usize, stratified: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let u: f64 = rng.random_range(0.0..1.0);
            let z = if stratified {
                (i as f64 + u) / n as f64
            } else {
                u
            };
            z.clamp(1e-16, 1.0 - 1e-16)
        })
        .collect()
}

/// Draws from Beta(a, b) by inverting the CDF over uniform layers.
fn beta_draws(n: usize, a: f64, b: f64, stratified: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
    uniform_layers(n, stratified, rng)
        .into_iter()
        .map(|z| beta_quantile(z, a, b))
        .collect()
}

/// Noise-free Gaussian-process posterior mean under the exponential kernel
/// `exp(-|d| / (2 l^2))`.
///
/// The kernel is Markov, so the mean between two neighboring design points
/// depends on those two alone, and beyond the design range it decays from
/// the nearest point toward the zero prior mean.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    /// Sorted, pairwise distinct.
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Kernel decay rate `1 / (2 l^2)`.
    rate: f64,
}

impl GpSurrogate {
    /// Fits the surrogate to observed values; input order is irrelevant.
    ///
    /// # Errors
    /// Fails with fewer than two points after merging duplicates.
    pub fn fit(points: impl IntoIterator<Item = (f64, f64)>, length_scale: f64) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = points.into_iter().collect();
        pts.sort_by(|p, q| p.partial_cmp(q).expect("design shares must not be NaN"));
        pts.dedup_by(|late, early| (late.0 - early.0).abs() < MERGE_GAP);
        if pts.len() < 2 {
            return Err(Error::invalid_config(
                "surrogate needs at least 2 distinct design points",
            ));
        }
        Ok(GpSurrogate {
            xs: pts.iter().map(|p| p.0).collect(),
            ys: pts.iter().map(|p| p.1).collect(),
            rate: 0.5 / (length_scale * length_scale),
        })
    }

    /// Posterior mean at `x`.
    pub fn mean(&self, x: f64) -> f64 {
        let n = self.xs.len();
        match self
            .xs
            .binary_search_by(|p| p.partial_cmp(&x).expect("query must not be NaN"))
        {
            Ok(i) => self.ys[i],
            Err(0) => self.ys[0] * (-self.rate * (self.xs[0] - x)).exp(),
            Err(i) if i == n => self.ys[n - 1] * (-self.rate * (x - self.xs[n - 1])).exp(),
            Err(i) => {
                let d1 = x - self.xs[i - 1];
                let d2 = self.xs[i] - x;
                // One minus products of kernel values, via expm1 so very
                // long length scales keep full precision.
                let denom = -(-2.0 * self.rate * (d1 + d2)).exp_m1();
                let w_left = (-self.rate * d1).exp() * -(-2.0 * self.rate * d2).exp_m1() / denom;
                let w_right = (-self.rate * d2).exp() * -(-2.0 * self.rate * d1).exp_m1() / denom;
                w_left * self.ys[i - 1] + w_right * self.ys[i]
            }
        }
    }
}

/// The null Beta density multiplied by the clamped surrogate mean,
/// discretized on a midpoint grid over the unit interval.
///
/// Masses are kept unnormalized next to their total, so a tail probability
/// is a ratio of sums that downstream averaging can reproduce exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedDensity {
    /// Unnormalized cell masses, one per grid cell.
    masses: Vec<f64>,
    /// Sum of all cell masses.
    total: f64,
}

impl ConditionedDensity {
    fn from_surrogate(gp: &GpSurrogate, shape: f64) -> Self {
        let width = 1.0 / CELLS as f64;
        let masses: Vec<f64> = (0..CELLS)
            .map(|g| {
                let x = (g as f64 + 0.5) * width;
                gp.mean(x).clamp(0.0, 1.0) * beta_pdf(x, shape, shape) * width
            })
            .collect();
        let total = masses.iter().sum();
        ConditionedDensity { masses, total }
    }

    /// Unnormalized mass of `[lo, hi]`, with partial cells prorated.
    fn unnorm_mass(&self, lo: f64, hi: f64) -> f64 {
        let width = 1.0 / CELLS as f64;
        let mut sum = 0.0;
        for (g, &m) in self.masses.iter().enumerate() {
            let left = g as f64 * width;
            let right = left + width;
            let overlap = right.min(hi) - left.max(lo);
            if overlap > 0.0 {
                sum += m * (overlap / width).min(1.0);
            }
        }
        sum
    }

    /// Unnormalized two-sided tail mass and the total, as a pair so callers
    /// can aggregate before dividing.
    pub(crate) fn unnorm_tail_and_total(&self, lo: f64, hi: f64) -> (f64, f64) {
        (
            self.unnorm_mass(0.0, lo) + self.unnorm_mass(hi, 1.0),
            self.total,
        )
    }

    /// Probability of the two-sided region `[0, lo] ∪ [hi, 1]`.
    ///
    /// # Errors
    /// Fails when the total mass is numerically zero.
    pub fn tail_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        let (tail, total) = self.unnorm_tail_and_total(lo, hi);
        if total < 1e-300 {
            return Err(Error::EmptySelection);
        }
        Ok((tail / total).clamp(0.0, 1.0))
    }

    /// Normalized density at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        if self.total < 1e-300 || !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let g = ((x * CELLS as f64) as usize).min(CELLS - 1);
        self.masses[g] * CELLS as f64 / self.total
    }

    /// Normalized cumulative distribution at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.total < 1e-300 {
            return 0.0;
        }
        (self.unnorm_mass(0.0, x.clamp(0.0, 1.0)) / self.total).clamp(0.0, 1.0)
    }

    /// Inverse-CDF draw from the uniform layer `u`.
    fn sample(&self, u: f64) -> f64 {
        let target = u * self.total;
        let width = 1.0 / CELLS as f64;
        let mut cum = 0.0;
        for (g, &m) in self.masses.iter().enumerate() {
            if m > 0.0 && cum + m >= target {
                let frac = ((target - cum) / m).clamp(0.0, 1.0);
                return ((g as f64 + frac) * width).clamp(1e-12, 1.0 - 1e-12);
            }
            cum += m;
        }
        // Rounding pushed the target past the last positive cell.
        let last = self.masses.iter().rposition(|&m| m > 0.0).unwrap_or(0);
        (((last + 1) as f64) * width).clamp(1e-12, 1.0 - 1e-12)
    }
}

fn bind_detector<'p>(
    path: &'p PhiPath,
    result: &DetectionResult,
) -> Result<(PhiDetector<'p>, usize)> {
    let tau = path.window().tau_hat();
    if result.changepoints.binary_search(&tau).is_err() {
        return Err(Error::invalid_config(format!(
            "changepoint {tau} is not among the detected ones {:?}",
            result.changepoints
        )));
    }
    Ok((PhiDetector::from_result(path, result)?, tau))
}

/// Fits the conditioned density from design replays drawn on the given
/// random stream; returns the density and the number of design points.
pub(crate) fn density_with_stream(
    detector: &PhiDetector<'_>,
    observed: &[usize],
    conditioning: Conditioning,
    config: &SamplerConfig,
    stream: u64,
) -> Result<(ConditionedDensity, usize)> {
    config.validate()?;
    let path = detector.path();
    let shape = path.window().h() as f64 / 2.0;
    let tau = path.window().tau_hat();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut xs = beta_draws(config.n_design, shape, shape, config.stratified, &mut rng);
    xs.push(path.phi_obs());
    xs.sort_by(|p, q| p.partial_cmp(q).expect("design shares must not be NaN"));
    xs.dedup_by(|late, early| (*late - *early).abs() < MERGE_GAP);
    let indicators: Vec<bool> = xs
        .par_iter()
        .map(|&x| detector.indicator(x, conditioning, observed, tau, config.early_stop))
        .collect::<Result<_>>()?;
    let points = xs
        .iter()
        .zip(&indicators)
        .map(|(&x, &ind)| (x, if ind { 1.0 } else { 0.0 }));
    let gp = GpSurrogate::fit(points, config.length_scale)?;
    Ok((ConditionedDensity::from_surrogate(&gp, shape), xs.len()))
}

/// The conditioned density of the share given the selection event,
/// estimated from design replays.
pub fn conditioned_density(
    path: &PhiPath,
    result: &DetectionResult,
    conditioning: Conditioning,
    config: &SamplerConfig,
) -> Result<ConditionedDensity> {
    let (detector, _) = bind_detector(path, result)?;
    let (density, _) = density_with_stream(
        &detector,
        &result.changepoints,
        conditioning,
        config,
        1,
    )?;
    Ok(density)
}

fn base_report(
    path: &PhiPath,
    tau: usize,
    method: Method,
    conditioning: Conditioning,
) -> PValueReport {
    let phi_obs = path.phi_obs();
    let (lo, hi) = two_sided_bounds(phi_obs, path.window().h());
    PValueReport {
        tau_hat: tau,
        p_value: f64::NAN,
        phi_obs,
        phi_lower: lo,
        phi_upper: hi,
        method,
        conditioning,
        diagnostics: Default::default(),
    }
}

/// P-value read directly off the conditioned density.
///
/// # Errors
/// Fails when the tested changepoint was not detected or every design
/// replay rejects the selection event.
pub fn gp_direct_p(
    path: &PhiPath,
    result: &DetectionResult,
    conditioning: Conditioning,
    config: &SamplerConfig,
) -> Result<PValueReport> {
    let (detector, tau) = bind_detector(path, result)?;
    let (density, n_design) =
        density_with_stream(&detector, &result.changepoints, conditioning, config, 1)?;
    let mut report = base_report(path, tau, Method::McGp, conditioning);
    let (tail, total) = density.unnorm_tail_and_total(report.phi_lower, report.phi_upper);
    if total < 1e-300 {
        return Err(Error::EmptySelection);
    }
    report.p_value = (tail / total).clamp(0.0, 1.0);
    report
        .diagnostics
        .insert("design_points".into(), n_design as f64);
    report
        .diagnostics
        .insert("replays".into(), detector.replay_count() as f64);
    report.diagnostics.insert("unnorm_tail".into(), tail);
    report.diagnostics.insert("unnorm_total".into(), total);
    Ok(report)
}

/// Self-normalized importance sampling against the conditioned density:
/// draws are reweighted by the null density over the proposal, with the
/// exact indicator replayed at every draw, so the surrogate only has to be
/// a good proposal, not a good answer.
///
/// # Errors
/// Fails when the tested changepoint was not detected, the surrogate mass
/// vanishes, or no draw lands in the selection set.
pub fn gp_is_p(
    path: &PhiPath,
    result: &DetectionResult,
    conditioning: Conditioning,
    config: &SamplerConfig,
) -> Result<PValueReport> {
    if config.n_is == 0 {
        return Err(Error::invalid_config("need at least 1 sampling draw"));
    }
    let (detector, tau) = bind_detector(path, result)?;
    let observed = &result.changepoints;
    let (density, n_design) =
        density_with_stream(&detector, observed, conditioning, config, 1)?;
    if density.total < 1e-300 {
        return Err(Error::EmptySelection);
    }
    let mut report = base_report(path, tau, Method::McGpIs, conditioning);
    let (lo, hi) = (report.phi_lower, report.phi_upper);
    let shape = path.window().h() as f64 / 2.0;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let draws: Vec<f64> = uniform_layers(config.n_is, config.stratified, &mut rng)
        .into_iter()
        .map(|u| density.sample(u))
        .collect();
    let indicators: Vec<bool> = draws
        .par_iter()
        .map(|&x| detector.indicator(x, conditioning, observed, tau, config.early_stop))
        .collect::<Result<_>>()?;
    let mut weighted: Vec<(f64, f64)> = draws
        .iter()
        .zip(&indicators)
        .filter(|&(_, &ind)| ind)
        .map(|(&x, _)| (x, beta_pdf(x, shape, shape) / density.pdf(x)))
        .collect();
    if config.pool_design {
        // Design replays are already paid for; fold the ones inside the
        // selection set in as extra draws.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let mut xs = beta_draws(config.n_design, shape, shape, config.stratified, &mut rng);
        xs.push(path.phi_obs());
        xs.sort_by(|p, q| p.partial_cmp(q).expect("design shares must not be NaN"));
        xs.dedup_by(|late, early| (*late - *early).abs() < MERGE_GAP);
        let design_ind: Vec<bool> = xs
            .par_iter()
            .map(|&x| detector.indicator(x, conditioning, observed, tau, config.early_stop))
            .collect::<Result<_>>()?;
        for (&x, &ind) in xs.iter().zip(&design_ind) {
            let q = density.pdf(x);
            if ind && q > 0.0 {
                weighted.push((x, beta_pdf(x, shape, shape) / q));
            }
        }
    }
    let den: f64 = weighted.iter().map(|&(_, w)| w).sum();
    if den <= 0.0 {
        return Err(Error::EmptySelection);
    }
    let num: f64 = weighted
        .iter()
        .filter(|&&(x, _)| x <= lo || x >= hi)
        .map(|&(_, w)| w)
        .sum();
    let sq: f64 = weighted.iter().map(|&(_, w)| w * w).sum();
    report.p_value = (num / den).clamp(0.0, 1.0);
    report
        .diagnostics
        .insert("design_points".into(), n_design as f64);
    report.diagnostics.insert("draws".into(), config.n_is as f64);
    report
        .diagnostics
        .insert("draws_in_set".into(), weighted.len() as f64);
    report
        .diagnostics
        .insert("effective_draws".into(), den * den / sq);
    report
        .diagnostics
        .insert("replays".into(), detector.replay_count() as f64);
    Ok(report)
}

/// Baseline estimator: draw shares from a Beta proposal, replay the
/// indicator at each, and form the weighted tail ratio. With the null
/// proposal every weight is exactly one.
///
/// # Errors
/// Fails when the tested changepoint was not detected or no draw lands in
/// the selection set.
pub fn naive_p_hat(
    path: &PhiPath,
    result: &DetectionResult,
    conditioning: Conditioning,
    config: &SamplerConfig,
) -> Result<PValueReport> {
    if config.n_is == 0 {
        return Err(Error::invalid_config("need at least 1 sampling draw"));
    }
    if let Some((c, d)) = config.proposal {
        if !(c > 0.0 && d > 0.0 && c.is_finite() && d.is_finite()) {
            return Err(Error::invalid_config("proposal shapes must be positive"));
        }
    }
    let (detector, tau) = bind_detector(path, result)?;
    let observed = &result.changepoints;
    let mut report = base_report(path, tau, Method::McNaive, conditioning);
    let (lo, hi) = (report.phi_lower, report.phi_upper);
    let shape = path.window().h() as f64 / 2.0;
    let (c, d) = config.proposal.unwrap_or((shape, shape));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(3);
    let draws = beta_draws(config.n_is, c, d, config.stratified, &mut rng);
    let indicators: Vec<bool> = draws
        .par_iter()
        .map(|&x| detector.indicator(x, conditioning, observed, tau, config.early_stop))
        .collect::<Result<_>>()?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut sq = 0.0;
    let mut in_set = 0usize;
    for (&x, &ind) in draws.iter().zip(&indicators) {
        if !ind {
            continue;
        }
        let w = beta_pdf(x, shape, shape) / beta_pdf(x, c, d);
        in_set += 1;
        den += w;
        sq += w * w;
        if x <= lo || x >= hi {
            num += w;
        }
    }
    if den <= 0.0 {
        return Err(Error::EmptySelection);
    }
    report.p_value = (num / den).clamp(0.0, 1.0);
    report.diagnostics.insert("draws".into(), config.n_is as f64);
    report.diagnostics.insert("draws_in_set".into(), in_set as f64);
    report
        .diagnostics
        .insert("effective_draws".into(), den * den / sq);
    report
        .diagnostics
        .insert("replays".into(), detector.replay_count() as f64);
    Ok(report)
}

/// Dispatches on the requested Monte Carlo method.
///
/// # Errors
/// Fails for the analytic method, which is not a sampler.
pub fn mc_p_value(
    path: &PhiPath,
    result: &DetectionResult,
    conditioning: Conditioning,
    method: Method,
    config: &SamplerConfig,
) -> Result<PValueReport> {
    match method {
        Method::McGp => gp_direct_p(path, result, conditioning, config),
        Method::McGpIs => gp_is_p(path, result, conditioning, config),
        Method::McNaive => naive_p_hat(path, result, conditioning, config),
        Method::ExactCusum => Err(Error::invalid_config(
            "the analytic method does not go through the sampler",
        )),
    }
}
