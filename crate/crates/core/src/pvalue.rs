use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::beta::beta_cdf;
use crate::error::{Error, Result};
use crate::interval::IntervalUnion;

/// How a p-value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Analytic selection set and truncated Beta tail (CUSUM detectors).
    ExactCusum,
    /// Surrogate-conditioned density, tail mass read off the grid.
    McGp,
    /// Surrogate-conditioned density used as an importance proposal.
    McGpIs,
    /// Plain weighted Monte Carlo ratio without a surrogate.
    McNaive,
}

/// Which selection event the p-value conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// The tested changepoint is among those the detector returns.
    TauInModel,
    /// The detector returns exactly the observed set of changepoints.
    FullModel,
}

/// A post-selection p-value for one changepoint, with enough context to
/// reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    /// The tested changepoint (number of observations before the change).
    pub tau_hat: usize,
    pub p_value: f64,
    /// Observed left-window share of the window sum of squares.
    pub phi_obs: f64,
    /// Lower endpoint of the two-sided rejection region.
    pub phi_lower: f64,
    /// Upper endpoint of the two-sided rejection region.
    pub phi_upper: f64,
    pub method: Method,
    pub conditioning: Conditioning,
    /// Free-form numeric diagnostics (replay counts, set masses, ...).
    /// A sorted map so serialized output is deterministic.
    pub diagnostics: BTreeMap<String, f64>,
}

/// Two-sided rejection bounds for an observed share `phi_obs`.
///
/// The share is Beta(h/2, h/2) under the null; by symmetry the equal-tail
/// counterpart of `phi_obs` is `1 - phi_obs`, so the region more extreme
/// than the observation is `[0, lo] ∪ [hi, 1]` with the bounds returned
/// here. Requires `phi_obs` strictly inside `(0, 1)`.
pub fn two_sided_bounds(phi_obs: f64, h: usize) -> (f64, f64) {
    debug_assert!(h > 0);
    debug_assert!(0.0 < phi_obs && phi_obs < 1.0);
    let mirror = 1.0 - phi_obs;
    (phi_obs.min(mirror), phi_obs.max(mirror))
}

/// Two-sided p-value ignoring selection: Beta(h/2, h/2) mass of the
/// rejection region.
pub fn unconditional_two_sided_p(phi_obs: f64, h: usize) -> f64 {
    let (lo, hi) = two_sided_bounds(phi_obs, h);
    let a = h as f64 / 2.0;
    (beta_cdf(lo, a, a) + (1.0 - beta_cdf(hi, a, a))).min(1.0)
}

/// Numerator and denominator masses of the truncated two-sided tail:
/// Beta(h/2, h/2) mass of `S ∩ ([0, lo] ∪ [hi, 1])` and of `S`.
pub(crate) fn truncated_masses(
    s: &IntervalUnion,
    phi_lower: f64,
    phi_upper: f64,
    h: usize,
) -> (f64, f64) {
    let a = h as f64 / 2.0;
    let den = s.beta_mass(a, a);
    let num = s.intersect(0.0, phi_lower).beta_mass(a, a)
        + s.intersect(phi_upper, 1.0).beta_mass(a, a);
    (num, den)
}

/// Probability that a Beta(h/2, h/2) variable truncated to `S` lands in
/// the two-sided rejection region `[0, phi_lower] ∪ [phi_upper, 1]`.
///
/// # Errors
/// Fails with an underflow error when the Beta mass of `S` is numerically
/// zero (below 1e-300), since the conditional law is then undefined.
pub fn truncated_beta_tail_prob(
    s: &IntervalUnion,
    phi_lower: f64,
    phi_upper: f64,
    h: usize,
) -> Result<f64> {
    let (num, den) = truncated_masses(s, phi_lower, phi_upper, h);
    if den < 1e-300 {
        return Err(Error::Underflow(format!(
            "selection set has Beta mass {den:.3e}; conditional tail probability is undefined"
        )));
    }
    Ok((num / den).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_are_symmetric_complements() {
        let (lo, hi) = two_sided_bounds(0.3, 10);
        assert_eq!((lo, hi), (0.3, 0.7));
        let (lo, hi) = two_sided_bounds(0.8, 10);
        assert_eq!((lo, hi), (0.19999999999999996, 0.8));
        assert!((lo + hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unconditional_p_at_median_is_one() {
        assert!((unconditional_two_sided_p(0.5, 8) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unconditional_p_doubles_the_smaller_tail() {
        // Symmetric Beta: two-sided p = 2 * min(cdf, 1 - cdf).
        for &(phi, h) in &[(0.2, 10), (0.9, 4), (0.45, 40)] {
            let a = h as f64 / 2.0;
            let tail = beta_cdf(phi, a, a).min(1.0 - beta_cdf(phi, a, a));
            let p = unconditional_two_sided_p(phi, h);
            assert!((p - 2.0 * tail).abs() < 1e-12, "phi={phi} h={h}");
        }
    }

    #[test]
    fn truncation_to_full_set_recovers_unconditional_p() {
        let s = IntervalUnion::full();
        for &(phi, h) in &[(0.25, 12), (0.61, 20)] {
            let (lo, hi) = two_sided_bounds(phi, h);
            let p = truncated_beta_tail_prob(&s, lo, hi, h).unwrap();
            assert!((p - unconditional_two_sided_p(phi, h)).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_can_only_grow_this_example() {
        // Removing central mass from the conditioning set inflates the tail
        // probability relative to the unconditional two-sided p.
        let s = IntervalUnion::new(vec![(0.0, 0.35), (0.65, 1.0)]);
        let (lo, hi) = two_sided_bounds(0.3, 10);
        let p = truncated_beta_tail_prob(&s, lo, hi, 10).unwrap();
        assert!(p > unconditional_two_sided_p(0.3, 10));
        assert!(p <= 1.0);
    }

    #[test]
    fn splitting_pieces_does_not_change_the_answer() {
        let joined = IntervalUnion::new(vec![(0.1, 0.5), (0.7, 0.95)]);
        let split = IntervalUnion::new(vec![(0.1, 0.3), (0.3, 0.5), (0.7, 0.8), (0.8, 0.95)]);
        let p1 = truncated_beta_tail_prob(&joined, 0.25, 0.75, 14).unwrap();
        let p2 = truncated_beta_tail_prob(&split, 0.25, 0.75, 14).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn empty_selection_set_is_an_underflow_error() {
        let s = IntervalUnion::empty();
        assert!(matches!(
            truncated_beta_tail_prob(&s, 0.2, 0.8, 10),
            Err(Error::Underflow(_))
        ));
    }

    #[test]
    fn report_serializes_with_kebab_case_tags() {
        let report = PValueReport {
            tau_hat: 100,
            p_value: 0.04,
            phi_obs: 0.21,
            phi_lower: 0.21,
            phi_upper: 0.79,
            method: Method::ExactCusum,
            conditioning: Conditioning::TauInModel,
            diagnostics: BTreeMap::new(),
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"exact-cusum\""));
        assert!(json.contains("\"tau-in-model\""));
    }
}
