//! Small statistical helpers shared by the simulation harness and tests.

/// Kolmogorov-Smirnov distance between a sample and a reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    assert!(!sample.is_empty(), "KS statistic needs a non-empty sample");
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("sample must not contain NaN"));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// KS distance to the uniform distribution on `[0, 1]`.
pub fn ks_statistic_uniform(sample: &[f64]) -> f64 {
    ks_statistic(sample, |x| x.clamp(0.0, 1.0))
}

/// Asymptotic p-value of the one-sample KS statistic `d` at sample size `n`,
/// with the small-sample adjustment of the effective sample size.
pub fn ks_pvalue(n: usize, d: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    kolmogorov_sf(lambda)
}

/// Upper tail of the Kolmogorov distribution at `lambda`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    assert!(xs.len() >= 2);
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Pearson correlation coefficient of two equal-length samples.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 2);
    let ma = mean(a);
    let mb = mean(b);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}
