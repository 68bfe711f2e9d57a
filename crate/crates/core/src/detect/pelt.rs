use crate::error::{Error, Result};

/// Gaussian variance segment cost from prefix sums of centered squares:
/// `n * ln(SS / n)` for segment `[s, e)`.
fn seg_cost(prefix: &[f64], s: usize, e: usize) -> Result<f64> {
    let n = (e - s) as f64;
    let ss = prefix[e] - prefix[s];
    if ss <= 0.0 {
        return Err(Error::DegenerateSegment {
            start: s,
            end: e,
            reason: "zero sum of squares; variance cost is undefined".into(),
        });
    }
    Ok(n * (ss / n).ln())
}

/// Optimal-partition search with pruning.
///
/// Minimizes the summed variance cost plus `penalty` per segment, with
/// segments at least `min_seg` long. Splitting a segment never increases
/// the cost (the likelihood-ratio gain is nonnegative), so a start that
/// loses to `F[t]` stays dominated through any future time that can route
/// through `t`. That domination argument needs `[t, t')` to be a legal
/// segment, so a start pruned at `t` leaves the candidate set only once
/// `t' >= t + min_seg`.
pub(crate) fn run_pelt(prefix: &[f64], penalty: f64, min_seg: usize) -> Result<Vec<usize>> {
    let n = prefix.len() - 1;
    if n < min_seg {
        return Ok(vec![]);
    }
    let inf = f64::INFINITY;
    // f[t]: optimal cost of [0, t) including one penalty per segment.
    let mut f = vec![inf; n + 1];
    f[0] = -penalty;
    let mut back = vec![0usize; n + 1];
    let mut candidates: Vec<usize> = vec![0];
    // Starts pruned at time `t - min_seg` become removable now.
    let mut pending: std::collections::VecDeque<(usize, Vec<usize>)> = Default::default();
    for t in min_seg..=n {
        while pending.front().is_some_and(|(eff, _)| *eff <= t) {
            let (_, dead) = pending.pop_front().unwrap();
            candidates.retain(|s| !dead.contains(s));
        }
        let mut best = inf;
        let mut best_s = 0;
        let mut costs = Vec::with_capacity(candidates.len());
        for &s in &candidates {
            let c = seg_cost(prefix, s, t)?;
            costs.push(c);
            let total = f[s] + c + penalty;
            if total < best {
                best = total;
                best_s = s;
            }
        }
        f[t] = best;
        back[t] = best_s;
        let dead: Vec<usize> = candidates
            .iter()
            .zip(&costs)
            .filter(|&(&s, &c)| f[s] + c > f[t])
            .map(|(&s, _)| s)
            .collect();
        if !dead.is_empty() {
            pending.push_back((t + min_seg, dead));
        }
        // The start that becomes admissible for t + 1.
        let new_start = t + 1 - min_seg;
        if f[new_start].is_finite() {
            candidates.push(new_start);
        }
    }
    let mut cps = Vec::new();
    let mut t = n;
    while t > 0 {
        let s = back[t];
        if s > 0 {
            cps.push(s);
        }
        t = s;
    }
    cps.reverse();
    Ok(cps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prefix_of(xs: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0];
        let mut acc = 0.0;
        for x in xs {
            acc += x * x;
            p.push(acc);
        }
        p
    }

    /// Exhaustive optimal partitioning by dynamic programming without
    /// pruning; an independent check that pruning never drops the optimum.
    fn exhaustive_dp(prefix: &[f64], penalty: f64, min_seg: usize) -> (f64, Vec<usize>) {
        let n = prefix.len() - 1;
        let inf = f64::INFINITY;
        let mut f = vec![inf; n + 1];
        f[0] = -penalty;
        let mut back = vec![0usize; n + 1];
        for t in min_seg..=n {
            for s in 0..=t - min_seg {
                if !f[s].is_finite() {
                    continue;
                }
                let c = seg_cost(prefix, s, t).unwrap();
                if f[s] + c + penalty < f[t] {
                    f[t] = f[s] + c + penalty;
                    back[t] = s;
                }
            }
        }
        let mut cps = Vec::new();
        let mut t = n;
        while t > 0 {
            let s = back[t];
            if s > 0 {
                cps.push(s);
            }
            t = s;
        }
        cps.reverse();
        (f[n], cps)
    }

    #[test]
    fn pruning_keeps_the_optimum_on_random_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..60 {
            let n = rng.random_range(4..=40);
            let xs: Vec<f64> = (0..n)
                .map(|i| {
                    let scale = if i < n / 2 { 1.0 } else { 2.5 };
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    z * scale
                })
                .collect();
            let prefix = prefix_of(&xs);
            for &penalty in &[1.0, 3.0, 8.0] {
                let fast = run_pelt(&prefix, penalty, 2).unwrap();
                let (_, slow) = exhaustive_dp(&prefix, penalty, 2);
                assert_eq!(fast, slow, "trial {trial} penalty {penalty}");
            }
        }
    }

    #[test]
    fn brute_force_partition_enumeration_agrees_on_tiny_series() {
        use rand::{Rng, SeedableRng};
        // Enumerate all changepoint subsets with segments >= 2 long.
        fn brute(prefix: &[f64], penalty: f64) -> (f64, Vec<usize>) {
            let n = prefix.len() - 1;
            let mut best = (f64::INFINITY, vec![]);
            let positions: Vec<usize> = (2..=n.saturating_sub(2)).collect();
            let m = positions.len();
            for mask in 0..(1u32 << m) {
                let cps: Vec<usize> = positions
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &p)| p)
                    .collect();
                let mut bounds = vec![0];
                bounds.extend(&cps);
                bounds.push(n);
                if bounds.windows(2).any(|w| w[1] - w[0] < 2) {
                    continue;
                }
                let cost: f64 = bounds
                    .windows(2)
                    .map(|w| seg_cost(prefix, w[0], w[1]).unwrap() + penalty)
                    .sum();
                if cost < best.0 {
                    best = (cost, cps);
                }
            }
            best
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(4..=12);
            let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let prefix = prefix_of(&xs);
            for &penalty in &[0.5, 2.0, 6.0] {
                let fast = run_pelt(&prefix, penalty, 2).unwrap();
                let (_, slow) = brute(&prefix, penalty);
                assert_eq!(fast, slow, "n={n} penalty={penalty}");
            }
        }
    }

    #[test]
    fn higher_penalty_never_adds_changepoints() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..120)
            .map(|i| {
                let scale = match i {
                    0..=39 => 1.0,
                    40..=79 => 3.0,
                    _ => 0.7,
                };
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                z * scale
            })
            .collect();
        let prefix = prefix_of(&xs);
        let mut last = usize::MAX;
        for &penalty in &[0.5, 2.0, 4.0, 8.0, 16.0, 64.0] {
            let cps = run_pelt(&prefix, penalty, 2).unwrap();
            assert!(cps.len() <= last, "penalty {penalty}");
            last = cps.len();
        }
    }
}
