//! Detector replays in share space.
//!
//! A `PhiDetector` reruns a recorded detector configuration on the
//! counterfactual series at any share `phi`, without materializing that
//! series: every statistic is evaluated through the affine sum-of-squares
//! forms of the `PhiPath`. The exact selection-set construction relies on
//! the replay and the inequality generator computing statistics through
//! the very same expressions, so a replay at an interval midpoint always
//! satisfies the inequalities generated from its own trace.

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::detect::engine::{run_count, run_threshold, EngineRun, PlainPicker, WbsPicker};
use crate::detect::pelt::run_pelt;
use crate::detect::scan::{cusum_direction, Split, SplitScan};
use crate::detect::{Algorithm, DetectionResult, StatKind, StopRule};
use crate::error::{Error, Result};
use crate::perturb::{cusum_phi_coeff, lr_phi_coeffs, lr_stat_phi, PhiPath};
use crate::pvalue::Conditioning;

/// Everything needed to rerun a detector, detached from its data.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ReplaySpec {
    pub algorithm: Algorithm,
    pub stat: StatKind,
    pub stop: StopRule,
    /// Drawn intervals, reused verbatim for WBS replays.
    pub intervals: Vec<(usize, usize)>,
}

impl ReplaySpec {
    pub(crate) fn from_result(result: &DetectionResult) -> Result<Self> {
        let intervals = match result.algorithm {
            Algorithm::Wbs => result.intervals.clone().ok_or_else(|| {
                Error::invalid_config("replaying a WBS result requires its drawn intervals")
            })?,
            _ => vec![],
        };
        Ok(ReplaySpec {
            algorithm: result.algorithm,
            stat: result.stat,
            stop: result.stop,
            intervals,
        })
    }
}

/// CUSUM scan over the perturbed squares at a fixed share.
struct CusumPhiScan<'p> {
    path: &'p PhiPath,
    phi: f64,
}

impl SplitScan for CusumPhiScan<'_> {
    fn best_split(&self, s: usize, e: usize) -> Result<Option<Split>> {
        if e - s < 2 {
            return Ok(None);
        }
        let mut best: Option<Split> = None;
        for k in s + 1..e {
            let (intercept, slope) = cusum_phi_coeff(self.path, s, e, k);
            let g = intercept + slope * self.phi;
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

/// LR scan over the perturbed squares at a fixed share.
struct LrPhiScan<'p> {
    path: &'p PhiPath,
    phi: f64,
}

impl SplitScan for LrPhiScan<'_> {
    fn best_split(&self, s: usize, e: usize) -> Result<Option<Split>> {
        if e - s < 4 {
            return Ok(None);
        }
        let mut best: Option<Split> = None;
        for k in s + 2..=e - 2 {
            let coeffs = lr_phi_coeffs(self.path, s, e, k);
            let lr = lr_stat_phi(&coeffs, self.phi)?;
            if best.as_ref().is_none_or(|b| lr > b.score) {
                let n1 = (k - s) as f64;
                let n2 = (e - k) as f64;
                let s1 = coeffs.left_intercept + coeffs.left_slope * self.phi;
                let s2 = coeffs.right_intercept + coeffs.right_slope * self.phi;
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

/// Serves cached splits for ranges whose statistic does not depend on the
/// share (drawn intervals disjoint from the window), falling back to the
/// wrapped scan everywhere else.
struct CachedScan<'c, S> {
    inner: S,
    cache: &'c HashMap<(usize, usize), Option<Split>>,
}

impl<S: SplitScan> SplitScan for CachedScan<'_, S> {
    fn best_split(&self, s: usize, e: usize) -> Result<Option<Split>> {
        if let Some(hit) = self.cache.get(&(s, e)) {
            return Ok(*hit);
        }
        self.inner.best_split(s, e)
    }
}

/// A detector configuration bound to a `PhiPath`, replayable at any share.
pub struct PhiDetector<'p> {
    path: &'p PhiPath,
    spec: ReplaySpec,
    /// Share-free best splits of window-disjoint drawn intervals.
    frozen: HashMap<(usize, usize), Option<Split>>,
    replays: AtomicUsize,
}

impl<'p> PhiDetector<'p> {
    pub(crate) fn new(path: &'p PhiPath, spec: ReplaySpec) -> Result<Self> {
        if matches!(spec.stop, StopRule::Penalty(_)) != matches!(spec.algorithm, Algorithm::Pelt) {
            return Err(Error::invalid_config(
                "penalty stop and the PELT algorithm imply each other",
            ));
        }
        let mut frozen = HashMap::new();
        let window = path.window();
        for &(a, b) in &spec.intervals {
            if b <= window.start() || a >= window.end() {
                // Any share gives the same statistic here; 0.5 is arbitrary.
                let split = match spec.stat {
                    StatKind::Cusum => CusumPhiScan { path, phi: 0.5 }.best_split(a, b)?,
                    StatKind::Lr => LrPhiScan { path, phi: 0.5 }.best_split(a, b)?,
                };
                frozen.insert((a, b), split);
            }
        }
        Ok(PhiDetector {
            path,
            spec,
            frozen,
            replays: AtomicUsize::new(0),
        })
    }

    /// Binds a recorded detection result to a path for replaying.
    pub fn from_result(path: &'p PhiPath, result: &DetectionResult) -> Result<Self> {
        Self::new(path, ReplaySpec::from_result(result)?)
    }

    pub fn path(&self) -> &PhiPath {
        self.path
    }

    pub(crate) fn spec(&self) -> &ReplaySpec {
        &self.spec
    }

    /// Number of replays performed so far (across threads).
    pub fn replay_count(&self) -> usize {
        self.replays.load(Ordering::Relaxed)
    }

    /// Reruns the detector at share `phi`, optionally stopping early via
    /// the callback invoked on each accepted split.
    pub(crate) fn run_with(
        &self,
        phi: f64,
        on_accept: impl FnMut(usize) -> ControlFlow<()>,
    ) -> Result<EngineRun> {
        self.replays.fetch_add(1, Ordering::Relaxed);
        let n = self.path.len();
        match self.spec.algorithm {
            Algorithm::Binseg => match self.spec.stat {
                StatKind::Cusum => {
                    let scan = CusumPhiScan { path: self.path, phi };
                    self.drive(&PlainPicker(&scan), n, on_accept)
                }
                StatKind::Lr => {
                    let scan = LrPhiScan { path: self.path, phi };
                    self.drive(&PlainPicker(&scan), n, on_accept)
                }
            },
            Algorithm::Wbs => match self.spec.stat {
                StatKind::Cusum => {
                    let scan = CachedScan {
                        inner: CusumPhiScan { path: self.path, phi },
                        cache: &self.frozen,
                    };
                    self.drive(
                        &WbsPicker {
                            scan: &scan,
                            intervals: &self.spec.intervals,
                        },
                        n,
                        on_accept,
                    )
                }
                StatKind::Lr => {
                    let scan = CachedScan {
                        inner: LrPhiScan { path: self.path, phi },
                        cache: &self.frozen,
                    };
                    self.drive(
                        &WbsPicker {
                            scan: &scan,
                            intervals: &self.spec.intervals,
                        },
                        n,
                        on_accept,
                    )
                }
            },
            Algorithm::Pelt => {
                let StopRule::Penalty(beta) = self.spec.stop else {
                    unreachable!("checked at construction");
                };
                let mut prefix = Vec::with_capacity(n + 1);
                for t in 0..=n {
                    let (intercept, slope) = self.path.sum_sq_affine(0, t);
                    prefix.push(intercept + slope * phi);
                }
                let changepoints = run_pelt(&prefix, beta, 2)?;
                Ok(EngineRun {
                    steps: vec![],
                    directions: vec![0; changepoints.len()],
                    changepoints,
                    stopped_early: false,
                })
            }
        }
    }

    fn drive<P: crate::detect::engine::SegmentPicker>(
        &self,
        picker: &P,
        n: usize,
        on_accept: impl FnMut(usize) -> ControlFlow<()>,
    ) -> Result<EngineRun> {
        match self.spec.stop {
            StopRule::Threshold(lambda) => run_threshold(picker, n, lambda, on_accept),
            StopRule::Count(k) => run_count(picker, n, k, on_accept),
            StopRule::Penalty(_) => unreachable!("checked at construction"),
        }
    }

    /// Full replay at share `phi`.
    pub(crate) fn run(&self, phi: f64) -> Result<EngineRun> {
        self.run_with(phi, |_| ControlFlow::Continue(()))
    }

    /// The changepoints the detector returns at share `phi`.
    pub fn model_at(&self, phi: f64) -> Result<Vec<usize>> {
        Ok(self.run(phi)?.changepoints)
    }

    /// Whether the selection event holds at share `phi`: the tested
    /// changepoint is detected (`TauInModel`) or the whole model is
    /// reproduced (`FullModel`). `observed` must be sorted.
    ///
    /// With `early_stop`, replays end as soon as the outcome is decided:
    /// when `tau` is accepted, or when a changepoint outside `observed`
    /// is accepted.
    pub fn indicator(
        &self,
        phi: f64,
        conditioning: Conditioning,
        observed: &[usize],
        tau: usize,
        early_stop: bool,
    ) -> Result<bool> {
        debug_assert!(observed.windows(2).all(|w| w[0] < w[1]));
        match conditioning {
            Conditioning::TauInModel => {
                if early_stop && self.spec.algorithm != Algorithm::Pelt {
                    let run = self.run_with(phi, |k| {
                        if k == tau {
                            ControlFlow::Break(())
                        } else {
                            ControlFlow::Continue(())
                        }
                    })?;
                    Ok(run.stopped_early || run.changepoints.binary_search(&tau).is_ok())
                } else {
                    Ok(self.run(phi)?.changepoints.binary_search(&tau).is_ok())
                }
            }
            Conditioning::FullModel => {
                if early_stop && self.spec.algorithm != Algorithm::Pelt {
                    let mut foreign = false;
                    let run = self.run_with(phi, |k| {
                        if observed.binary_search(&k).is_err() {
                            foreign = true;
                            ControlFlow::Break(())
                        } else {
                            ControlFlow::Continue(())
                        }
                    })?;
                    Ok(!foreign && run.changepoints == observed)
                } else {
                    Ok(self.run(phi)?.changepoints == observed)
                }
            }
        }
    }
}
