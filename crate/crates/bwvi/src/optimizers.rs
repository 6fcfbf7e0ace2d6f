//! The three optimization schemes over Gaussian iterates: the
//! forward-backward splitting with a control variate (svrgvi), the same
//! scheme with plain Monte Carlo (sgvi), and the fully forward-Euler
//! baseline (bwgd).
//!
//! One iteration is: estimate the mean force b and mean Hessian S under the
//! current iterate, move the mean against b, update the covariance through
//! I - eta*S, and (for the splitting schemes) apply the closed-form
//! entropy-proximal step, which keeps every covariance eigenvalue at or
//! above eta. The bwgd covariance update has no proximal correction and can
//! lose positive definiteness; that is reported as a diverged replica, not
//! a crash.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{mc_estimate, vr_estimate, CPolicy, GradientEstimate};
use crate::gaussian::{entropy, kl_gaussian, w2_squared, Gaussian, RngState};
use crate::linalg::{sym_eigen, symmetrize, SpdMatrix, EIGEN_CLAMP_RTOL};
use crate::targets::Target;

/// Any metric value above this, or any non-finite state, truncates the
/// replica and flags it as diverged.
pub const DIVERGENCE_CEILING: f64 = 1e12;

/// Sample count for the objective estimate recorded when no closed-form
/// optimum is available.
pub const OBJECTIVE_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Svrgvi,
    Sgvi,
    Bwgd,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algorithm::Svrgvi => "svrgvi",
            Algorithm::Sgvi => "sgvi",
            Algorithm::Bwgd => "bwgd",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svrgvi" => Ok(Algorithm::Svrgvi),
            "sgvi" => Ok(Algorithm::Sgvi),
            "bwgd" => Ok(Algorithm::Bwgd),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

fn default_minibatch() -> usize {
    1
}

fn default_record_every() -> usize {
    1
}

/// Everything one replica needs besides the target and the initial iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub steps: usize,
    pub c_policy: CPolicy,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, eta: f64, steps: usize, c_policy: CPolicy, seed: u64) -> Self {
        Self {
            algorithm,
            eta,
            steps,
            c_policy,
            minibatch: 1,
            seed,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive and finite, got {}",
                self.eta
            )));
        }
        if self.steps < 1 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if self.minibatch < 1 {
            return Err(Error::InvalidConfig("minibatch must be at least 1".into()));
        }
        if self.record_every < 1 {
            return Err(Error::InvalidConfig("record_every must be at least 1".into()));
        }
        self.c_policy.validate()?;
        let zero = self.c_policy == CPolicy::Zero;
        match self.algorithm {
            Algorithm::Svrgvi if zero => Err(Error::InvalidConfig(
                "svrgvi with a zero coefficient is sgvi; configure it as such".into(),
            )),
            Algorithm::Sgvi | Algorithm::Bwgd if !zero => Err(Error::InvalidConfig(format!(
                "{} does not use a control variate; its policy must be zero",
                self.algorithm
            ))),
            _ => Ok(()),
        }
    }
}

/// Per-iteration metrics, one row of the trace CSVs. Optional fields are
/// left empty when the metric does not apply (kl without a closed-form
/// optimum, variance columns outside variance-trace runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub kl: Option<f64>,
    pub f: Option<f64>,
    pub w2sq: Option<f64>,
    pub var_mc: Option<f64>,
    pub var_vr: Option<f64>,
    pub c_used: f64,
    pub diverged: bool,
    pub wall_ns: u64,
}

/// Output of one replica: Gaussian snapshots at the recording cadence plus
/// a metrics row per iteration. A diverged replica is truncated at the
/// failing step and flagged.
#[derive(Debug, Clone)]
pub struct Trace {
    pub iterates: Vec<(usize, Gaussian)>,
    pub records: Vec<IterRecord>,
    pub diverged: bool,
}

impl Trace {
    pub fn final_state(&self) -> &Gaussian {
        &self.iterates.last().expect("trace always holds the initial state").1
    }

    pub fn final_record(&self) -> &IterRecord {
        self.records.last().expect("trace always holds the initial record")
    }
}

/// Entropy-proximal step on the covariance: the unique minimizer of
/// negative entropy plus the squared Bures distance to sigma_half over
/// 2*eta. Because sigma_half and sigma_half + 4*eta*I share eigenvectors,
/// the minimizer is the per-eigenvalue map
/// lambda -> (lambda + 2 eta + sqrt(lambda (lambda + 4 eta))) / 2,
/// which is exact and symmetric by construction. Every output eigenvalue is
/// at least eta (the value of the map at lambda = 0).
pub fn backward_step(sigma_half: &SpdMatrix, eta: f64) -> Result<SpdMatrix> {
    debug_assert!(eta > 0.0);
    let eig = sym_eigen(sigma_half)?;
    let scale = eig.values[eig.values.len() - 1].abs().max(eig.values[0].abs());
    if eig.values[0] < -EIGEN_CLAMP_RTOL * scale {
        return Err(Error::NotPositiveSemiDefinite {
            eigenvalue: eig.values[0],
        });
    }
    let mapped = eig.reconstruct_mapped(|l| {
        let l = l.max(0.0);
        0.5 * (l + 2.0 * eta + (l * (l + 4.0 * eta)).sqrt())
    });
    SpdMatrix::from_symmetric_part(mapped)
}

/// Forward step on the potential followed by the entropy-proximal step:
/// m' = m - eta b, Sigma_half = (I - eta S) Sigma (I - eta S), then the
/// backward map. Output covariance is positive definite with smallest
/// eigenvalue at least eta for any input estimate.
pub fn fb_step(g: &Gaussian, est: &GradientEstimate, eta: f64) -> Result<Gaussian> {
    let d = g.dim();
    if est.b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: est.b.len(),
        });
    }
    let mean = g.mean() - &est.b * eta;
    let m = DMatrix::<f64>::identity(d, d) - &est.s * eta;
    let half = symmetrize(&(&m * g.cov().as_matrix() * m.transpose()));
    let cov = backward_step(&SpdMatrix::from_symmetric_part(half)?, eta)?;
    Gaussian::new(mean, cov)
}

/// Fully forward-Euler baseline: m' = m - eta b,
/// Sigma' = (I - eta (S - Sigma^{-1})) Sigma (same matrix transposed).
/// No proximal correction, so positive definiteness can be lost; the
/// resulting error is the divergence signal the runner records.
pub fn bwgd_step(g: &Gaussian, est: &GradientEstimate, eta: f64) -> Result<Gaussian> {
    let d = g.dim();
    if est.b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: est.b.len(),
        });
    }
    let mean = g.mean() - &est.b * eta;
    let precision = g.chol().inverse();
    let m = DMatrix::<f64>::identity(d, d) - (&est.s - precision.as_matrix()) * eta;
    let cov = symmetrize(&(&m * g.cov().as_matrix() * m.transpose()));
    Gaussian::new(mean, SpdMatrix::from_symmetric_part(cov)?)
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// KL and squared distance to the optimum when it is known; otherwise an
/// OBJECTIVE_SAMPLES-draw estimate of the objective (mean potential minus
/// entropy). Metric sampling uses its own stream so it never perturbs the
/// algorithm's draws.
fn evaluate_metrics(
    target: &dyn Target,
    g: &Gaussian,
    metric_rng: &mut RngState,
) -> (Option<f64>, Option<f64>, Option<f64>) {
    match target.optimum() {
        Some(opt) => {
            let kl = kl_gaussian(g, opt).ok().and_then(finite_or_none);
            let w2 = w2_squared(g, opt).ok().and_then(finite_or_none);
            (kl, None, w2)
        }
        None => {
            let draws = g.sample(metric_rng, OBJECTIVE_SAMPLES);
            let mean_v =
                draws.iter().map(|x| target.potential(x)).sum::<f64>() / OBJECTIVE_SAMPLES as f64;
            let f = mean_v - entropy(g);
            (None, finite_or_none(f), None)
        }
    }
}

fn metric_diverged(kl: Option<f64>, f: Option<f64>, had_optimum: bool) -> bool {
    match (kl, f, had_optimum) {
        // a known optimum with no finite kl means the state degenerated
        (None, _, true) => true,
        (Some(v), _, true) => v > DIVERGENCE_CEILING,
        (_, None, false) => true,
        (_, Some(v), false) => v > DIVERGENCE_CEILING,
    }
}

/// Runs one replica: `steps` iterations from `init`, recording metrics every
/// iteration and Gaussian snapshots at the record_every cadence (plus the
/// initial and final states). Deterministic given (config, target, init).
pub fn run(config: &RunConfig, target: &dyn Target, init: &Gaussian) -> Result<Trace> {
    config.validate()?;
    if init.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: init.dim(),
        });
    }

    let mut rng = RngState::new(config.seed);
    // Salted child stream so objective sampling is independent of the
    // algorithm's draws and of the recording cadence.
    let mut metric_rng = RngState::new(config.seed).child(0x4d45_5452);

    let has_optimum = target.optimum().is_some();
    let mut iterates = vec![(0usize, init.clone())];
    let (kl0, f0, w20) = evaluate_metrics(target, init, &mut metric_rng);
    let mut records = vec![IterRecord {
        iter: 0,
        kl: kl0,
        f: f0,
        w2sq: w20,
        var_mc: None,
        var_vr: None,
        c_used: 0.0,
        diverged: false,
        wall_ns: 0,
    }];

    let mut current = init.clone();
    let mut diverged = false;

    for k in 1..=config.steps {
        let started = Instant::now();
        let est = match config.algorithm {
            Algorithm::Svrgvi => {
                vr_estimate(target, &current, &mut rng, config.minibatch, &config.c_policy)
            }
            Algorithm::Sgvi | Algorithm::Bwgd => {
                mc_estimate(target, &current, &mut rng, config.minibatch)
            }
        };
        let stepped = match config.algorithm {
            Algorithm::Bwgd => bwgd_step(&current, &est, config.eta),
            _ => fb_step(&current, &est, config.eta),
        };
        let wall_ns = started.elapsed().as_nanos() as u64;

        match stepped {
            Ok(next) => {
                let (kl, f, w2sq) = evaluate_metrics(target, &next, &mut metric_rng);
                let fell_off = metric_diverged(kl, f, has_optimum);
                records.push(IterRecord {
                    iter: k,
                    kl,
                    f,
                    w2sq,
                    var_mc: None,
                    var_vr: None,
                    c_used: est.c_used,
                    diverged: fell_off,
                    wall_ns,
                });
                if fell_off {
                    iterates.push((k, next));
                    diverged = true;
                    break;
                }
                if k % config.record_every == 0 || k == config.steps {
                    iterates.push((k, next.clone()));
                }
                current = next;
            }
            Err(
                Error::NotPositiveDefinite { .. }
                | Error::NotPositiveSemiDefinite { .. }
                | Error::NonFiniteEntry
                | Error::DegenerateVariance(_),
            ) => {
                records.push(IterRecord {
                    iter: k,
                    kl: None,
                    f: None,
                    w2sq: None,
                    var_mc: None,
                    var_vr: None,
                    c_used: est.c_used,
                    diverged: true,
                    wall_ns,
                });
                if iterates.last().map(|(i, _)| *i) != Some(k - 1) {
                    iterates.push((k - 1, current.clone()));
                }
                diverged = true;
                break;
            }
            Err(other) => return Err(other),
        }
    }

    Ok(Trace {
        iterates,
        records,
        diverged,
    })
}
