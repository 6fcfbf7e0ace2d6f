//! Executable forms of the analytical statements behind the method: the
//! variance identity of the control-variate estimator, the region and trace
//! conditions under which variance reduction is guaranteed, the convergence
//! bound calculators, first-order optimality residuals, objective
//! estimation, and the Laplace baseline.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{entropy, stein_score, w2_squared, Gaussian, RngState};
use crate::linalg::{cholesky, SpdMatrix};
use crate::targets::Target;

/// Side-by-side empirical variances of the plain and variance-reduced
/// estimators on a common sample stream, plus the analytic gap when the
/// target's Hessian is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub var_mc: f64,
    pub var_vr: f64,
    /// var_mc - var_vr.
    pub gap_empirical: f64,
    /// 2c Tr(E Hessian) - c^2 Tr(Sigma^{-1}), available when the Hessian
    /// does not depend on x.
    pub gap_analytic: Option<f64>,
    pub c_used: f64,
    /// Plug-in optimal coefficient Tr(E Hessian)/Tr(Sigma^{-1}).
    pub c_star: f64,
    /// Empirical variance ratio var_vr/var_mc.
    pub tau_hat: f64,
    pub n_samples: usize,
    /// Standard error of gap_empirical from the paired per-sample
    /// squared deviations.
    pub standard_error: f64,
}

/// Total variance (mean squared deviation from the sample mean) of a set of
/// vectors, with the unbiased 1/(n-1) normalization, plus per-sample squared
/// deviations for pairing.
fn total_variance(vs: &[DVector<f64>]) -> (f64, Vec<f64>) {
    let n = vs.len();
    let d = vs[0].len();
    let mean = vs.iter().fold(DVector::<f64>::zeros(d), |a, v| a + v) / n as f64;
    let devs: Vec<f64> = vs.iter().map(|v| (v - &mean).norm_squared()).collect();
    let var = devs.iter().sum::<f64>() / (n - 1) as f64;
    (var, devs)
}

/// Measures both estimators' variance on one shared stream of n draws
/// (common random numbers), so the empirical gap is directly comparable to
/// the analytic identity.
pub fn variance_gap_empirical(
    t: &dyn Target,
    g: &Gaussian,
    c: f64,
    n: usize,
    rng: &mut RngState,
) -> VarianceReport {
    assert!(n >= 100, "variance comparison needs at least 100 draws");
    let draws = g.sample(rng, n);
    let grads: Vec<DVector<f64>> = draws.iter().map(|x| t.gradient(x)).collect();
    let vrs: Vec<DVector<f64>> = if c == 0.0 {
        grads.clone()
    } else {
        draws
            .iter()
            .zip(&grads)
            .map(|(x, gr)| gr - stein_score(g, x).expect("draw matches its Gaussian") * c)
            .collect()
    };

    let (var_mc, devs_mc) = total_variance(&grads);
    let (var_vr, devs_vr) = total_variance(&vrs);
    let gap_empirical = var_mc - var_vr;

    // paired SE of the gap, scaled to match the 1/(n-1) normalization
    let diffs: Vec<f64> = devs_mc.iter().zip(&devs_vr).map(|(a, b)| a - b).collect();
    let dmean = diffs.iter().sum::<f64>() / n as f64;
    let dvar = diffs.iter().map(|v| (v - dmean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let standard_error = (dvar / n as f64).sqrt() * n as f64 / (n - 1) as f64;

    let hess_trace_mean =
        draws.iter().map(|x| t.hessian_trace(x)).sum::<f64>() / n as f64;
    let prec_trace = g.precision_trace();
    let c_star = hess_trace_mean / prec_trace;
    let gap_analytic = t
        .has_constant_hessian()
        .then(|| 2.0 * c * hess_trace_mean - c * c * prec_trace);
    let tau_hat = if var_mc > 0.0 { var_vr / var_mc } else { f64::NAN };

    VarianceReport {
        var_mc,
        var_vr,
        gap_empirical,
        gap_analytic,
        c_used: c,
        c_star,
        tau_hat,
        n_samples: n,
        standard_error,
    }
}

/// Sample estimate of the optimal coefficient
/// Tr(E Hessian V)/Tr(Sigma^{-1}); exact for constant-Hessian targets.
pub fn c_star(t: &dyn Target, g: &Gaussian, n: usize, rng: &mut RngState) -> f64 {
    assert!(n >= 1);
    let mean_trace = (0..n)
        .map(|_| t.hessian_trace(&g.sample_one(rng)))
        .sum::<f64>()
        / n as f64;
    mean_trace / g.precision_trace()
}

/// Outcome of the region membership test for guaranteed variance reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCheck {
    pub inside: bool,
    pub lhs: f64,
    pub radius: f64,
}

/// Variance reduction with coefficient c is guaranteed on the region where
/// 2 ell W2(mu, opt) + c |Tr(Sigma^{-1}) - Tr(Sigma_opt^{-1})| stays below
/// (2 - c) Tr(Sigma_opt^{-1}); ell is the Lipschitz constant of the
/// Laplacian of V (zero for Gaussian targets).
pub fn vr_region_check(g: &Gaussian, opt: &Gaussian, ell: f64, c: f64) -> Result<RegionCheck> {
    let w2 = w2_squared(g, opt)?.max(0.0).sqrt();
    let trace_diff = (g.precision_trace() - opt.precision_trace()).abs();
    let lhs = 2.0 * ell * w2 + c * trace_diff;
    let radius = (2.0 - c) * opt.precision_trace();
    Ok(RegionCheck {
        inside: lhs < radius,
        lhs,
        radius,
    })
}

/// In the strongly convex case, variance reduction holds at the current
/// iterate whenever Tr(Sigma^{-1}) < 2 alpha d / c (strict).
pub fn vr_trace_condition(g: &Gaussian, alpha: f64, c: f64) -> bool {
    assert!(alpha > 0.0 && c > 0.0);
    g.precision_trace() < 2.0 * alpha * g.dim() as f64 / c
}

/// First-order optimality residuals at g: the norm of the sampled mean
/// gradient and the Frobenius distance between the sampled mean Hessian and
/// Sigma^{-1}. Both vanish (up to Monte Carlo error) exactly at the
/// variational optimum.
pub fn optimality_residuals(
    t: &dyn Target,
    g: &Gaussian,
    n: usize,
    rng: &mut RngState,
) -> (f64, f64) {
    assert!(n >= 100);
    let d = g.dim();
    let mut grad_sum = DVector::<f64>::zeros(d);
    let mut hess_sum = nalgebra::DMatrix::<f64>::zeros(d, d);
    for _ in 0..n {
        let x = g.sample_one(rng);
        grad_sum += t.gradient(&x);
        hess_sum += t.hessian(&x);
    }
    let grad_norm = (grad_sum / n as f64).norm();
    let precision = g.chol().inverse();
    let hess_residual = (hess_sum / n as f64 - precision.as_matrix()).norm();
    (grad_norm, hess_residual)
}

/// Objective estimate: mean potential over n draws plus the exact negative
/// entropy of g. Only the potential term is sampled.
pub fn objective_f(t: &dyn Target, g: &Gaussian, n: usize, rng: &mut RngState) -> f64 {
    assert!(n >= 1);
    let mean_v = (0..n).map(|_| t.potential(&g.sample_one(rng))).sum::<f64>() / n as f64;
    mean_v - entropy(g)
}

/// Point estimate of the per-iteration variance ratio tau: the analytic
/// form 1 - gap/var_mc when the analytic gap is available, the raw
/// empirical ratio otherwise.
pub fn tau_estimate(report: &VarianceReport) -> Result<f64> {
    if !(report.var_mc > 0.0) {
        return Err(Error::DegenerateVariance(report.var_mc));
    }
    Ok(match report.gap_analytic {
        Some(gap) => 1.0 - gap / report.var_mc,
        None => report.var_vr / report.var_mc,
    })
}

/// Inputs to the convergence bound calculators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Strong convexity constant (0 for merely convex potentials).
    pub alpha: f64,
    /// Smoothness constant, > 0.
    pub beta: f64,
    pub eta: f64,
    pub n_steps: usize,
    pub dim: usize,
    /// Worst-case per-iteration variance ratio, in [0, 1].
    pub tau_max_inf: f64,
    /// Worst-case expected variance ratio, in [0, 1].
    pub tau_max_e: f64,
    /// Squared distance of the initialization to the optimum.
    pub w2sq_init: f64,
    /// Largest eigenvalue of the optimal covariance.
    pub lambda_max_opt: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.alpha.is_finite()
            && self.beta > 0.0
            && self.beta.is_finite()
            && self.eta > 0.0
            && self.eta.is_finite()
            && (0.0..=1.0).contains(&self.tau_max_inf)
            && (0.0..=1.0).contains(&self.tau_max_e)
            && self.w2sq_init >= 0.0
            && self.w2sq_init.is_finite()
            && self.lambda_max_opt > 0.0
            && self.lambda_max_opt.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bound inputs out of range: {self:?}")))
        }
    }

    fn curvature_constant(&self) -> f64 {
        24.0 * self.beta.powi(3) * self.lambda_max_opt
    }
}

/// Suboptimality bound for convex potentials (asymptotic in small eta):
/// e / (1 + C eta^2 (1 - tau_inf)/2) * (1/(2 eta N) + C eta / 2) * W0^2
/// + 3 eta beta d (1 + tau_E), with C = 24 beta^3 lambda_max. At tau = 1 this
/// is the plain Monte Carlo bound with its 6 beta eta d noise term.
pub fn bound_convex(inputs: &BoundInputs) -> f64 {
    let c = inputs.curvature_constant();
    let n = inputs.n_steps as f64;
    let damping = std::f64::consts::E / (1.0 + c * inputs.eta * inputs.eta * (1.0 - inputs.tau_max_inf) / 2.0);
    let transient = 1.0 / (2.0 * inputs.eta * n) + c * inputs.eta / 2.0;
    let noise = 3.0 * inputs.eta * inputs.beta * inputs.dim as f64 * (1.0 + inputs.tau_max_e);
    damping * transient * inputs.w2sq_init + noise
}

/// Squared-distance bound for alpha-strongly-convex potentials (asymptotic
/// in small eta): exp(-N (3 - tau_inf) eta alpha / 4) W0^2
/// + 24 (1 + tau_E) beta eta d / ((3 - tau_inf) alpha). Requires
/// eta <= alpha^2 / (24 beta^3) / 2; at tau = 1 it reduces to the plain
/// Monte Carlo bound exp(-alpha N eta / 2) W0^2 + 24 beta eta d / alpha.
pub fn bound_strongly_convex(inputs: &BoundInputs) -> Result<f64> {
    if inputs.alpha <= 0.0 {
        return Err(Error::PreconditionViolated(
            "strongly convex bound needs alpha > 0".into(),
        ));
    }
    let eta_cap = inputs.alpha * inputs.alpha / (48.0 * inputs.beta.powi(3));
    if inputs.eta > eta_cap {
        return Err(Error::PreconditionViolated(format!(
            "step size {} exceeds the bound's validity cap {eta_cap:.6e}",
            inputs.eta
        )));
    }
    let n = inputs.n_steps as f64;
    let shrink = 3.0 - inputs.tau_max_inf;
    let transient = (-n * shrink * inputs.eta * inputs.alpha / 4.0).exp() * inputs.w2sq_init;
    let noise = 24.0 * (1.0 + inputs.tau_max_e) * inputs.beta * inputs.eta * inputs.dim as f64
        / (shrink * inputs.alpha);
    Ok(transient + noise)
}

/// Gaussian fit at the mode: damped Newton from x0 (step halving until the
/// potential decreases, gradient direction when the Hessian does not
/// factorize), then N(mode, Hessian^{-1}).
pub fn laplace_approx(
    t: &dyn Target,
    x0: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<Gaussian> {
    let mut x = x0.clone();
    let mut v = t.potential(&x);
    for _ in 0..max_iter {
        let grad = t.gradient(&x);
        if grad.norm() < tol {
            let hess = SpdMatrix::from_symmetric_part(t.hessian(&x))?;
            let chol = cholesky(&hess).map_err(|_| Error::NonPdHessianAtMode)?;
            return Gaussian::new(x, chol.inverse());
        }
        let dir = match SpdMatrix::from_symmetric_part(t.hessian(&x))
            .and_then(|h| cholesky(&h))
        {
            Ok(ch) => ch.solve(&grad)?,
            Err(_) => grad.clone(),
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x - &dir * step;
            let vc = t.potential(&cand);
            // non-strict: near the mode the decrease drops below one ulp of
            // V while the gradient is still shrinking quadratically
            if vc <= v {
                x = cand;
                v = vc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence(max_iter));
        }
    }
    Err(Error::NoConvergence(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{
        random_gaussian_target, GaussianTarget, LogRegData, LogisticRegressionTarget,
        StudentTTarget,
    };
    use nalgebra::DMatrix;
    use rand::Rng;

    #[test]
    fn matching_covariance_collapses_vr_variance() {
        let mut rng = RngState::new(801);
        let t = random_gaussian_target(3, &mut rng).unwrap();
        let opt = t.optimum().unwrap();
        let g = Gaussian::new(opt.mean() + DVector::from_element(3, 1.0), opt.cov().clone())
            .unwrap();
        let rep = variance_gap_empirical(&t, &g, 1.0, 1000, &mut RngState::new(802));
        assert!(rep.var_vr < 1e-20, "vr variance {} not collapsed", rep.var_vr);
        assert!(rep.var_mc > 0.0);
        assert!((rep.gap_empirical - rep.var_mc).abs() < 1e-18);
        assert!((tau_estimate(&rep).unwrap()).abs() < 0.05);
    }

    #[test]
    fn worked_identity_example() {
        // target precision I (d = 2), g = N(0, 2I), c = 1:
        // gap = 2 Tr(I) - Tr((2I)^{-1}) = 4 - 1 = 3
        let t = GaussianTarget::new(DVector::zeros(2), SpdMatrix::identity(2)).unwrap();
        let g = Gaussian::new(DVector::zeros(2), SpdMatrix::scaled_identity(2, 2.0)).unwrap();
        let rep = variance_gap_empirical(&t, &g, 1.0, 100_000, &mut RngState::new(803));
        assert_eq!(rep.gap_analytic, Some(3.0));
        assert!(
            (rep.gap_empirical - 3.0).abs() <= 3.0 * rep.standard_error,
            "gap {} vs 3 with SE {}",
            rep.gap_empirical,
            rep.standard_error
        );
        assert!((rep.c_star - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficient_report_is_degenerate_gap() {
        let mut rng = RngState::new(804);
        let t = random_gaussian_target(2, &mut rng).unwrap();
        let g = Gaussian::standard(2);
        let rep = variance_gap_empirical(&t, &g, 0.0, 500, &mut RngState::new(805));
        assert_eq!(rep.gap_empirical, 0.0);
        assert_eq!(rep.var_mc, rep.var_vr);
        assert_eq!(rep.tau_hat, 1.0);
        assert_eq!(tau_estimate(&rep).unwrap(), 1.0);
    }

    #[test]
    fn identity_holds_across_random_configurations() {
        let master = RngState::new(806);
        let mut misses = 0;
        for trial in 0..50u64 {
            let mut rng = master.child(trial);
            let d = [2usize, 5, 10][trial as usize % 3];
            let t = random_gaussian_target(d, &mut rng).unwrap();
            let opt = t.optimum().unwrap();
            let g = Gaussian::new(
                opt.mean() + rng.normal_vector(d),
                SpdMatrix::from_symmetric_part(
                    opt.cov().as_matrix() * rng.rng().gen_range(0.5..2.0),
                )
                .unwrap(),
            )
            .unwrap();
            let c = rng.rng().gen_range(0.3..1.8);
            let rep = variance_gap_empirical(&t, &g, c, 20_000, &mut rng);
            let gap = rep.gap_analytic.unwrap();
            if (rep.gap_empirical - gap).abs() > 3.0 * rep.standard_error {
                misses += 1;
            }
        }
        assert!(misses <= 2, "{misses}/50 identity checks missed the 3-SE band");
    }

    #[test]
    fn c_star_closed_forms() {
        let t = GaussianTarget::new(DVector::zeros(3), SpdMatrix::identity(3)).unwrap();
        let g1 = Gaussian::standard(3);
        assert!((c_star(&t, &g1, 10, &mut RngState::new(807)) - 1.0).abs() < 1e-12);
        let g2 = Gaussian::new(DVector::zeros(3), SpdMatrix::scaled_identity(3, 2.0)).unwrap();
        assert!((c_star(&t, &g2, 10, &mut RngState::new(808)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn c_star_is_self_consistent_on_student_t() {
        let t = StudentTTarget::new(
            DVector::zeros(2),
            SpdMatrix::from_diagonal(&[1.0, 2.0]),
            4.0,
        )
        .unwrap();
        let g = Gaussian::standard(2);
        let n = 100_000;
        // estimate and a per-draw SE for the combined comparison
        let estimate = |seed: u64| -> (f64, f64) {
            let mut rng = RngState::new(seed);
            let traces: Vec<f64> = (0..n)
                .map(|_| t.hessian_trace(&g.sample_one(&mut rng)))
                .collect();
            let mean = traces.iter().sum::<f64>() / n as f64;
            let var = traces.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (mean / g.precision_trace(), (var / n as f64).sqrt() / g.precision_trace())
        };
        let (a, se_a) = estimate(809);
        let (b, se_b) = estimate(810);
        let combined = (se_a * se_a + se_b * se_b).sqrt();
        assert!(
            (a - b).abs() <= 3.0 * combined,
            "estimates {a} and {b} disagree beyond 3 SE {combined}"
        );
    }

    #[test]
    fn region_check_examples() {
        let mut rng = RngState::new(811);
        let t = random_gaussian_target(3, &mut rng).unwrap();
        let opt = t.optimum().unwrap();
        for c in [0.5, 1.0, 1.9] {
            let chk = vr_region_check(opt, opt, 0.0, c).unwrap();
            assert!(chk.inside);
            assert_eq!(chk.lhs, 0.0);
        }
        // different traces: near c = 2 the radius vanishes
        let g = Gaussian::new(opt.mean().clone(), SpdMatrix::scaled_identity(3, 1.0)).unwrap();
        let chk = vr_region_check(&g, opt, 0.0, 1.999).unwrap();
        assert!(!chk.inside);
        // ell = 0 reduces to trace arithmetic
        let c = 0.8;
        let chk = vr_region_check(&g, opt, 0.0, c).unwrap();
        let lhs = c * (g.precision_trace() - opt.precision_trace()).abs();
        let radius = (2.0 - c) * opt.precision_trace();
        assert!((chk.lhs - lhs).abs() < 1e-14);
        assert!((chk.radius - radius).abs() < 1e-14);
        assert_eq!(chk.inside, lhs < radius);
    }

    #[test]
    fn trace_condition_examples() {
        let g1 = Gaussian::standard(4);
        assert!(vr_trace_condition(&g1, 1.0, 1.0));
        let g2 = Gaussian::new(DVector::zeros(2), SpdMatrix::scaled_identity(2, 0.25)).unwrap();
        assert!(!vr_trace_condition(&g2, 1.0, 1.0));
        // exact boundary is excluded: Tr(I_4^{-1}) = 4 = 2 * 0.5 * 4 / 1
        assert!(!vr_trace_condition(&g1, 0.5, 1.0));
    }

    #[test]
    fn residuals_at_the_optimum() {
        let mut rng = RngState::new(812);
        let t = random_gaussian_target(4, &mut rng).unwrap();
        let opt = t.optimum().unwrap();
        let n = 10_000;
        let (grad_norm, hess_res) = optimality_residuals(&t, opt, n, &mut RngState::new(813));
        let band = 4.0 * (opt.precision_trace() / n as f64).sqrt();
        assert!(grad_norm <= band, "grad residual {grad_norm} above CLT band {band}");
        assert!(hess_res < 1e-12, "constant Hessian must cancel exactly");
    }

    #[test]
    fn residuals_detect_mean_shift_and_shrink() {
        let mut rng = RngState::new(814);
        let t = random_gaussian_target(4, &mut rng).unwrap();
        let opt = t.optimum().unwrap();
        let shift = DVector::from_element(4, 2.0);
        let g = Gaussian::new(opt.mean() + &shift, opt.cov().clone()).unwrap();
        let expect = (t.precision() * &shift).norm();
        let n = 40_000;
        let (grad_norm, _) = optimality_residuals(&t, &g, n, &mut RngState::new(815));
        // grad mean = P shift; per-draw covariance P Sigma P = P here
        let band = 4.0 * (opt.precision_trace() / n as f64).sqrt();
        assert!(
            (grad_norm - expect).abs() <= band,
            "shifted residual {grad_norm} vs {expect} (band {band})"
        );

        let (r_small, _) = optimality_residuals(&t, opt, 100, &mut RngState::new(816));
        let (r_large, _) = optimality_residuals(&t, opt, 10_000, &mut RngState::new(817));
        assert!(
            r_small > 3.0 * r_large,
            "1/sqrt(n) shrinkage not visible: {r_small} vs {r_large}"
        );
    }

    #[test]
    fn objective_estimate_matches_closed_form_in_1d() {
        let t = GaussianTarget::new(DVector::zeros(1), SpdMatrix::identity(1)).unwrap();
        let g = Gaussian::standard(1);
        let exact = 0.5 - entropy(&g);
        let n = 100_000;
        let f = objective_f(&t, &g, n, &mut RngState::new(818));
        // V = X^2/2 has variance 1/2 under N(0,1)
        let se = (0.5 / n as f64).sqrt();
        assert!((f - exact).abs() <= 3.0 * se);
        // n = 1 stays valid
        let _ = objective_f(&t, &g, 1, &mut RngState::new(819));
    }

    #[test]
    fn tau_estimate_rejects_degenerate_variance() {
        let rep = VarianceReport {
            var_mc: 0.0,
            var_vr: 0.0,
            gap_empirical: 0.0,
            gap_analytic: None,
            c_used: 1.0,
            c_star: 1.0,
            tau_hat: f64::NAN,
            n_samples: 100,
            standard_error: 0.0,
        };
        assert!(matches!(
            tau_estimate(&rep),
            Err(Error::DegenerateVariance(_))
        ));
    }

    fn random_bound_inputs(rng: &mut RngState) -> BoundInputs {
        let alpha = rng.rng().gen_range(0.1..2.0);
        let beta = alpha * rng.rng().gen_range(1.0..4.0);
        BoundInputs {
            alpha,
            beta,
            eta: alpha * alpha / (48.0 * beta.powi(3)) * rng.rng().gen_range(0.1..1.0),
            n_steps: rng.rng().gen_range(1..500),
            dim: rng.rng().gen_range(1..300),
            tau_max_inf: rng.rng().gen_range(0.0..1.0),
            tau_max_e: rng.rng().gen_range(0.0..1.0),
            w2sq_init: rng.rng().gen_range(0.0..100.0),
            lambda_max_opt: rng.rng().gen_range(0.1..10.0),
        }
    }

    #[test]
    fn strongly_convex_bound_reduces_to_plain_mc_at_tau_one() {
        let mut rng = RngState::new(820);
        for _ in 0..50 {
            let mut inp = random_bound_inputs(&mut rng);
            inp.tau_max_inf = 1.0;
            inp.tau_max_e = 1.0;
            inp.validate().unwrap();
            let ours = bound_strongly_convex(&inp).unwrap();
            let plain = (-inp.alpha * inp.n_steps as f64 * inp.eta / 2.0).exp() * inp.w2sq_init
                + 24.0 * inp.beta * inp.eta * inp.dim as f64 / inp.alpha;
            assert!(
                (ours - plain).abs() <= 1e-12 * plain.max(1.0),
                "tau = 1 must recover the plain bound: {ours} vs {plain}"
            );
        }
    }

    #[test]
    fn convex_bound_noise_coefficients() {
        let mut rng = RngState::new(821);
        let mut inp = random_bound_inputs(&mut rng);
        inp.w2sq_init = 0.0; // isolate the noise term
        inp.tau_max_inf = 1.0;
        inp.tau_max_e = 1.0;
        let at_one = bound_convex(&inp);
        let expect = 6.0 * inp.beta * inp.eta * inp.dim as f64;
        assert!((at_one - expect).abs() <= 1e-12 * expect);
        inp.tau_max_e = 0.0;
        let at_zero = bound_convex(&inp);
        assert!((at_zero - expect / 2.0).abs() <= 1e-12 * expect);
    }

    #[test]
    fn bounds_are_monotone_in_tau_and_distance() {
        let mut rng = RngState::new(822);
        for _ in 0..50 {
            let inp = random_bound_inputs(&mut rng);
            let bump = |f: &dyn Fn(&BoundInputs) -> f64, field: usize| {
                let mut hi = inp;
                match field {
                    0 => hi.tau_max_inf = (hi.tau_max_inf + 0.05).min(1.0),
                    1 => hi.tau_max_e = (hi.tau_max_e + 0.05).min(1.0),
                    _ => hi.w2sq_init += 1.0,
                }
                (f(&inp), f(&hi))
            };
            for field in 0..3 {
                let (lo, hi) = bump(&|i| bound_convex(i), field);
                assert!(hi >= lo - 1e-12, "convex bound not monotone in field {field}");
                let (lo, hi) = bump(&|i| bound_strongly_convex(i).unwrap(), field);
                assert!(hi >= lo - 1e-12, "strong bound not monotone in field {field}");
            }
        }
    }

    #[test]
    fn strongly_convex_bound_enforces_step_cap() {
        let mut rng = RngState::new(823);
        let mut inp = random_bound_inputs(&mut rng);
        inp.eta = inp.alpha * inp.alpha / (48.0 * inp.beta.powi(3)) * 1.01;
        assert!(matches!(
            bound_strongly_convex(&inp),
            Err(Error::PreconditionViolated(_))
        ));
        inp.alpha = 0.0;
        assert!(bound_strongly_convex(&inp).is_err());
    }

    #[test]
    fn laplace_recovers_gaussian_target_exactly() {
        let mut rng = RngState::new(824);
        let t = random_gaussian_target(4, &mut rng).unwrap();
        let opt = t.optimum().unwrap();
        let fit = laplace_approx(&t, &rng.normal_vector(4), 50, 1e-10).unwrap();
        assert!((fit.mean() - opt.mean()).amax() < 1e-10);
        assert!((fit.cov().as_matrix() - opt.cov().as_matrix()).amax() < 1e-10);
    }

    #[test]
    fn laplace_on_student_t_scales_the_covariance() {
        let scale = SpdMatrix::from_diagonal(&[1.0, 2.0, 0.5]);
        let loc = DVector::from_row_slice(&[0.3, -0.7, 1.1]);
        let nu = 4.0;
        let t = StudentTTarget::new(loc.clone(), scale.clone(), nu).unwrap();
        let fit = laplace_approx(&t, &DVector::zeros(3), 200, 1e-10).unwrap();
        assert!((fit.mean() - &loc).amax() < 1e-8);
        // Hessian at the location is ((nu + d)/nu) Sigma^{-1}
        let expect = scale.as_matrix() * (nu / (nu + 3.0));
        assert!(
            (fit.cov().as_matrix() - &expect).amax() < 1e-8,
            "covariance off by {}",
            (fit.cov().as_matrix() - &expect).amax()
        );
    }

    #[test]
    fn laplace_fails_on_separable_logistic_data() {
        let data = LogRegData {
            xs: DMatrix::from_row_slice(4, 1, &[1.0, 2.0, -1.0, -2.0]),
            ys: DVector::from_row_slice(&[1.0, 1.0, 0.0, 0.0]),
        };
        let t = LogisticRegressionTarget::new(data).unwrap();
        match laplace_approx(&t, &DVector::zeros(1), 100, 1e-8) {
            Err(Error::NoConvergence(_)) | Err(Error::NonPdHessianAtMode) => {}
            Err(other) => panic!("unexpected error {other}"),
            Ok(g) => assert!(
                g.mean().norm() > 10.0,
                "separable fit should run off to large norm, got {}",
                g.mean().norm()
            ),
        }
    }

    #[test]
    fn variance_report_serializes() {
        let mut rng = RngState::new(825);
        let t = random_gaussian_target(2, &mut rng).unwrap();
        let g = Gaussian::standard(2);
        let rep = variance_gap_empirical(&t, &g, 0.9, 500, &mut RngState::new(826));
        let json = serde_json::to_string(&rep).unwrap();
        let back: VarianceReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }
}
