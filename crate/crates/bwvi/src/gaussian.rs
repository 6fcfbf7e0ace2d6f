//! Gaussian distributions and the 2-Wasserstein geometry between them.
//!
//! A [`Gaussian`] owns its covariance together with a cached Cholesky factor,
//! so sampling, scores and KL evaluations after construction cost O(d^2) per
//! vector. Distances use the closed Bures form, computed through symmetric
//! eigendecompositions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, spd_sqrt, sym_eigen, symmetrize, CholeskyFactor, SpdMatrix, CHOLESKY_PIVOT_RTOL,
};

/// Covariances whose largest diagonal entry is at or below this are rejected
/// as numerically degenerate even when technically positive definite; W2 and
/// KL values against them are meaningless at f64 precision.
pub const COV_DEGENERACY_FLOOR: f64 = 1e-12;

/// Negative W2^2 round-off within `-W2_CLAMP_ATOL * scale` is clamped to zero.
pub const W2_CLAMP_ATOL: f64 = 1e-9;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seeded random stream. One `RngState` is single-owner; experiments derive
/// independent child streams from the master seed, never from stream position,
/// so replicas stay reproducible regardless of evaluation order.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream `index`, derived by hashing (master seed, index).
    pub fn child(&self, index: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(index)))
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// d i.i.d. standard normals, drawn in index order.
    pub fn normal_vector(&mut self, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.standard_normal())
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Non-degenerate Gaussian N(mean, cov) with a cached Cholesky factor and
/// cached tr(cov^{-1}).
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: SpdMatrix,
    chol: CholeskyFactor,
    precision_trace: f64,
}

impl Gaussian {
    /// Validates dimensions and finiteness, rejects degenerate covariances,
    /// and factorizes once. This is the single O(d^3) factorization per
    /// distribution; everything downstream reuses it.
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                got: mean.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry);
        }
        let max_diag = (0..cov.dim()).fold(0.0_f64, |acc, i| {
            acc.max(cov.as_matrix()[(i, i)].abs())
        });
        if max_diag <= COV_DEGENERACY_FLOOR {
            // Well-conditioned but vanishing covariances pass the relative
            // pivot gate, so degeneracy needs its own absolute floor.
            return Err(Error::NotPositiveDefinite {
                index: 0,
                pivot: max_diag,
            });
        }
        let chol = cholesky(&cov)?;
        let precision_trace = chol.trace_inverse();
        Ok(Self {
            mean,
            cov,
            chol,
            precision_trace,
        })
    }

    /// N(0, I_d).
    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), SpdMatrix::identity(d))
            .expect("identity covariance is positive definite")
    }

    /// N(0, var * I_d).
    pub fn isotropic(d: usize, var: f64) -> Result<Self> {
        Self::new(DVector::zeros(d), SpdMatrix::scaled_identity(d, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn chol(&self) -> &CholeskyFactor {
        &self.chol
    }

    /// Cached tr(cov^{-1}).
    pub fn precision_trace(&self) -> f64 {
        self.precision_trace
    }

    pub fn logdet_cov(&self) -> f64 {
        self.chol.logdet()
    }

    /// One draw mean + L z, O(d^2) against the cached factor.
    pub fn sample_one(&self, rng: &mut RngState) -> DVector<f64> {
        let z = rng.normal_vector(self.dim());
        &self.mean + self.chol.lower() * z
    }

    /// n independent draws in stream order.
    pub fn sample(&self, rng: &mut RngState, n: usize) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// Differential entropy of a Gaussian: (d ln(2 pi) + d + logdet cov) / 2.
/// The variational objective uses its negation.
pub fn entropy(g: &Gaussian) -> f64 {
    let d = g.dim() as f64;
    0.5 * (d * (2.0 * std::f64::consts::PI).ln() + d + g.logdet_cov())
}

/// Squared Bures distance between covariance matrices:
/// tr(S0) + tr(S1) - 2 tr((S0^{1/2} S1 S0^{1/2})^{1/2}).
pub fn bures_squared(s0: &SpdMatrix, s1: &SpdMatrix) -> Result<f64> {
    if s0.dim() != s1.dim() {
        return Err(Error::DimensionMismatch {
            expected: s0.dim(),
            got: s1.dim(),
        });
    }
    let r0 = spd_sqrt(s0)?;
    let inner = SpdMatrix::from_symmetric_part(r0.as_matrix() * s1.as_matrix() * r0.as_matrix())?;
    let cross = spd_sqrt(&inner)?;
    let raw = s0.trace() + s1.trace() - 2.0 * cross.trace();
    let scale = 1.0 + s0.trace().abs() + s1.trace().abs();
    if raw < 0.0 {
        if raw < -W2_CLAMP_ATOL * scale {
            return Err(Error::PreconditionViolated(format!(
                "Bures distance computed substantially negative: {raw:.3e}"
            )));
        }
        return Ok(0.0);
    }
    Ok(raw)
}

/// Squared 2-Wasserstein distance between Gaussians:
/// ||m0 - m1||^2 + Bures^2(S0, S1).
pub fn w2_squared(p0: &Gaussian, p1: &Gaussian) -> Result<f64> {
    if p0.dim() != p1.dim() {
        return Err(Error::DimensionMismatch {
            expected: p0.dim(),
            got: p1.dim(),
        });
    }
    let dm = p0.mean() - p1.mean();
    Ok(dm.norm_squared() + bures_squared(p0.cov(), p1.cov())?)
}

/// KL(p0 || p1) in closed form, reusing the cached factor of p1 for all
/// solves.
pub fn kl_gaussian(p0: &Gaussian, p1: &Gaussian) -> Result<f64> {
    if p0.dim() != p1.dim() {
        return Err(Error::DimensionMismatch {
            expected: p1.dim(),
            got: p0.dim(),
        });
    }
    let d = p0.dim() as f64;
    let trace_term = p1.chol().solve_matrix(p0.cov().as_matrix())?.trace();
    let dm = p1.mean() - p0.mean();
    let quad = dm.dot(&p1.chol().solve(&dm)?);
    Ok(0.5 * (trace_term + quad - d + p1.logdet_cov() - p0.logdet_cov()))
}

/// Linear part A and the base points of the optimal transport map
/// T(x) = m1 + A (x - m0) from p0 to p1, with
/// A = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}.
pub fn ot_map_linear(p0: &Gaussian, p1: &Gaussian) -> Result<DMatrix<f64>> {
    if p0.dim() != p1.dim() {
        return Err(Error::DimensionMismatch {
            expected: p0.dim(),
            got: p1.dim(),
        });
    }
    let eig = sym_eigen(p0.cov())?;
    let lam_max = eig.values[eig.values.len() - 1];
    if eig.values[0] <= CHOLESKY_PIVOT_RTOL * lam_max {
        return Err(Error::NotPositiveDefinite {
            index: 0,
            pivot: eig.values[0],
        });
    }
    let root = eig.reconstruct_mapped(f64::sqrt);
    let inv_root = eig.reconstruct_mapped(|v| 1.0 / v.sqrt());
    let inner = SpdMatrix::from_symmetric_part(&root * p1.cov().as_matrix() * &root)?;
    let mid = spd_sqrt(&inner)?;
    Ok(symmetrize(&(&inv_root * mid.as_matrix() * &inv_root)))
}

/// Applies the optimal transport map from p0 to p1 at x.
pub fn ot_map(p0: &Gaussian, p1: &Gaussian, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != p0.dim() {
        return Err(Error::DimensionMismatch {
            expected: p0.dim(),
            got: x.len(),
        });
    }
    let a = ot_map_linear(p0, p1)?;
    Ok(p1.mean() + a * (x - p0.mean()))
}

/// Score-like control variate direction cov^{-1} (x - mean); O(d^2) via the
/// cached factor. Has mean zero under g, which is what makes it a valid
/// control variate.
pub fn stein_score(g: &Gaussian, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: x.len(),
        });
    }
    g.chol().solve(&(x - g.mean()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_gaussian(d: usize, seed: u64) -> Gaussian {
        let mut rng = RngState::new(seed);
        let a = DMatrix::from_fn(d, d, |_, _| rng.rng().gen_range(-1.0..1.0));
        let cov = SpdMatrix::from_symmetric_part(&a * a.transpose() + DMatrix::identity(d, d) * 0.4)
            .unwrap();
        let mean = DVector::from_fn(d, |_, _| rng.rng().gen_range(-2.0..2.0));
        Gaussian::new(mean, cov).unwrap()
    }

    #[test]
    fn construction_validates_inputs() {
        let bad_dim = Gaussian::new(DVector::zeros(3), SpdMatrix::identity(2));
        assert!(matches!(bad_dim, Err(Error::DimensionMismatch { .. })));

        let degenerate = Gaussian::new(
            DVector::from_element(2, 7.0),
            SpdMatrix::scaled_identity(2, 1e-16),
        );
        assert!(
            matches!(degenerate, Err(Error::NotPositiveDefinite { .. })),
            "degenerate covariance must fail at construction, not at sampling"
        );

        let indefinite = Gaussian::new(
            DVector::zeros(2),
            SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap(),
        );
        assert!(matches!(indefinite, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let g = random_gaussian(4, 9);
        let a = g.sample(&mut RngState::new(123), 5);
        let b = g.sample(&mut RngState::new(123), 5);
        assert_eq!(a, b, "identical seeds must give identical draws");
        let c = g.sample(&mut RngState::new(124), 5);
        assert_ne!(a, c);
    }

    #[test]
    fn child_streams_are_reproducible_and_distinct() {
        let master = RngState::new(7);
        let mut c0 = master.child(0);
        let mut c0b = master.child(0);
        let mut c1 = master.child(1);
        let x0: Vec<f64> = (0..4).map(|_| c0.standard_normal()).collect();
        let x0b: Vec<f64> = (0..4).map(|_| c0b.standard_normal()).collect();
        let x1: Vec<f64> = (0..4).map(|_| c1.standard_normal()).collect();
        assert_eq!(x0, x0b);
        assert_ne!(x0, x1);
    }

    #[test]
    fn sample_moments_match_standard_normal() {
        let g = Gaussian::standard(2);
        let mut rng = RngState::new(2024);
        let n = 100_000;
        let draws = g.sample(&mut rng, n);
        let mean = draws.iter().fold(DVector::zeros(2), |acc, x| acc + x) / n as f64;
        // 4 sigma / sqrt(n) = 0.0126 < 0.02
        assert!(mean[0].abs() < 0.02, "mean[0] = {}", mean[0]);
        assert!(mean[1].abs() < 0.02, "mean[1] = {}", mean[1]);
        let mut cov = DMatrix::<f64>::zeros(2, 2);
        for x in &draws {
            let c = x - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        assert!((cov[(0, 0)] - 1.0).abs() < 0.05);
        assert!((cov[(1, 1)] - 1.0).abs() < 0.05);
        assert!(cov[(0, 1)].abs() < 0.05);
    }

    #[test]
    fn entropy_closed_forms() {
        let g = Gaussian::standard(1);
        assert!((entropy(&g) - 1.4189385332046727).abs() < 1e-12);
        // entropy adds (ln s)/2 per dimension under cov -> s * cov
        let h1 = entropy(&Gaussian::isotropic(3, 1.0).unwrap());
        let h2 = entropy(&Gaussian::isotropic(3, 4.0).unwrap());
        assert!((h2 - h1 - 1.5 * 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn w2_closed_form_examples() {
        let a = Gaussian::standard(2);
        assert!(w2_squared(&a, &a).unwrap().abs() < 1e-12);

        // mean shift only
        let b = Gaussian::new(DVector::from_row_slice(&[3.0, 4.0]), SpdMatrix::identity(2)).unwrap();
        assert!((w2_squared(&a, &b).unwrap() - 25.0).abs() < 1e-9);

        // 1-D: (m0 - m1)^2 + (sd0 - sd1)^2
        let c = Gaussian::new(DVector::from_element(1, 0.0), SpdMatrix::scaled_identity(1, 1.0))
            .unwrap();
        let d = Gaussian::new(DVector::from_element(1, 1.0), SpdMatrix::scaled_identity(1, 4.0))
            .unwrap();
        assert!((w2_squared(&c, &d).unwrap() - 2.0).abs() < 1e-9);

        // commuting covariances: sum of (sqrt(l0) - sqrt(l1))^2
        let e = Gaussian::new(DVector::zeros(2), SpdMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        let f = Gaussian::new(DVector::zeros(2), SpdMatrix::from_diagonal(&[4.0, 1.0])).unwrap();
        assert!((w2_squared(&e, &f).unwrap() - 2.0).abs() < 1e-9);
        assert!((bures_squared(e.cov(), f.cov()).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn w2_is_symmetric_and_nonnegative_on_random_pairs() {
        for seed in 0..8 {
            let a = random_gaussian(5, 100 + seed);
            let b = random_gaussian(5, 200 + seed);
            let ab = w2_squared(&a, &b).unwrap();
            let ba = w2_squared(&b, &a).unwrap();
            assert!(ab >= 0.0);
            assert!(
                (ab - ba).abs() <= 1e-9 * (1.0 + ab.abs()),
                "asymmetry {} vs {}",
                ab,
                ba
            );
        }
    }

    #[test]
    fn w2_triangle_inequality_on_random_triples() {
        for seed in 0..8 {
            let a = random_gaussian(4, 300 + seed);
            let b = random_gaussian(4, 400 + seed);
            let c = random_gaussian(4, 500 + seed);
            let ab = w2_squared(&a, &b).unwrap().sqrt();
            let bc = w2_squared(&b, &c).unwrap().sqrt();
            let ac = w2_squared(&a, &c).unwrap().sqrt();
            assert!(
                ac <= ab + bc + 1e-9,
                "triangle violated: {} > {} + {}",
                ac,
                ab,
                bc
            );
        }
    }

    #[test]
    fn kl_closed_form_examples() {
        let a = Gaussian::standard(3);
        assert!(kl_gaussian(&a, &a).unwrap().abs() < 1e-12);

        let m1 = Gaussian::new(DVector::from_element(1, 1.0), SpdMatrix::identity(1)).unwrap();
        let z = Gaussian::standard(1);
        assert!((kl_gaussian(&z, &m1).unwrap() - 0.5).abs() < 1e-12);

        // variance-only: KL(N(0,1) || N(0,e)) = 1/(2e)
        let e = Gaussian::isotropic(1, std::f64::consts::E).unwrap();
        assert!((kl_gaussian(&z, &e).unwrap() - 0.5 / std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn kl_is_invariant_under_orthogonal_conjugation() {
        let a = random_gaussian(3, 600);
        let b = random_gaussian(3, 601);
        // rotation by a Householder reflection
        let v = DVector::from_row_slice(&[1.0, 2.0, -1.0]).normalize();
        let q: DMatrix<f64> = DMatrix::identity(3, 3) - 2.0 * &v * v.transpose();
        let rot = |g: &Gaussian| {
            Gaussian::new(
                &q * g.mean(),
                SpdMatrix::from_symmetric_part(&q * g.cov().as_matrix() * q.transpose()).unwrap(),
            )
            .unwrap()
        };
        let kl = kl_gaussian(&a, &b).unwrap();
        let kl_rot = kl_gaussian(&rot(&a), &rot(&b)).unwrap();
        assert!((kl - kl_rot).abs() < 1e-9 * (1.0 + kl.abs()));
    }

    #[test]
    fn kl_matches_monte_carlo_log_density_ratio() {
        // independent oracle: KL(p0||p1) = E_{p0}[log p0 - log p1]
        let p0 = random_gaussian(3, 700);
        let p1 = random_gaussian(3, 701);
        let logpdf = |g: &Gaussian, x: &DVector<f64>| {
            let dm = x - g.mean();
            let quad = dm.dot(&g.chol().solve(&dm).unwrap());
            -0.5 * (g.dim() as f64 * (2.0 * std::f64::consts::PI).ln() + g.logdet_cov() + quad)
        };
        let mut rng = RngState::new(702);
        let n = 100_000;
        let vals: Vec<f64> = p0
            .sample(&mut rng, n)
            .iter()
            .map(|x| logpdf(&p0, x) - logpdf(&p1, x))
            .collect();
        let mc: f64 = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mc).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        let exact = kl_gaussian(&p0, &p1).unwrap();
        assert!(
            (mc - exact).abs() < 3.0 * se,
            "MC {} vs exact {} (3 SE = {})",
            mc,
            exact,
            3.0 * se
        );
    }

    #[test]
    fn ot_map_examples() {
        let a = random_gaussian(3, 800);
        let x = DVector::from_row_slice(&[0.3, -1.0, 2.0]);
        // identity when endpoints coincide
        let same = ot_map(&a, &a, &x).unwrap();
        assert!((same - &x).amax() < 1e-9);

        // 1-D affine form m1 + (sd1/sd0)(x - m0)
        let c = Gaussian::new(DVector::from_element(1, 1.0), SpdMatrix::scaled_identity(1, 4.0))
            .unwrap();
        let d = Gaussian::new(DVector::from_element(1, -2.0), SpdMatrix::scaled_identity(1, 9.0))
            .unwrap();
        let y = ot_map(&c, &d, &DVector::from_element(1, 3.0)).unwrap();
        assert!((y[0] - (-2.0 + 1.5 * 2.0)).abs() < 1e-9);
    }

    #[test]
    fn ot_map_pushforward_is_exact_in_the_affine_sense() {
        let p0 = random_gaussian(4, 900);
        let p1 = random_gaussian(4, 901);
        let a = ot_map_linear(&p0, &p1).unwrap();
        // the affine map sends N(m0, S0) to N(m1, A S0 A^T) = p1 exactly
        let pushed = &a * p0.cov().as_matrix() * a.transpose();
        let drift = (&pushed - p1.cov().as_matrix()).amax();
        assert!(drift < 1e-9 * (1.0 + p1.cov().as_matrix().amax()), "drift {drift}");
        let tm = ot_map(&p0, &p1, p0.mean()).unwrap();
        assert!((tm - p1.mean()).amax() < 1e-9);
    }

    #[test]
    fn stein_score_moments() {
        let g = random_gaussian(3, 1000);
        // identity covariance: score is x - m exactly
        let id = Gaussian::standard(3);
        let x = DVector::from_row_slice(&[0.5, -0.25, 1.0]);
        assert!((stein_score(&id, &x).unwrap() - &x).amax() < 1e-14);

        let mut rng = RngState::new(1001);
        let n = 50_000;
        let mut sum = DVector::<f64>::zeros(3);
        let mut sumsq = 0.0;
        for x in g.sample(&mut rng, n) {
            let s = stein_score(&g, &x).unwrap();
            sumsq += s.norm_squared();
            sum += s;
        }
        let mean = sum / n as f64;
        assert!(mean.amax() < 0.05, "score mean should vanish, got {mean}");
        let expect = g.precision_trace();
        let got = sumsq / n as f64;
        assert!(
            (got - expect).abs() < 0.05 * expect,
            "E||score||^2 = {got} vs tr(cov^-1) = {expect}"
        );
    }

    #[test]
    fn precision_trace_matches_inverse_trace() {
        let g = random_gaussian(5, 1100);
        let inv = g.chol().inverse();
        assert!((g.precision_trace() - inv.trace()).abs() < 1e-9 * inv.trace());
    }
}
