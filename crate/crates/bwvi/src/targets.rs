//! Target potentials V with exact gradients and Hessians.
//!
//! A target fixes the density proportional to exp(-V) that the optimizers
//! approximate. Each implementation exposes the derivative information the
//! estimators consume, optional convexity metadata for the bound evaluators,
//! and the exact Gaussian optimum when one is known.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, RngState};
use crate::linalg::{cholesky, sym_eigen, SpdMatrix};

/// Optional convexity metadata: strong convexity alpha, smoothness beta, and
/// the Lipschitz constant of the Laplacian of V.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConvexityInfo {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub laplacian_smoothness: Option<f64>,
}

/// A potential V with first- and second-order oracles.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    /// V(x).
    fn potential(&self, x: &DVector<f64>) -> f64;

    /// grad V(x).
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Hessian of V at x, symmetric.
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// tr(Hessian(x)); override when it is much cheaper than the full matrix.
    fn hessian_trace(&self, x: &DVector<f64>) -> f64 {
        self.hessian(x).trace()
    }

    fn convexity(&self) -> ConvexityInfo {
        ConvexityInfo::default()
    }

    /// Exact minimizer of the variational objective, when known in closed form.
    fn optimum(&self) -> Option<&Gaussian> {
        None
    }

    /// True when the Hessian does not depend on x, which makes analytic
    /// variance gaps available.
    fn has_constant_hessian(&self) -> bool {
        false
    }
}

/// Gaussian potential V(x) = (x - m)^T P (x - m) / 2 with P the precision of
/// the target law N(m, S). The variational optimum is the target itself.
pub struct GaussianTarget {
    optimum: Gaussian,
    precision: DMatrix<f64>,
    precision_trace: f64,
    info: ConvexityInfo,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        let optimum = Gaussian::new(mean, cov)?;
        let precision = optimum.chol().inverse().into_matrix();
        let precision_trace = precision.trace();
        let eig = sym_eigen(optimum.cov())?;
        let lam_min = eig.values[0];
        let lam_max = eig.values[eig.values.len() - 1];
        let info = ConvexityInfo {
            alpha: Some(1.0 / lam_max),
            beta: Some(1.0 / lam_min),
            laplacian_smoothness: Some(0.0),
        };
        Ok(Self {
            optimum,
            precision,
            precision_trace,
            info,
        })
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn precision_trace(&self) -> f64 {
        self.precision_trace
    }
}

impl Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.optimum.dim()
    }

    fn potential(&self, x: &DVector<f64>) -> f64 {
        let dm = x - self.optimum.mean();
        0.5 * dm.dot(&(&self.precision * &dm))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.precision * (x - self.optimum.mean())
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.precision.clone()
    }

    fn hessian_trace(&self, _x: &DVector<f64>) -> f64 {
        self.precision_trace
    }

    fn convexity(&self) -> ConvexityInfo {
        self.info
    }

    fn optimum(&self) -> Option<&Gaussian> {
        Some(&self.optimum)
    }

    fn has_constant_hessian(&self) -> bool {
        true
    }
}

/// Multivariate Student-t potential
/// V(x) = ((nu + d) / 2) ln(1 + q / nu), q = (x - loc)^T S^{-1} (x - loc).
/// Heavy tails, non-convex, with a state-dependent Hessian that can be
/// indefinite far from the location.
pub struct StudentTTarget {
    loc: DVector<f64>,
    precision: DMatrix<f64>,
    precision_trace: f64,
    nu: f64,
    beta: f64,
}

impl StudentTTarget {
    pub fn new(loc: DVector<f64>, scale: SpdMatrix, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "Student-t requires nu > 0, got {nu}"
            )));
        }
        if loc.len() != scale.dim() {
            return Err(Error::DimensionMismatch {
                expected: scale.dim(),
                got: loc.len(),
            });
        }
        let chol = cholesky(&scale)?;
        let precision = chol.inverse().into_matrix();
        let precision_trace = precision.trace();
        let eig = sym_eigen(&scale)?;
        let d = loc.len() as f64;
        // Hessian <= ((nu + d) / nu) * S^{-1} everywhere, so this is a valid
        // global smoothness constant even though V is not convex.
        let beta = (nu + d) / nu / eig.values[0];
        Ok(Self {
            loc,
            precision,
            precision_trace,
            nu,
            beta,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn quad(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let dm = x - &self.loc;
        let z = &self.precision * &dm;
        let q = dm.dot(&z);
        (z, q)
    }
}

impl Target for StudentTTarget {
    fn dim(&self) -> usize {
        self.loc.len()
    }

    fn potential(&self, x: &DVector<f64>) -> f64 {
        let (_, q) = self.quad(x);
        let d = self.dim() as f64;
        0.5 * (self.nu + d) * (1.0 + q / self.nu).ln()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (z, q) = self.quad(x);
        let d = self.dim() as f64;
        z * ((self.nu + d) / (self.nu + q))
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (z, q) = self.quad(x);
        let d = self.dim() as f64;
        let a = (self.nu + d) / (self.nu + q);
        let b = 2.0 * (self.nu + d) / (self.nu + q).powi(2);
        &self.precision * a - (&z * z.transpose()) * b
    }

    fn hessian_trace(&self, x: &DVector<f64>) -> f64 {
        let (z, q) = self.quad(x);
        let d = self.dim() as f64;
        let a = (self.nu + d) / (self.nu + q);
        let b = 2.0 * (self.nu + d) / (self.nu + q).powi(2);
        a * self.precision_trace - b * z.norm_squared()
    }

    fn convexity(&self) -> ConvexityInfo {
        ConvexityInfo {
            alpha: None,
            beta: Some(self.beta),
            laplacian_smoothness: None,
        }
    }
}

/// Design matrix and binary labels for logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegData {
    /// n x d design matrix, one observation per row.
    pub xs: DMatrix<f64>,
    /// Labels in {0, 1}.
    pub ys: DVector<f64>,
}

impl LogRegData {
    pub fn n(&self) -> usize {
        self.xs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.xs.ncols()
    }

    /// Writes rows as x_1,...,x_d,y.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let header: Vec<String> = (1..=self.dim())
            .map(|j| format!("x_{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = (0..self.dim()).map(|j| self.xs[(i, j)].to_string()).collect();
            rec.push((self.ys[i] as i64).to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[header.len() - 1] != "y" {
            return Err(Error::InvalidConfig(
                "logistic regression csv must end with a y column".into(),
            ));
        }
        let d = header.len() - 1;
        let mut xs_rows: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::InvalidConfig(format!(
                    "csv row has {} fields, expected {}",
                    rec.len(),
                    d + 1
                )));
            }
            for j in 0..d {
                xs_rows.push(rec[j].parse::<f64>().map_err(|e| {
                    Error::InvalidConfig(format!("bad numeric field {:?}: {e}", &rec[j]))
                })?);
            }
            let y = rec[d]
                .parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("bad label {:?}: {e}", &rec[d])))?;
            if y != 0.0 && y != 1.0 {
                return Err(Error::InvalidConfig(format!("label must be 0 or 1, got {y}")));
            }
            ys.push(y);
        }
        let n = ys.len();
        Ok(Self {
            xs: DMatrix::from_row_slice(n, d, &xs_rows),
            ys: DVector::from_vec(ys),
        })
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic regression potential (negative log likelihood under a flat prior)
/// V(theta) = sum_i ln(1 + exp(<theta, x_i>)) - y_i <theta, x_i>.
pub struct LogisticRegressionTarget {
    data: LogRegData,
    row_norms_sq: Vec<f64>,
    beta: f64,
}

impl LogisticRegressionTarget {
    pub fn new(data: LogRegData) -> Result<Self> {
        if data.n() == 0 || data.dim() == 0 {
            return Err(Error::InvalidConfig("empty logistic regression data".into()));
        }
        let gram = SpdMatrix::from_symmetric_part(data.xs.transpose() * &data.xs)?;
        let eig = sym_eigen(&gram)?;
        let beta = 0.25 * eig.values[eig.values.len() - 1];
        let row_norms_sq = (0..data.n())
            .map(|i| data.xs.row(i).norm_squared())
            .collect();
        Ok(Self {
            data,
            row_norms_sq,
            beta,
        })
    }

    pub fn data(&self) -> &LogRegData {
        &self.data
    }

    fn logits(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.data.xs * theta
    }
}

impl Target for LogisticRegressionTarget {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn potential(&self, x: &DVector<f64>) -> f64 {
        let u = self.logits(x);
        (0..self.data.n())
            .map(|i| softplus(u[i]) - self.data.ys[i] * u[i])
            .sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let u = self.logits(x);
        let resid = DVector::from_fn(self.data.n(), |i, _| sigmoid(u[i]) - self.data.ys[i]);
        self.data.xs.transpose() * resid
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let u = self.logits(x);
        let mut weighted = self.data.xs.clone();
        for i in 0..self.data.n() {
            let s = sigmoid(u[i]);
            let w = s * (1.0 - s);
            weighted.row_mut(i).scale_mut(w);
        }
        let h = self.data.xs.transpose() * weighted;
        crate::linalg::symmetrize(&h)
    }

    fn hessian_trace(&self, x: &DVector<f64>) -> f64 {
        let u = self.logits(x);
        (0..self.data.n())
            .map(|i| {
                let s = sigmoid(u[i]);
                s * (1.0 - s) * self.row_norms_sq[i]
            })
            .sum()
    }

    fn convexity(&self) -> ConvexityInfo {
        ConvexityInfo {
            alpha: Some(0.0),
            beta: Some(self.beta),
            laplacian_smoothness: None,
        }
    }
}

/// Scale applied to randomly generated target covariances. Keeps every
/// covariance eigenvalue well above the unit step size used throughout the
/// experiments, so the entropy-step floor (iterate eigenvalues >= eta) never
/// binds and the covariance recursion contracts to the target.
pub const RANDOM_TARGET_SCALE: f64 = 20.0;

/// Random well-conditioned Gaussian target: mean uniform in [-2, 2]^d,
/// covariance RANDOM_TARGET_SCALE * (A A^T / d + I) with A standard normal.
/// Condition number is bounded by about 5 for large d.
pub fn random_gaussian_target(d: usize, rng: &mut RngState) -> Result<GaussianTarget> {
    let mean = DVector::from_fn(d, |_, _| rng.rng().gen_range(-2.0..2.0));
    let a = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
    let cov = (&a * a.transpose()) / d as f64 + DMatrix::identity(d, d);
    GaussianTarget::new(mean, SpdMatrix::from_symmetric_part(cov * RANDOM_TARGET_SCALE)?)
}

/// Synthetic logistic regression draw: x_i standard normal, ground-truth
/// weights theta* ~ N(0, I/d), labels Bernoulli(sigmoid(<theta*, x_i>)).
pub fn generate_logreg_data(n: usize, d: usize, rng: &mut RngState) -> LogRegData {
    let xs = DMatrix::from_fn(n, d, |_, _| rng.standard_normal());
    let scale = 1.0 / (d as f64).sqrt();
    let theta: DVector<f64> = DVector::from_fn(d, |_, _| rng.standard_normal() * scale);
    let ys = DVector::from_fn(n, |i, _| {
        let p = sigmoid(xs.row(i).transpose().dot(&theta));
        if rng.rng().gen::<f64>() < p {
            1.0
        } else {
            0.0
        }
    });
    LogRegData { xs, ys }
}

/// Central finite difference of V, used by tests as an independent oracle
/// for gradients. Step h = 1e-5 * (1 + |x_i|) per coordinate.
pub fn fd_gradient(t: &dyn Target, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(t.dim(), |i, _| {
        let h = 1e-5 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (t.potential(&xp) - t.potential(&xm)) / (2.0 * h)
    })
}

/// Central finite difference of grad V, column by column; oracle for Hessians.
pub fn fd_hessian(t: &dyn Target, x: &DVector<f64>) -> DMatrix<f64> {
    let d = t.dim();
    let mut h_mat = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let h = 1e-5 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (t.gradient(&xp) - t.gradient(&xm)) / (2.0 * h);
        h_mat.set_column(j, &col);
    }
    h_mat
}
