//! Gaussian naturalistic distribution `N(mean, cov)`.
//!
//! The covariance is factorized once at construction. All density work is in
//! log space and every quadratic form goes through a triangular solve against
//! the cached lower factor.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NatureJson", into = "NatureJson")]
pub struct GaussianNature {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det_half: f64,
}

#[derive(Serialize, Deserialize)]
struct NatureJson {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<NatureJson> for GaussianNature {
    type Error = Error;
    fn try_from(j: NatureJson) -> Result<Self> {
        GaussianNature::new(j.mean, j.cov)
    }
}

impl From<GaussianNature> for NatureJson {
    fn from(n: GaussianNature) -> Self {
        NatureJson {
            mean: n.mean.iter().copied().collect(),
            cov: n.cov_rows(),
        }
    }
}

impl GaussianNature {
    /// Builds the distribution from a mean and a row-major covariance.
    /// Fails unless the covariance is symmetric positive definite.
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(invalid("mean", "dimension must be at least 1"));
        }
        check_dim(d, cov.len())?;
        for row in &cov {
            check_dim(d, row.len())?;
        }
        let cov = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        Self::from_matrix(DVector::from_vec(mean), cov)
    }

    pub fn from_matrix(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        check_dim(d, cov.nrows())?;
        check_dim(d, cov.ncols())?;
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("nature parameters"));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("factorization failed".into()))?
            .unpack();
        if (0..d).any(|j| !(chol[(j, j)] > 0.0)) {
            return Err(Error::NotPositiveDefinite("non-positive pivot".into()));
        }
        let log_det_half = (0..d).map(|j| chol[(j, j)].ln()).sum();
        Ok(Self {
            mean,
            cov,
            chol,
            log_det_half,
        })
    }

    /// Independent coordinates with the given standard deviations.
    pub fn diagonal(mean: Vec<f64>, std: &[f64]) -> Result<Self> {
        let d = mean.len();
        check_dim(d, std.len())?;
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { std[i] * std[i] } else { 0.0 }).collect())
            .collect();
        Self::new(mean, cov)
    }

    pub fn standard(d: usize) -> Result<Self> {
        Self::diagonal(vec![0.0; d], &vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cov_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.cov[(i, j)]).collect())
            .collect()
    }

    /// Lower Cholesky factor `C` with `C Cᵀ = cov`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Marginal standard deviations.
    pub fn std_devs(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.cov[(i, i)].sqrt()).collect()
    }

    /// Same mean, covariance scaled by `factor²`.
    pub fn inflated(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(invalid("factor", "must be positive"));
        }
        Self::from_matrix(self.mean.clone(), &self.cov * (factor * factor))
    }

    /// Same covariance, different mean.
    pub fn recentred(&self, mean: &[f64]) -> Result<Self> {
        check_dim(self.dim(), mean.len())?;
        let mut out = self.clone();
        out.mean = DVector::from_column_slice(mean);
        Ok(out)
    }

    /// Whitened displacement `C⁻¹ (x − mean)`.
    pub fn whiten(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        let diff = DVector::from_column_slice(x) - &self.mean;
        Ok(self
            .chol
            .solve_lower_triangular(&diff)
            .expect("factor has positive diagonal"))
    }

    /// Inverse of [`whiten`](Self::whiten): `mean + C u`.
    pub fn unwhiten(&self, u: &[f64]) -> Vec<f64> {
        let u = DVector::from_column_slice(u);
        (&self.mean + &self.chol * u).iter().copied().collect()
    }

    /// Rate function `(x − mean)ᵀ cov⁻¹ (x − mean)`.
    pub fn rate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.whiten(x)?.norm_squared())
    }

    /// `ln φ(x; mean, cov)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let r = self.rate(x)?;
        Ok(self.log_density_from_rate(r))
    }

    pub(crate) fn log_density_from_rate(&self, rate: f64) -> f64 {
        -0.5 * self.dim() as f64 * LN_2PI - self.log_det_half - 0.5 * rate
    }

    /// `Σ⁻¹ (x − mean)`.
    pub fn precision_times_displacement(&self, x: &[f64]) -> Result<Vec<f64>> {
        let u = self.whiten(x)?;
        let v = self
            .chol
            .transpose()
            .solve_upper_triangular(&u)
            .expect("factor has positive diagonal");
        Ok(v.iter().copied().collect())
    }

    /// Writes one draw into `out`.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.draw_around(self.mean.as_slice(), rng, out);
    }

    /// One draw from `N(center, cov)`.
    pub fn draw_around<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..d {
            let mut acc = center[i];
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += self.chol[(i, j)] * zj;
            }
            out[i] = acc;
        }
    }

    /// `n` i.i.d. draws as rows. Chunk `c` of [`CHUNK`](crate::par::CHUNK)
    /// rows is drawn from `rng.fork(c)`.
    pub fn sample(&self, rng: RngStream, n: usize) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(n);
        for (c, range) in crate::par::chunk_ranges(n).into_iter().enumerate() {
            let mut r = rng.fork(c as u64).rng();
            for _ in range {
                let mut x = vec![0.0; self.dim()];
                self.draw_into(&mut r, &mut x);
                rows.push(x);
            }
        }
        rows
    }
}

/// Crude Monte Carlo sample size `⌈(1 − μ)/(μ δ ε²)⌉` guaranteeing
/// `P(|μ̂ − μ| > εμ) ≤ δ` by Chebyshev with Bernoulli variance.
pub fn required_sample_size(mu: f64, eps: f64, delta: f64) -> Result<u64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(invalid("mu", format!("{mu} not in (0, 1)")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("eps", format!("{eps} not in (0, 1]")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("delta", format!("{delta} not in (0, 1]")));
    }
    let raw = (1.0 - mu) / (mu * delta * eps * eps);
    // absorb the last-ulp noise of the division before rounding up
    Ok((raw * (1.0 - 1e-12)).ceil().max(1.0) as u64)
}
