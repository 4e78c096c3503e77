//! Equal-weight Gaussian mixture proposals sharing the nature's covariance.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{check_dim, invalid, Result};
use crate::nature::GaussianNature;
use crate::par::chunk_ranges;
use crate::rng::RngStream;

#[derive(Debug, Clone)]
pub struct MixtureProposal {
    nature: GaussianNature,
    means: Vec<Vec<f64>>,
    /// `C⁻¹ (mean_a − λ)` per component.
    whitened: Vec<DVector<f64>>,
    /// `½ ‖whitened_a‖²`.
    half_norms: Vec<f64>,
    ln_k: f64,
}

impl MixtureProposal {
    pub fn new(nature: &GaussianNature, means: Vec<Vec<f64>>) -> Result<Self> {
        if means.is_empty() {
            return Err(invalid("means", "a mixture needs at least one component"));
        }
        let mut whitened = Vec::with_capacity(means.len());
        for m in &means {
            check_dim(nature.dim(), m.len())?;
            whitened.push(nature.whiten(m)?);
        }
        let half_norms = whitened.iter().map(|w| 0.5 * w.norm_squared()).collect();
        Ok(Self {
            nature: nature.clone(),
            ln_k: (means.len() as f64).ln(),
            means,
            whitened,
            half_norms,
        })
    }

    /// The nature itself as a one-component mixture.
    pub fn at_mean(nature: &GaussianNature) -> Self {
        Self::new(nature, vec![nature.mean().to_vec()]).expect("mean has nature's dimension")
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.nature.dim()
    }

    pub fn nature(&self) -> &GaussianNature {
        &self.nature
    }

    /// One draw; returns the component index. A single component consumes
    /// no randomness for the choice.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> usize {
        let k = if self.means.len() == 1 {
            0
        } else {
            rng.random_range(0..self.means.len())
        };
        self.nature.draw_around(&self.means[k], rng, out);
        k
    }

    /// `ln φ(x; λ, Σ) − ln (1/K Σ_a φ(x; a, Σ))`.
    ///
    /// With `u = C⁻¹(x − λ)` and whitened means `w_a` this is
    /// `ln K − logsumexp_a(uᵀw_a − ½‖w_a‖²)`, which never forms a density.
    pub fn log_likelihood_ratio(&self, x: &[f64]) -> Result<f64> {
        let u = self.nature.whiten(x)?;
        Ok(self.log_ratio_whitened(&u))
    }

    pub(crate) fn log_ratio_whitened(&self, u: &DVector<f64>) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let exps: Vec<f64> = self
            .whitened
            .iter()
            .zip(&self.half_norms)
            .map(|(w, h)| {
                let e = u.dot(w) - h;
                max = max.max(e);
                e
            })
            .collect();
        let lse = max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
        self.ln_k - lse
    }
}

/// Log likelihood ratio of the nature against the mixture at `x`.
pub fn log_likelihood_ratio(nature: &GaussianNature, prop: &MixtureProposal, x: &[f64]) -> Result<f64> {
    if nature.mean() != prop.nature.mean() || nature.cov() != prop.nature.cov() {
        return Err(invalid("proposal", "built for a different nature"));
    }
    prop.log_likelihood_ratio(x)
}

/// `n` mixture draws and their component ids. Chunk `c` uses `rng.fork(c)`.
pub fn sample_mixture(prop: &MixtureProposal, rng: RngStream, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut xs = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (c, range) in chunk_ranges(n).into_iter().enumerate() {
        let mut r = rng.fork(c as u64).rng();
        for _ in range {
            let mut x = vec![0.0; prop.dim()];
            ids.push(prop.draw_into(&mut r, &mut x));
            xs.push(x);
        }
    }
    (xs, ids)
}
