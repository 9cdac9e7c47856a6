//! Random-function network model: a Gaussian process over directed author
//! pairs whose mean and covariance depend on author topic similarity, with
//! Bernoulli links through a sigmoid.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math::ln_sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    /// Signal scale `s`.
    pub scale: f64,
    /// Length scale `l` on the similarity axis.
    pub length: f64,
    /// Noise `σ` added on the diagonal.
    pub noise: f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel {
            scale: 1.0,
            length: 1.0,
            noise: 1.0,
        }
    }
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("scale", self.scale), ("length", self.length), ("noise", self.noise)] {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("kernel {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        0.5 * self.scale * self.scale * (-d * d / (2.0 * self.length * self.length)).exp()
    }
}

/// Ordered author pairs `(i, j)`, row-major; the diagonal is included only
/// when `self_links` is set.
pub fn author_pairs(authors: usize, self_links: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(authors * authors);
    for i in 0..authors {
        for j in 0..authors {
            if i != j || self_links {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return domain("cosine similarity of a zero vector");
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Mean vector of pairwise similarities and the covariance built from them.
pub fn mean_and_covariance(
    nu: &[Vec<f64>],
    pairs: &[(usize, usize)],
    kernel: &Kernel,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    kernel.validate()?;
    if let Some(v) = nu.iter().find(|v| v.iter().any(|&x| !(x >= 0.0))) {
        return domain(format!("author vector has a negative or missing entry: {v:?}"));
    }
    let mean = DVector::from_iterator(
        pairs.len(),
        pairs.iter().map(|&(i, j)| cosine(&nu[i], &nu[j])).collect::<Result<Vec<_>>>()?,
    );
    let p = pairs.len();
    let noise = kernel.noise * kernel.noise;
    let mut cov = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..=a {
            let mut v = kernel.eval(mean[a], mean[b]);
            if a == b {
                v += noise;
            }
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite covariance entry".into()));
    }
    Ok((mean, cov))
}

pub fn cholesky(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(cov.clone()).ok_or_else(|| {
        let min_diag = cov.diagonal().min();
        Error::Numeric(format!(
            "covariance of size {} is not positive definite (smallest diagonal {min_diag})",
            cov.nrows()
        ))
    })
}

/// `Σ x log s(Q) + (1 - x) log(1 - s(Q))` over the listed pairs.
pub fn network_loglik(q: &[f64], x: &[bool]) -> f64 {
    q.iter()
        .zip(x)
        .map(|(&v, &link)| if link { ln_sigmoid(v) } else { ln_sigmoid(-v) })
        .sum()
}

/// Log density of `N(q; mean, L L^T)`.
pub fn gaussian_log_density(q: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let diff = q - mean;
    let l = chol.l_dirty();
    let solved = l
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a nonzero diagonal");
    let log_det: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * (solved.norm_squared() + log_det + q.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// One elliptical slice sampling transition for a latent vector with prior
/// `N(mean, L L^T)` and likelihood `loglik`. Returns the new vector and the
/// number of likelihood evaluations.
pub fn elliptical_slice_sample<R: Rng + ?Sized>(
    current: &DVector<f64>,
    mean: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
    loglik: impl Fn(&DVector<f64>) -> f64,
    rng: &mut R,
) -> Result<(DVector<f64>, usize)> {
    let current_ll = loglik(current);
    if !current_ll.is_finite() {
        return Err(Error::Numeric("likelihood is not finite at the current state".into()));
    }
    let z = DVector::from_iterator(
        current.len(),
        (0..current.len()).map(|_| StandardNormal.sample(rng)),
    );
    let nu = chol.l() * z;
    let f0 = current - mean;
    let threshold = current_ll + rng.random::<f64>().ln();
    let mut angle = rng.random::<f64>() * std::f64::consts::TAU;
    let mut lo = angle - std::f64::consts::TAU;
    let mut hi = angle;
    let mut evals = 1;
    loop {
        let proposal = &f0 * angle.cos() + &nu * angle.sin() + mean;
        evals += 1;
        if loglik(&proposal) > threshold {
            return Ok((proposal, evals));
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        if hi - lo < 1e-12 {
            // the bracket has collapsed onto the current point
            return Ok((current.clone(), evals));
        }
        angle = lo + rng.random::<f64>() * (hi - lo);
    }
}

/// Latent link strengths with their prior and observed links.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpNetworkState {
    pub kernel: Kernel,
    pub pairs: Vec<(usize, usize)>,
    pub links: Vec<bool>,
    pub q: Vec<f64>,
    pub mean: Vec<f64>,
}

impl GpNetworkState {
    pub fn new(adjacency: &[Vec<bool>], self_links: bool, kernel: Kernel) -> Result<Self> {
        kernel.validate()?;
        let pairs = author_pairs(adjacency.len(), self_links);
        let links = pairs.iter().map(|&(i, j)| adjacency[i][j]).collect();
        Ok(GpNetworkState {
            kernel,
            q: vec![0.0; pairs.len()],
            mean: vec![0.0; pairs.len()],
            pairs,
            links,
        })
    }

    pub fn loglik(&self) -> f64 {
        network_loglik(&self.q, &self.links)
    }

    /// `log N(Q; ς, κ) + log p(x | Q)` for author vectors `nu`.
    pub fn log_posterior(&self, q: &[f64], nu: &[Vec<f64>]) -> Result<f64> {
        let (mean, cov) = mean_and_covariance(nu, &self.pairs, &self.kernel)?;
        let chol = cholesky(&cov)?;
        let qv = DVector::from_column_slice(q);
        Ok(gaussian_log_density(&qv, &mean, &chol) + network_loglik(q, &self.links))
    }
}
