//! Jacobian-scaled latent covariance and Gaussian sampling.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::JacobianMatrix;

const JITTER_START: f64 = 1e-12;
const JITTER_CAP: f64 = 1e-6;

/// Radius `sigma_theta` of the target isotropic parameter-space Gaussian,
/// `Sigma_theta = sigma_theta * I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MutationScale(f64);

impl MutationScale {
    pub fn new(sigma_theta: f64) -> Result<Self> {
        if sigma_theta.is_finite() && sigma_theta >= 0.0 {
            Ok(Self(sigma_theta))
        } else {
            Err(Error::Config(format!(
                "mutation scale must be finite and non-negative, got {sigma_theta}"
            )))
        }
    }

    pub fn sigma_theta(self) -> f64 {
        self.0
    }

    /// Per-coordinate standard deviation of `N(0, sigma_theta * I)`.
    pub fn std_dev(self) -> f64 {
        self.0.sqrt()
    }
}

/// Symmetric PSD covariance of latent mutations around `base_point`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCovariance {
    matrix: DMatrix<f64>,
    base_point: Vec<f64>,
}

impl LatentCovariance {
    /// Wraps `matrix`, replacing it by `(A + A^T) / 2`.
    pub fn from_matrix(matrix: DMatrix<f64>, base_point: Vec<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != base_point.len() {
            return Err(Error::Dimension {
                what: "latent covariance",
                expected: base_point.len(),
                got: matrix.nrows(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelHealth(
                "latent covariance has non-finite entries".into(),
            ));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self {
            matrix: sym,
            base_point,
        })
    }

    pub fn diagonal(diag: &[f64], base_point: Vec<f64>) -> Result<Self> {
        if let Some(i) = diag.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::ModelHealth(format!(
                "diagonal variance {i} is {}",
                diag[i]
            )));
        }
        Self::from_matrix(
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)),
            base_point,
        )
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn dim(&self) -> usize {
        self.base_point.len()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&v| v == 0.0)
    }
}

/// `Sigma_Z = J^T Sigma_theta J = sigma_theta * J^T J`, symmetrised.
pub fn jacobian_scaled_covariance(
    jacobian: &JacobianMatrix,
    scale: MutationScale,
) -> Result<LatentCovariance> {
    if !jacobian.is_finite() {
        return Err(Error::ModelHealth(
            "decoder Jacobian has non-finite entries".into(),
        ));
    }
    let m = jacobian.cols();
    let gram = jacobian.gram(scale.sigma_theta());
    LatentCovariance::from_matrix(
        DMatrix::from_row_slice(m, m, &gram),
        jacobian.base_point().to_vec(),
    )
}

/// Factorised covariance, ready to draw from.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    /// `None` for the all-zero covariance.
    factor: Option<DMatrix<f64>>,
    dim: usize,
    jitter: f64,
}

impl GaussianSampler {
    /// Cholesky of `cov + jitter * I`, escalating jitter x10 from 1e-12 up to 1e-6.
    pub fn new(cov: &LatentCovariance) -> Result<Self> {
        let dim = cov.dim();
        if cov.is_zero() {
            return Ok(Self {
                factor: None,
                dim,
                jitter: 0.0,
            });
        }
        let mut jitter = JITTER_START;
        while jitter <= JITTER_CAP * (1.0 + 1e-9) {
            let mut shifted = cov.matrix().clone();
            for i in 0..dim {
                shifted[(i, i)] += jitter;
            }
            if let Some(ch) = Cholesky::new(shifted) {
                return Ok(Self {
                    factor: Some(ch.l()),
                    dim,
                    jitter,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::DegenerateCovariance {
            max_jitter: JITTER_CAP,
        })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if mean.len() != self.dim {
            return Err(Error::Dimension {
                what: "gaussian mean",
                expected: self.dim,
                got: mean.len(),
            });
        }
        let Some(l) = &self.factor else {
            return Ok(mean.to_vec());
        };
        let u: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        Ok((0..self.dim)
            .map(|i| mean[i] + (0..=i).map(|k| l[(i, k)] * u[k]).sum::<f64>())
            .collect())
    }
}

/// One draw from `N(mean, cov)`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &LatentCovariance,
    rng: &mut R,
) -> Result<Vec<f64>> {
    GaussianSampler::new(cov)?.sample(mean, rng)
}
