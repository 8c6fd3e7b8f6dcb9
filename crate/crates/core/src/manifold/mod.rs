//! Latent representation of policy parameters.

pub mod autoencoder;
pub mod checkpoint;
pub mod covariance;
pub mod pca;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{decoder_jacobian, forward, JacobianMatrix, MlpSpec, ParamVector};

pub use autoencoder::{
    early_stop_decision, fit_autoencoder, fitted_slope, AeArchitecture, AeTrainConfig, Autoencoder,
    AutoencoderFit, StopReason, TrainStats,
};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
};
pub use covariance::{
    jacobian_scaled_covariance, sample_gaussian, GaussianSampler, LatentCovariance, MutationScale,
};
pub use pca::{fit_pca, Pca};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Autoencoder,
    Pca,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldModel {
    Autoencoder(Autoencoder),
    Pca(Pca),
}

impl From<Autoencoder> for ManifoldModel {
    fn from(ae: Autoencoder) -> Self {
        ManifoldModel::Autoencoder(ae)
    }
}

impl From<Pca> for ManifoldModel {
    fn from(p: Pca) -> Self {
        ManifoldModel::Pca(p)
    }
}

pub(crate) fn ae_reconstruction_error(ae: &Autoencoder, theta: &ParamVector) -> Result<f64> {
    let z = forward(ae.encoder(), theta.values())?;
    let back = forward(ae.decoder(), &z)?;
    Ok(distance(theta.values(), &back))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl ManifoldModel {
    pub fn kind(&self) -> ManifoldKind {
        match self {
            ManifoldModel::Autoencoder(_) => ManifoldKind::Autoencoder,
            ManifoldModel::Pca(_) => ManifoldKind::Pca,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            ManifoldModel::Autoencoder(ae) => ae.latent_dim(),
            ManifoldModel::Pca(p) => p.latent_dim(),
        }
    }

    /// Spec of the policy networks this model encodes.
    pub fn target(&self) -> &Arc<MlpSpec> {
        match self {
            ManifoldModel::Autoencoder(ae) => ae.target(),
            ManifoldModel::Pca(p) => p.target(),
        }
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        if theta.spec() != self.target() {
            return Err(Error::Dimension {
                what: "parameter vector for manifold",
                expected: self.target().param_count(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        match self {
            ManifoldModel::Autoencoder(ae) => forward(ae.encoder(), theta.values()),
            ManifoldModel::Pca(p) => Ok(p.encode_values(theta.values())),
        }
    }

    pub fn decode(&self, z: &[f64]) -> Result<ParamVector> {
        if z.len() != self.latent_dim() {
            return Err(Error::Dimension {
                what: "latent point",
                expected: self.latent_dim(),
                got: z.len(),
            });
        }
        let values = match self {
            ManifoldModel::Autoencoder(ae) => forward(ae.decoder(), z)?,
            ManifoldModel::Pca(p) => p.decode_values(z),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelHealth(
                "decoder produced non-finite parameters".into(),
            ));
        }
        ParamVector::new(Arc::clone(self.target()), values)
    }

    /// `decode(encode(theta))`
    pub fn reconstruct(&self, theta: &ParamVector) -> Result<ParamVector> {
        self.decode(&self.encode(theta)?)
    }

    /// `||theta - decode(encode(theta))||`
    pub fn reconstruction_error(&self, theta: &ParamVector) -> Result<f64> {
        let back = self.reconstruct(theta)?;
        Ok(distance(theta.values(), back.values()))
    }

    /// Decoder Jacobian at `z`; constant `G^T` for PCA.
    pub fn decoder_jacobian(&self, z: &[f64]) -> Result<JacobianMatrix> {
        match self {
            ManifoldModel::Autoencoder(ae) => decoder_jacobian(ae.decoder(), z),
            ManifoldModel::Pca(p) => {
                let m = p.latent_dim();
                if z.len() != m {
                    return Err(Error::Dimension {
                        what: "latent point",
                        expected: m,
                        got: z.len(),
                    });
                }
                let g = p.components();
                let rows = g.ncols();
                let entries = (0..rows * m).map(|k| g[(k % m, k / m)]).collect();
                JacobianMatrix::from_row_major(rows, m, entries, z.to_vec())
            }
        }
    }

    /// `Sigma_Z = sigma_theta * J^T J` at `z`.
    pub fn latent_covariance(&self, z: &[f64], scale: MutationScale) -> Result<LatentCovariance> {
        jacobian_scaled_covariance(&self.decoder_jacobian(z)?, scale)
    }

    /// Per-dimension span `max - min` of the encoded collection.
    pub fn latent_ranges(&self, collection: &[ParamVector]) -> Result<Vec<f64>> {
        let m = self.latent_dim();
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for theta in collection {
            for (i, z) in self.encode(theta)?.into_iter().enumerate() {
                lo[i] = lo[i].min(z);
                hi[i] = hi[i].max(z);
            }
        }
        Ok(lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h >= l { h - l } else { 0.0 })
            .collect())
    }
}

/// Mean reconstruction error over `collection`, the gate `epsilon_r`.
pub fn reconstruction_threshold(model: &ManifoldModel, collection: &[ParamVector]) -> Result<f64> {
    if collection.is_empty() {
        return Err(Error::Config(
            "reconstruction threshold of an empty collection".into(),
        ));
    }
    let total = collection
        .iter()
        .map(|t| model.reconstruction_error(t))
        .sum::<Result<f64>>()?;
    Ok(total / collection.len() as f64)
}
