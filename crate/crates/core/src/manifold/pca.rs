//! Linear manifold from the top principal directions of a collection.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::nn::{MlpSpec, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    target: Arc<MlpSpec>,
    mean: Vec<f64>,
    /// `M x P`, orthonormal rows.
    components: DMatrix<f64>,
    /// Variance captured by each component, `1/n` normalisation, descending.
    eigenvalues: Vec<f64>,
    /// Variance of the components that were not kept.
    discarded_variance: f64,
}

impl Pca {
    pub fn from_parts(
        target: Arc<MlpSpec>,
        mean: Vec<f64>,
        components: DMatrix<f64>,
    ) -> Result<Self> {
        let p = target.param_count();
        if mean.len() != p || components.ncols() != p || components.nrows() == 0 {
            return Err(Error::Config(format!(
                "pca mean {} / components {}x{} do not match {p} parameters",
                mean.len(),
                components.nrows(),
                components.ncols()
            )));
        }
        Ok(Self {
            target,
            mean,
            eigenvalues: vec![0.0; components.nrows()],
            components,
            discarded_variance: 0.0,
        })
    }

    pub fn target(&self) -> &Arc<MlpSpec> {
        &self.target
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn discarded_variance(&self) -> f64 {
        self.discarded_variance
    }

    pub fn latent_dim(&self) -> usize {
        self.components.nrows()
    }

    /// `G (theta - mu)`
    pub fn encode_values(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.mean.len();
        (0..self.latent_dim())
            .map(|i| {
                (0..p)
                    .map(|j| self.components[(i, j)] * (theta[j] - self.mean[j]))
                    .sum()
            })
            .collect()
    }

    /// `G^T z + mu`
    pub fn decode_values(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (i, &zi) in z.iter().enumerate() {
            if zi != 0.0 {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += self.components[(i, j)] * zi;
                }
            }
        }
        out
    }
}

/// Modified Gram-Schmidt on the rows of `rows`; rows that collapse are replaced
/// by the first standard basis vector that is not yet spanned.
fn orthonormalise_rows(rows: &mut [Vec<f64>]) {
    let p = rows.first().map_or(0, Vec::len);
    let mut basis_probe = 0;
    for i in 0..rows.len() {
        loop {
            for _ in 0..2 {
                for k in 0..i {
                    let d: f64 = rows[i].iter().zip(&rows[k]).map(|(a, b)| a * b).sum();
                    let (head, tail) = rows.split_at_mut(i);
                    tail[0]
                        .iter_mut()
                        .zip(&head[k])
                        .for_each(|(a, b)| *a -= d * b);
                }
            }
            let norm = rows[i].iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-8 {
                rows[i].iter_mut().for_each(|a| *a /= norm);
                break;
            }
            rows[i] = vec![0.0; p];
            rows[i][basis_probe % p] = 1.0;
            basis_probe += 1;
        }
    }
}

/// Fits the mean and top-`m` principal directions of `collection`.
///
/// Uses the `n x n` Gram matrix when there are fewer points than parameters and
/// the `P x P` covariance otherwise. Components are sign-normalised so their
/// largest-magnitude entry is positive.
pub fn fit_pca(collection: &[ParamVector], m: usize) -> Result<Pca> {
    let n = collection.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "pca needs at least 2 points, got {n}"
        )));
    }
    let target = Arc::clone(collection[0].spec());
    if let Some(i) = collection.iter().position(|c| c.spec() != &target) {
        return Err(Error::Config(format!(
            "collection member {i} has a different network spec"
        )));
    }
    let p = target.param_count();
    if m == 0 || m > p.min(n) {
        return Err(Error::Config(format!(
            "pca latent dimension {m} must be in 1..={} for {n} points of {p} parameters",
            p.min(n)
        )));
    }
    let mut mean = vec![0.0; p];
    for c in collection {
        mean.iter_mut().zip(c.values()).for_each(|(a, b)| *a += b);
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let x = DMatrix::from_fn(n, p, |i, j| collection[i].values()[j] - mean[j]);

    let (eigvals, mut rows): (Vec<f64>, Vec<Vec<f64>>) = if n <= p {
        let gram = &x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        let order = descending(eig.eigenvalues.as_slice());
        let vals: Vec<f64> = order
            .iter()
            .map(|&k| eig.eigenvalues[k].max(0.0) / n as f64)
            .collect();
        let rows = order[..m]
            .iter()
            .map(|&k| {
                let u = eig.eigenvectors.column(k);
                let v = x.transpose() * u;
                v.iter().copied().collect()
            })
            .collect();
        (vals, rows)
    } else {
        let cov = x.transpose() * &x / n as f64;
        let eig = SymmetricEigen::new(cov);
        let order = descending(eig.eigenvalues.as_slice());
        let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        let rows = order[..m]
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect();
        (vals, rows)
    };
    orthonormalise_rows(&mut rows);
    for r in &mut rows {
        let pivot = r
            .iter()
            .copied()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            r.iter_mut().for_each(|a| *a = -*a);
        }
    }
    let components = DMatrix::from_fn(m, p, |i, j| rows[i][j]);
    Ok(Pca {
        target,
        mean,
        components,
        discarded_variance: eigvals[m..].iter().sum(),
        eigenvalues: eigvals[..m].to_vec(),
    })
}

fn descending(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    idx
}
