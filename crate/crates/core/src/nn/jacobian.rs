//! Decoder Jacobians.
//!
//! `decoder_jacobian` pushes all `M` input tangents through the network at
//! once, which is the cheap direction when the input is much narrower than the
//! output.

use crate::error::{Error, Result};
use crate::nn::gemm::{gemm, MatRef};
use crate::nn::mlp::{forward, forward_trace};
use crate::nn::params::ParamVector;

/// Dense `rows x cols` Jacobian, row-major, evaluated at `base_point`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    base_point: Vec<f64>,
}

impl JacobianMatrix {
    pub fn from_row_major(
        rows: usize,
        cols: usize,
        entries: Vec<f64>,
        base_point: Vec<f64>,
    ) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension {
                what: "jacobian entries",
                expected: rows * cols,
                got: entries.len(),
            });
        }
        if base_point.len() != cols {
            return Err(Error::Dimension {
                what: "jacobian base point",
                expected: cols,
                got: base_point.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            entries,
            base_point,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    /// `scale * J^T J`, row-major `cols x cols`.
    pub fn gram(&self, scale: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.cols * self.cols];
        gemm(
            scale,
            &self.entries,
            MatRef::transposed(self.cols, self.rows),
            &self.entries,
            MatRef::row_major(self.rows, self.cols),
            0.0,
            &mut out,
        );
        out
    }

    /// Largest entrywise relative deviation from `other`.
    ///
    /// Each entry is compared against the larger of the two magnitudes, floored at
    /// 1e-3 of the largest entry of either matrix so that entries which vanish in
    /// both do not dominate the ratio.
    pub fn max_relative_error(&self, other: &JacobianMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let scale = self
            .entries
            .iter()
            .chain(&other.entries)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
            .fold(0.0, f64::max)
    }
}

fn check_input(params: &ParamVector, z: &[f64]) -> Result<()> {
    let m = params.spec().input_dim();
    if z.len() != m {
        return Err(Error::Dimension {
            what: "latent point",
            expected: m,
            got: z.len(),
        });
    }
    Ok(())
}

/// Exact Jacobian of the network at `z` by forward-mode tangent propagation.
pub fn decoder_jacobian(params: &ParamVector, z: &[f64]) -> Result<JacobianMatrix> {
    check_input(params, z)?;
    let spec = params.spec();
    let values = params.values();
    let m = z.len();
    let trace = forward_trace(spec, values, z);
    // tangent: n_l x m, starts as the identity
    let mut tangent = vec![0.0; m * m];
    for i in 0..m {
        tangent[i * m + i] = 1.0;
    }
    for (l, layer) in spec.layers().iter().enumerate() {
        let mut next = vec![0.0; layer.n_out * m];
        gemm(
            1.0,
            &values[layer.weights..layer.biases],
            MatRef::row_major(layer.n_out, layer.n_in),
            &tangent,
            MatRef::row_major(layer.n_in, m),
            0.0,
            &mut next,
        );
        for o in 0..layer.n_out {
            let d = layer
                .activation
                .derivative(trace.pre[l][o], trace.post[l][o]);
            if d != 1.0 {
                next[o * m..(o + 1) * m].iter_mut().for_each(|t| *t *= d);
            }
        }
        tangent = next;
    }
    JacobianMatrix::from_row_major(spec.output_dim(), m, tangent, z.to_vec())
}

/// Central-difference estimate `(f(z + h e_i) - f(z - h e_i)) / 2h`, column by column.
pub fn finite_diff_jacobian(params: &ParamVector, z: &[f64], h: f64) -> Result<JacobianMatrix> {
    check_input(params, z)?;
    if !(h > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let m = z.len();
    let p = params.spec().output_dim();
    let mut entries = vec![0.0; p * m];
    let mut probe = z.to_vec();
    for c in 0..m {
        probe[c] = z[c] + h;
        let plus = forward(params, &probe)?;
        probe[c] = z[c] - h;
        let minus = forward(params, &probe)?;
        probe[c] = z[c];
        for r in 0..p {
            entries[r * m + c] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    JacobianMatrix::from_row_major(p, m, entries, z.to_vec())
}
