use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// ELU with alpha = 1.
    Elu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Linear => x,
        }
    }

    /// Derivative at pre-activation `pre`, given the already computed `post = apply(pre)`.
    #[inline]
    pub fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - post * post,
            Activation::Elu => {
                if pre > 0.0 {
                    1.0
                } else {
                    post + 1.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Elu => 1,
            Activation::Linear => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Elu),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Tanh => "tanh",
            Activation::Elu => "elu",
            Activation::Linear => "linear",
        };
        f.write_str(s)
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "elu" => Ok(Activation::Elu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Shape of a dense feed-forward network.
///
/// `activations[l]` is applied to the output of layer `l`, so the last entry is
/// the output activation. Parameters are flattened layer by layer, each layer
/// storing its row-major `(out, in)` weight matrix followed by its biases.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: usize,
    pub biases: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least 2 layers, got {}",
                layer_sizes.len()
            )));
        }
        if let Some(i) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!("layer {i} has zero width")));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::Config(format!(
                "{} layers need {} activations, got {}",
                layer_sizes.len(),
                layer_sizes.len() - 1,
                activations.len()
            )));
        }
        Ok(Self {
            layer_sizes,
            activations,
        })
    }

    /// Same activation on every hidden layer, `output` on the last one.
    pub fn uniform(
        layer_sizes: Vec<usize>,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self> {
        let n = layer_sizes.len().saturating_sub(1);
        let activations = (0..n)
            .map(|l| if l + 1 == n { output } else { hidden })
            .collect();
        Self::new(layer_sizes, activations)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .zip(&self.activations)
            .map(|(w, &activation)| {
                let (n_in, n_out) = (w[0], w[1]);
                let layout = LayerLayout {
                    n_in,
                    n_out,
                    weights: offset,
                    biases: offset + n_in * n_out,
                    activation,
                };
                offset += n_in * n_out + n_out;
                layout
            })
            .collect()
    }

    pub fn max_width(&self) -> usize {
        *self.layer_sizes.iter().max().expect("validated non-empty")
    }

    /// Spec restricted to layers `from..=to` (layer indices into `layer_sizes`).
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if to <= from || to >= self.layer_sizes.len() {
            return Err(Error::Config(format!(
                "invalid layer slice {from}..={to} of a {}-layer spec",
                self.layer_sizes.len()
            )));
        }
        Self::new(
            self.layer_sizes[from..=to].to_vec(),
            self.activations[from..to].to_vec(),
        )
    }
}

impl fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.layer_sizes.iter().enumerate() {
            if i > 0 {
                write!(f, " -[{}]-> ", self.activations[i - 1])?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_matches_layer_sum() {
        let spec =
            MlpSpec::uniform(vec![14, 32, 32, 3], Activation::Tanh, Activation::Linear).unwrap();
        assert_eq!(spec.param_count(), 14 * 32 + 32 + 32 * 32 + 32 + 32 * 3 + 3);
        let layers = spec.layers();
        assert_eq!(layers[1].weights, 14 * 32 + 32);
        assert_eq!(layers[2].biases + 3, spec.param_count());
        assert_eq!(layers[2].activation, Activation::Linear);
        assert_eq!(layers[0].activation, Activation::Tanh);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpSpec::new(vec![3], vec![]).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2], vec![Activation::Tanh; 2]).is_err());
        assert!(MlpSpec::new(vec![3, 4, 2], vec![Activation::Tanh]).is_err());
    }

    #[test]
    fn slice_keeps_activations() {
        let ae = MlpSpec::new(
            vec![10, 6, 2, 6, 10],
            vec![
                Activation::Elu,
                Activation::Linear,
                Activation::Elu,
                Activation::Linear,
            ],
        )
        .unwrap();
        let dec = ae.slice(2, 4).unwrap();
        assert_eq!(dec.layer_sizes(), &[2, 6, 10]);
        assert_eq!(dec.activations(), &[Activation::Elu, Activation::Linear]);
        let enc = ae.slice(0, 2).unwrap();
        assert_eq!(enc.param_count() + dec.param_count(), ae.param_count());
    }

    #[test]
    fn elu_derivative_is_continuous_at_zero() {
        let e = Activation::Elu;
        let below = e.derivative(-1e-12, e.apply(-1e-12));
        let above = e.derivative(1e-12, e.apply(1e-12));
        assert!((below - above).abs() < 1e-9);
    }
}
