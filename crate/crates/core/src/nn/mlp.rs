//! Forward and reverse passes of a dense network.
//!
//! The single-sample routines are plain matrix-vector loops and serve policy
//! rollouts. The batched routines go through `gemm` and serve autoencoder
//! training.

use crate::error::{Error, Result};
use crate::nn::gemm::{gemm, MatRef};
use crate::nn::params::ParamVector;
use crate::nn::spec::MlpSpec;

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

/// Reusable buffers for `forward_into`.
#[derive(Debug, Clone)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    pub fn for_spec(spec: &MlpSpec) -> Self {
        let w = spec.max_width();
        Self {
            a: vec![0.0; w],
            b: vec![0.0; w],
        }
    }
}

/// Unchecked forward pass; `values` and `input` must match `spec`.
pub fn forward_into<'s>(
    spec: &MlpSpec,
    values: &[f64],
    input: &[f64],
    scratch: &'s mut Scratch,
) -> &'s [f64] {
    debug_assert_eq!(values.len(), spec.param_count());
    debug_assert_eq!(input.len(), spec.input_dim());
    let Scratch { a, b } = scratch;
    a[..input.len()].copy_from_slice(input);
    let (mut cur, mut next) = (a, b);
    for layer in spec.layers() {
        let w = &values[layer.weights..layer.biases];
        let bias = &values[layer.biases..layer.biases + layer.n_out];
        let x = &cur[..layer.n_in];
        for o in 0..layer.n_out {
            let row = &w[o * layer.n_in..(o + 1) * layer.n_in];
            let dot: f64 = row.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
            next[o] = layer.activation.apply(dot + bias[o]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    &cur[..spec.output_dim()]
}

/// Network output for one input vector.
pub fn forward(params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    let spec = params.spec();
    check_len("network input", spec.input_dim(), input.len())?;
    let mut scratch = Scratch::for_spec(spec);
    Ok(forward_into(spec, params.values(), input, &mut scratch).to_vec())
}

/// Per-layer pre- and post-activation values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("spec has at least one layer")
    }
}

pub(crate) fn forward_trace(spec: &MlpSpec, values: &[f64], input: &[f64]) -> Trace {
    let layers = spec.layers();
    let mut pre = Vec::with_capacity(layers.len());
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    for layer in &layers {
        let x = post.last().map_or(input, |v| v.as_slice());
        let w = &values[layer.weights..layer.biases];
        let bias = &values[layer.biases..layer.biases + layer.n_out];
        let z: Vec<f64> = (0..layer.n_out)
            .map(|o| {
                let row = &w[o * layer.n_in..(o + 1) * layer.n_in];
                row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + bias[o]
            })
            .collect();
        post.push(z.iter().map(|&v| layer.activation.apply(v)).collect());
        pre.push(z);
    }
    Trace { pre, post }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Vector-Jacobian product: gradients of `output_grad · f(params, input)`.
pub fn backward(params: &ParamVector, input: &[f64], output_grad: &[f64]) -> Result<Gradients> {
    let spec = params.spec();
    check_len("network input", spec.input_dim(), input.len())?;
    check_len("output gradient", spec.output_dim(), output_grad.len())?;
    let values = params.values();
    let trace = forward_trace(spec, values, input);
    let layers = spec.layers();
    let mut param_grad = vec![0.0; values.len()];
    let mut upstream = output_grad.to_vec();
    for (l, layer) in layers.iter().enumerate().rev() {
        let x = if l == 0 { input } else { &trace.post[l - 1] };
        let delta: Vec<f64> = (0..layer.n_out)
            .map(|o| {
                upstream[o]
                    * layer
                        .activation
                        .derivative(trace.pre[l][o], trace.post[l][o])
            })
            .collect();
        let w = &values[layer.weights..layer.biases];
        let mut down = vec![0.0; layer.n_in];
        for o in 0..layer.n_out {
            let d = delta[o];
            let gw = &mut param_grad
                [layer.weights + o * layer.n_in..layer.weights + (o + 1) * layer.n_in];
            for i in 0..layer.n_in {
                gw[i] += d * x[i];
                down[i] += d * w[o * layer.n_in + i];
            }
            param_grad[layer.biases + o] += d;
        }
        upstream = down;
    }
    Ok(Gradients {
        params: param_grad,
        input: upstream,
    })
}

/// Activation buffers for batched passes over a fixed spec.
#[derive(Debug, Clone)]
pub struct BatchWorkspace {
    batch: usize,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    down: Vec<f64>,
}

impl BatchWorkspace {
    pub fn new(spec: &MlpSpec, batch: usize) -> Self {
        let layers = spec.layers();
        let w = spec.max_width();
        Self {
            batch,
            pre: layers.iter().map(|l| vec![0.0; batch * l.n_out]).collect(),
            post: layers.iter().map(|l| vec![0.0; batch * l.n_out]).collect(),
            delta: vec![0.0; batch * w],
            down: vec![0.0; batch * w],
        }
    }

    pub fn capacity(&self) -> usize {
        self.batch
    }
}

/// Batched forward pass over `rows` row-major inputs. Returns `rows x output_dim` outputs.
pub fn forward_batch<'w>(
    spec: &MlpSpec,
    values: &[f64],
    inputs: &[f64],
    rows: usize,
    ws: &'w mut BatchWorkspace,
) -> &'w [f64] {
    assert!(
        rows <= ws.batch,
        "batch of {rows} exceeds workspace capacity {}",
        ws.batch
    );
    assert_eq!(inputs.len(), rows * spec.input_dim());
    for (l, layer) in spec.layers().iter().enumerate() {
        let (done, rest) = ws.post.split_at_mut(l);
        let x: &[f64] = if l == 0 {
            inputs
        } else {
            &done[l - 1][..rows * layer.n_in]
        };
        let z = &mut ws.pre[l][..rows * layer.n_out];
        let bias = &values[layer.biases..layer.biases + layer.n_out];
        for r in 0..rows {
            z[r * layer.n_out..(r + 1) * layer.n_out].copy_from_slice(bias);
        }
        gemm(
            1.0,
            x,
            MatRef::row_major(rows, layer.n_in),
            &values[layer.weights..layer.biases],
            MatRef::transposed(layer.n_in, layer.n_out),
            1.0,
            z,
        );
        let y = &mut rest[0][..rows * layer.n_out];
        for (yi, &zi) in y.iter_mut().zip(z.iter()) {
            *yi = layer.activation.apply(zi);
        }
    }
    &ws.post[spec.num_layers() - 1][..rows * spec.output_dim()]
}

/// Batched reverse pass after `forward_batch` on the same inputs.
///
/// Parameter gradients are summed over the batch and added into `grad`.
pub fn backward_batch(
    spec: &MlpSpec,
    values: &[f64],
    inputs: &[f64],
    rows: usize,
    ws: &mut BatchWorkspace,
    output_grad: &[f64],
    grad: &mut [f64],
) {
    assert_eq!(output_grad.len(), rows * spec.output_dim());
    assert_eq!(grad.len(), values.len());
    let layers = spec.layers();
    ws.down[..output_grad.len()].copy_from_slice(output_grad);
    for (l, layer) in layers.iter().enumerate().rev() {
        let n = rows * layer.n_out;
        let pre = &ws.pre[l][..n];
        let post = &ws.post[l][..n];
        for k in 0..n {
            ws.delta[k] = ws.down[k] * layer.activation.derivative(pre[k], post[k]);
        }
        let delta = &ws.delta[..n];
        let x: &[f64] = if l == 0 {
            inputs
        } else {
            &ws.post[l - 1][..rows * layer.n_in]
        };
        gemm(
            1.0,
            delta,
            MatRef::transposed(layer.n_out, rows),
            x,
            MatRef::row_major(rows, layer.n_in),
            1.0,
            &mut grad[layer.weights..layer.biases],
        );
        let gb = &mut grad[layer.biases..layer.biases + layer.n_out];
        for r in 0..rows {
            for (g, d) in gb
                .iter_mut()
                .zip(&delta[r * layer.n_out..(r + 1) * layer.n_out])
            {
                *g += d;
            }
        }
        if l > 0 {
            gemm(
                1.0,
                delta,
                MatRef::row_major(rows, layer.n_out),
                &values[layer.weights..layer.biases],
                MatRef::row_major(layer.n_out, layer.n_in),
                0.0,
                &mut ws.down[..rows * layer.n_in],
            );
        }
    }
}
