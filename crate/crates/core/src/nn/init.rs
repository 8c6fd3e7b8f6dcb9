use std::sync::Arc;

use rand::Rng;

use crate::nn::params::ParamVector;
use crate::nn::spec::MlpSpec;

/// Every parameter i.i.d. `U(-1, 1)`.
pub fn uniform<R: Rng + ?Sized>(spec: &Arc<MlpSpec>, rng: &mut R) -> ParamVector {
    let values = (0..spec.param_count())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    ParamVector::new(Arc::clone(spec), values).expect("uniform draws are finite")
}

/// Xavier-Glorot uniform weights `U(-a, a)`, `a = sqrt(6 / (n_in + n_out))`, zero biases.
pub fn glorot<R: Rng + ?Sized>(spec: &Arc<MlpSpec>, rng: &mut R) -> ParamVector {
    let mut values = vec![0.0; spec.param_count()];
    for layer in spec.layers() {
        let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
        for w in &mut values[layer.weights..layer.biases] {
            *w = rng.random_range(-limit..=limit);
        }
    }
    ParamVector::new(Arc::clone(spec), values).expect("glorot draws are finite")
}
