//! Symmetric autoencoder over policy parameters and its training loop.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{backward_batch, forward_batch, BatchWorkspace};
use crate::nn::{init, Activation, AdamConfig, AdamState, MlpSpec, ParamVector};

/// Hidden width and latent dimension of a symmetric `P -> H -> M -> H -> P` autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AeArchitecture {
    pub hidden: usize,
    pub latent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeTrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub test_fraction: f64,
    pub early_stop_window: usize,
    pub early_stop_slope: f64,
    /// Fraction of `epochs` after which a flat test curve also stops training.
    pub plateau_min_fraction: f64,
    pub reset_optimizer_moments_each_loop: bool,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            epochs: 20_000,
            batch_size: 64,
            test_fraction: 0.30,
            early_stop_window: 100,
            early_stop_slope: 1e-5,
            plateau_min_fraction: 0.25,
            reset_optimizer_moments_each_loop: true,
        }
    }
}

impl AeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!(
                "ae.test_fraction must be in (0, 1), got {}",
                self.test_fraction
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_window < 2 {
            return bad(
                "ae.epochs, ae.batch_size must be positive and ae.early_stop_window >= 2".into(),
            );
        }
        if !(self.lr > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return bad("ae.lr must be positive and ae.beta1/ae.beta2 in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) || !(0.0..=1.0).contains(&self.plateau_min_fraction) {
            return bad("ae.epsilon must be positive and ae.plateau_min_fraction in [0, 1]".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// Test loss trending upwards.
    Overfitting {
        slope: f64,
    },
    /// Test loss no longer improving after the minimum number of epochs.
    Plateau {
        slope: f64,
    },
}

/// Least-squares slope of `values` against their index.
pub fn fitted_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = values.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &y) in values.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (y - y_mean);
        den += dx * dx;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Early-stopping rule over the recorded test-loss history after `epochs_done` epochs.
pub fn early_stop_decision(
    test_history: &[f64],
    epochs_done: usize,
    cfg: &AeTrainConfig,
) -> Option<StopReason> {
    let w = cfg.early_stop_window;
    if test_history.len() < w {
        return None;
    }
    let slope = fitted_slope(&test_history[test_history.len() - w..]);
    if slope > cfg.early_stop_slope {
        return Some(StopReason::Overfitting { slope });
    }
    let min_epochs = (cfg.plateau_min_fraction * cfg.epochs as f64).ceil() as usize;
    if slope > -cfg.early_stop_slope && epochs_done >= min_epochs {
        return Some(StopReason::Plateau { slope });
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub epochs_run: usize,
    pub stop: StopReason,
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    /// Mean reconstruction error over the whole collection with the final weights.
    pub mean_reconstruction_error: f64,
}

impl TrainStats {
    pub fn best_test_loss_history(&self) -> Vec<f64> {
        self.test_loss
            .iter()
            .scan(f64::INFINITY, |best, &l| {
                *best = best.min(l);
                Some(*best)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder: ParamVector,
    decoder: ParamVector,
    target: Arc<MlpSpec>,
}

impl Autoencoder {
    /// Glorot-initialised autoencoder for parameter vectors of `target`.
    pub fn random<R: Rng + ?Sized>(
        target: Arc<MlpSpec>,
        arch: AeArchitecture,
        rng: &mut R,
    ) -> Result<Self> {
        let p = target.param_count();
        if arch.latent == 0 || arch.hidden == 0 || arch.latent > p {
            return Err(Error::Config(format!(
                "autoencoder hidden={} latent={} invalid for {p} parameters",
                arch.hidden, arch.latent
            )));
        }
        let enc = Arc::new(MlpSpec::uniform(
            vec![p, arch.hidden, arch.latent],
            Activation::Elu,
            Activation::Linear,
        )?);
        let dec = Arc::new(MlpSpec::uniform(
            vec![arch.latent, arch.hidden, p],
            Activation::Elu,
            Activation::Linear,
        )?);
        Ok(Self {
            encoder: init::glorot(&enc, rng),
            decoder: init::glorot(&dec, rng),
            target,
        })
    }

    pub fn from_parts(
        encoder: ParamVector,
        decoder: ParamVector,
        target: Arc<MlpSpec>,
    ) -> Result<Self> {
        let p = target.param_count();
        let (es, ds) = (encoder.spec(), decoder.spec());
        if es.input_dim() != p || ds.output_dim() != p || es.output_dim() != ds.input_dim() {
            return Err(Error::Config(format!(
                "encoder {es} / decoder {ds} do not form an autoencoder over {p} parameters"
            )));
        }
        Ok(Self {
            encoder,
            decoder,
            target,
        })
    }

    pub fn architecture(&self) -> AeArchitecture {
        AeArchitecture {
            hidden: self.encoder.spec().layer_sizes()[1],
            latent: self.latent_dim(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.spec().output_dim()
    }

    pub fn encoder(&self) -> &ParamVector {
        &self.encoder
    }

    pub fn decoder(&self) -> &ParamVector {
        &self.decoder
    }

    pub fn target(&self) -> &Arc<MlpSpec> {
        &self.target
    }

    /// Mean reconstruction norm over `batch`, one sample at a time.
    pub fn loss(&self, batch: &[ParamVector]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Config("loss of an empty batch".into()));
        }
        let mut total = 0.0;
        for theta in batch {
            let z = crate::nn::forward(&self.encoder, theta.values())?;
            let y = crate::nn::forward(&self.decoder, &z)?;
            total += y
                .iter()
                .zip(theta.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and its gradient through the batched training path, encoder
    /// parameters first, then decoder parameters.
    pub fn loss_gradient(&self, batch: &[ParamVector]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Config("loss of an empty batch".into()));
        }
        let p = self.target.param_count();
        if let Some(i) = batch.iter().position(|t| t.len() != p) {
            return Err(Error::Dimension {
                what: "autoencoder batch member",
                expected: p,
                got: batch[i].len(),
            });
        }
        let spec = self.joint_spec()?;
        let values = self.joint_values();
        let mut ws = BatchWorkspace::new(&spec, batch.len());
        let inputs: Vec<f64> = batch
            .iter()
            .flat_map(|t| t.values().iter().copied())
            .collect();
        let mut cot = Vec::new();
        let recon = forward_batch(&spec, &values, &inputs, batch.len(), &mut ws);
        let loss = norm_loss(&inputs, recon, p, Some(&mut cot));
        let mut grad = vec![0.0; values.len()];
        backward_batch(
            &spec,
            &values,
            &inputs,
            batch.len(),
            &mut ws,
            &cot,
            &mut grad,
        );
        Ok((loss, grad))
    }

    fn joint_spec(&self) -> Result<MlpSpec> {
        let es = self.encoder.spec();
        let ds = self.decoder.spec();
        let mut sizes = es.layer_sizes().to_vec();
        sizes.extend_from_slice(&ds.layer_sizes()[1..]);
        let mut acts = es.activations().to_vec();
        acts.extend_from_slice(ds.activations());
        MlpSpec::new(sizes, acts)
    }

    fn joint_values(&self) -> Vec<f64> {
        let mut v = self.encoder.values().to_vec();
        v.extend_from_slice(self.decoder.values());
        v
    }

    fn set_joint_values(&mut self, v: &[f64]) -> Result<()> {
        let n = self.encoder.len();
        self.encoder = self.encoder.with_values(v[..n].to_vec())?;
        self.decoder = self.decoder.with_values(v[n..].to_vec())?;
        Ok(())
    }
}

/// Trained autoencoder together with the optimiser state it ended with.
#[derive(Debug, Clone)]
pub struct AutoencoderFit {
    pub model: Autoencoder,
    pub stats: TrainStats,
    pub optimizer: AdamState,
}

fn gather(collection: &[ParamVector], idx: &[usize], out: &mut Vec<f64>) {
    out.clear();
    for &i in idx {
        out.extend_from_slice(collection[i].values());
    }
}

/// Mean per-sample reconstruction norm of one batch, optionally filling the
/// output cotangent of that mean.
fn norm_loss(target: &[f64], recon: &[f64], p: usize, cotangent: Option<&mut Vec<f64>>) -> f64 {
    let rows = target.len() / p;
    let mut total = 0.0;
    let mut norms = Vec::with_capacity(rows);
    for r in 0..rows {
        let n = target[r * p..(r + 1) * p]
            .iter()
            .zip(&recon[r * p..(r + 1) * p])
            .map(|(t, y)| (y - t) * (y - t))
            .sum::<f64>()
            .sqrt();
        norms.push(n);
        total += n;
    }
    if let Some(cot) = cotangent {
        cot.clear();
        cot.resize(target.len(), 0.0);
        for r in 0..rows {
            if norms[r] > 0.0 {
                let s = 1.0 / (norms[r] * rows as f64);
                for k in r * p..(r + 1) * p {
                    cot[k] = (recon[k] - target[k]) * s;
                }
            }
        }
    }
    total / rows as f64
}

/// Fits an autoencoder by minimising the mean reconstruction norm
/// `||theta - decode(encode(theta))||` over the collection.
///
/// Each epoch reshuffles the collection and holds out `test_fraction` of it to
/// drive early stopping. Data is used as is, without normalisation. With a warm
/// start the weights carry over; the Adam moments carry over only when
/// `reset_optimizer_moments_each_loop` is off.
pub fn fit_autoencoder<R: Rng + ?Sized>(
    collection: &[ParamVector],
    arch: AeArchitecture,
    cfg: &AeTrainConfig,
    warm_start: Option<&AutoencoderFit>,
    init_model: Option<&Autoencoder>,
    rng: &mut R,
) -> Result<AutoencoderFit> {
    cfg.validate()?;
    let first = collection
        .first()
        .ok_or_else(|| Error::Config("cannot fit an autoencoder on an empty collection".into()))?;
    let target = Arc::clone(first.spec());
    if let Some(i) = collection.iter().position(|c| c.spec() != &target) {
        return Err(Error::Config(format!(
            "collection member {i} has a different network spec"
        )));
    }
    let mut model = match (warm_start, init_model) {
        (Some(w), _) => w.model.clone(),
        (None, Some(m)) => m.clone(),
        (None, None) => Autoencoder::random(Arc::clone(&target), arch, rng)?,
    };
    if model.architecture() != arch || model.target() != &target {
        return Err(Error::Config(format!(
            "warm-start model {:?} does not match requested {:?}",
            model.architecture(),
            arch
        )));
    }

    let spec = model.joint_spec()?;
    let mut values = model.joint_values();
    let mut optimizer = match warm_start {
        Some(w)
            if !cfg.reset_optimizer_moments_each_loop
                && w.optimizer.first_moment().len() == values.len() =>
        {
            let mut o = w.optimizer.clone();
            o.config = cfg.adam();
            o
        }
        _ => AdamState::new(values.len(), cfg.adam()),
    };

    let n = collection.len();
    let p = target.param_count();
    let n_test = if n >= 2 {
        ((cfg.test_fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let bs = cfg.batch_size.min(n - n_test).max(1);
    let mut ws = BatchWorkspace::new(&spec, bs.max(n_test.min(256)).max(1));
    let mut grad = vec![0.0; values.len()];
    let mut inputs = Vec::with_capacity(bs * p);
    let mut cot = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut train_hist = Vec::new();
    let mut test_hist = Vec::new();
    let mut stop = StopReason::Completed;

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let (test_idx, train_idx) = order.split_at(n_test);

        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in train_idx.chunks(bs) {
            gather(collection, chunk, &mut inputs);
            let recon = forward_batch(&spec, &values, &inputs, chunk.len(), &mut ws);
            let loss = norm_loss(&inputs, recon, p, Some(&mut cot));
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("training loss became {loss} in batch {batches}"),
                });
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            backward_batch(
                &spec,
                &values,
                &inputs,
                chunk.len(),
                &mut ws,
                &cot,
                &mut grad,
            );
            optimizer
                .step(&mut values, &grad)
                .map_err(|e| Error::Training {
                    epoch,
                    reason: e.to_string(),
                })?;
            epoch_loss += loss;
            batches += 1;
        }
        train_hist.push(epoch_loss / batches as f64);

        if n_test > 0 {
            let mut sum = 0.0;
            for chunk in test_idx.chunks(ws.capacity()) {
                gather(collection, chunk, &mut inputs);
                let recon = forward_batch(&spec, &values, &inputs, chunk.len(), &mut ws);
                sum += norm_loss(&inputs, recon, p, None) * chunk.len() as f64;
            }
            let test_loss = sum / n_test as f64;
            if !test_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("test loss became {test_loss}"),
                });
            }
            test_hist.push(test_loss);
            if let Some(reason) = early_stop_decision(&test_hist, epoch + 1, cfg) {
                stop = reason;
                break;
            }
        }
    }

    model.set_joint_values(&values)?;
    let mean_reconstruction_error = collection
        .iter()
        .map(|theta| super::ae_reconstruction_error(&model, theta))
        .sum::<Result<f64>>()?
        / n as f64;
    Ok(AutoencoderFit {
        model,
        stats: TrainStats {
            epochs_run: train_hist.len(),
            stop,
            train_loss: train_hist,
            test_loss: test_hist,
            mean_reconstruction_error,
        },
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn slope_of_a_line() {
        let ys: Vec<f64> = (0..100).map(|i| 3.0 - 0.25 * i as f64).collect();
        assert!((fitted_slope(&ys) + 0.25).abs() < 1e-12);
        assert_eq!(fitted_slope(&[1.0; 10]), 0.0);
    }

    #[test]
    fn early_stop_rule() {
        let cfg = AeTrainConfig {
            epochs: 1000,
            ..AeTrainConfig::default()
        };
        let falling: Vec<f64> = (0..100).map(|i| 10.0 - 0.01 * i as f64).collect();
        assert_eq!(early_stop_decision(&falling, 900, &cfg), None);
        assert_eq!(early_stop_decision(&falling[..99], 900, &cfg), None);

        let rising: Vec<f64> = (0..100).map(|i| 1.0 + 1e-3 * i as f64).collect();
        assert!(matches!(
            early_stop_decision(&rising, 100, &cfg),
            Some(StopReason::Overfitting { .. })
        ));

        let flat = vec![1.0; 100];
        // plateau only counts after 25% of the epoch budget
        assert_eq!(early_stop_decision(&flat, 249, &cfg), None);
        assert!(matches!(
            early_stop_decision(&flat, 250, &cfg),
            Some(StopReason::Plateau { .. })
        ));
    }

    fn tiny_spec() -> Arc<MlpSpec> {
        Arc::new(MlpSpec::uniform(vec![3, 2, 2], Activation::Tanh, Activation::Linear).unwrap())
    }

    #[test]
    fn single_point_dataset_is_memorised() {
        let target = tiny_spec();
        let mut r = rng::seeded(5);
        let point = init::uniform(&target, &mut r);
        let collection = vec![point.clone(); 200];
        let cfg = AeTrainConfig {
            lr: 1e-4,
            epochs: 4000,
            ..AeTrainConfig::default()
        };
        let arch = AeArchitecture {
            hidden: 8,
            latent: 2,
        };
        let fit = fit_autoencoder(&collection, arch, &cfg, None, None, &mut r).unwrap();
        let err = crate::manifold::ae_reconstruction_error(&fit.model, &point).unwrap();
        assert!(
            err < 1e-3,
            "reconstruction error {err} after {} epochs",
            fit.stats.epochs_run
        );
        let best = fit.stats.best_test_loss_history();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn warm_start_keeps_weights_and_resets_moments() {
        let target = tiny_spec();
        let mut r = rng::seeded(6);
        let collection: Vec<_> = (0..20).map(|_| init::uniform(&target, &mut r)).collect();
        let cfg = AeTrainConfig {
            lr: 1e-3,
            epochs: 5,
            ..AeTrainConfig::default()
        };
        let arch = AeArchitecture {
            hidden: 4,
            latent: 2,
        };
        let first = fit_autoencoder(&collection, arch, &cfg, None, None, &mut r).unwrap();
        let no_epochs = AeTrainConfig {
            epochs: 1,
            lr: 1e-12,
            ..cfg.clone()
        };
        let second =
            fit_autoencoder(&collection, arch, &no_epochs, Some(&first), None, &mut r).unwrap();
        // one step at a vanishing learning rate: weights barely move from the warm start
        let drift: f64 = first
            .model
            .decoder()
            .values()
            .iter()
            .zip(second.model.decoder().values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-9);
        assert!(second.optimizer.steps() < first.optimizer.steps());

        let keep = AeTrainConfig {
            reset_optimizer_moments_each_loop: false,
            ..no_epochs
        };
        let third = fit_autoencoder(&collection, arch, &keep, Some(&first), None, &mut r).unwrap();
        assert!(third.optimizer.steps() > first.optimizer.steps());
    }

    #[test]
    fn empty_collection_and_bad_config_are_rejected() {
        let mut r = rng::seeded(7);
        let arch = AeArchitecture {
            hidden: 4,
            latent: 2,
        };
        assert!(fit_autoencoder(&[], arch, &AeTrainConfig::default(), None, None, &mut r).is_err());
        let bad = AeTrainConfig {
            test_fraction: 1.0,
            ..AeTrainConfig::default()
        };
        let c = vec![ParamVector::zeros(tiny_spec()); 3];
        assert!(fit_autoencoder(&c, arch, &bad, None, None, &mut r).is_err());
    }

    #[test]
    fn diverging_training_aborts_with_diagnostics() {
        let target = tiny_spec();
        let mut r = rng::seeded(8);
        let huge: Vec<_> = (0..10)
            .map(|_| {
                let v = init::uniform(&target, &mut r)
                    .into_values()
                    .iter()
                    .map(|x| x * 1e300)
                    .collect();
                ParamVector::new(Arc::clone(&target), v).unwrap()
            })
            .collect();
        let cfg = AeTrainConfig {
            epochs: 3,
            ..AeTrainConfig::default()
        };
        let err = fit_autoencoder(
            &huge,
            AeArchitecture {
                hidden: 4,
                latent: 2,
            },
            &cfg,
            None,
            None,
            &mut r,
        );
        assert!(matches!(err, Err(Error::Training { .. })), "{err:?}");
    }
}
