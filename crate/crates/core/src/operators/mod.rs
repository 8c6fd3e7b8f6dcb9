//! Variation operators and random initialisers.

mod bandit;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archive::Elite;
use crate::error::{Error, Result};
use crate::manifold::{GaussianSampler, LatentCovariance, ManifoldModel, MutationScale};
use crate::nn::ParamVector;

pub use crate::nn::init::{glorot as init_glorot, uniform as init_uniform};
pub use bandit::{ucb_update, UcbBandit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Latent,
    Parameter,
    Line,
    Crossover,
    Iso,
}

impl Branch {
    /// Whether the child was generated through the manifold.
    pub fn is_latent(self) -> bool {
        matches!(self, Branch::Latent | Branch::Crossover)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutationOutcome {
    pub child: ParamVector,
    pub branch: Branch,
    pub parent_eval_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoLineParams {
    pub sigma_iso: f64,
    pub sigma_line: f64,
}

impl Default for IsoLineParams {
    fn default() -> Self {
        Self {
            sigma_iso: 0.01,
            sigma_line: 0.2,
        }
    }
}

impl IsoLineParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_iso >= 0.0
            && self.sigma_line >= 0.0
            && self.sigma_iso.is_finite()
            && self.sigma_line.is_finite()
        {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "iso-line sigmas must be non-negative, got {self:?}"
            )))
        }
    }
}

fn outcome(parent: &Elite, values: Vec<f64>, branch: Branch) -> Result<MutationOutcome> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelHealth(format!(
            "{branch:?} mutation produced non-finite parameters"
        )));
    }
    Ok(MutationOutcome {
        child: parent.params.with_values(values)?,
        branch,
        parent_eval_id: parent.eval_id,
    })
}

fn iso_values<R: Rng + ?Sized>(theta: &[f64], std: f64, rng: &mut R) -> Vec<f64> {
    theta
        .iter()
        .map(|t| t + std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `theta + sqrt(sigma_theta) * u`, `u ~ N(0, I)`.
pub fn mutate_iso<R: Rng + ?Sized>(
    parent: &Elite,
    scale: MutationScale,
    rng: &mut R,
) -> Result<MutationOutcome> {
    let v = iso_values(parent.params.values(), scale.std_dev(), rng);
    outcome(parent, v, Branch::Iso)
}

/// `theta + sigma_iso * u + sigma_line * n * (theta_b - theta_a)`.
pub fn mutate_iso_line<R: Rng + ?Sized>(
    parent: &Elite,
    theta_a: &ParamVector,
    theta_b: &ParamVector,
    p: IsoLineParams,
    rng: &mut R,
) -> Result<MutationOutcome> {
    let theta = parent.params.values();
    if theta_a.len() != theta.len() || theta_b.len() != theta.len() {
        return Err(Error::Dimension {
            what: "iso-line partner",
            expected: theta.len(),
            got: theta_a.len().min(theta_b.len()),
        });
    }
    let mut v = iso_values(theta, p.sigma_iso, rng);
    let n: f64 = rng.sample(StandardNormal);
    let k = p.sigma_line * n;
    for ((c, a), b) in v.iter_mut().zip(theta_a.values()).zip(theta_b.values()) {
        *c += k * (b - a);
    }
    outcome(parent, v, Branch::Line)
}

fn latent_step<R: Rng + ?Sized>(
    parent: &Elite,
    model: &ManifoldModel,
    z: &[f64],
    cov: &LatentCovariance,
    rng: &mut R,
) -> Result<MutationOutcome> {
    let z_new = GaussianSampler::new(cov)?.sample(z, rng)?;
    let child = model.decode(&z_new)?;
    outcome(parent, child.into_values(), Branch::Latent)
}

/// The isotropic parameter-space branch of region-based search; same draw as
/// [`mutate_iso`], tagged [`Branch::Parameter`].
pub fn mutate_parameter<R: Rng + ?Sized>(
    parent: &Elite,
    scale: MutationScale,
    rng: &mut R,
) -> Result<MutationOutcome> {
    let v = iso_values(parent.params.values(), scale.std_dev(), rng);
    outcome(parent, v, Branch::Parameter)
}

/// Jacobian-scaled latent step `decode(z')`, `z' ~ N(encode(theta), sigma_theta J^T J)`.
pub fn latent_mutation<R: Rng + ?Sized>(
    parent: &Elite,
    model: &ManifoldModel,
    scale: MutationScale,
    rng: &mut R,
) -> Result<MutationOutcome> {
    let z = model.encode(&parent.params)?;
    let cov = model.latent_covariance(&z, scale)?;
    latent_step(parent, model, &z, &cov, rng)
}

/// Region-based search: latent step when `theta` is reconstructed better than
/// `threshold`, isotropic parameter step otherwise.
pub fn mutate_poms<R: Rng + ?Sized>(
    parent: &Elite,
    model: &ManifoldModel,
    threshold: f64,
    scale: MutationScale,
    rng: &mut R,
) -> Result<MutationOutcome> {
    if model.reconstruction_error(&parent.params)? < threshold {
        latent_mutation(parent, model, scale, rng)
    } else {
        mutate_parameter(parent, scale, rng)
    }
}

/// Branch chosen by a fair coin instead of the reconstruction gate.
pub fn mutate_poms_coin<R: Rng + ?Sized>(
    parent: &Elite,
    model: &ManifoldModel,
    latent_probability: f64,
    scale: MutationScale,
    rng: &mut R,
) -> Result<MutationOutcome> {
    if rng.random::<f64>() < latent_probability {
        latent_mutation(parent, model, scale, rng)
    } else {
        mutate_parameter(parent, scale, rng)
    }
}

/// Latent step with `Sigma_Z = diag(latent_ranges)` in place of the Jacobian scaling.
///
/// With `gate` set, parents reconstructed worse than `threshold` take the
/// isotropic parameter step exactly as in [`mutate_poms`].
pub fn mutate_poms_nojac<R: Rng + ?Sized>(
    parent: &Elite,
    model: &ManifoldModel,
    latent_ranges: &[f64],
    gate: Option<(f64, MutationScale)>,
    rng: &mut R,
) -> Result<MutationOutcome> {
    if let Some((threshold, scale)) = gate {
        if model.reconstruction_error(&parent.params)? >= threshold {
            return mutate_parameter(parent, scale, rng);
        }
    }
    let z = model.encode(&parent.params)?;
    let cov = LatentCovariance::diagonal(latent_ranges, z.clone())?;
    latent_step(parent, model, &z, &cov, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DdeArm {
    Iso,
    Line,
    Crossover,
}

impl DdeArm {
    pub const ALL: [DdeArm; 3] = [DdeArm::Iso, DdeArm::Line, DdeArm::Crossover];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// Picks the next DDE arm and counts it as pulled on `planner`.
pub fn dde_select(planner: &mut UcbBandit) -> DdeArm {
    let arm = planner.select();
    planner.note_pull(arm);
    DdeArm::from_index(arm % DdeArm::ALL.len())
}

/// One DDE child for an already selected arm.
///
/// The crossover arm reconstructs the parent through the autoencoder and
/// perturbs the reconstruction with `sigma_iso * u`.
pub fn dde_mutate<R: Rng + ?Sized>(
    arm: DdeArm,
    parent: &Elite,
    partners: (&ParamVector, &ParamVector),
    model: &ManifoldModel,
    p: IsoLineParams,
    scale: MutationScale,
    rng: &mut R,
) -> Result<MutationOutcome> {
    match arm {
        DdeArm::Iso => mutate_iso(parent, scale, rng),
        DdeArm::Line => mutate_iso_line(parent, partners.0, partners.1, p, rng),
        DdeArm::Crossover => {
            let recon = model.reconstruct(&parent.params)?;
            let v = iso_values(recon.values(), p.sigma_iso, rng);
            outcome(parent, v, Branch::Crossover)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::BehaviourDescriptor;
    use crate::manifold::{fit_pca, AeArchitecture, Autoencoder};
    use crate::nn::{Activation, MlpSpec};
    use crate::rng;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn spec() -> Arc<MlpSpec> {
        Arc::new(MlpSpec::uniform(vec![1, 2], Activation::Linear, Activation::Linear).unwrap())
    }

    fn elite(v: Vec<f64>) -> Elite {
        let s = Arc::new(
            MlpSpec::uniform(vec![1, v.len() / 2], Activation::Linear, Activation::Linear).unwrap(),
        );
        Elite {
            params: ParamVector::new(s, v).unwrap(),
            bd: BehaviourDescriptor::new(vec![0.0]),
            eval_id: 42,
            loop_index: 0,
        }
    }

    fn emp_cov(samples: &[Vec<f64>], mean: &[f64]) -> DMatrix<f64> {
        let d = mean.len();
        let mut c = DMatrix::zeros(d, d);
        for s in samples {
            for i in 0..d {
                for j in 0..d {
                    c[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]);
                }
            }
        }
        c / samples.len() as f64
    }

    #[test]
    fn iso_zero_scale_is_identity() {
        let p = elite(vec![0.5, -1.0, 2.0, 0.0]);
        let mut r = rng::seeded(1);
        let o = mutate_iso(&p, MutationScale::new(0.0).unwrap(), &mut r).unwrap();
        assert_eq!(o.child, p.params);
        assert_eq!(o.branch, Branch::Iso);
        assert_eq!(o.parent_eval_id, 42);
    }

    #[test]
    fn iso_per_coordinate_std() {
        let p = elite(vec![0.0; 4]);
        let mut r = rng::seeded(2);
        let scale = MutationScale::new(0.1).unwrap();
        let samples: Vec<_> = (0..100_000)
            .map(|_| mutate_iso(&p, scale, &mut r).unwrap().child.into_values())
            .collect();
        let c = emp_cov(&samples, &[0.0; 4]);
        for i in 0..4 {
            let sd = c[(i, i)].sqrt();
            assert!(
                (sd - 0.1f64.sqrt()).abs() / 0.1f64.sqrt() < 0.03,
                "coordinate {i}: {sd}"
            );
        }
    }

    #[test]
    fn iso_line_geometry_and_covariance() {
        let p = elite(vec![1.0, 1.0, 1.0, 1.0]);
        let a = ParamVector::new(spec(), vec![0.0, 1.0, 0.0, 2.0]).unwrap();
        let b = ParamVector::new(spec(), vec![2.0, 0.0, 1.0, 2.0]).unwrap();
        let mut r = rng::seeded(3);
        let zero = IsoLineParams {
            sigma_iso: 0.0,
            sigma_line: 0.0,
        };
        assert_eq!(
            mutate_iso_line(&p, &a, &b, zero, &mut r).unwrap().child,
            p.params
        );

        let d = [2.0, -1.0, 1.0, 0.0];
        let line = IsoLineParams {
            sigma_iso: 0.0,
            sigma_line: 0.5,
        };
        for _ in 0..20 {
            let c = mutate_iso_line(&p, &a, &b, line, &mut r).unwrap().child;
            let delta: Vec<f64> = c.values().iter().map(|x| x - 1.0).collect();
            let k = delta[0] / d[0];
            for i in 0..4 {
                assert!((delta[i] - k * d[i]).abs() < 1e-12);
            }
        }

        let params = IsoLineParams {
            sigma_iso: 0.3,
            sigma_line: 0.2,
        };
        let samples: Vec<_> = (0..100_000)
            .map(|_| {
                mutate_iso_line(&p, &a, &b, params, &mut r)
                    .unwrap()
                    .child
                    .into_values()
            })
            .collect();
        let emp = emp_cov(&samples, &[1.0; 4]);
        let dv = nalgebra::DVector::from_column_slice(&d);
        let expect = DMatrix::<f64>::identity(4, 4) * 0.09 + &dv * dv.transpose() * 0.04;
        let err = (&emp - &expect).norm() / expect.norm();
        assert!(err < 0.05, "relative error {err}");
    }

    fn pca_model(target: &Arc<MlpSpec>, seed: u64, m: usize) -> ManifoldModel {
        let mut r = rng::seeded(seed);
        let data: Vec<_> = (0..50).map(|_| init_uniform(target, &mut r)).collect();
        ManifoldModel::from(fit_pca(&data, m).unwrap())
    }

    #[test]
    fn poms_gate_selects_branch() {
        let target = spec();
        let model = pca_model(&target, 4, 2);
        let parent = elite(vec![0.3, -0.2, 0.4, 0.1]);
        let err = model.reconstruction_error(&parent.params).unwrap();
        let scale = MutationScale::new(0.1).unwrap();
        let mut r = rng::seeded(5);
        assert_eq!(
            mutate_poms(&parent, &model, err * 1.01, scale, &mut r)
                .unwrap()
                .branch,
            Branch::Latent
        );
        // else-branch reproduces the isotropic operator draw for draw
        let mut r1 = rng::seeded(6);
        let mut r2 = rng::seeded(6);
        let gated = mutate_poms(&parent, &model, err, scale, &mut r1).unwrap();
        let iso = mutate_iso(&parent, scale, &mut r2).unwrap();
        assert_eq!(gated.branch, Branch::Parameter);
        assert_eq!(gated.child, iso.child);
    }

    #[test]
    fn poms_zero_scale_returns_reconstruction() {
        let target = spec();
        let mut r = rng::seeded(7);
        let ae = Autoencoder::random(
            Arc::clone(&target),
            AeArchitecture {
                hidden: 5,
                latent: 2,
            },
            &mut r,
        )
        .unwrap();
        let model = ManifoldModel::from(ae);
        let parent = elite(vec![0.3, -0.2, 0.4, 0.1]);
        let o = mutate_poms(
            &parent,
            &model,
            f64::INFINITY,
            MutationScale::new(0.0).unwrap(),
            &mut r,
        )
        .unwrap();
        assert_eq!(o.branch, Branch::Latent);
        assert_eq!(o.child, model.reconstruct(&parent.params).unwrap());
    }

    #[test]
    fn full_rank_pca_latent_branch_matches_parameter_branch() {
        let target = spec();
        let model = pca_model(&target, 8, 4);
        let parent = elite(vec![0.3, -0.2, 0.4, 0.1]);
        let scale = MutationScale::new(0.1).unwrap();
        let mut r = rng::seeded(9);
        let mut lat = Vec::new();
        let mut par = Vec::new();
        for _ in 0..100_000 {
            let o = mutate_poms(&parent, &model, f64::INFINITY, scale, &mut r).unwrap();
            assert_eq!(o.branch, Branch::Latent);
            lat.push(o.child.into_values());
            par.push(
                mutate_poms(&parent, &model, 0.0, scale, &mut r)
                    .unwrap()
                    .child
                    .into_values(),
            );
        }
        let centre = model.reconstruct(&parent.params).unwrap();
        let cl = emp_cov(&lat, centre.values());
        let cp = emp_cov(&par, parent.params.values());
        let err = (&cl - &cp).norm() / cp.norm();
        assert!(err < 0.05, "relative covariance mismatch {err}");
    }

    #[test]
    fn nojac_uses_latent_ranges() {
        let target = spec();
        let model = pca_model(&target, 10, 2);
        let parent = elite(vec![0.3, -0.2, 0.4, 0.1]);
        let mut r = rng::seeded(11);
        let o = mutate_poms_nojac(&parent, &model, &[0.0, 0.0], None, &mut r).unwrap();
        assert_eq!(o.child, model.reconstruct(&parent.params).unwrap());

        let z = model.encode(&parent.params).unwrap();
        let samples: Vec<_> = (0..100_000)
            .map(|_| {
                let c = mutate_poms_nojac(&parent, &model, &[4.0, 1.0], None, &mut r)
                    .unwrap()
                    .child;
                model.encode(&c).unwrap()
            })
            .collect();
        let c = emp_cov(&samples, &z);
        assert!((c[(0, 0)].sqrt() - 2.0).abs() / 2.0 < 0.03);
        assert!((c[(1, 1)].sqrt() - 1.0).abs() < 0.03);

        let scale = MutationScale::new(0.1).unwrap();
        let gated =
            mutate_poms_nojac(&parent, &model, &[4.0, 1.0], Some((0.0, scale)), &mut r).unwrap();
        assert_eq!(gated.branch, Branch::Parameter);
    }

    #[test]
    fn coin_branch_frequency() {
        let target = spec();
        let model = pca_model(&target, 12, 2);
        let parent = elite(vec![0.3, -0.2, 0.4, 0.1]);
        let scale = MutationScale::new(0.1).unwrap();
        let mut r = rng::seeded(13);
        let latent = (0..10_000)
            .filter(|_| {
                mutate_poms_coin(&parent, &model, 0.5, scale, &mut r)
                    .unwrap()
                    .branch
                    .is_latent()
            })
            .count();
        assert!((latent as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn dde_arms_tag_their_children() {
        let target = spec();
        let model = pca_model(&target, 14, 2);
        let parent = elite(vec![0.3, -0.2, 0.4, 0.1]);
        let a = ParamVector::new(spec(), vec![0.0; 4]).unwrap();
        let b = ParamVector::new(spec(), vec![1.0; 4]).unwrap();
        let scale = MutationScale::new(0.1).unwrap();
        let p = IsoLineParams::default();
        let mut r = rng::seeded(15);
        let mut planner = UcbBandit::with_defaults(3);
        let arms: Vec<_> = (0..3).map(|_| dde_select(&mut planner)).collect();
        assert_eq!(arms, DdeArm::ALL.to_vec());
        let branches: Vec<_> = arms
            .iter()
            .map(|&arm| {
                dde_mutate(arm, &parent, (&a, &b), &model, p, scale, &mut r)
                    .unwrap()
                    .branch
            })
            .collect();
        assert_eq!(branches, vec![Branch::Iso, Branch::Line, Branch::Crossover]);
        let zero = IsoLineParams {
            sigma_iso: 0.0,
            sigma_line: 0.0,
        };
        let c = dde_mutate(
            DdeArm::Crossover,
            &parent,
            (&a, &b),
            &model,
            zero,
            scale,
            &mut r,
        )
        .unwrap();
        assert_eq!(c.child, model.reconstruct(&parent.params).unwrap());
    }

    #[test]
    fn operators_are_deterministic_and_leave_parent_alone() {
        let target = spec();
        let model = pca_model(&target, 16, 2);
        let parent = elite(vec![0.3, -0.2, 0.4, 0.1]);
        let before = parent.clone();
        let scale = MutationScale::new(0.1).unwrap();
        let run = |seed| {
            let mut r = rng::seeded(seed);
            (0..10)
                .map(|_| {
                    mutate_poms(&parent, &model, 1.0, scale, &mut r)
                        .unwrap()
                        .child
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(17), run(17));
        assert_ne!(run(17), run(18));
        assert_eq!(parent, before);
    }

    #[test]
    fn initialisers() {
        let s = Arc::new(
            MlpSpec::uniform(vec![40, 60, 30], Activation::Tanh, Activation::Linear).unwrap(),
        );
        let mut r = rng::seeded(19);
        let u = init_uniform(&s, &mut r);
        assert!(u.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        let layers = s.layers();
        let mut sums = vec![0.0; layers.len()];
        let mut counts = vec![0usize; layers.len()];
        for _ in 0..8 {
            let g = init_glorot(&s, &mut r);
            for (l, layer) in layers.iter().enumerate() {
                assert!(g.values()[layer.biases..layer.biases + layer.n_out]
                    .iter()
                    .all(|&b| b == 0.0));
                for w in &g.values()[layer.weights..layer.biases] {
                    sums[l] += w * w;
                    counts[l] += 1;
                }
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            assert!(counts[l] >= 1e4 as usize);
            let var = sums[l] / counts[l] as f64;
            let expect = 2.0 / (layer.n_in + layer.n_out) as f64;
            assert!(
                (var - expect).abs() / expect < 0.05,
                "layer {l}: {var} vs {expect}"
            );
        }
    }
}
