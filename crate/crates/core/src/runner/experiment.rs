use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{Archive, BehaviourDescriptor, Elite};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::manifold::{
    fit_autoencoder, fit_pca, reconstruction_threshold, Autoencoder, AutoencoderFit, ManifoldModel,
    MutationScale, TrainStats,
};
use crate::nn::mlp::Scratch;
use crate::nn::{MlpSpec, ParamVector};
use crate::operators::{
    dde_mutate, dde_select, init_glorot, init_uniform, mutate_iso, mutate_iso_line,
    mutate_parameter, mutate_poms, mutate_poms_coin, mutate_poms_nojac, ucb_update, Branch, DdeArm,
    MutationOutcome, UcbBandit,
};
use crate::rng::{substream, Domain};

use super::config::{Algorithm, ExperimentConfig};
use super::metrics::{mixing_fractions, MetricsRecord, Phase, TimingRecord};

/// Bookkeeping of samples that did not make it into the archive normally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    pub rollouts: u64,
    /// Rollouts aborted on non-finite actions; their samples are discarded.
    pub degenerate_rollouts: u64,
    /// Latent mutations that failed and were redone in parameter space.
    pub mutation_fallbacks: u64,
    /// Mutations that failed outright and were never evaluated.
    pub discarded_mutations: u64,
    /// Manifold refits that failed, keeping the previous model.
    pub fit_failures: u64,
}

/// Branch tags of one search batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTags {
    pub loop_index: usize,
    pub iteration: usize,
    pub tags: Vec<Branch>,
}

/// Model in force for the loop after `loop_index` (0 is the initial model).
#[derive(Debug, Clone)]
pub struct LoopModel {
    pub loop_index: usize,
    pub model: ManifoldModel,
    pub threshold: f64,
    pub stats: Option<TrainStats>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub archive: Archive,
    pub records: Vec<MetricsRecord>,
    pub timings: Vec<TimingRecord>,
    pub counters: RunCounters,
    pub batches: Vec<BatchTags>,
    pub models: Vec<LoopModel>,
    pub bandit: Option<UcbBandit>,
}

struct ModelState {
    model: ManifoldModel,
    threshold: f64,
    ranges: Vec<f64>,
    ae_fit: Option<AutoencoderFit>,
}

struct Child {
    outcome: Option<MutationOutcome>,
    fallback: bool,
    bd: Option<BehaviourDescriptor>,
}

fn evaluate(env: Env, theta: &ParamVector, scratch: &mut Scratch) -> Option<BehaviourDescriptor> {
    env.evaluate(theta, scratch)
        .expect("policy spec checked at run start")
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    env: Env,
    policy: std::sync::Arc<MlpSpec>,
    scale: MutationScale,
    archive: Archive,
    next_id: u64,
    out_records: Vec<MetricsRecord>,
    timings: Vec<TimingRecord>,
    counters: RunCounters,
    batches: Vec<BatchTags>,
    models: Vec<LoopModel>,
}

impl Run<'_> {
    fn commit(
        &mut self,
        theta: ParamVector,
        bd: Option<BehaviourDescriptor>,
        loop_index: usize,
    ) -> Result<bool> {
        let eval_id = self.next_id;
        self.next_id += 1;
        self.counters.rollouts += 1;
        match bd {
            None => {
                self.counters.degenerate_rollouts += 1;
                Ok(false)
            }
            Some(bd) => self.archive.insert(Elite {
                params: theta,
                bd,
                eval_id,
                loop_index: loop_index as u32,
            }),
        }
    }

    fn record(
        &mut self,
        loop_index: usize,
        iteration: usize,
        fractions: (f64, f64),
        err: Option<f64>,
    ) {
        self.out_records.push(MetricsRecord {
            loop_index,
            iteration,
            total_rollouts: self.counters.rollouts,
            coverage: self.archive.coverage(),
            param_fraction: fractions.0,
            latent_fraction: fractions.1,
            mean_recon_error: err,
        });
    }

    fn time(&mut self, loop_index: usize, iteration: Option<usize>, phase: Phase, start: Instant) {
        self.timings.push(TimingRecord {
            loop_index,
            iteration,
            phase,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }

    fn draws(
        &self,
        loop_index: usize,
        iteration: usize,
        n: usize,
        glorot: bool,
    ) -> Vec<ParamVector> {
        (0..n as u64)
            .into_par_iter()
            .map(|k| {
                let mut r = substream(
                    self.seed,
                    Domain::Init,
                    loop_index as u64,
                    iteration as u64,
                    k,
                );
                if glorot {
                    init_glorot(&self.policy, &mut r)
                } else {
                    init_uniform(&self.policy, &mut r)
                }
            })
            .collect()
    }

    fn evaluate_all(&self, thetas: &[ParamVector]) -> Vec<Option<BehaviourDescriptor>> {
        let env = self.env;
        thetas
            .par_iter()
            .map_init(
                || Scratch::for_spec(&self.policy),
                |s, t| evaluate(env, t, s),
            )
            .collect()
    }

    /// Draws a batch of fresh policies, evaluates it and commits it in order.
    fn fresh_batch(
        &mut self,
        loop_index: usize,
        iteration: usize,
        n: usize,
        glorot: bool,
    ) -> Result<()> {
        let thetas = self.draws(loop_index, iteration, n, glorot);
        let bds = self.evaluate_all(&thetas);
        for (t, bd) in thetas.into_iter().zip(bds) {
            self.commit(t, bd, loop_index)?;
        }
        Ok(())
    }

    fn fit(
        &mut self,
        loop_index: usize,
        state: Option<ModelState>,
        init_ae: Option<&Autoencoder>,
    ) -> Result<Option<ModelState>> {
        let cfg = self.cfg;
        let collection = self.archive.params();
        let start = Instant::now();
        let fitted: Result<(ManifoldModel, Option<AutoencoderFit>)> = match cfg.algorithm {
            Algorithm::PomsPca => {
                let m = cfg.latent_dim.min(collection.len());
                fit_pca(&collection, m).map(|p| (p.into(), None))
            }
            _ => {
                let mut r = substream(self.seed, Domain::Train, loop_index as u64, 0, 0);
                let warm = state.as_ref().and_then(|s| s.ae_fit.as_ref());
                fit_autoencoder(
                    &collection,
                    cfg.ae_architecture(),
                    &cfg.ae,
                    warm,
                    init_ae,
                    &mut r,
                )
                .map(|f| (f.model.clone().into(), Some(f)))
            }
        };
        let (model, ae_fit) = match (fitted, state) {
            (Ok(f), _) => f,
            (Err(_), Some(prev)) => {
                self.counters.fit_failures += 1;
                (prev.model, prev.ae_fit)
            }
            (Err(e), None) => return Err(e),
        };
        let threshold = reconstruction_threshold(&model, &collection)?;
        let ranges = if cfg.algorithm == Algorithm::PomsNoJacobian {
            model.latent_ranges(&collection)?
        } else {
            Vec::new()
        };
        self.time(loop_index, None, Phase::Fit, start);
        self.models.push(LoopModel {
            loop_index,
            model: model.clone(),
            threshold,
            stats: ae_fit.as_ref().map(|f| f.stats.clone()),
        });
        Ok(Some(ModelState {
            model,
            threshold,
            ranges,
            ae_fit,
        }))
    }
}

#[allow(clippy::too_many_arguments)]
fn mutate_one<R: Rng>(
    cfg: &ExperimentConfig,
    state: Option<&ModelState>,
    first_loop: bool,
    parent: &Elite,
    partner: Option<&Elite>,
    arm: Option<DdeArm>,
    scale: MutationScale,
    rng: &mut R,
) -> Result<MutationOutcome> {
    let model = || &state.expect("manifold algorithms carry a model").model;
    let p_latent = cfg.first_loop_latent_probability;
    match cfg.algorithm {
        Algorithm::MapeIso => mutate_iso(parent, scale, rng),
        Algorithm::MapeIsolinedd => {
            let b = partner.expect("partner drawn for iso-line");
            mutate_iso_line(parent, &parent.params, &b.params, cfg.iso_line, rng)
        }
        Algorithm::Poms if first_loop => mutate_poms_coin(parent, model(), p_latent, scale, rng),
        Algorithm::Poms | Algorithm::PomsPca => mutate_poms(
            parent,
            model(),
            state.map_or(0.0, |s| s.threshold),
            scale,
            rng,
        ),
        Algorithm::PomsNoJacobian => {
            let s = state.expect("no-jacobian carries a model");
            if first_loop {
                if rng.random::<f64>() < p_latent {
                    mutate_poms_nojac(parent, &s.model, &s.ranges, None, rng)
                } else {
                    mutate_parameter(parent, scale, rng)
                }
            } else {
                let gate = cfg.nojac_gate.then_some((s.threshold, scale));
                mutate_poms_nojac(parent, &s.model, &s.ranges, gate, rng)
            }
        }
        Algorithm::Dde => {
            let b = partner.expect("partner drawn for dde");
            let arm = arm.expect("arm planned for dde");
            dde_mutate(
                arm,
                parent,
                (&parent.params, &b.params),
                model(),
                cfg.iso_line,
                scale,
                rng,
            )
        }
        Algorithm::PsUniform | Algorithm::PsGlorot => unreachable!("random search does not mutate"),
    }
}

/// Runs one seed of an experiment in memory.
///
/// The archive is seeded with `init_samples` uniform policies, recorded as loop
/// 0, iteration 0. Search loops are numbered from 1; each runs
/// `iterations_per_loop` batches of `batch_budget` children and ends with one
/// manifold refit on the archive's elites. Parallel work runs on the current
/// rayon pool; every random draw comes from a substream keyed by its position
/// in the run, so results do not depend on the number of workers.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let policy = cfg.env.policy_spec();
    let mut run = Run {
        cfg,
        seed,
        env: cfg.env,
        policy,
        scale: cfg.scale()?,
        archive: Archive::new(cfg.env.bd_spec()),
        next_id: 0,
        out_records: Vec::new(),
        timings: Vec::new(),
        counters: RunCounters::default(),
        batches: Vec::new(),
        models: Vec::new(),
    };
    if cfg.algorithm.is_random_search() {
        random_search(&mut run)?;
        return Ok(finish(run, None));
    }

    let start = Instant::now();
    run.fresh_batch(0, 0, cfg.init_samples, false)?;
    run.time(0, Some(0), Phase::Init, start);

    let mut state: Option<ModelState> = None;
    if cfg.algorithm.uses_manifold() {
        if cfg.algorithm == Algorithm::PomsPca {
            state = run.fit(0, None, None)?;
        } else {
            let mut r = substream(seed, Domain::ModelInit, 0, 0, 0);
            let ae = Autoencoder::random(
                std::sync::Arc::clone(&run.policy),
                cfg.ae_architecture(),
                &mut r,
            )?;
            let collection = run.archive.params();
            let model = ManifoldModel::from(ae);
            let threshold = reconstruction_threshold(&model, &collection)?;
            let ranges = if cfg.algorithm == Algorithm::PomsNoJacobian {
                model.latent_ranges(&collection)?
            } else {
                Vec::new()
            };
            run.models.push(LoopModel {
                loop_index: 0,
                model: model.clone(),
                threshold,
                stats: None,
            });
            state = Some(ModelState {
                model,
                threshold,
                ranges,
                ae_fit: None,
            });
        }
    }
    let init_err = state.as_ref().map(|s| s.threshold);
    run.record(0, 0, (1.0, 0.0), init_err);

    let mut bandit = (cfg.algorithm == Algorithm::Dde)
        .then(|| UcbBandit::new(DdeArm::ALL.len(), cfg.bandit.exploration, cfg.bandit.alpha));
    let initial_ae = match state.as_ref().map(|s| &s.model) {
        Some(ManifoldModel::Autoencoder(ae)) => Some(ae.clone()),
        _ => None,
    };

    for l in 1..=cfg.loops {
        for it in 0..cfg.iterations_per_loop {
            let start = Instant::now();
            let b = cfg.batch_budget;
            let mut sel = substream(seed, Domain::Select, l as u64, it as u64, 0);
            let needs_partner = matches!(cfg.algorithm, Algorithm::MapeIsolinedd | Algorithm::Dde);
            let arms: Vec<Option<DdeArm>> = match bandit.as_ref() {
                Some(bd) => {
                    let mut planner = bd.clone();
                    (0..b).map(|_| Some(dde_select(&mut planner))).collect()
                }
                None => vec![None; b],
            };
            let children: Vec<Child> = {
                let parents = run.archive.sample_elites(b, &mut sel)?;
                let partners = if needs_partner {
                    run.archive
                        .sample_elites(b, &mut sel)?
                        .into_iter()
                        .map(Some)
                        .collect()
                } else {
                    vec![None; b]
                };
                let st = state.as_ref();
                let (env, scale) = (run.env, run.scale);
                (0..b)
                    .into_par_iter()
                    .map_init(
                        || Scratch::for_spec(&run.policy),
                        |scratch, k| {
                            let mut r =
                                substream(seed, Domain::Mutate, l as u64, it as u64, k as u64);
                            let first = mutate_one(
                                cfg,
                                st,
                                l == 1,
                                parents[k],
                                partners[k],
                                arms[k],
                                scale,
                                &mut r,
                            );
                            let (outcome, fallback) = match first {
                                Ok(o) => (Some(o), false),
                                Err(Error::DegenerateCovariance { .. } | Error::ModelHealth(_))
                                    if cfg.algorithm.uses_manifold() =>
                                {
                                    (mutate_parameter(parents[k], scale, &mut r).ok(), true)
                                }
                                Err(_) => (None, false),
                            };
                            let bd = outcome
                                .as_ref()
                                .and_then(|o| evaluate(env, &o.child, scratch));
                            Child {
                                outcome,
                                fallback,
                                bd,
                            }
                        },
                    )
                    .collect()
            };

            let mut tags = Vec::with_capacity(b);
            for (k, c) in children.into_iter().enumerate() {
                run.counters.mutation_fallbacks += c.fallback as u64;
                let Some(o) = c.outcome else {
                    run.counters.discarded_mutations += 1;
                    continue;
                };
                tags.push(o.branch);
                let new_cell = run.commit(o.child, c.bd, l)?;
                if let (Some(bd), Some(arm)) = (bandit.as_mut(), arms[k]) {
                    ucb_update(bd, arm.index(), new_cell);
                }
            }
            let err = state.as_ref().map(|s| s.threshold);
            run.record(l, it, mixing_fractions(&tags), err);
            run.batches.push(BatchTags {
                loop_index: l,
                iteration: it,
                tags,
            });
            run.time(l, Some(it), Phase::Search, start);
        }
        if cfg.algorithm.uses_manifold() {
            state = run.fit(l, state, initial_ae.as_ref())?;
        }
    }
    Ok(finish(run, bandit))
}

/// Fresh draws in the same loop and iteration structure as the archive-based
/// methods, with metrics logged every `checkpoint_every` samples.
fn random_search(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let glorot = cfg.algorithm == Algorithm::PsGlorot;
    let every = cfg.checkpoint_every as u64;
    let total = cfg.total_rollouts();
    let mut blocks: Vec<(usize, usize, usize)> = vec![(0, 0, cfg.init_samples)];
    for l in 1..=cfg.loops {
        blocks.extend((0..cfg.iterations_per_loop).map(|it| (l, it, cfg.batch_budget)));
    }
    for (l, it, n) in blocks {
        let start = Instant::now();
        let before = run.counters.rollouts;
        run.fresh_batch(l, it, n, glorot)?;
        let after = run.counters.rollouts;
        if after / every > before / every || after == total {
            run.record(l, it, (1.0, 0.0), None);
        }
        let phase = if l == 0 { Phase::Init } else { Phase::Search };
        run.time(l, Some(it), phase, start);
    }
    Ok(())
}

fn finish(run: Run, bandit: Option<UcbBandit>) -> RunOutput {
    RunOutput {
        config: run.cfg.clone(),
        seed: run.seed,
        archive: run.archive,
        records: run.out_records,
        timings: run.timings,
        counters: run.counters,
        batches: run.batches,
        models: run.models,
        bandit,
    }
}

/// [`run_experiment`] on a dedicated pool of `workers` threads.
pub fn run_with_workers(cfg: &ExperimentConfig, seed: u64, workers: usize) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_experiment(cfg, seed))
}
