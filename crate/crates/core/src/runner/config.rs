use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{Env, EnvKind, GridSize, Variant};
use crate::error::{Error, Result};
use crate::manifold::{AeArchitecture, AeTrainConfig, MutationScale};
use crate::operators::IsoLineParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Poms,
    PomsPca,
    PomsNoJacobian,
    MapeIso,
    MapeIsolinedd,
    Dde,
    PsUniform,
    PsGlorot,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Poms,
        Algorithm::PomsPca,
        Algorithm::PomsNoJacobian,
        Algorithm::MapeIso,
        Algorithm::MapeIsolinedd,
        Algorithm::Dde,
        Algorithm::PsUniform,
        Algorithm::PsGlorot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Poms => "poms",
            Algorithm::PomsPca => "poms-pca",
            Algorithm::PomsNoJacobian => "poms-no-jacobian",
            Algorithm::MapeIso => "mape-iso",
            Algorithm::MapeIsolinedd => "mape-isolinedd",
            Algorithm::Dde => "dde",
            Algorithm::PsUniform => "ps-uniform",
            Algorithm::PsGlorot => "ps-glorot",
        }
    }

    /// Fresh random draws only, no archive-driven mutation.
    pub fn is_random_search(self) -> bool {
        matches!(self, Algorithm::PsUniform | Algorithm::PsGlorot)
    }

    pub fn uses_autoencoder(self) -> bool {
        matches!(
            self,
            Algorithm::Poms | Algorithm::PomsNoJacobian | Algorithm::Dde
        )
    }

    pub fn uses_manifold(self) -> bool {
        self.uses_autoencoder() || self == Algorithm::PomsPca
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                Error::Config(format!(
                    "unknown algorithm '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditConfig {
    pub exploration: f64,
    pub alpha: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            exploration: std::f64::consts::SQRT_2,
            alpha: 0.05,
        }
    }
}

/// Optional grid declaration, checked against the environment's own grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDeclaration {
    pub bins: Vec<usize>,
    pub total_cells: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: Env,
    pub algorithm: Algorithm,
    pub loops: usize,
    pub iterations_per_loop: usize,
    pub batch_budget: usize,
    pub init_samples: usize,
    pub latent_dim: usize,
    pub ae_hidden: usize,
    pub sigma_theta: f64,
    /// Latent-branch probability of the first search loop, before any fit.
    pub first_loop_latent_probability: f64,
    /// Keep the reconstruction gate in the no-Jacobian ablation.
    pub nojac_gate: bool,
    /// Random-search progress is logged every this many samples.
    pub checkpoint_every: usize,
    pub dump_trajectories: bool,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub iso_line: IsoLineParams,
    #[serde(default)]
    pub bandit: BanditConfig,
    #[serde(default)]
    pub ae: AeTrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDeclaration>,
}

/// Full-scale budgets or the laptop-sized reproduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Full,
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config(format!(
                "unknown preset '{s}', expected full or desk"
            ))),
        }
    }
}

/// `(HD, LD, sigma_theta)` of the PoMS family per environment.
fn manifold_hyperparameters(env: Env, preset: Preset) -> (usize, usize, f64) {
    match (preset, env.kind, env.variant) {
        (Preset::Full, EnvKind::Striker, Variant::Normal) => (100, 50, 0.1),
        (Preset::Full, EnvKind::Striker, Variant::MixScale) => (100, 20, 0.01),
        (Preset::Full, EnvKind::Kicker, Variant::Normal) => (100, 100, 0.01),
        (Preset::Full, EnvKind::Kicker, Variant::MixScale) => (100, 50, 0.01),
        (Preset::Desk, EnvKind::Striker, Variant::Normal) => (32, 10, 0.1),
        (Preset::Desk, EnvKind::Striker, Variant::MixScale) => (32, 10, 0.01),
        (Preset::Desk, EnvKind::Kicker, _) => (32, 10, 0.01),
    }
}

/// Iso-only baselines use their own tuned step.
const MAPE_ISO_SIGMA: f64 = 0.1;

impl ExperimentConfig {
    pub fn preset(preset: Preset, env: Env, algorithm: Algorithm) -> Self {
        let (hidden, latent, sigma) = manifold_hyperparameters(env, preset);
        let sigma_theta = if algorithm == Algorithm::MapeIso {
            MAPE_ISO_SIGMA
        } else {
            sigma
        };
        let (loops, iterations, ae) = match preset {
            Preset::Full => (100, 100, AeTrainConfig::default()),
            Preset::Desk => (
                10,
                19,
                AeTrainConfig {
                    lr: 1e-3,
                    epochs: 30,
                    ..AeTrainConfig::default()
                },
            ),
        };
        Self {
            env,
            algorithm,
            loops,
            iterations_per_loop: iterations,
            batch_budget: 200,
            init_samples: 2000,
            latent_dim: latent,
            ae_hidden: hidden,
            sigma_theta,
            first_loop_latent_probability: 0.5,
            nojac_gate: true,
            checkpoint_every: 2000,
            dump_trajectories: false,
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("runs"),
            iso_line: IsoLineParams::default(),
            bandit: BanditConfig::default(),
            ae,
            grid: None,
        }
    }

    /// `loops = 10`, 19 iterations of 200: 40k rollouts with the initial 2000.
    pub fn desk(env: Env, algorithm: Algorithm) -> Self {
        Self::preset(Preset::Desk, env, algorithm)
    }

    pub fn full(env: Env, algorithm: Algorithm) -> Self {
        Self::preset(Preset::Full, env, algorithm)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn scale(&self) -> Result<MutationScale> {
        MutationScale::new(self.sigma_theta)
    }

    pub fn ae_architecture(&self) -> AeArchitecture {
        AeArchitecture {
            hidden: self.ae_hidden,
            latent: self.latent_dim,
        }
    }

    /// Rollouts of one complete run.
    pub fn total_rollouts(&self) -> u64 {
        (self.init_samples + self.loops * self.iterations_per_loop * self.batch_budget) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("loops", self.loops),
            ("iterations_per_loop", self.iterations_per_loop),
            ("batch_budget", self.batch_budget),
            ("init_samples", self.init_samples),
            ("checkpoint_every", self.checkpoint_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.scale()?;
        if self.algorithm.uses_manifold() {
            if self.latent_dim == 0 {
                return Err(Error::Config(format!(
                    "latent_dim must be positive for {}",
                    self.algorithm
                )));
            }
            let p = self.env.policy_spec().param_count();
            if self.latent_dim >= p {
                return Err(Error::Config(format!(
                    "latent_dim {} must be below the policy size {p}",
                    self.latent_dim
                )));
            }
        }
        if self.algorithm.uses_autoencoder() {
            if self.ae_hidden == 0 {
                return Err(Error::Config(format!(
                    "ae_hidden must be positive for {}",
                    self.algorithm
                )));
            }
            self.ae.validate()?;
        }
        if !(0.0..=1.0).contains(&self.first_loop_latent_probability) {
            return Err(Error::Config(
                "first_loop_latent_probability must lie in [0, 1]".into(),
            ));
        }
        self.iso_line.validate()?;
        let b = self.bandit;
        if !(b.exploration >= 0.0 && b.exploration.is_finite() && (0.0..=1.0).contains(&b.alpha)) {
            return Err(Error::Config(format!("invalid bandit settings {b:?}")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if let Some(g) = &self.grid {
            self.check_grid(g)?;
        }
        Ok(())
    }

    fn check_grid(&self, g: &GridDeclaration) -> Result<()> {
        let actual = self.env.bd_spec().sizes();
        if g.bins.len() != actual.len() {
            return Err(Error::Config(format!(
                "grid declares {} bd dimensions but {} has {}",
                g.bins.len(),
                self.env,
                actual.len()
            )));
        }
        for (d, (&want, &have)) in g.bins.iter().zip(&actual).enumerate() {
            if want != have {
                return Err(Error::Config(format!(
                    "bd dimension {d} declares {want} bins but {} uses {have}",
                    self.env
                )));
            }
        }
        let product: u64 = g.bins.iter().map(|&b| b as u64).product();
        if product != g.total_cells {
            let terms: Vec<String> = g
                .bins
                .iter()
                .enumerate()
                .map(|(d, b)| format!("{b} (dimension {d})"))
                .collect();
            return Err(Error::Config(format!(
                "bd grid product {} = {product} does not match declared total_cells {}",
                terms.join(" x "),
                g.total_cells
            )));
        }
        Ok(())
    }
}

/// The pair of small-grid environments used for the desk reproduction.
pub fn desk_environments() -> [Env; 2] {
    [
        Env::new(EnvKind::Striker, Variant::Normal, GridSize::Small),
        Env::new(EnvKind::Kicker, Variant::Normal, GridSize::Small),
    ]
}
