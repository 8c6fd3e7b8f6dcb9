//! Deterministic 2D rollout environments and their behaviour descriptors.

pub mod kicker;
pub mod striker;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::archive::{BdSpec, BehaviourDescriptor, DimSpec};
use crate::error::{Error, Result};
use crate::nn::mlp::Scratch;
use crate::nn::{Activation, MlpSpec, ParamVector};

pub use striker::{first_wall_label, wall_combo_label, Wall};

/// Multiplier applied to exteroceptive observation entries in mix-scale variants.
pub const MIX_SCALE_FACTOR: f64 = 100.0;
pub const POLICY_HIDDEN: [usize; 2] = [32, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Striker,
    Kicker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Normal,
    MixScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridSize {
    #[default]
    Full,
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Wall(Wall),
    /// Agent and object touching.
    Contact,
    Kick {
        impulse: f64,
    },
    Landing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub step: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Observations fed to the policy, one per step; empty unless recording.
    pub states: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    pub steps: usize,
    /// The policy emitted a non-finite action and the rollout was aborted.
    pub degenerate: bool,
    /// Final puck or ball position.
    pub final_position: [f64; 2],
    /// Largest height of the manipulated object over the episode.
    pub max_height: f64,
    /// Puck wall hits in order (Striker only).
    pub walls: Vec<Wall>,
}

impl Trajectory {
    /// Writes the recorded observations as CSV, one row per step.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let dim = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["step".to_string()];
        header.extend((0..dim).map(|i| format!("obs_{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for (t, s) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(s.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episode_len: usize,
    pub actuation_window: usize,
    pub bd_spec: BdSpec,
    pub mix_scale_indices: Vec<usize>,
}

/// Multiplies the entries at `spec.mix_scale_indices` by 100.
pub fn apply_mix_scale(obs: &[f64], spec: &EnvSpec) -> Vec<f64> {
    let mut out = obs.to_vec();
    for &i in &spec.mix_scale_indices {
        out[i] *= MIX_SCALE_FACTOR;
    }
    out
}

/// Walker grid: duty factors 5 x final hull x 100 x 5 x 5 (no walker physics).
pub fn bipedal_walker_bd_spec() -> BdSpec {
    BdSpec::new(vec![
        DimSpec::Continuous {
            lo: 0.0,
            hi: 1.0,
            bins: 5,
        },
        DimSpec::Continuous {
            lo: 0.0,
            hi: 100.0,
            bins: 100,
        },
        DimSpec::Continuous {
            lo: 0.0,
            hi: 1.0,
            bins: 5,
        },
        DimSpec::Continuous {
            lo: 0.0,
            hi: 1.0,
            bins: 5,
        },
    ])
    .expect("static spec")
}

/// Environment identity; serialises as its name, e.g. `kicker-lite-mix-scale-small`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Env {
    pub kind: EnvKind,
    pub variant: Variant,
    pub grid: GridSize,
}

impl Env {
    pub fn new(kind: EnvKind, variant: Variant, grid: GridSize) -> Self {
        Self {
            kind,
            variant,
            grid,
        }
    }

    pub fn name(&self) -> String {
        let base = match self.kind {
            EnvKind::Striker => "striker-lite",
            EnvKind::Kicker => "kicker-lite",
        };
        let mut s = base.to_string();
        if self.variant == Variant::MixScale {
            s.push_str("-mix-scale");
        }
        if self.grid == GridSize::Small {
            s.push_str("-small");
        }
        s
    }

    pub fn obs_dim(&self) -> usize {
        match self.kind {
            EnvKind::Striker => striker::OBS_DIM,
            EnvKind::Kicker => kicker::OBS_DIM,
        }
    }

    pub fn act_dim(&self) -> usize {
        match self.kind {
            EnvKind::Striker => striker::ACT_DIM,
            EnvKind::Kicker => kicker::ACT_DIM,
        }
    }

    pub fn bd_spec(&self) -> BdSpec {
        let dims = match (self.kind, self.grid) {
            (EnvKind::Striker, grid) => {
                let (bins, labels) = match grid {
                    GridSize::Full => (30, 17),
                    GridSize::Small => (10, 5),
                };
                vec![
                    DimSpec::Continuous {
                        lo: 0.0,
                        hi: striker::ARENA,
                        bins,
                    },
                    DimSpec::Continuous {
                        lo: 0.0,
                        hi: striker::ARENA,
                        bins,
                    },
                    DimSpec::Categorical {
                        cardinality: labels,
                    },
                ]
            }
            (EnvKind::Kicker, grid) => {
                let (xb, yb) = match grid {
                    GridSize::Full => (200, 50),
                    GridSize::Small => (40, 10),
                };
                vec![
                    DimSpec::Continuous {
                        lo: -kicker::X_LIMIT,
                        hi: kicker::X_LIMIT,
                        bins: xb,
                    },
                    DimSpec::Continuous {
                        lo: 0.0,
                        hi: kicker::Y_LIMIT,
                        bins: yb,
                    },
                ]
            }
        };
        BdSpec::new(dims).expect("static spec")
    }

    pub fn spec(&self) -> EnvSpec {
        let (episode_len, actuation_window, idx): (usize, usize, &[usize]) = match self.kind {
            EnvKind::Striker => (
                striker::EPISODE_STEPS,
                striker::ACTUATION_STEPS,
                &striker::MIX_SCALE_INDICES,
            ),
            EnvKind::Kicker => (
                kicker::EPISODE_STEPS,
                kicker::ACTUATION_STEPS,
                &kicker::MIX_SCALE_INDICES,
            ),
        };
        EnvSpec {
            name: self.name(),
            obs_dim: self.obs_dim(),
            act_dim: self.act_dim(),
            episode_len,
            actuation_window,
            bd_spec: self.bd_spec(),
            mix_scale_indices: if self.variant == Variant::MixScale {
                idx.to_vec()
            } else {
                Vec::new()
            },
        }
    }

    /// `obs -> 32 tanh -> 32 tanh -> act`, linear head.
    pub fn policy_spec(&self) -> Arc<MlpSpec> {
        let sizes = vec![
            self.obs_dim(),
            POLICY_HIDDEN[0],
            POLICY_HIDDEN[1],
            self.act_dim(),
        ];
        Arc::new(
            MlpSpec::uniform(sizes, Activation::Tanh, Activation::Linear).expect("static spec"),
        )
    }

    /// Simulator constants, echoed into run manifests.
    pub fn constants(&self) -> Vec<(&'static str, f64)> {
        match self.kind {
            EnvKind::Striker => vec![
                ("arena", striker::ARENA),
                ("puck_radius", striker::PUCK_RADIUS),
                ("striker_radius", striker::STRIKER_RADIUS),
                ("dt", striker::DT),
                ("damping", striker::DAMPING),
                ("wall_restitution", 1.0),
                ("max_speed", striker::MAX_SPEED),
                ("max_turn_rate", striker::MAX_TURN_RATE),
                ("rest_speed", striker::REST_SPEED),
                ("striker_start_x", striker::STRIKER_START[0]),
                ("striker_start_y", striker::STRIKER_START[1]),
                ("puck_start_x", striker::PUCK_START[0]),
                ("puck_start_y", striker::PUCK_START[1]),
                ("actuation_steps", striker::ACTUATION_STEPS as f64),
                ("episode_steps", striker::EPISODE_STEPS as f64),
            ],
            EnvKind::Kicker => vec![
                ("dt", kicker::DT),
                ("gravity", kicker::GRAVITY),
                ("agent_radius", kicker::AGENT_RADIUS),
                ("ball_radius", kicker::BALL_RADIUS),
                ("drop_height", kicker::DROP_HEIGHT),
                ("ball_start_x", kicker::BALL_START_X),
                ("max_force", kicker::MAX_FORCE),
                ("drag", kicker::DRAG),
                ("max_kick", kicker::MAX_KICK),
                ("ground_restitution", 0.0),
                ("actuation_steps", kicker::ACTUATION_STEPS as f64),
                ("episode_steps", kicker::EPISODE_STEPS as f64),
            ],
        }
    }

    fn check_policy(&self, theta: &ParamVector) -> Result<()> {
        let expect = self.policy_spec();
        if **theta.spec() != *expect {
            return Err(Error::Config(format!(
                "policy {} does not match {} policy {}",
                theta.spec(),
                self.name(),
                expect
            )));
        }
        Ok(())
    }

    pub fn rollout(&self, theta: &ParamVector, record: bool) -> Result<Trajectory> {
        let mut scratch = Scratch::for_spec(theta.spec());
        self.rollout_with(theta, record, &mut scratch)
    }

    /// Rollout reusing a caller-owned forward-pass buffer.
    pub fn rollout_with(
        &self,
        theta: &ParamVector,
        record: bool,
        scratch: &mut Scratch,
    ) -> Result<Trajectory> {
        self.check_policy(theta)?;
        let mix = self.variant == Variant::MixScale;
        Ok(match self.kind {
            EnvKind::Striker => striker::rollout(theta, mix, record, scratch),
            EnvKind::Kicker => kicker::rollout(theta, mix, record, scratch),
        })
    }

    /// Descriptor of a completed rollout; `None` for degenerate ones.
    pub fn descriptor(&self, traj: &Trajectory) -> Option<BehaviourDescriptor> {
        if traj.degenerate {
            return None;
        }
        let [x, y] = traj.final_position;
        Some(BehaviourDescriptor::new(match self.kind {
            EnvKind::Striker => {
                let label = match self.grid {
                    GridSize::Full => wall_combo_label(&traj.walls),
                    GridSize::Small => first_wall_label(&traj.walls),
                };
                vec![x, y, label as f64]
            }
            EnvKind::Kicker => vec![x, traj.max_height],
        }))
    }

    pub fn evaluate(
        &self,
        theta: &ParamVector,
        scratch: &mut Scratch,
    ) -> Result<Option<BehaviourDescriptor>> {
        Ok(self.descriptor(&self.rollout_with(theta, false, scratch)?))
    }
}

impl fmt::Display for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Serialize for Env {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Env {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Env {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut rest = s;
        let kind = if let Some(r) = rest.strip_prefix("striker-lite") {
            rest = r;
            EnvKind::Striker
        } else if let Some(r) = rest.strip_prefix("kicker-lite") {
            rest = r;
            EnvKind::Kicker
        } else {
            return Err(Error::Config(format!("unknown environment '{s}'")));
        };
        let mut variant = Variant::Normal;
        if let Some(r) = rest.strip_prefix("-mix-scale") {
            rest = r;
            variant = Variant::MixScale;
        }
        let grid = match rest {
            "" => GridSize::Full,
            "-small" => GridSize::Small,
            _ => return Err(Error::Config(format!("unknown environment '{s}'"))),
        };
        Ok(Env::new(kind, variant, grid))
    }
}
