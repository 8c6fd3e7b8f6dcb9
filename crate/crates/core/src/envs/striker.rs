//! Striker-lite: a velocity-controlled striker disc hits a damped puck in a walled box.

use crate::nn::mlp::{forward_into, Scratch};
use crate::nn::ParamVector;

use super::{Event, EventKind, Trajectory};

pub const ARENA: f64 = 100.0;
pub const PUCK_RADIUS: f64 = 2.5;
pub const STRIKER_RADIUS: f64 = 2.5;
pub const DT: f64 = 0.05;
pub const ACTUATION_STEPS: usize = 100;
pub const EPISODE_STEPS: usize = 600;
pub const DAMPING: f64 = 0.99;
pub const MAX_SPEED: f64 = 20.0;
pub const MAX_TURN_RATE: f64 = std::f64::consts::PI;
pub const REST_SPEED: f64 = 1e-3;
pub const STRIKER_START: [f64; 2] = [50.0, 20.0];
pub const PUCK_START: [f64; 2] = [50.0, 50.0];
pub const OBS_DIM: usize = 14;
pub const ACT_DIM: usize = 3;
/// Striker position, puck position and puck velocity.
pub const MIX_SCALE_INDICES: [usize; 6] = [0, 1, 3, 4, 8, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Wall {
    South = 0,
    East = 1,
    North = 2,
    West = 3,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::South, Wall::East, Wall::North, Wall::West];

    pub fn from_index(i: usize) -> Wall {
        Wall::ALL[i]
    }
}

/// Label in `0..=16` for a sequence of wall hits.
///
/// | label | walls |
/// |---|---|
/// | 0 | none |
/// | 1..=4 | S, E, N, W (single wall) |
/// | 5 + 3a + r | first wall `a`, then wall `b != a`, `r = b` if `b < a` else `b - 1` |
///
/// Wall indices are S=0, E=1, N=2, W=3 and consecutive repeats of the same wall
/// are merged before labelling, so label 5 is S then E, 7 is S then W, 8 is E
/// then S and 16 is W then N.
pub fn wall_combo_label(hits: &[Wall]) -> usize {
    let mut seq: Vec<usize> = Vec::with_capacity(2);
    for &h in hits {
        if seq.last() != Some(&(h as usize)) {
            seq.push(h as usize);
            if seq.len() == 2 {
                break;
            }
        }
    }
    match seq.as_slice() {
        [] => 0,
        [a] => 1 + a,
        [a, b] => 5 + a * 3 + if b < a { *b } else { b - 1 },
        _ => unreachable!(),
    }
}

/// Label in `0..=4` of the first wall hit only.
pub fn first_wall_label(hits: &[Wall]) -> usize {
    hits.first().map_or(0, |&w| 1 + w as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub striker: [f64; 2],
    pub angle: f64,
    pub striker_vel: [f64; 2],
    pub turn_rate: f64,
    pub puck: [f64; 2],
    pub puck_vel: [f64; 2],
}

impl State {
    pub fn initial() -> Self {
        Self {
            striker: STRIKER_START,
            angle: 0.0,
            striker_vel: [0.0; 2],
            turn_rate: 0.0,
            puck: PUCK_START,
            puck_vel: [0.0; 2],
        }
    }

    pub fn puck_speed(&self) -> f64 {
        self.puck_vel[0].hypot(self.puck_vel[1])
    }

    /// Raw observation in simulator units.
    pub fn raw_observation(&self) -> [f64; OBS_DIM] {
        let [px, py] = self.puck;
        [
            self.striker[0],
            self.striker[1],
            self.angle,
            px,
            py,
            self.striker_vel[0],
            self.striker_vel[1],
            self.turn_rate,
            self.puck_vel[0],
            self.puck_vel[1],
            py - PUCK_RADIUS,
            ARENA - PUCK_RADIUS - px,
            ARENA - PUCK_RADIUS - py,
            px - PUCK_RADIUS,
        ]
    }

    /// Observation scaled to roughly unit range.
    pub fn observation(&self) -> [f64; OBS_DIM] {
        let mut o = self.raw_observation();
        for i in [0, 1, 3, 4, 10, 11, 12, 13] {
            o[i] /= ARENA;
        }
        o[2] = wrap_angle(o[2]) / std::f64::consts::PI;
        for i in [5, 6] {
            o[i] /= MAX_SPEED;
        }
        o[7] /= MAX_TURN_RATE;
        for i in [8, 9] {
            o[i] /= 2.0 * MAX_SPEED;
        }
        o
    }
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if w.is_finite() {
        w
    } else {
        0.0
    }
}

/// Simulator with per-step control.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub state: State,
    pub step: usize,
    pub events: Vec<Event>,
    pub walls: Vec<Wall>,
}

impl Default for Simulator {
    fn default() -> Self {
        Self::new()
    }
}

impl Simulator {
    pub fn new() -> Self {
        Self {
            state: State::initial(),
            step: 0,
            events: Vec::new(),
            walls: Vec::new(),
        }
    }

    /// Advances one step. `action` is `(forward, lateral, turn)` in `[-1, 1]`
    /// after clamping, in the striker's body frame; `None` freezes the striker.
    pub fn step(&mut self, action: Option<[f64; ACT_DIM]>) {
        let s = &mut self.state;
        match action {
            Some(a) => {
                let [f, l, w] = a.map(|v| v.clamp(-1.0, 1.0));
                s.turn_rate = w * MAX_TURN_RATE;
                s.angle += s.turn_rate * DT;
                let (sin, cos) = s.angle.sin_cos();
                s.striker_vel = [
                    MAX_SPEED * (f * cos - l * sin),
                    MAX_SPEED * (f * sin + l * cos),
                ];
            }
            None => {
                s.striker_vel = [0.0; 2];
                s.turn_rate = 0.0;
            }
        }
        for k in 0..2 {
            s.striker[k] += s.striker_vel[k] * DT;
            let (lo, hi) = (STRIKER_RADIUS, ARENA - STRIKER_RADIUS);
            if s.striker[k] < lo || s.striker[k] > hi {
                s.striker[k] = s.striker[k].clamp(lo, hi);
                s.striker_vel[k] = 0.0;
            }
        }

        for k in 0..2 {
            s.puck_vel[k] *= DAMPING;
            s.puck[k] += s.puck_vel[k] * DT;
        }

        let d = [s.puck[0] - s.striker[0], s.puck[1] - s.striker[1]];
        let dist = d[0].hypot(d[1]);
        let reach = PUCK_RADIUS + STRIKER_RADIUS;
        if dist < reach {
            let n = if dist > 0.0 {
                [d[0] / dist, d[1] / dist]
            } else {
                [0.0, 1.0]
            };
            let rel = [
                s.puck_vel[0] - s.striker_vel[0],
                s.puck_vel[1] - s.striker_vel[1],
            ];
            let vn = rel[0] * n[0] + rel[1] * n[1];
            if vn < 0.0 {
                s.puck_vel[0] -= 2.0 * vn * n[0];
                s.puck_vel[1] -= 2.0 * vn * n[1];
                self.events.push(Event {
                    step: self.step,
                    kind: EventKind::Contact,
                });
            }
            s.puck = [s.striker[0] + n[0] * reach, s.striker[1] + n[1] * reach];
        }

        let (lo, hi) = (PUCK_RADIUS, ARENA - PUCK_RADIUS);
        for (k, (low_wall, high_wall)) in [(Wall::West, Wall::East), (Wall::South, Wall::North)]
            .into_iter()
            .enumerate()
        {
            // a reflected overshoot never exceeds the arena width, one pass suffices
            if s.puck[k] < lo {
                s.puck[k] = (2.0 * lo - s.puck[k]).min(hi);
                s.puck_vel[k] = s.puck_vel[k].abs();
                self.walls.push(low_wall);
                self.events.push(Event {
                    step: self.step,
                    kind: EventKind::Wall(low_wall),
                });
            } else if s.puck[k] > hi {
                s.puck[k] = (2.0 * hi - s.puck[k]).max(lo);
                s.puck_vel[k] = -s.puck_vel[k].abs();
                self.walls.push(high_wall);
                self.events.push(Event {
                    step: self.step,
                    kind: EventKind::Wall(high_wall),
                });
            }
        }
        self.step += 1;
    }

    pub fn at_rest(&self) -> bool {
        self.step >= ACTUATION_STEPS && self.state.puck_speed() < REST_SPEED
    }
}

pub(crate) fn rollout(
    policy: &ParamVector,
    mix_scale: bool,
    record: bool,
    scratch: &mut Scratch,
) -> Trajectory {
    rollout_observed(policy, mix_scale, record, scratch, |_| {})
}

/// Rollout that hands the simulator to `on_step` after every step.
pub fn rollout_observed<F: FnMut(&Simulator)>(
    policy: &ParamVector,
    mix_scale: bool,
    record: bool,
    scratch: &mut Scratch,
    mut on_step: F,
) -> Trajectory {
    let mut sim = Simulator::new();
    let mut states = Vec::new();
    let mut degenerate = false;
    while sim.step < EPISODE_STEPS {
        let mut obs = sim.state.observation();
        if mix_scale {
            MIX_SCALE_INDICES.iter().for_each(|&i| obs[i] *= 100.0);
        }
        if record {
            states.push(obs.to_vec());
        }
        let action = if sim.step < ACTUATION_STEPS {
            let out = forward_into(policy.spec(), policy.values(), &obs, scratch);
            if out.iter().any(|v| !v.is_finite()) {
                degenerate = true;
                break;
            }
            Some([out[0], out[1], out[2]])
        } else {
            None
        };
        sim.step(action);
        on_step(&sim);
        if sim.at_rest() {
            break;
        }
    }
    Trajectory {
        states,
        events: sim.events,
        steps: sim.step,
        degenerate,
        final_position: sim.state.puck,
        max_height: sim.state.puck[1],
        walls: sim.walls,
    }
}
