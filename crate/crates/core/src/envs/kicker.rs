//! Kicker-lite: a disc agent on flat ground kicks a ball dropped next to it.
//!
//! The agent obeys `v' = v + (F - drag * v) dt`, `x' = x + v' dt`. The ball is
//! integrated in closed form under constant gravity, so its apex and landing
//! point are exact for any step size. Agent and ball do not block each other;
//! they interact only through the kick impulse, which fires on the first step
//! of a contact in which the kick action is positive. The impulse points from
//! the agent's foot `(x, 0)` to the ball centre. The ball sticks where it lands.

use crate::nn::mlp::{forward_into, Scratch};
use crate::nn::ParamVector;

use super::{Event, EventKind, Trajectory};

pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 9.81;
pub const AGENT_RADIUS: f64 = 1.0;
pub const BALL_RADIUS: f64 = 0.5;
pub const DROP_HEIGHT: f64 = 3.0;
pub const BALL_START_X: f64 = 2.0;
pub const MAX_FORCE: f64 = 20.0;
pub const DRAG: f64 = 2.0;
pub const MAX_KICK: f64 = 15.0;
pub const ACTUATION_STEPS: usize = 100;
pub const EPISODE_STEPS: usize = 400;
/// Normalisation limits of the observation.
pub const X_LIMIT: f64 = 25.0;
pub const Y_LIMIT: f64 = 12.5;
pub const V_LIMIT: f64 = 20.0;
pub const OBS_DIM: usize = 7;
pub const ACT_DIM: usize = 2;
/// Agent position and the ball's position and velocity.
pub const MIX_SCALE_INDICES: [usize; 5] = [0, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub agent_x: f64,
    pub agent_v: f64,
    pub ball: [f64; 2],
    pub ball_vel: [f64; 2],
    pub airborne: bool,
    pub contact: bool,
}

impl State {
    pub fn initial() -> Self {
        Self {
            agent_x: 0.0,
            agent_v: 0.0,
            ball: [BALL_START_X, DROP_HEIGHT],
            ball_vel: [0.0; 2],
            airborne: true,
            contact: false,
        }
    }

    pub fn raw_observation(&self) -> [f64; OBS_DIM] {
        [
            self.agent_x,
            self.agent_v,
            self.ball[0],
            self.ball[1],
            self.ball_vel[0],
            self.ball_vel[1],
            if self.contact { 1.0 } else { 0.0 },
        ]
    }

    /// Positions and velocities mapped to `[0, 1]` over the nominal limits.
    pub fn observation(&self) -> [f64; OBS_DIM] {
        let mut o = self.raw_observation();
        for i in [0, 2] {
            o[i] = (o[i] + X_LIMIT) / (2.0 * X_LIMIT);
        }
        o[3] /= Y_LIMIT;
        for i in [1, 4, 5] {
            o[i] = (o[i] + V_LIMIT) / (2.0 * V_LIMIT);
        }
        o
    }

    fn touching(&self) -> bool {
        let dx = self.ball[0] - self.agent_x;
        let dy = self.ball[1] - AGENT_RADIUS;
        dx.hypot(dy) < AGENT_RADIUS + BALL_RADIUS
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub state: State,
    pub step: usize,
    pub events: Vec<Event>,
    pub max_height: f64,
    kick_armed: bool,
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
            max_height: DROP_HEIGHT,
            kick_armed: true,
        }
    }

    /// Applies an impulse to the ball and starts a ballistic flight.
    pub fn launch(&mut self, velocity_change: [f64; 2]) {
        let s = &mut self.state;
        s.ball_vel[0] += velocity_change[0];
        s.ball_vel[1] += velocity_change[1];
        s.airborne = true;
    }

    /// One step. `action` is `(force, kick)` clamped to `[-1, 1]` and `[0, 1]`;
    /// `None` zeroes both.
    pub fn step(&mut self, action: Option<[f64; ACT_DIM]>) {
        let [force, kick] = match action {
            Some([f, k]) => [f.clamp(-1.0, 1.0) * MAX_FORCE, k.clamp(0.0, 1.0) * MAX_KICK],
            None => [0.0, 0.0],
        };
        let s = &mut self.state;
        s.agent_v += (force - DRAG * s.agent_v) * DT;
        s.agent_x += s.agent_v * DT;

        let touching = s.touching();
        if !touching {
            self.kick_armed = true;
        }
        s.contact = touching;
        if touching {
            self.events.push(Event {
                step: self.step,
                kind: EventKind::Contact,
            });
            if self.kick_armed && kick > 0.0 {
                let d = [s.ball[0] - s.agent_x, s.ball[1]];
                let n = d[0].hypot(d[1]);
                let j = [kick * d[0] / n, kick * d[1] / n];
                self.kick_armed = false;
                self.events.push(Event {
                    step: self.step,
                    kind: EventKind::Kick { impulse: kick },
                });
                self.launch(j);
            }
        }
        self.advance_ball(DT);
        self.step += 1;
    }

    /// Exact constant-gravity flight over `dt`, with the apex and ground impact
    /// resolved inside the interval.
    pub fn advance_ball(&mut self, dt: f64) {
        let s = &mut self.state;
        if !s.airborne {
            return;
        }
        let [vx, vy] = s.ball_vel;
        let y0 = s.ball[1];
        // time to reach ground level (centre at BALL_RADIUS), positive root
        let h = y0 - BALL_RADIUS;
        let t_land = (vy + (vy * vy + 2.0 * GRAVITY * h).sqrt()) / GRAVITY;
        let (t, landed) = if t_land <= dt {
            (t_land.max(0.0), true)
        } else {
            (dt, false)
        };
        let t_apex = vy / GRAVITY;
        if t_apex > 0.0 && t_apex <= t {
            self.max_height = self.max_height.max(y0 + vy * vy / (2.0 * GRAVITY));
        }
        s.ball[0] += vx * t;
        if landed {
            s.ball[1] = BALL_RADIUS;
            s.ball_vel = [0.0; 2];
            s.airborne = false;
            self.events.push(Event {
                step: self.step,
                kind: EventKind::Landing,
            });
        } else {
            s.ball[1] = y0 + vy * t - 0.5 * GRAVITY * t * t;
            s.ball_vel[1] = vy - GRAVITY * t;
        }
        self.max_height = self.max_height.max(s.ball[1]);
    }

    pub fn finished(&self) -> bool {
        self.step >= ACTUATION_STEPS && !self.state.airborne
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
            Some([out[0], out[1]])
        } else {
            None
        };
        sim.step(action);
        on_step(&sim);
        if sim.finished() {
            break;
        }
    }
    Trajectory {
        states,
        events: sim.events,
        steps: sim.step,
        degenerate,
        final_position: sim.state.ball,
        max_height: sim.max_height,
        walls: Vec::new(),
    }
}
