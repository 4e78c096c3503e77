//! Cut-in with a tailgater: car A cuts in ahead of the automated car B while
//! car C follows B. B and C drive with the intelligent driver model.
//!
//! The disturbance vector is standard normal and every coordinate is signed
//! so that larger values are more dangerous:
//!
//! | index | effect |
//! |-------|--------|
//! | 0 | A's gap to B at cut-in shrinks |
//! | 1 | A's speed deficit relative to B grows |
//! | 2 | A's initial braking grows |
//! | 3 | C's gap to B shrinks |
//! | 4 | C's speed excess over B grows |
//! | 5 | C's time headway shrinks |
//! | 6 | C's braking capability shrinks |
//! | 7.. | A decelerates harder in each phase (five by default) |

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::nature::GaussianNature;
use crate::problems::{SafetyProblem, DEFAULT_STAGE1_SCALE};

/// Disturbance dimension with the default five phases.
pub const CUT_IN_DIM: usize = 12;
const FIXED_DISTURBANCES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub time_headway: f64,
    pub jam_distance: f64,
    pub accel_exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            time_headway: 1.0,
            jam_distance: 2.0,
            accel_exponent: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.desired_speed,
            self.max_accel,
            self.comfort_decel,
            self.time_headway,
            self.jam_distance,
            self.accel_exponent,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(invalid("idm", "all parameters must be positive"))
        }
    }

    /// Desired gap `s*`, floored at zero.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        let s = self.jam_distance
            + v * self.time_headway
            + v * dv / (2.0 * (self.max_accel * self.comfort_decel).sqrt());
        s.max(0.0)
    }
}

/// IDM acceleration for speed `v` behind a leader `gap` metres ahead closing
/// at `dv`, clamped to `[−3b, a_max]`.
pub fn idm_accel(gap: f64, v: f64, dv: f64, p: &IdmParams) -> f64 {
    debug_assert!(gap > 0.0);
    let free = (v / p.desired_speed).powf(p.accel_exponent);
    let interact = (p.desired_gap(v, dv) / gap).powi(2);
    let a = p.max_accel * (1.0 - free - interact);
    a.clamp(-3.0 * p.comfort_decel, p.max_accel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutInParams {
    pub idm: IdmParams,
    pub dt: f64,
    pub steps: usize,
    pub car_length: f64,
    pub speed_b: f64,
    pub gap_a: f64,
    pub gap_a_scale: f64,
    pub deficit_a: f64,
    pub deficit_a_scale: f64,
    pub brake_a: f64,
    pub brake_a_scale: f64,
    pub gap_c: f64,
    pub gap_c_scale: f64,
    pub excess_c: f64,
    pub excess_c_scale: f64,
    pub headway_c_scale: f64,
    pub decel_c_scale: f64,
    pub phase_accel_scale: f64,
    /// Phases with their own disturbance of A's deceleration.
    pub phases: usize,
}

impl Default for CutInParams {
    fn default() -> Self {
        Self {
            idm: IdmParams::default(),
            dt: 0.6,
            steps: 15,
            car_length: 4.5,
            speed_b: 25.0,
            gap_a: 16.0,
            gap_a_scale: 3.0,
            deficit_a: 2.0,
            deficit_a_scale: 1.5,
            brake_a: 1.0,
            brake_a_scale: 0.8,
            gap_c: 13.0,
            gap_c_scale: 3.0,
            excess_c: 1.0,
            excess_c_scale: 1.0,
            headway_c_scale: 0.15,
            decel_c_scale: 0.25,
            phase_accel_scale: 0.5,
            phases: 5,
        }
    }
}

/// Longitudinal positions (front bumper, m) and speeds (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutInState {
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub t: usize,
}

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;

impl CutInState {
    /// Bumper gaps A–B and B–C.
    pub fn gaps(&self, car_length: f64) -> (f64, f64) {
        (
            self.pos[A] - car_length - self.pos[B],
            self.pos[B] - car_length - self.pos[C],
        )
    }
}

fn initial_state(x: &[f64], p: &CutInParams) -> CutInState {
    let vb = p.speed_b;
    let gap_a = p.gap_a - p.gap_a_scale * x[0];
    let va = (vb - p.deficit_a - p.deficit_a_scale * x[1]).max(0.0);
    let gap_c = p.gap_c - p.gap_c_scale * x[3];
    let vc = (vb + p.excess_c + p.excess_c_scale * x[4]).max(0.0);
    CutInState {
        pos: [gap_a + p.car_length, 0.0, -(gap_c + p.car_length)],
        vel: [va, vb, vc],
        t: 0,
    }
}

impl CutInParams {
    pub fn dim(&self) -> usize {
        FIXED_DISTURBANCES + self.phases
    }

    pub fn validate(&self) -> Result<()> {
        self.idm.validate()?;
        if !(self.dt > 0.0) || self.steps == 0 {
            return Err(invalid("cut_in", "dt and steps must be positive"));
        }
        if self.phases == 0 || self.phases > self.steps {
            return Err(invalid("phases", "need between 1 and `steps` phases"));
        }
        Ok(())
    }
}

/// Whether the disturbance `x` leads to contact within `steps · dt` seconds.
pub fn simulate_cut_in(x: &[f64], p: &CutInParams) -> Result<bool> {
    check_dim(p.dim(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("disturbance"));
    }
    Ok(run(x, p))
}

fn run(x: &[f64], p: &CutInParams) -> bool {
    let mut s = initial_state(x, p);
    let idm_c = IdmParams {
        time_headway: (p.idm.time_headway - p.headway_c_scale * x[5]).max(0.1),
        comfort_decel: (p.idm.comfort_decel - p.decel_c_scale * x[6]).max(0.25),
        ..p.idm
    };
    let brake_a = (p.brake_a + p.brake_a_scale * x[2]).max(0.0);
    let phase_len = p.steps.div_ceil(p.phases).max(1);
    // C reacts to B's previous state
    let mut seen_by_c = (s.pos[B], s.vel[B]);
    while s.t <= p.steps {
        let (gab, gbc) = s.gaps(p.car_length);
        if gab <= 0.0 || gbc <= 0.0 {
            return true;
        }
        if s.t == p.steps {
            break;
        }
        let phase = (s.t / phase_len).min(p.phases - 1);
        let mut acc_a = -p.phase_accel_scale * x[FIXED_DISTURBANCES + phase];
        if phase == 0 {
            acc_a -= brake_a;
        }
        let acc_b = idm_accel(gab, s.vel[B], s.vel[B] - s.vel[A], &p.idm);
        let gap_seen = seen_by_c.0 - p.car_length - s.pos[C];
        let acc_c = if gap_seen > 0.0 {
            idm_accel(gap_seen, s.vel[C], s.vel[C] - seen_by_c.1, &idm_c)
        } else {
            -3.0 * idm_c.comfort_decel
        };
        seen_by_c = (s.pos[B], s.vel[B]);
        for (car, a) in [(A, acc_a), (B, acc_b), (C, acc_c)] {
            s.vel[car] = (s.vel[car] + a * p.dt).max(0.0);
            s.pos[car] += s.vel[car] * p.dt;
        }
        s.t += 1;
    }
    false
}

/// Cut-in problem with standard normal disturbances.
pub fn make_cut_in(params: CutInParams) -> Result<SafetyProblem> {
    params.validate()?;
    let nature = GaussianNature::standard(params.dim())?;
    Ok(SafetyProblem {
        name: "cut_in".into(),
        orient: SafetyProblem::shifted_orient(&nature, 10.0),
        nature,
        indicator: Arc::new(move |x: &[f64]| run(x, &params)),
        analytic_mu: None,
        gamma: 1.0,
        stage1_scale: DEFAULT_STAGE1_SCALE,
    })
}
