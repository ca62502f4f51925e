//! Kinematic hexapod locomotion proxy.
//!
//! A deterministic stand-in for rigid-body simulation: joints track actuator
//! commands through an affine range map with a per-step rate limit, a leg is
//! in stance while its knee is below a threshold, and the body advances by
//! the mean backstroke of the stance legs whenever at least two legs
//! support it. Body height is the stance fraction times a nominal height.
//!
//! Sensor channels per leg: `<leg>_shoulder_angle`, `<leg>_knee_angle`,
//! `<leg>_foot_contact`. Actuator channels: `<leg>_shoulder_motor`,
//! `<leg>_knee_motor`.

use std::collections::BTreeMap;

use super::{EvalError, Environment, parse_f64_param, reject_unknown_params};
use crate::rng::EvoRng;

const DEG: f64 = std::f64::consts::PI / 180.0;
/// Evaluations abort after this many consecutive steps without ground
/// contact.
const ABORT_AFTER_AIRBORNE_STEPS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HexapodFitness {
    /// Summed forward position.
    Forward,
    /// Summed forward position minus `gamma * (z(t) - z(t-1))`.
    ForwardWithHeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexapodParams {
    pub legs: Vec<String>,
    pub shoulder_range: (f64, f64),
    pub knee_range: (f64, f64),
    /// Maximal joint movement per step, radians.
    pub rate_limit: f64,
    /// A leg is in stance while its knee angle is below this.
    pub stance_threshold: f64,
    /// Stride scale L: forward gain per radian of mean stance backstroke.
    pub stride: f64,
    /// Nominal body height at full support.
    pub body_height: f64,
    pub fitness: HexapodFitness,
    pub gamma: f64,
}

impl Default for HexapodParams {
    fn default() -> Self {
        Self {
            legs: ["fl", "fr", "ml", "mr", "rl", "rr"]
                .map(str::to_string)
                .to_vec(),
            shoulder_range: (-35.0 * DEG, 35.0 * DEG),
            knee_range: (-15.0 * DEG, 25.0 * DEG),
            rate_limit: 0.05,
            stance_threshold: 0.1,
            stride: 1.0,
            body_height: 0.5,
            fitness: HexapodFitness::Forward,
            gamma: 1.0,
        }
    }
}

impl HexapodParams {
    pub fn from_map(params: &BTreeMap<String, String>) -> Result<Self, EvalError> {
        reject_unknown_params(
            params,
            &[
                "legs",
                "shoulder_min",
                "shoulder_max",
                "knee_min",
                "knee_max",
                "rate_limit",
                "stance_threshold",
                "stride",
                "body_height",
                "fitness",
                "gamma",
            ],
        )?;
        let mut out = Self::default();
        if let Some(raw) = params.get("legs") {
            out.legs = raw.split(',').map(|s| s.trim().to_string()).collect();
            if out.legs.is_empty() || out.legs.iter().any(String::is_empty) {
                return Err(EvalError::Config(format!("parameter `legs`: bad list `{raw}`")));
            }
        }
        out.shoulder_range = (
            parse_f64_param(params, "shoulder_min", out.shoulder_range.0)?,
            parse_f64_param(params, "shoulder_max", out.shoulder_range.1)?,
        );
        out.knee_range = (
            parse_f64_param(params, "knee_min", out.knee_range.0)?,
            parse_f64_param(params, "knee_max", out.knee_range.1)?,
        );
        out.rate_limit = parse_f64_param(params, "rate_limit", out.rate_limit)?;
        out.stance_threshold = parse_f64_param(params, "stance_threshold", out.stance_threshold)?;
        out.stride = parse_f64_param(params, "stride", out.stride)?;
        out.body_height = parse_f64_param(params, "body_height", out.body_height)?;
        out.gamma = parse_f64_param(params, "gamma", out.gamma)?;
        out.fitness = match params.get("fitness").map(String::as_str) {
            None | Some("forward") => HexapodFitness::Forward,
            Some("forward-height") => HexapodFitness::ForwardWithHeight,
            Some(other) => {
                return Err(EvalError::Config(format!(
                    "parameter `fitness`: expected forward|forward-height, got `{other}`"
                )));
            }
        };
        Ok(out)
    }

    pub fn sensor_channels(&self) -> Vec<String> {
        self.legs
            .iter()
            .flat_map(|leg| {
                [
                    format!("{leg}_shoulder_angle"),
                    format!("{leg}_knee_angle"),
                    format!("{leg}_foot_contact"),
                ]
            })
            .collect()
    }

    pub fn actuator_channels(&self) -> Vec<String> {
        self.legs
            .iter()
            .flat_map(|leg| [format!("{leg}_shoulder_motor"), format!("{leg}_knee_motor")])
            .collect()
    }
}

/// Joint angles and body pose; leg arrays follow `params.legs` order.
#[derive(Debug, Clone, PartialEq)]
pub struct HexapodBody {
    pub shoulders: Vec<f64>,
    pub knees: Vec<f64>,
    pub stance: Vec<bool>,
    pub y: f64,
    pub z: f64,
}

impl HexapodBody {
    /// Rest pose: all joints at zero.
    pub fn rest(params: &HexapodParams) -> Self {
        let legs = params.legs.len();
        let stance: Vec<bool> = vec![0.0 < params.stance_threshold; legs];
        let count = stance.iter().filter(|&&s| s).count();
        Self {
            shoulders: vec![0.0; legs],
            knees: vec![0.0; legs],
            stance,
            y: 0.0,
            z: params.body_height * count as f64 / legs as f64,
        }
    }

    pub fn stance_count(&self) -> u32 {
        self.stance.iter().filter(|&&s| s).count() as u32
    }
}

/// Map a command from [-1, 1] onto a joint range.
fn joint_target(command: f64, range: (f64, f64)) -> f64 {
    let v = command.clamp(-1.0, 1.0);
    range.0 + (v + 1.0) / 2.0 * (range.1 - range.0)
}

fn track(current: f64, command: Option<f64>, range: (f64, f64), rate: f64) -> f64 {
    // absent or non-finite commands hold the joint in place
    let Some(command) = command.filter(|c| c.is_finite()) else {
        return current;
    };
    let target = joint_target(command, range);
    current + (target - current).clamp(-rate, rate)
}

/// Advance the body one step under the given actuator commands.
///
/// Joints move toward their command targets rate-limited, stance is
/// re-evaluated from the new knee angles, and with at least two supporting
/// legs the body advances by `stride / stance_count` times the summed
/// backstroke (negative shoulder movement) of the stance legs.
pub fn hexapod_step(
    params: &HexapodParams,
    body: &HexapodBody,
    actuators: &BTreeMap<String, f64>,
) -> HexapodBody {
    let mut next = body.clone();
    let mut backstroke = 0.0;
    for (i, leg) in params.legs.iter().enumerate() {
        let shoulder_cmd = actuators.get(&format!("{leg}_shoulder_motor")).copied();
        let knee_cmd = actuators.get(&format!("{leg}_knee_motor")).copied();
        let shoulder = track(
            body.shoulders[i],
            shoulder_cmd,
            params.shoulder_range,
            params.rate_limit,
        );
        let knee = track(body.knees[i], knee_cmd, params.knee_range, params.rate_limit);
        next.stance[i] = knee < params.stance_threshold;
        if next.stance[i] {
            backstroke += -(shoulder - body.shoulders[i]);
        }
        next.shoulders[i] = shoulder;
        next.knees[i] = knee;
    }
    let count = next.stance_count();
    if count >= 2 {
        next.y = body.y + params.stride / f64::from(count) * backstroke;
    }
    next.z = params.body_height * f64::from(count) / params.legs.len() as f64;
    next
}

/// Lifecycle wrapper around the kinematic body.
#[derive(Debug, Clone)]
pub struct HexapodEnv {
    params: HexapodParams,
    body: HexapodBody,
    fitness: f64,
    prev_z: f64,
    initial_z: f64,
    airborne_steps: u64,
}

impl HexapodEnv {
    pub fn new(params: HexapodParams) -> Self {
        let body = HexapodBody::rest(&params);
        let z = body.z;
        Self {
            params,
            body,
            fitness: 0.0,
            prev_z: z,
            initial_z: z,
            airborne_steps: 0,
        }
    }

    pub fn params(&self) -> &HexapodParams {
        &self.params
    }

    pub fn body(&self) -> &HexapodBody {
        &self.body
    }
}

impl Environment for HexapodEnv {
    fn sensor_channels(&self) -> Vec<String> {
        self.params.sensor_channels()
    }

    fn actuator_channels(&self) -> Vec<String> {
        self.params.actuator_channels()
    }

    fn new_individual(&mut self, _rng: &mut EvoRng) {
        self.body = HexapodBody::rest(&self.params);
        self.fitness = 0.0;
        self.prev_z = self.body.z;
        self.initial_z = self.body.z;
        self.airborne_steps = 0;
    }

    fn read_sensors(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (i, leg) in self.params.legs.iter().enumerate() {
            out.insert(format!("{leg}_shoulder_angle"), self.body.shoulders[i]);
            out.insert(format!("{leg}_knee_angle"), self.body.knees[i]);
            out.insert(
                format!("{leg}_foot_contact"),
                if self.body.stance[i] { 1.0 } else { 0.0 },
            );
        }
        out
    }

    fn update_controller(&mut self, actuators: &BTreeMap<String, f64>) {
        self.body = hexapod_step(&self.params, &self.body, actuators);
        self.fitness += match self.params.fitness {
            HexapodFitness::Forward => self.body.y,
            HexapodFitness::ForwardWithHeight => {
                self.body.y - self.params.gamma * (self.body.z - self.prev_z)
            }
        };
        self.prev_z = self.body.z;
        if self.body.stance_count() == 0 {
            self.airborne_steps += 1;
        } else {
            self.airborne_steps = 0;
        }
    }

    fn abort(&self) -> bool {
        self.airborne_steps >= ABORT_AFTER_AIRBORNE_STEPS
    }

    fn evaluation_completed(&mut self) {}

    fn fitness(&self) -> f64 {
        self.fitness
    }

    fn body_row(&self) -> (f64, f64, u32) {
        (self.body.y, self.body.z, self.body.stance_count())
    }

    fn initial_height(&self) -> f64 {
        self.initial_z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide_params() -> HexapodParams {
        HexapodParams {
            shoulder_range: (-1.0, 1.0),
            knee_range: (-1.0, 1.0),
            rate_limit: 0.2,
            ..Default::default()
        }
    }

    #[test]
    fn no_commands_no_motion() {
        let params = HexapodParams::default();
        let body = HexapodBody::rest(&params);
        let next = hexapod_step(&params, &body, &BTreeMap::new());
        assert_eq!(next.y, 0.0);
        assert_eq!(next.z, body.z);
        assert_eq!(next.shoulders, body.shoulders);
    }

    #[test]
    fn six_stance_legs_advance_by_mean_backstroke() {
        let params = wide_params();
        let body = HexapodBody::rest(&params);
        assert_eq!(body.stance_count(), 6);
        // command every shoulder to -0.1; knees untouched stay in stance
        let actuators: BTreeMap<String, f64> = params
            .legs
            .iter()
            .map(|leg| (format!("{leg}_shoulder_motor"), -0.1))
            .collect();
        let next = hexapod_step(&params, &body, &actuators);
        assert_eq!(next.stance_count(), 6);
        // each shoulder moved -0.1, so dy = (L/6) * 6 * 0.1 = 0.1
        assert!((next.y - 0.1).abs() < 1e-12, "y = {}", next.y);
    }

    #[test]
    fn single_stance_leg_gives_no_support() {
        let params = wide_params();
        let mut body = HexapodBody::rest(&params);
        for i in 1..6 {
            body.knees[i] = 0.5; // above the stance threshold
            body.stance[i] = false;
        }
        let actuators: BTreeMap<String, f64> = params
            .legs
            .iter()
            .map(|leg| (format!("{leg}_shoulder_motor"), -0.1))
            .collect();
        let next = hexapod_step(&params, &body, &actuators);
        assert_eq!(next.stance_count(), 1);
        assert_eq!(next.y, 0.0);
    }

    #[test]
    fn height_tracks_stance_fraction() {
        let params = wide_params();
        let mut body = HexapodBody::rest(&params);
        for i in 3..6 {
            body.knees[i] = 0.5;
        }
        let next = hexapod_step(&params, &body, &BTreeMap::new());
        assert_eq!(next.stance_count(), 3);
        assert_eq!(next.z, params.body_height * 0.5);
    }

    #[test]
    fn rate_limit_bounds_joint_speed() {
        let params = wide_params();
        let body = HexapodBody::rest(&params);
        let actuators: BTreeMap<String, f64> =
            [("fl_shoulder_motor".to_string(), 1.0)].into_iter().collect();
        let next = hexapod_step(&params, &body, &actuators);
        assert_eq!(next.shoulders[0], 0.2);
    }

    #[test]
    fn forward_drift_is_monotone_when_backstroke_never_reverses() {
        // shoulders only ever commanded backward: y must never decrease
        let params = wide_params();
        let mut body = HexapodBody::rest(&params);
        let mut last_y = 0.0;
        for step in 0..50 {
            let cmd = -(f64::from(step) / 50.0);
            let actuators: BTreeMap<String, f64> = params
                .legs
                .iter()
                .map(|leg| (format!("{leg}_shoulder_motor"), cmd))
                .collect();
            body = hexapod_step(&params, &body, &actuators);
            assert!(body.y >= last_y);
            last_y = body.y;
        }
    }

    #[test]
    fn airborne_abort_counter() {
        let params = HexapodParams::default();
        let mut env = HexapodEnv::new(params);
        let mut rng = crate::rng::EvoRng::from_seed(0);
        env.new_individual(&mut rng);
        // drive all knees up until no leg touches the ground
        let actuators: BTreeMap<String, f64> = env
            .params()
            .legs
            .iter()
            .map(|leg| (format!("{leg}_knee_motor"), 1.0))
            .collect();
        let mut steps = 0;
        while !env.abort() {
            env.update_controller(&actuators);
            steps += 1;
            assert!(steps < 200, "abort never triggered");
        }
        assert_eq!(env.body().stance_count(), 0);
        assert!(steps >= ABORT_AFTER_AIRBORNE_STEPS as usize);
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let params: BTreeMap<String, String> =
            [("strid".to_string(), "1.0".to_string())].into_iter().collect();
        assert!(HexapodParams::from_map(&params).is_err());
    }
}
