//! Oscillator task: a desk-scale smoke test for pattern generators.
//!
//! The environment watches a single designated actuator channel and rewards
//! output movement: fitness is the sum over steps of `|o(t) - o(t-1)|`,
//! clamped at 0.5 per step so runaway amplitudes cannot dominate sustained
//! oscillation. There are no sensors; the network must drive itself.

use std::collections::BTreeMap;

use super::{EvalError, Environment, EvaluationTrace, reject_unknown_params};
use crate::rng::EvoRng;

pub const STEP_CLAMP: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct OscillatorEnv {
    channel: String,
    last: f64,
    fitness: f64,
}

impl OscillatorEnv {
    pub fn new(channel: impl Into<String>) -> Self {
        Self {
            channel: channel.into(),
            last: 0.0,
            fitness: 0.0,
        }
    }

    pub fn from_map(params: &BTreeMap<String, String>) -> Result<Self, EvalError> {
        reject_unknown_params(params, &["channel"])?;
        Ok(Self::new(
            params.get("channel").map_or("osc", String::as_str),
        ))
    }
}

impl Environment for OscillatorEnv {
    fn sensor_channels(&self) -> Vec<String> {
        vec![]
    }

    fn actuator_channels(&self) -> Vec<String> {
        vec![self.channel.clone()]
    }

    fn new_individual(&mut self, _rng: &mut EvoRng) {
        self.last = 0.0;
        self.fitness = 0.0;
    }

    fn read_sensors(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    fn update_controller(&mut self, actuators: &BTreeMap<String, f64>) {
        let value = actuators
            .get(&self.channel)
            .copied()
            .filter(|v| v.is_finite())
            .unwrap_or(self.last);
        self.fitness += (value - self.last).abs().min(STEP_CLAMP);
        self.last = value;
    }

    fn abort(&self) -> bool {
        false
    }

    fn evaluation_completed(&mut self) {}

    fn fitness(&self) -> f64 {
        self.fitness
    }

    fn body_row(&self) -> (f64, f64, u32) {
        (self.last, 0.0, 0)
    }

    fn initial_height(&self) -> f64 {
        0.0
    }
}

/// Recompute the oscillator fitness from a recorded trace; the independent
/// counterpart of the environment's online accumulation. Returns `None`
/// when the channel is not in the trace.
pub fn oscillator_fitness(trace: &EvaluationTrace, channel: &str) -> Option<f64> {
    let index = trace
        .actuator_channels
        .iter()
        .position(|c| c == channel)?;
    let mut last = 0.0;
    let mut total = 0.0;
    for row in &trace.rows {
        let value = row.actuators[index];
        total += (value - last).abs().min(STEP_CLAMP);
        last = value;
    }
    Some(total)
}
