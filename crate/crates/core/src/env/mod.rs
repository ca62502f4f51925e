//! Evaluation environments and the evaluation lifecycle.
//!
//! An environment implements five hooks which the evaluator calls in a fixed
//! order: `new_individual` once, then per step `update_controller` followed
//! by the `abort` query (a true answer truncates the loop), and finally
//! `evaluation_completed` exactly once. Fitness is read after completion.
//!
//! Environments are single-use per individual and never shared; concurrent
//! evaluations each build their own instance, which keeps `evaluate` a pure
//! function of (genome, config, seed).

pub mod hexapod;
pub mod oscillator;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::genome::Genome;
use crate::network::{CompileError, StepError, compile};
use crate::rng::EvoRng;

pub use hexapod::{HexapodBody, HexapodEnv, HexapodParams, hexapod_step};
pub use oscillator::{OscillatorEnv, oscillator_fitness};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("evaluation config: {0}")]
    Config(String),
    #[error("sensor channel `{0}` is not provided by the environment")]
    UnboundSensor(String),
    #[error("actuator channel `{0}` is not consumed by the environment")]
    UnboundActuator(String),
}

/// Environment selection plus the evaluation lifetime T and free-form
/// environment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub environment: String,
    /// Number of controller steps per evaluation; at least 1.
    pub lifetime: u64,
    pub params: BTreeMap<String, String>,
}

impl EvalConfig {
    pub fn new(environment: impl Into<String>, lifetime: u64) -> Self {
        Self {
            environment: environment.into(),
            lifetime,
            params: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.lifetime < 1 {
            return Err(EvalError::Config("lifetime must be at least 1".into()));
        }
        Ok(())
    }
}

/// One recorded step of the sensorimotor loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub y: f64,
    pub z: f64,
    pub stance_count: u32,
    /// Actuator commands issued this step, in `actuator_channels` order.
    pub actuators: Vec<f64>,
    /// Sensor observations fed to the network this step, in
    /// `sensor_channels` order.
    pub sensors: Vec<f64>,
}

/// Full per-step record of one evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationTrace {
    pub actuator_channels: Vec<String>,
    pub sensor_channels: Vec<String>,
    /// Body height before the first step (z(0) in the height-punished
    /// fitness).
    pub initial_z: f64,
    pub rows: Vec<TraceRow>,
}

impl EvaluationTrace {
    /// CSV with columns `t,y,z,stance_count,a_0..a_k,o_0..o_k`; actuator
    /// columns follow `actuator_channels` order, observation columns follow
    /// `sensor_channels` order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,y,z,stance_count");
        for i in 0..self.actuator_channels.len() {
            let _ = write!(out, ",a_{i}");
        }
        for i in 0..self.sensor_channels.len() {
            let _ = write!(out, ",o_{i}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{},{},{}", row.t, row.y, row.z, row.stance_count);
            for v in &row.actuators {
                let _ = write!(out, ",{v}");
            }
            for v in &row.sensors {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn y_series(&self) -> impl Iterator<Item = f64> {
        self.rows.iter().map(|r| r.y)
    }

    pub fn z_series(&self) -> impl Iterator<Item = f64> {
        self.rows.iter().map(|r| r.z)
    }
}

/// The five-hook evaluation contract.
pub trait Environment {
    /// Channels the environment feeds into the network.
    fn sensor_channels(&self) -> Vec<String>;
    /// Channels the environment consumes from the network.
    fn actuator_channels(&self) -> Vec<String>;
    /// Reset state for a fresh individual.
    fn new_individual(&mut self, rng: &mut EvoRng);
    /// Current sensor values.
    fn read_sensors(&self) -> BTreeMap<String, f64>;
    /// Consume actuator commands, advance the world one step, accumulate
    /// fitness.
    fn update_controller(&mut self, actuators: &BTreeMap<String, f64>);
    /// Early-termination query; checked once after every update.
    fn abort(&self) -> bool;
    /// Whole-run post-processing after the final step.
    fn evaluation_completed(&mut self);
    /// Fitness of the evaluated individual.
    fn fitness(&self) -> f64;
    /// (y, z, stance count) for the trace row of the step just executed.
    fn body_row(&self) -> (f64, f64, u32);
    /// Body height before the first step; z(0) of the trace.
    fn initial_height(&self) -> f64;
}

/// Build a built-in environment by name.
pub fn create_environment(config: &EvalConfig) -> Result<Box<dyn Environment>, EvalError> {
    match config.environment.as_str() {
        "hexapod" => Ok(Box::new(HexapodEnv::new(HexapodParams::from_map(
            &config.params,
        )?))),
        "oscillator" => Ok(Box::new(OscillatorEnv::from_map(&config.params)?)),
        "" => Err(EvalError::Config(
            "environment name is missing (field `environment`)".into(),
        )),
        other => Err(EvalError::Config(format!("unknown environment `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub trace: EvaluationTrace,
}

/// Compile the genome once and run it through the environment lifecycle for
/// at most `lifetime` steps.
pub fn evaluate(genome: &Genome, config: &EvalConfig, rng: &mut EvoRng) -> Result<Evaluation, EvalError> {
    config.validate()?;
    let net = compile(genome)?;
    let mut env = create_environment(config)?;
    evaluate_compiled(&net, env.as_mut(), config.lifetime, rng)
}

/// Lifecycle driver for an already compiled network and environment.
pub fn evaluate_compiled(
    net: &crate::network::CompiledNetwork,
    env: &mut dyn Environment,
    lifetime: u64,
    rng: &mut EvoRng,
) -> Result<Evaluation, EvalError> {
    let env_sensors = env.sensor_channels();
    let env_actuators = env.actuator_channels();
    for channel in net.sensor_channels() {
        if !env_sensors.iter().any(|c| c == channel) {
            return Err(EvalError::UnboundSensor(channel.to_string()));
        }
    }
    for channel in net.actuator_channels() {
        if !env_actuators.iter().any(|c| c == channel) {
            return Err(EvalError::UnboundActuator(channel.to_string()));
        }
    }

    env.new_individual(rng);
    let mut trace = EvaluationTrace {
        actuator_channels: net.actuator_channels().map(str::to_string).collect(),
        sensor_channels: net.sensor_channels().map(str::to_string).collect(),
        initial_z: env.initial_height(),
        rows: Vec::with_capacity(lifetime as usize),
    };

    let mut state = net.initial_state();
    for t in 1..=lifetime {
        let sensors = env.read_sensors();
        state = net.step(&state, &sensors)?;
        let actuators = net.read_actuators(&state);
        env.update_controller(&actuators);
        let (y, z, stance_count) = env.body_row();
        trace.rows.push(TraceRow {
            t,
            y,
            z,
            stance_count,
            actuators: actuators.values().copied().collect(),
            sensors: trace
                .sensor_channels
                .iter()
                .map(|c| sensors[c.as_str()])
                .collect(),
        });
        if env.abort() {
            break;
        }
    }
    env.evaluation_completed();
    Ok(Evaluation {
        fitness: env.fitness(),
        trace,
    })
}

/// Summed forward position over the trace.
pub fn fitness_forward(trace: &EvaluationTrace) -> f64 {
    trace.y_series().sum()
}

/// Summed forward position with a punishment for body-height changes:
/// `sum(y(t) - gamma * (z(t) - z(t-1)))`, z(0) taken from the trace.
pub fn fitness_forward_with_height(trace: &EvaluationTrace, gamma: f64) -> f64 {
    let mut prev_z = trace.initial_z;
    let mut total = 0.0;
    for row in &trace.rows {
        total += row.y - gamma * (row.z - prev_z);
        prev_z = row.z;
    }
    total
}

pub(crate) fn parse_f64_param(
    params: &BTreeMap<String, String>,
    key: &str,
    default: f64,
) -> Result<f64, EvalError> {
    match params.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| EvalError::Config(format!("parameter `{key}`: bad number `{raw}`"))),
    }
}

pub(crate) fn reject_unknown_params(
    params: &BTreeMap<String, String>,
    known: &[&str],
) -> Result<(), EvalError> {
    for key in params.keys() {
        if !known.contains(&key.as_str()) {
            return Err(EvalError::Config(format!(
                "unknown environment parameter `{key}`"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    /// Records the hook call sequence; aborts after a configurable number of
    /// controller updates.
    struct MockEnv {
        log: Rc<RefCell<Vec<String>>>,
        updates: u64,
        abort_after: Option<u64>,
    }

    impl Environment for MockEnv {
        fn sensor_channels(&self) -> Vec<String> {
            vec!["s".into()]
        }
        fn actuator_channels(&self) -> Vec<String> {
            vec![]
        }
        fn new_individual(&mut self, _rng: &mut EvoRng) {
            self.updates = 0;
            self.log.borrow_mut().push("new".into());
        }
        fn read_sensors(&self) -> BTreeMap<String, f64> {
            [("s".to_string(), 0.0)].into_iter().collect()
        }
        fn update_controller(&mut self, _actuators: &BTreeMap<String, f64>) {
            self.updates += 1;
            self.log.borrow_mut().push("update".into());
        }
        fn abort(&self) -> bool {
            self.log.borrow_mut().push("abort?".into());
            self.abort_after.is_some_and(|k| self.updates >= k)
        }
        fn evaluation_completed(&mut self) {
            self.log.borrow_mut().push("done".into());
        }
        fn fitness(&self) -> f64 {
            self.updates as f64
        }
        fn body_row(&self) -> (f64, f64, u32) {
            (0.0, 0.0, 0)
        }
        fn initial_height(&self) -> f64 {
            0.0
        }
    }

    fn empty_net() -> crate::network::CompiledNetwork {
        compile(&Genome::default()).unwrap()
    }

    #[test]
    fn lifecycle_hooks_run_in_order() {
        let log = Rc::new(RefCell::new(Vec::new()));
        let mut env = MockEnv {
            log: log.clone(),
            updates: 0,
            abort_after: None,
        };
        let net = empty_net();
        let mut rng = EvoRng::from_seed(0);
        let result = evaluate_compiled(&net, &mut env, 3, &mut rng).unwrap();
        assert_eq!(result.fitness, 3.0);
        let expected = [
            "new", "update", "abort?", "update", "abort?", "update", "abort?", "done",
        ];
        assert_eq!(*log.borrow(), expected);
    }

    #[test]
    fn abort_truncates_but_still_completes() {
        let log = Rc::new(RefCell::new(Vec::new()));
        let mut env = MockEnv {
            log: log.clone(),
            updates: 0,
            abort_after: Some(2),
        };
        let net = empty_net();
        let mut rng = EvoRng::from_seed(0);
        let result = evaluate_compiled(&net, &mut env, 100, &mut rng).unwrap();
        // exactly 2 controller updates happened, completion still ran once
        assert_eq!(result.fitness, 2.0);
        assert_eq!(result.trace.rows.len(), 2);
        let log = log.borrow();
        assert_eq!(log.iter().filter(|s| *s == "update").count(), 2);
        assert_eq!(log.iter().filter(|s| *s == "done").count(), 1);
        assert_eq!(log.last().map(String::as_str), Some("done"));
    }

    #[test]
    fn zero_lifetime_is_a_config_error() {
        let config = EvalConfig::new("hexapod", 0);
        let err = evaluate(&Genome::default(), &config, &mut EvoRng::from_seed(0)).unwrap_err();
        assert!(matches!(err, EvalError::Config(_)));
    }

    #[test]
    fn unknown_environment_is_a_config_error() {
        let config = EvalConfig::new("treadmill", 10);
        let err = evaluate(&Genome::default(), &config, &mut EvoRng::from_seed(0)).unwrap_err();
        assert!(matches!(err, EvalError::Config(m) if m.contains("treadmill")));
    }

    #[test]
    fn forward_fitness_sums_positions() {
        let mut trace = EvaluationTrace::default();
        for t in 1..=3 {
            trace.rows.push(TraceRow {
                t,
                y: t as f64 * 0.1,
                z: 0.0,
                stance_count: 0,
                actuators: vec![],
                sensors: vec![],
            });
        }
        // 0.1 + 0.2 + 0.3, summed positions rather than displacements
        assert!((fitness_forward(&trace) - 0.6).abs() < 1e-15);

        // constant backward drift comes out negative
        for row in &mut trace.rows {
            row.y = -row.y;
        }
        assert!(fitness_forward(&trace) < 0.0);
    }

    #[test]
    fn height_punishment_matches_hand_evaluation() {
        // y = 0 throughout, z rises from 1.0 to 1.1 at step 2, gamma = 2
        let mut trace = EvaluationTrace {
            initial_z: 1.0,
            ..Default::default()
        };
        for (t, z) in [(1, 1.0), (2, 1.1), (3, 1.1)] {
            trace.rows.push(TraceRow {
                t,
                y: 0.0,
                z,
                stance_count: 6,
                actuators: vec![],
                sensors: vec![],
            });
        }
        let f = fitness_forward_with_height(&trace, 2.0);
        assert!((f - (-0.2)).abs() < 1e-12, "got {f}");
        // gamma = 0 reduces to the plain forward fitness
        assert_eq!(fitness_forward_with_height(&trace, 0.0), fitness_forward(&trace));
    }

    #[test]
    fn trace_csv_has_one_row_per_step() {
        let mut trace = EvaluationTrace {
            actuator_channels: vec!["m".into()],
            ..Default::default()
        };
        trace.rows.push(TraceRow {
            t: 1,
            y: 0.5,
            z: 0.25,
            stance_count: 3,
            actuators: vec![0.125],
            sensors: vec![],
        });
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "t,y,z,stance_count,a_0");
        assert_eq!(lines[1], "1,0.5,0.25,3,0.125");
    }
}
