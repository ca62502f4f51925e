//! Modular neuroevolution engine.
//!
//! Networks are described as a set of named modules with typed nodes and
//! intra-module synapses, plus instances that stamp module templates onto
//! concrete sensor/actuator channels. Modules talk to each other exclusively
//! through interface nodes (`input`/`output`) and `connector` nodes that
//! reference them; the compiler unifies each connector with its referenced
//! node to produce a flat synchronous recurrent network.
//!
//! The crate covers the full loop: genome persistence and merging
//! ([`genome`]), compilation and execution ([`network`]), the structural and
//! parametric mutation operators ([`mutation`]), rank selection with
//! elitism-weighted reproduction ([`evolution`]), and deterministic built-in
//! evaluation environments ([`mod@env`]).

pub mod env;
pub mod evolution;
pub mod genome;
pub mod mutation;
pub mod network;
pub mod presets;
pub mod rng;
