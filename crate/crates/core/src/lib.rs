//! Triangle counting under local edge differential privacy.
//!
//! [`rr`] implements the noninteractive randomized-response estimator and its
//! exact moment oracles. [`attack`] embeds a reconstruction attack into any
//! noninteractive triangle counter, [`anticoncentration`] checks the
//! probabilistic lemma the attack relies on, and [`gadget`] reduces private
//! summation to triangle counting. Everything runs on the local-model
//! substrate in [`ledp`].

pub mod anticoncentration;
pub mod attack;
pub mod error;
pub mod gadget;
pub mod graph;
pub mod ledp;
pub mod rng;
pub mod rr;
pub mod stats;

pub use error::{Error, Result};
pub use graph::Graph;
pub use rng::StreamKey;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
