//! Deterministic multi-replica training simulator and pseudo-gradient
//! compression library.
//!
//! The pieces compose bottom-up: [`tensor`] vectors and RNG streams, the toy
//! [`model`] and [`data`], the inner optimizer in [`optim`], compression in
//! [`compress`], [`index_codec`] and [`wire`], the outer update rules in
//! [`outer`], and the [`sim`] loop tying them together. [`comm`] and
//! [`harness`] build reports and sweeps on top.

pub mod comm;
pub mod compress;
pub mod config;
pub mod data;
pub mod harness;
pub mod index_codec;
pub mod model;
pub mod optim;
pub mod outer;
pub mod sim;
pub mod tensor;
pub mod wire;

pub use config::RunConfig;
pub use sim::{run_outer_loop, MetricsLog, SimError, Simulation};
pub use tensor::{ParamVector, Real, Rng};
pub use wire::SparseMessage;
