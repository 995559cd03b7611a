//! Surface-code memory laboratory: a deep-Q decoder trained against a
//! simulated rotated surface code, an MWPM referee for episode termination,
//! Q-value-informed adversarial attacks, exhaustive fault-tolerance
//! verification, and reproducible experiment sweeps.

pub mod attack;
pub mod dqn;
pub mod env;
pub mod lattice;
pub mod noise;
pub mod referee;
pub mod experiments;
pub mod verifier;
