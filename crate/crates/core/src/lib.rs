//! Transient-stability certification and fault simulation for multi-converter
//! plants under dispatchable virtual oscillator control (dVOC).
//!
//! The certificate is decentralized: each converter contributes a passivity
//! index `δ_k` from its own setpoints and gains, the plant network contributes
//! `ε_net = λ_min(Re{e^{jφ} Y})`, and the plant is certified when
//! `δ_k + ε_net > 0` for every converter.

pub mod certifier;
pub mod cli;
pub mod equilibrium;
pub mod network;
pub mod node;
pub mod numerics;
pub mod scenario_io;
pub mod selftest;
pub mod simulator;

pub use certifier::{certify, certify_with, CertificationReport, CertifyError};
pub use equilibrium::{solve_equilibrium, EquilibriumPoint};
pub use network::{kron_reduce, network_passivity_index, PlantTopology, ReducedNetwork};
pub use node::{node_passivity_index, DvocParams};
pub use simulator::{simulate, simulate_unrotated, Scenario, Trajectory};
