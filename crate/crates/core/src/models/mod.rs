//! Benchmark systems: data generators and their model triples.

pub mod lgssm;
pub mod lorenz;

pub use lgssm::{lgssm4_spec, simulate_lgssm4, Lgssm4Config, LgssmData};
pub use lorenz::{
    euler_maruyama, lorenz_drift, lorenz_transition, simulate_lorenz, Lorenz63Config, LorenzData,
};
