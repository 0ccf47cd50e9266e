//! Simulation and scheduling stack for DNN partitioning, task offloading and
//! RSU compute allocation in a vehicular edge network.

pub mod allocator;
pub mod baselines;
pub mod dnn;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod lyapunov;
pub mod network;
pub mod neural;
pub mod qmix;
pub mod queueing;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};
