//! Dissipative extensions of the Diósi–Penrose (DP) and Continuous Spontaneous
//! Localization (CSL) collapse models for a single free particle.
//!
//! * [`units`]: constants, parameters and the `hbar = m = sigma = 1` working system
//! * [`kernels`]: Fourier kernels `D_k` and the DP to CSL mapping
//! * [`rates`]: heating power, dissipation and friction rates, equilibria
//! * [`jump_kinetics`]: exact event-driven simulation of the momentum jump process
//! * [`friction_toy`]: linear-friction Langevin model with a Gibbs steady state
//! * [`runner`]: configuration files, experiments and result artifacts

pub mod friction_toy;
pub mod jump_kinetics;
pub mod kernels;
pub mod quadrature;
pub mod rates;
pub mod runner;
pub mod stats;
pub mod units;

pub use units::{Model, ModelParams, PhysicalConstants};
