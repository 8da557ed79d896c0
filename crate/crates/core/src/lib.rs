//! Coupled physics-informed neural network for greenhouse indoor temperature
//! and humidity.
//!
//! The crate covers the full synthetic benchmark pipeline:
//!
//! * [`model`]: reduced two-state ODE, parameters, RK4 reference integrator;
//! * [`forcing`]: diurnal exogenous signals;
//! * [`synthetic`]: reference trajectory, sparse noisy observations, dataset files;
//! * [`autodiff`]: the network and its differentiation engine;
//! * [`pinn`]: physics residuals, loss terms and joint training of network
//!   weights and physical coefficients;
//! * [`baseline`]: the same network trained on observations alone;
//! * [`evaluation`]: metrics, parameter recovery, method comparison and
//!   noise sweeps.

pub mod autodiff;
pub mod baseline;
pub mod error;
pub mod evaluation;
pub mod forcing;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod pinn;
pub mod synthetic;

pub use error::{Error, Result};
