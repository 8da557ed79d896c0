//! From-scratch differentiation for the state network: batched dual
//! (value + time-tangent) evaluation and a reverse-mode tape that
//! differentiates through it.

mod activation;
pub mod batch;
pub mod network;
pub mod tape;

pub use batch::{evaluate, BatchOutputs};
pub use network::{init_network, Activation, InputScale, NetworkModel, NetworkOutput, OutputScale};
pub use tape::{GradientVector, NetVars, Tape, Var};
