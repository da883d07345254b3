//! Traffic signal control toolkit: a discrete-time microsimulator, an MDP
//! environment over it, and graph-convolutional Q-learning controllers with
//! their baselines.

pub mod agents;
pub mod env;
pub mod error;
pub mod netmodel;
pub mod simcore;
pub mod tensor;

pub use error::{Error, Result};
