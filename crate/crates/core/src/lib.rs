//! Detection and identification of quadrotor propeller faults from flight telemetry.
//!
//! A convolutional bi-LSTM autoencoder ([`autoenc`]) learns normal flight; the
//! Mahalanobis distance of its reconstruction errors ([`scorer`]) flags
//! anomalous windows, and a convolutional bi-LSTM classifier ([`dclnn`]) names
//! the failed propeller set. Training data comes from a rigid-body quadrotor
//! simulator with fault injection ([`flightsim`]) via [`datapipe`].

pub mod autoenc;
pub mod checkpoint;
pub mod datapipe;
pub mod dclnn;
pub mod error;
pub mod flightsim;
pub mod layers;
pub mod nn;
pub mod scorer;
pub mod train;

pub use error::{Error, Result};
