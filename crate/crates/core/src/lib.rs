//! Signal-informed direction-of-arrival estimation for a desired speaker.
//!
//! GCC-PHAT feature maps from a 15-microphone array are optionally masked
//! using the power distribution of an external microphone worn by the
//! desired speaker, then classified into 72 azimuth classes by a small
//! convolutional network. The crate also contains the image-source room
//! simulator, the from-scratch training stack and the evaluation harness.

pub mod error;
pub mod features;
pub mod fft;
pub mod nn;
pub mod pipeline;
pub mod corpus;
pub mod rng;
pub mod room;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
