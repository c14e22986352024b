//! Scheduled multi-task training of an attentional sequence-to-sequence
//! model, with linearized syntactic tasks alongside translation.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod linearize;
pub mod model;
pub mod scheduler;
pub mod synth;
pub mod task;
pub mod train;

pub use error::{Error, ErrorClass, Result};
