//! Small-target motion detection in cluttered moving scenes.
//!
//! A motion pathway turns each frame into eight directional small-target
//! responses. Thresholded responses are linked into traces, and a contrast
//! pathway sampled along each trace separates real targets from background
//! features that only move with the scene.

// `!(a >= b)` guards are deliberate: they reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod contrast;
pub mod direction;
pub mod error;
pub mod eval;
pub mod frame;
pub mod io;
pub mod kernels;
pub mod kv;
pub mod motion;
pub mod mushroom;
pub mod pipeline;
pub mod synth;

pub use config::RunConfig;
pub use direction::{Direction, Orientation};
pub use error::{Error, Result};
pub use frame::{Frame, FrameHistory};
pub use pipeline::{run, CandidateCache, Engine, RunOutput};
