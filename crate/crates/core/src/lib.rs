//! Planar two-legged copepod swimmer at low Reynolds number.
//!
//! * [`dynamics`]: resistive-force equations of motion and the closed-form
//!   control fields `F1`, `F2`.
//! * [`simulation`]: fixed-step integration of prescribed strokes.
//! * [`liegeometry`]: iterated Lie brackets, singular sets, growth vectors.
//! * [`extremals`]: normal and abnormal Hamiltonian flows.
//! * [`ocp`]: direct-transcription energy minimization.

pub mod autodiff;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod extremals;
pub mod liegeometry;
pub mod ocp;
pub mod simulation;

pub use dynamics::{ControlInput, LegAngles, State};
pub use error::{Error, Result};
