//! Notification response-time prediction toolkit.
//!
//! Loads per-participant smartphone, experience-sampling and wristband logs,
//! derives response-time labels and pre-notification features, fits
//! participant-wise regressors under nested cross-validation, and produces
//! descriptive analyses. A synthetic cohort generator exercises every stage.

pub mod analysis;
pub mod context;
pub mod eval;
pub mod event;
pub mod features;
pub mod labeling;
pub mod models;
pub mod physio;
pub mod pipeline;
pub mod run;
pub mod synth;
