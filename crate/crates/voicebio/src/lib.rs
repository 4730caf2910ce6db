//! # voicebio
//!
//! A voice-biomarker risk-prediction toolkit. It extracts glottal, phonation
//! and prosody descriptors from four-section CAPE-V voice recordings, selects
//! discriminative features with a two-stage mutual-information + L1-RFE
//! pipeline, trains an L2-regularized logistic regression that emits an
//! "acoustic predictor", and evaluates it with train/test splits, grid search
//! and leave-one-out cross-validation. An optional clinical column (e.g.
//! NT-proBNP) can be fused into the model.
//!
//! The crate also ships a source-filter synthetic voice generator
//! ([`synth`]) with controllable F0, jitter, shimmer, open quotient and pause
//! patterns, which doubles as the test oracle for the extractors.
//!
//! Module map:
//! - [`audio`]  — WAV/manifest ingestion, resampling, cohort types
//! - [`dsp`]    — framing, pitch tracking, energy, LPC, line fits, functionals
//! - [`phonation`] — jitter / shimmer / APQ / PPQ and friends
//! - [`glottal`]   — IAIF inverse filtering, GCI, OQ / NAQ / HRF
//! - [`prosody`]   — voiced-segment tilt, energy and duration statistics
//! - [`features`]  — feature registry, matrix assembly, CSV interchange
//! - [`selection`] — MI stability filter + LASSO-driven RFE
//! - [`model`]     — regularized logistic regression and the acoustic predictor
//! - [`eval`]      — splits, metrics, grid search, LOOCV, cohort statistics
//! - [`synth`]     — synthetic voice / cohort generation
//! - [`pipeline`]  — end-to-end fit/predict glue shared by CLI and evaluation

pub mod audio;
pub mod config;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod glottal;
pub mod model;
pub mod phonation;
pub mod pipeline;
pub mod prosody;
pub mod selection;
pub mod synth;

pub use audio::{AudioSegment, Cohort, PatientRecord, SectionId};
pub use config::PipelineConfig;
pub use eval::{CvSummary, Metrics};
pub use features::{FeatureMatrix, FeatureName};
pub use model::LogisticModel;
pub use pipeline::FittedPipeline;
pub use selection::{SelectionConfig, SelectionReport};
