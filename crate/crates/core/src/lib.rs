//! Contextual disease-exposure estimation from surveillance records and GPS
//! trajectories.
//!
//! The crate is organised along the data flow:
//!
//! * [`spatial_grid`]: planar coordinates, the analysis grid, region lookup.
//! * [`hiv_imputation`]: per-period status imputation for a surveillance cohort.
//! * [`prevalence_field`]: kernel-smoothed grid-cell prevalence.
//! * [`activity`]: gap-aware segmentation, CPT activity distributions and
//!   level-γ activity spaces.
//! * [`exposure`]: the four per-participant exposure measures.
//! * [`cohort_analysis`]: paired tests, risk quadrants, deviation clustering,
//!   coverage curves and exports.
//! * [`synth_oracle`]: synthetic cohorts/trajectories with known ground truth.

pub mod activity;
pub mod cohort_analysis;
pub mod error;
pub mod exposure;
pub mod hiv_imputation;
pub mod prevalence_field;
pub mod seed;
pub mod spatial_grid;
pub mod synth_oracle;

pub use error::{Error, Result};
