//! Correlated gamma-frailty competing-risks survival models for family
//! data with time-varying covariates.
//!
//! The model: cause-specific Weibull hazards under proportional hazards,
//! multiplied by family-level gamma frailties built from a shared and an
//! event-specific component so competing events can be correlated within
//! families. Binary time-varying covariates act on the log hazard with a
//! permanent (PE), exponentially decaying (ED) or decay-to-plateau (CO)
//! effect. Marginal family likelihoods are closed form; families recruited
//! through probands are weighted by the inverse probability of
//! ascertainment.
//!
//! Modules:
//! - [`pedigree`]: data model and CSV ingestion/validation
//! - [`hazard`]: Weibull baselines and TVC effect functions
//! - [`frailty`]: gamma frailty construction, Laplace transforms
//! - [`likelihood`]: family likelihood, ascertainment correction, scores
//! - [`penetrance`]: cause-specific cumulative incidence with delta CIs
//! - [`estimation`]: quasi-Newton fitting, sandwich covariance, AIC/LRT
//! - [`simulation`]: ascertained pedigree generator and replicate studies
//! - [`diagnostics`]: martingale residuals and posterior frailties
//! - [`parallel`]: rayon/sequential execution switch

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod frailty;
pub mod hazard;
pub mod likelihood;
pub mod model;
pub mod parallel;
pub mod pedigree;
pub mod penetrance;
pub mod quad;
pub mod simulation;

pub use error::{Error, Result};
