//! Evidence synthesis for single-parameter Cox proportional hazards models
//! across data sites that cannot share patient-level records.
//!
//! Each site reduces its stratified partial likelihood to a compact
//! [`Approximation`] (normal, skew-normal, custom parametric, or a tabulated
//! grid). A coordinator combines those payloads with either a fixed-effect
//! profile-likelihood analysis ([`fixed`]) or a Bayesian random-effects model
//! sampled by Metropolis-within-Gibbs ([`random`]). The [`baseline`] module
//! holds the traditional normal-theory meta-analyses used for comparison and
//! [`simulation`] reproduces bias and coverage experiments end to end.

pub mod approx;
pub mod baseline;
pub mod cox;
pub mod error;
pub mod exchange;
pub mod fixed;
pub mod io;
pub mod random;
pub mod simulation;
pub mod special;

pub use approx::{approximate, Approximation, Family, FitConfig, LikelihoodProfile};
pub use cox::{cox_log_likelihood, cox_mle, cox_score_and_information, profile_likelihood};
pub use cox::{MleResult, PatientRecord, SiteData};
pub use error::{Error, Result};
pub use fixed::{fixed_effect_estimate, pooled_log_likelihood, PooledEstimate};
