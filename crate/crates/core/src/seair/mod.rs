//! The SEAIR metapopulation model with delayed case reporting.

pub mod measure;
pub mod model;
pub mod params;

pub use measure::{dmeasure, measurement_variance, rmeasure};
pub use model::{
    case_increment, euler_multinomial, gamma_noise_increment, infection_rate, EnkfVariance, SeairModel, COMPARTMENTS,
};
pub use params::{Regime, RegimeParams, SeairParams, DEFAULT_LOCKDOWN_TIME, DELAY_STAGES};
