//! Context-aware POI recommendation with a fairness analysis between
//! leisure-focused and working-focused users.

pub mod categorical;
pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geo;
pub mod pipeline;
pub mod recommender;
pub mod sequential;
pub mod social;
pub mod synth;
pub mod temporal;

pub use data::{CheckIn, Dataset, Poi, PoiId, UserId};
pub use error::{Error, Result};
