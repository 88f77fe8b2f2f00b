//! Inversion-free video editing with closed-form rectified-flow fields.
//!
//! The editing ODE ([`engine`]) moves a source video toward a target
//! condition along the difference of two shared-noise velocity evaluations.
//! [`safc`] masks that velocity to the attended region, and [`dag`] sharpens
//! the multi-sample average. Velocity fields come from [`fields`]; synthetic
//! videos with exact ground-truth motion come from [`scenes`].

pub mod cli;
pub mod condition;
pub mod config;
pub mod dag;
pub mod engine;
pub mod error;
pub mod fields;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod safc;
pub mod scenes;
pub mod schedule;
pub mod tensor;

pub use condition::Condition;
pub use error::{Error, Result};
pub use rng::SeedSpec;
pub use schedule::{make_schedule, EditSchedule};
pub use tensor::{Dims, VideoTensor};
