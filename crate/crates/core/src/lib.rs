pub mod autodiff;
pub mod data;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod seeding;
pub mod training;

pub use error::{Error, Result};
