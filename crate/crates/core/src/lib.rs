//! Functional / non-functional requirement classification with
//! recurrent and convolutional text models built on a small autodiff core.

pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod numerics;
pub mod textprep;
pub mod training;
pub mod vocab_embed;

pub use error::{Error, Result};
