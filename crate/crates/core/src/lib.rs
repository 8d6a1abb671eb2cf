//! Lexical semantic resources turned into semantic spaces, transferred into
//! argumentative discourse unit (ADU) sentence classifiers, and evaluated with
//! a reproducible analysis battery.

pub mod analysis;
pub mod classifiers;
pub mod data;
pub mod error;
pub mod experiment;
pub mod intrinsic;
pub mod lexproject;
pub mod rng;
pub mod sgns;
pub mod spaces;

pub use error::{Error, Result};
