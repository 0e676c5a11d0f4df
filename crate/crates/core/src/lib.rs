//! Extraction of decision-tree policies from neural or model-based oracles,
//! and verification of the extracted trees.

pub mod benchmark;
pub mod dtree;
pub mod env;
pub mod error;
pub mod extraction;
pub mod geometry;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod oracle;
pub mod poly;
pub mod verify;

pub use error::{Error, Result};
