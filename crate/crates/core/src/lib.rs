//! Composes music-synchronized shot sequences from a pre-extracted footage
//! feature archive.
//!
//! The flow is: load a [`feature_store::FootageLibrary`] and a
//! [`music::MusicProfile`], summarize the footage into semantic clusters
//! ([`summary`]), plan sections and per-segment guidance ([`planner`]),
//! search for the best trimmed shot sequence of each segment ([`editor`]),
//! and assemble and score the final edit decision list ([`pipeline`]).
//! [`synthbench`] generates seeded synthetic inputs with known structure.

pub mod editor;
pub mod error;
pub mod feature_store;
pub mod metrics;
pub mod music;
pub mod pipeline;
pub mod planner;
pub mod summary;
pub mod synthbench;

pub use error::{Error, Result};
