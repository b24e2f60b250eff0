//! Scoring core for hierarchical human-image aesthetic assessment.
//!
//! Everything in this crate is pure computation over `alloc` containers: the
//! 12-dimension aesthetic taxonomy, sample construction, a small trainable
//! encoder standing in for a vision-language model, the LM / Regression /
//! Expert scoring heads with hand-written backpropagation, the MetaVoter
//! fusion network and the evaluation metrics. File formats, configuration
//! and the command-line tool live in the `hiaa` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod backbone;
pub mod datapipe;
pub mod error;
pub mod heads;
pub mod linalg;
pub mod metavoter;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synth;
pub mod taxonomy;
pub mod trainer;

pub use error::{Error, Result};
pub use taxonomy::{Dimension, DimensionKind, RatingLevel};
