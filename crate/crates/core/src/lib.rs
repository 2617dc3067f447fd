//! Cue-robust training for multiple-choice classification.
//!
//! A bag-of-words scorer is trained three ways (plain ERM, an adversary
//! behind a gradient reversal layer, and stochastic-update meta-learning
//! against a balanced meta-test set), alongside cue statistics over answer
//! tokens, a probe-based easy/hard split, and a generator of synthetic
//! data with a planted cue.

pub mod cues;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod text;
pub mod train;

pub use error::{Error, Result};
