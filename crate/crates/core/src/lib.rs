//! Sample-size prediction for qualitative studies.

pub mod bundle;
pub mod conformal;
pub mod data;
pub mod eval;
pub mod fixture;
pub mod learners;
pub mod matrix;
pub mod preprocess;
pub mod rng;
pub mod service;
pub mod stack;
pub mod stats;
pub mod synth;
pub mod training;
