//! Two-model mutual distillation with per-language distillation weights over
//! long-tailed multilingual data, at desk scale.

pub mod config;
pub mod corpus;
pub mod distill;
pub mod grad;
pub mod model;
pub mod par;
pub mod sampling;
pub mod seed;
pub mod strategy;
pub mod suite;
pub mod trainer;
