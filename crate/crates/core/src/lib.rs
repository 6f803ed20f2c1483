//! Compile first-order consistency rules into differentiable losses through
//! t-norm generators, and run the family/hybrid-batch consistency training
//! pipeline on synthetic visual-question data.

pub mod autodiff;
pub mod batcher;
pub mod compiler;
pub mod entailment;
pub mod fol;
pub mod metrics;
pub mod tnorm;
pub mod trainer;
