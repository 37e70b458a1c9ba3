//! Relevance-filtered author profiling.
//!
//! A stochastic policy picks the posts of a profile that a prompted language
//! model gets to see. The policy is pre-trained on NPMI relevance annotations
//! and refined with REINFORCE against the classifier's own predictions.

pub mod augmentation;
pub mod baselines;
pub mod cnet;
pub mod corpus;
pub mod evaluation;
pub mod npmi;
pub mod optim;
pub mod policy;
pub mod selectors;
#[doc(hidden)]
pub mod sparse_vec;
pub mod text;
pub mod trainer;
