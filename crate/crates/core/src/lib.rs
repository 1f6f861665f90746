pub mod depgraph;
pub mod error;
pub mod estimator;
pub mod features;
pub mod generators;
pub mod graph;
pub mod network;
pub mod rng;
pub mod sem;
pub mod study;
