#![allow(clippy::needless_range_loop)]

pub mod agents;
pub mod cli;
pub mod env;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod trainer;
pub mod vec_env;
