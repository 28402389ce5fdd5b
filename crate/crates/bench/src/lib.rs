//! Scene generation, batch experiments and result tables.

pub mod experiment;
pub mod generator;
pub mod metrics;
