//! Experiment runner for proxy targeted attacks on synthetic embedding worlds.

pub mod app;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod theory_suite;
