//! Closed-loop simulator of a vision-triggered spot sprayer plus the
//! field-trial analytics used to evaluate it.
//!
//! - [`geometry`]: kinematics, camera footprint, tile-to-nozzle mapping
//! - [`fieldgen`]: synthetic weed fields and the alternating strip layout
//! - [`detector`]: confusion-matrix surrogate for the tile classifier
//! - [`controller`]: latency pipeline, nozzle state machine, pass simulation
//! - [`analysis`]: hit rate, efficacy, usage reduction and trial statistics
//! - [`waterq`]: runoff loads, composite sampling and reductions
//! - [`config`], [`io`], [`report`], [`app`]: run configuration, file formats
//!   and the orchestration behind the `spotsim` binary

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod app;
pub mod config;
pub mod controller;
pub mod detector;
pub mod error;
pub mod fieldgen;
pub mod geometry;
pub mod io;
pub mod reference;
pub mod report;
pub mod rng;
pub mod waterq;

pub use error::{Error, Result};
