#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod classifier;
pub mod config;
pub mod detector;
pub mod ensemble;
pub mod error;
pub mod generator;
pub mod io;
pub mod kdtree;
pub mod memory;
pub mod metric;
pub mod pipeline;
pub mod report;
pub mod types;
pub mod weak;

pub use error::{Error, Result};
