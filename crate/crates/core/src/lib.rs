#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod ensemble;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod report;
pub mod stats;
pub mod train;
