//! Deposit and loan dynamics of a bank with a Monti-Klein profit function,
//! and the Indonesian reserve requirement (GWM) evaluated along them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod integrator;
pub mod model;
pub mod output;
pub mod regulation;
pub mod scenario;
pub mod svg;

pub mod cli;
