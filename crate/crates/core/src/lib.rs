//! Link-level simulation of OTFS modulation on top of an OFDM physical layer,
//! with an iterative detector coupled to a convolutional decoder.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod coding;
pub mod detector;
pub mod error;
pub mod grid;
pub mod par;
pub mod selftest;
pub mod sim;
pub mod transform;

pub use error::{Error, Result};
