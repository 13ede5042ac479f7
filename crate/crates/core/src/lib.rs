//! Lane geometry from vehicle trajectories.
//!
//! The crate is split along the data flow of a roadside deployment:
//!
//! * [`geometry`] holds planar points, polylines, homographies and the
//!   curve-similarity primitives every other module builds on.
//! * [`pipeline`] turns a set of [`pipeline::Track`]s into a
//!   [`pipeline::LaneModel`], steered by [`pipeline::DetectionParams`].
//! * [`metrics`] scores a detected model against a reference one.
//! * [`metanet`] is the small perceptron that maps scene features to
//!   detection parameters, with hand-written backpropagation.
//! * [`fed`] runs the federated rounds and keeps the communication ledger.
//! * [`scenario`] synthesizes scenes, trajectories, reference models and the
//!   grid-search parameter oracle.
//!
//! Everything here is pure computation over owned values. File formats and
//! the command line live in the companion `geo-orbit` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod fed;
pub mod geometry;
pub mod metanet;
pub mod metrics;
pub mod pipeline;
pub mod scenario;

pub use error::{Error, Result};
