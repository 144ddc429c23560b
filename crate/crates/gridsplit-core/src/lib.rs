//! Transient-stability simulation core for converter-dominated grids.
//!
//! The crate provides the network model and admittance assembly, a two-stage
//! decomposed solver (boundary-relaxed subsystems, Schur-complement
//! subdomains) with its monolithic direct-solve benchmark, the dynamic
//! device models (a 13-state grid-forming converter with virtual-admittance
//! control and a classical machine with droop governor), fixed-step
//! integrators with a disturbance-aware step schedule, and the simulation
//! engine that ties them together.
//!
//! Everything here is `no_std`-compatible (with `alloc`); file formats, the
//! CLI, and the threaded executor live in the companion `gridsplit` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// indexed loops are kept where they mirror the matrix algebra
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod decomp;
pub mod engine;
pub mod error;
pub mod gfm;
pub mod integrate;
pub mod linalg;
pub mod machine;
pub mod net;
pub mod powerflow;

pub use error::{Error, Result};
