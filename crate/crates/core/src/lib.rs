//! Core algorithms of the voxlect dialect classification toolkit.
//!
//! Everything here is pure computation over in-memory data and builds
//! without `std`; audio decoding, file formats and the command line live in
//! the `voxlect` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod apps;
pub mod augment;
pub mod corpus;
pub mod dsp;
pub mod metrics;
pub mod optim;
pub mod probe;
pub mod robustness;
pub mod seeds;
pub mod taxonomy;
pub mod train;
