//! Filesystem, audio and command-line layer over `voxlect-core`.

pub mod audio;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod fingerprint;
pub mod frontend;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod taxonomy_data;

pub use error::{Error, Result};
