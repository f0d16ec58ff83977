//! Plumbing around `tnsr-core`: dataset evaluation and the HTTP service
//! used by the `tnsr` binary.

pub mod eval;
pub mod service;

use std::path::PathBuf;

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "TNSR_DATA_DIR";

/// `$TNSR_DATA_DIR`, or `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}
