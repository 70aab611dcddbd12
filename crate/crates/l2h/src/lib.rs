//! Files, records, experiments and the command-line front end around
//! `l2h-core`.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod features;
pub mod gradcheck;
mod kv;
pub mod records;
pub mod world_file;

pub use error::FormatError;
pub use kv::KvFile;
