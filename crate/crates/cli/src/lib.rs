//! Library side of the `kernelga` binary: configuration resolution, artifact
//! shapes and the subcommand implementations. The binary in `main.rs` only
//! parses arguments and maps errors to exit codes.

pub mod artifacts;
pub mod commands;
pub mod config;
