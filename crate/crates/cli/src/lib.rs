//! Experiment driver for the shortcot laboratory: binary checkpoint and
//! prompt-suite formats, flat-key configuration, JSONL run logs, CSV
//! reports, and the `pretrain` / `train` / `eval` / `analyze` commands.
//!
//! Exit-code contract: 0 success, 2 configuration error, 3
//! data/dimension error, 4 numeric failure (other I/O failures exit 1).
//! The `SHORTCOT_LOG_LEVEL` environment variable controls diagnostic
//! verbosity only; it never changes results.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod runlog;
pub mod suite;

pub use error::CliError;
