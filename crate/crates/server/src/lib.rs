//! HTTP service and command-line client for mindexam.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod idempotency;
pub mod providers;
