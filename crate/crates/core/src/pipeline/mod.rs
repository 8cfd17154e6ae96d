//! Configuration, persistence, data ingestion, the study harnesses and the CLI.

pub mod cli;
pub mod config;
pub mod human;
pub mod ingest;
pub mod io;
pub mod study;
