//! File formats, configuration, posterior persistence, a synthetic fleet
//! generator and the command-line front end around `rextune-core`.

pub mod cli;
pub mod config;
pub mod fleet;
pub mod ingest;
pub mod store;
