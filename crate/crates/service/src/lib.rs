//! Command-line pipeline and HTTP inference service.

pub mod api;
pub mod cli;
pub mod server;
