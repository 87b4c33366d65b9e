pub mod config;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod commands;
