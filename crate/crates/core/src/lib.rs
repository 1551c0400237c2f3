//! Tuning of collective operations against self-consistent performance
//! guidelines, on top of a simulated message-passing runtime.

pub mod bench;
pub mod collectives;
pub mod commands;
pub mod config;
pub mod dispatch;
pub mod error;
pub mod mockups;
pub mod profile;
pub mod runtime;

pub use error::{Error, Result};
