//! File formats, descriptor backends and the batch pipeline around
//! `demoforge-core`.

pub mod config;
pub mod dataset;
pub mod dmap;
mod error;
pub mod files;
pub mod meshio;
pub mod pipeline;
pub mod service;

pub use demoforge_core as core;
pub use error::{Error, Result};
