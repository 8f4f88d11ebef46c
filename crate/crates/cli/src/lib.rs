//! Batch tools and the HTTP session service built on `mural_core`.

pub mod config;
pub mod curve;
pub mod service;
