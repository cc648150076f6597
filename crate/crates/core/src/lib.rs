//! Core library for an event-level model of an SSD that answers approximate
//! nearest-neighbor queries inside the drive.
//!
//! The crate is organized bottom-up: [`vectordb`] holds the quantization and
//! distance kernels, [`ivf`] the coarse clustering, [`ssd`] the device
//! geometry/timing/energy model, [`layout`] the on-flash data placement,
//! [`engine`] the in-storage search pipeline, and [`host`] the host-side
//! baselines and quality metrics. [`image`] persists deployed databases.

pub mod config;
pub mod engine;
mod error;
pub mod host;
pub mod image;
pub mod ivf;
pub mod layout;
pub mod ssd;
pub mod synth;
pub mod vectordb;
mod wire;

pub use error::{Error, Result};
