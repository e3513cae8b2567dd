//! File formats, configuration, viewer export, static serving and the
//! command-line front end for `motionfield-core`.

pub mod camera;
pub mod cli;
pub mod config;
pub mod container;
pub mod dataset;
mod error;
pub mod export;
pub mod fsio;
pub mod report;
pub mod scene_file;
pub mod server;

pub use error::{Error, Result};
pub use export::ViewerExport;
pub use scene_file::{Provenance, SceneFile};
