//! Workspace engine, audit trail, follow-up scheduling and the HTTP service behind the
//! `ssdkg` command.

pub mod audit;
pub mod config;
pub mod engine;
pub mod error;
pub mod followup;
pub mod server;

pub use config::{Ablation, BackendChoice, ServiceConfig};
pub use engine::Engine;
pub use error::AppError;
