//! HTTP service and command-line front end for the vulnesis workbench.

pub mod api;
pub mod forms;
pub mod service;

pub use service::Workspace;
