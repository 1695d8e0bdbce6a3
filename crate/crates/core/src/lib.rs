//! A desk-scale data mesh: reference platform nodes, a metadata service
//! (DMMS) that mints mesh PIDs, a search and access hub with usage
//! reporting, federated aggregate execution, and a conformance checker that
//! scores nodes and meshes against ten interoperability pillars.
//!
//! Every component is a [`http::Service`]; the same code runs in-process over
//! [`http::LocalTransport`] or over real HTTP via [`http::HttpServer`] and
//! [`http::HttpTransport`].

pub mod client;
pub mod clock;
pub mod conformance;
pub mod error;
pub mod federated;
pub mod http;
pub mod hub;
pub mod identifiers;
pub mod manifest;
pub mod mesh;
pub mod node;
pub mod pagination;
pub mod registry;

pub use error::{Error, Result};
pub use identifiers::{Pid, PidMinter, PidScheme};
pub use manifest::{DataObjectType, MeshManifest};
