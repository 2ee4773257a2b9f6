//! CLI and local HTTP service over `geoctl-core`: scene construction,
//! trajectory editing, rendering, packing, filtering and evaluation.

pub mod api;
pub mod cli;
pub mod error;
pub mod http;
pub mod ops;
pub mod session;

pub use error::{ErrorBody, ServiceError, ServiceResult};
pub use session::{SceneSession, SessionStore};
