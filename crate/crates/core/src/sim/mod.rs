//! Local stand-in for a Wi-Fi positioning service.

pub mod index;
pub mod serve;
#[cfg(feature = "net")]
pub mod server;
pub mod world;

pub use index::SpatialIndex;
pub use serve::{ServeError, SimLocator, SimService, WorldView};
pub use world::{generate_world, Action, Day, ScriptEvent, SimAp, WorldConfig, WorldError, WorldModel, WorldParams};
