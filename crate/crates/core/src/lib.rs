pub mod mac;
pub mod oui;
pub mod geo;
pub mod protocol;
#[cfg(feature = "net")]
pub mod client;
pub mod sim;
pub mod io;
pub mod crawler;
pub mod longitudinal;
pub mod report;
