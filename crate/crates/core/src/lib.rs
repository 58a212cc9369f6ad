//! Core of the concierge relay: the wire protocol, the routing hub, and the
//! two reference simulation worlds that stream through it.
//!
//! Nothing here performs I/O. The `net` crate binds these pieces to
//! WebSocket and HTTP.

pub mod hub;
pub mod physics;
pub mod protocol;

#[cfg(feature = "testkit")]
pub mod testkit;
