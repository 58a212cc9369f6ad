//! Networked half of concierge: the gateway that hosts the hub, the client
//! SDK, the service adapter that puts a simulation on the hub, and the load
//! generator.

pub mod adapter;
pub mod bench;
pub mod gateway;
pub mod sdk;
