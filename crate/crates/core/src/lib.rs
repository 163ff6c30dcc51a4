//! A key-value store that honours per-item data handling requirements
//! (DHRs) by routing constrained items through an indirection layer of
//! capability, relay and target stores.
//!
//! Nodes are deterministic state machines. The [`sim`] module drives them
//! through a seeded discrete-event network, and [`experiment`] reproduces
//! the load-balance and latency studies on top of it.

pub mod balance;
pub mod client;
pub mod config;
pub mod coordinator;
pub mod dhr;
pub mod error;
pub mod experiment;
pub mod ids;
pub mod node;
pub mod query;
pub mod recovery;
pub mod ring;
pub mod sim;
pub mod stats;

pub use dhr::{
    eligible_nodes, node_is_eligible, property_satisfies, CapabilityStore, DhrKind, DhrRegistry,
    DhrRequest, DhrType, NodeCapabilities, Property,
};
pub use error::{DhrError, ParseError};
pub use ids::{ClientId, Endpoint, NodeId, OpId, ReqId, SimTime, Version};
pub use query::{parse, render, Statement};
pub use ring::TokenRing;
