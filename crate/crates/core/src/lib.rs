//! Datacenter Ethernet/RDMA performance analysis.
//!
//! Closed-form models for link reliability ([`fec`]), lossless buffer sizing
//! ([`link_budget`]) and header budgets ([`headers`]), plus a deterministic
//! packet-level simulator of PFC/ECN fat-tree fabrics ([`sim`]) driven by
//! reproducible traffic motifs ([`traffic`]) and summarized by [`metrics`].

pub mod error;
pub mod experiments;
pub mod fec;
pub mod headers;
pub mod link_budget;
pub mod metrics;
pub mod sim;
pub mod traffic;
pub mod units;

pub use error::ModelError;
pub use units::{Bandwidth, SimTime};
