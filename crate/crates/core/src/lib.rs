//! Governance engine for DID documents.
//!
//! A DID document carries one or more governance groups. Each group fixes who
//! may act on a change (authorization), how individual decisions combine into
//! an outcome (coordination), where decisions are collected, and how long the
//! process may run. The [`registry::Registry`] drives the lifecycle
//! anchor → propose → decide → resolve and meters every transaction.

pub mod authz;
pub mod coord;
pub mod crypto;
pub mod metering;
pub mod model;
pub mod registry;
pub mod scenario;
pub mod scheduler;
pub mod sweep;

pub use authz::{AuthzConfig, AuthzError, AuthzKind};
pub use coord::{CoordConfig, CoordKind, Ratio, Verdict};
pub use crypto::{generate_keypair, KeyPair, PublicKey, Signature};
pub use metering::{CostBreakdown, CostCategory, CostReport, CostSchedule, Meter};
pub use model::{ChangeSet, Did, DidDocument, EditRightLevel, ExecutionMode, GovernanceGroup};
pub use registry::{EngineError, Receipt, Registry, RegistryState};
