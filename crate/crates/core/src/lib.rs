//! Deterministic discrete-tick simulator of a retail chain's automatic
//! inventory management.
//!
//! Client agents (stores) restock either from peers in the chain via a
//! contract-net exchange or from external seller agents via multi-round
//! reverse auctions. Agents communicate through performative-tagged messages
//! with per-agent FIFO mailboxes and reason over a typed belief store plus
//! an intention stack. A run emits per-tick metric snapshots (average item
//! price, average trade time, internal/external ratio) and a per-trade log,
//! reproducible byte-for-byte from (scenario, seed, mode, ticks).

pub mod agents;
pub mod auction;
pub mod bdi;
pub mod engine;
pub mod market;
pub mod messaging;
pub mod metrics;
pub mod money;
pub mod protocol;

pub use engine::{run_simulation, Engine, EngineError, RunArtifacts, RunConfig, TraceFlags};
pub use market::{Scenario, ScenarioError, TradingMode};
pub use money::Money;
