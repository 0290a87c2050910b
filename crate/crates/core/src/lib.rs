//! Contract-driven multi-agent repository synthesis.
//!
//! A run turns an intent into a [`contract::LanguageContract`], projects it
//! into a [`kernel::SymbolicKernel`], then drives worker and critic agents
//! layer by layer ([`scheduler`]) while the [`audit`] module keeps the
//! generated [`workspace`] and the contract consistent.

pub mod agent;
pub mod audit;
pub mod contract;
pub mod eval;
pub mod fixtures;
pub mod hash;
pub mod kernel;
pub mod ledger;
pub mod merge;
pub mod scheduler;
pub mod tokens;
pub mod workspace;
