//! Scenario runner, ledger, reports and acceptance suite for shadowlab-core.

pub mod acceptance;
pub mod error;
pub mod experiments;
pub mod ledger;
pub mod report;
pub mod scenario;

pub use error::{HarnessError, Result};
