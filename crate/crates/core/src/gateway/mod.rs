//! Persistence, configuration and the request surface shared by the CLI
//! and the HTTP API.
//!
//! Every mutating request goes through [`Engine`], which appends exactly
//! one audit event and commits the register and log to the [`Store`]
//! before the change becomes visible.

mod config;
mod engine;
mod requests;
mod store;

use std::path::Path;

use crate::canonical::SchemaViolation;
use crate::governance::{BlockReason, GovernanceError};
use crate::identification::IdentificationError;
use crate::indicators::IndicatorError;
use crate::lifecycle::LifecycleError;
use crate::register::{ChainBroken, RegisterError};
use crate::riskmodel::RiskModelError;
use crate::tolerance::ToleranceError;

pub use config::{
    Config, ScheduleDefaults, CONFIG_FILE, MAX_ENHANCEMENT_MARGIN, MAX_GROWTH_FACTOR,
    MAX_INTERVAL_DAYS, MAX_RECENCY_DAYS,
};
pub use engine::Engine;
pub use requests::*;
pub use store::{Store, AUDIT_FILE, REGISTER_FILE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Schema(#[from] SchemaViolation),
    #[error("invalid config: {0}")]
    Config(SchemaViolation),
    #[error("{0}")]
    BadRequest(String),
    #[error("approval blocked: {0}")]
    ApprovalBlocked(BlockReason),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Lifecycle(#[from] LifecycleError),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
    #[error(transparent)]
    Identification(#[from] IdentificationError),
    #[error(transparent)]
    Tolerance(#[from] ToleranceError),
    #[error(transparent)]
    Model(#[from] RiskModelError),
    #[error(transparent)]
    ChainBroken(#[from] ChainBroken),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("store is corrupt: {0}")]
    Corrupt(String),
    #[error("store format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("a store already exists at {0}")]
    AlreadyInitialized(String),
    #[error("no store at {0}; run `init` first")]
    NotInitialized(String),
    #[error("injected fault at {0}")]
    InjectedFault(&'static str),
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

impl GatewayError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        GatewayError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// HTTP status for the error: 400 malformed request, 404 unknown id,
    /// 409 blocked by state (hold, failed gate, approvals), 422 any other
    /// domain rule, 500 store trouble.
    pub fn status(&self) -> u16 {
        use GatewayError as G;
        match self {
            G::Schema(_) | G::Config(_) | G::BadRequest(_) => 400,
            G::ApprovalBlocked(_) | G::AlreadyInitialized(_) => 409,
            G::Register(e) => match e {
                RegisterError::UnknownModel(_)
                | RegisterError::UnknownRule(_)
                | RegisterError::UnknownEntry(_) => 404,
                RegisterError::Schema(_) => 400,
                RegisterError::Indicator(e) => indicator_status(e),
                RegisterError::Governance(e) => governance_status(e),
                RegisterError::Identification(e) => identification_status(e),
                _ => 422,
            },
            G::Lifecycle(e) => match e {
                LifecycleError::HoldActive { .. }
                | LifecycleError::GateFailed { .. }
                | LifecycleError::StaleDecision { .. } => 409,
                LifecycleError::Governance(e) => governance_status(e),
                _ => 422,
            },
            G::Indicator(e) => indicator_status(e),
            G::Governance(e) => governance_status(e),
            G::Identification(e) => identification_status(e),
            G::Tolerance(_) | G::Model(_) => 422,
            G::ChainBroken(_)
            | G::Io { .. }
            | G::Corrupt(_)
            | G::VersionMismatch { .. }
            | G::NotInitialized(_) => 500,
            G::InjectedFault(_) => 500,
        }
    }

    /// Process exit code for the CLI. Usage errors (2) are detected by the
    /// argument parser before any request runs.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

fn indicator_status(e: &IndicatorError) -> u16 {
    match e {
        IndicatorError::UnknownIndicator(_) => 404,
        _ => 422,
    }
}

fn governance_status(e: &GovernanceError) -> u16 {
    match e {
        GovernanceError::UnknownEscalation(_) | GovernanceError::UnknownRole(_) => 404,
        GovernanceError::AlreadyResolved(_) => 409,
        _ => 422,
    }
}

fn identification_status(e: &IdentificationError) -> u16 {
    match e {
        IdentificationError::UnknownDomain(_) | IdentificationError::UnknownFinding(_) => 404,
        IdentificationError::Intake { .. } => 400,
        _ => 422,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Timestamp;

    #[test]
    fn statuses() {
        let schema = GatewayError::Schema(SchemaViolation {
            path: ".x".into(),
            message: "bad".into(),
        });
        assert_eq!(schema.status(), 400);
        assert_eq!(
            GatewayError::from(RegisterError::UnknownEntry("X".into())).status(),
            404
        );
        assert_eq!(
            GatewayError::from(LifecycleError::HoldActive {
                since: Timestamp(0),
                escalations: vec![]
            })
            .status(),
            409
        );
        assert_eq!(
            GatewayError::from(LifecycleError::GateFailed { failed: vec![] }).status(),
            409
        );
        assert_eq!(
            GatewayError::from(ToleranceError::Oversubscribed {
                allocated: 2.0,
                total: 1.0
            })
            .status(),
            422
        );
    }
}
