use std::collections::BTreeSet;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identifiers::PidScheme;
use crate::manifest::{DataObjectType, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scheme `{0}` is parse-only and cannot be minted locally")]
    UnsupportedScheme(PidScheme),
    #[error("malformed PID `{text}`: {reason}")]
    MalformedPid { text: String, reason: String },
    #[error("unknown PID `{0}`")]
    UnknownPid(String),
    #[error("object type `{0}` is not supported by this mesh")]
    UnsupportedObjectType(DataObjectType),
    #[error("metadata violates the minimum schema ({} violation(s))", .0.len())]
    SchemaViolation(Vec<Violation>),
    #[error("unknown platform `{0}`")]
    UnknownPlatform(String),
    #[error("platform `{0}` is already registered")]
    DuplicatePlatform(String),
    #[error("platform `{platform_id}` is missing requirements {missing:?}")]
    IneligiblePlatform {
        platform_id: String,
        missing: BTreeSet<String>,
    },
    #[error("not authorized: {0}")]
    NotAuthorized(String),
    #[error("bad credentials")]
    BadCredentials,
    #[error("analysis environment `{0}` is not authorized by this platform")]
    AaeNotAuthorized(String),
    #[error("malformed cursor `{0}`")]
    MalformedCursor(String),
    #[error("node `{endpoint}` unreachable: {reason}")]
    NodeUnreachable { endpoint: String, reason: String },
    #[error("record linkage is disabled for this mesh")]
    LinkageDisabled,
    #[error("workflow `{0}` is not approved")]
    NotApproved(String),
    #[error("workflow `{0}` is not pending review")]
    NotPending(String),
    #[error("unknown workflow `{0}`")]
    UnknownWorkflow(String),
    #[error("workflow `{0}` already submitted")]
    DuplicateWorkflow(String),
    #[error("invalid resolution record: {0}")]
    InvalidResolution(String),
    #[error("bad fixture `{path}`: {reason}")]
    BadFixture { path: String, reason: String },
    #[error("port in use: {0}")]
    PortInUse(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// JSON body carried by every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub missing: BTreeSet<String>,
}

impl Error {
    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnsupportedScheme(_) => "UNSUPPORTED_SCHEME",
            Error::MalformedPid { .. } => "MALFORMED_PID",
            Error::UnknownPid(_) => "UNKNOWN_PID",
            Error::UnsupportedObjectType(_) => "UNSUPPORTED_OBJECT_TYPE",
            Error::SchemaViolation(_) => "SCHEMA_VIOLATION",
            Error::UnknownPlatform(_) => "UNKNOWN_PLATFORM",
            Error::DuplicatePlatform(_) => "DUPLICATE_PLATFORM",
            Error::IneligiblePlatform { .. } => "INELIGIBLE_PLATFORM",
            Error::NotAuthorized(_) => "NOT_AUTHORIZED",
            Error::BadCredentials => "BAD_CREDENTIALS",
            Error::AaeNotAuthorized(_) => "AAE_NOT_AUTHORIZED",
            Error::MalformedCursor(_) => "MALFORMED_CURSOR",
            Error::NodeUnreachable { .. } => "NODE_UNREACHABLE",
            Error::LinkageDisabled => "LINKAGE_DISABLED",
            Error::NotApproved(_) => "NOT_APPROVED",
            Error::NotPending(_) => "NOT_PENDING",
            Error::UnknownWorkflow(_) => "UNKNOWN_WORKFLOW",
            Error::DuplicateWorkflow(_) => "DUPLICATE_WORKFLOW",
            Error::InvalidResolution(_) => "INVALID_RESOLUTION",
            Error::BadFixture { .. } => "BAD_FIXTURE",
            Error::PortInUse(_) => "PORT_IN_USE",
            Error::BadRequest(_) => "BAD_REQUEST",
            Error::Protocol(_) => "PROTOCOL",
            Error::Io(_) => "IO",
            Error::Json(_) => "BAD_REQUEST",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            Error::UnknownPid(_) | Error::UnknownPlatform(_) | Error::UnknownWorkflow(_) => 404,
            Error::BadCredentials => 401,
            Error::NotAuthorized(_) | Error::AaeNotAuthorized(_) | Error::NotApproved(_) => 403,
            Error::IneligiblePlatform { .. } => 403,
            Error::NotPending(_) | Error::DuplicatePlatform(_) | Error::DuplicateWorkflow(_) => 409,
            Error::SchemaViolation(_) => 422,
            Error::LinkageDisabled => 409,
            Error::NodeUnreachable { .. } => 502,
            Error::Protocol(_) => 502,
            Error::Io(_) | Error::PortInUse(_) | Error::BadFixture { .. } => 500,
            _ => 400,
        }
    }

    pub fn to_wire(&self) -> WireError {
        let mut wire = WireError {
            error: self.code().to_string(),
            message: self.to_string(),
            detail: None,
            violations: Vec::new(),
            missing: BTreeSet::new(),
        };
        match self {
            Error::UnknownPid(s)
            | Error::UnknownPlatform(s)
            | Error::NotAuthorized(s)
            | Error::AaeNotAuthorized(s)
            | Error::MalformedCursor(s)
            | Error::NotApproved(s)
            | Error::NotPending(s)
            | Error::UnknownWorkflow(s)
            | Error::DuplicateWorkflow(s)
            | Error::DuplicatePlatform(s)
            | Error::InvalidResolution(s)
            | Error::BadRequest(s) => wire.detail = Some(s.clone()),
            Error::UnsupportedScheme(s) => wire.detail = Some(s.to_string()),
            Error::UnsupportedObjectType(t) => wire.detail = Some(t.to_string()),
            Error::MalformedPid { text, .. } => wire.detail = Some(text.clone()),
            Error::SchemaViolation(v) => wire.violations = v.clone(),
            Error::IneligiblePlatform {
                platform_id,
                missing,
            } => {
                wire.detail = Some(platform_id.clone());
                wire.missing = missing.clone();
            }
            _ => {}
        }
        wire
    }

    /// Rebuilds an error from its wire form so remote failures surface with
    /// the same variant a local call would produce.
    pub fn from_wire(wire: WireError) -> Error {
        let detail = wire.detail.clone().unwrap_or_default();
        match wire.error.as_str() {
            "UNKNOWN_PID" => Error::UnknownPid(detail),
            "UNKNOWN_PLATFORM" => Error::UnknownPlatform(detail),
            "DUPLICATE_PLATFORM" => Error::DuplicatePlatform(detail),
            "NOT_AUTHORIZED" => Error::NotAuthorized(detail),
            "BAD_CREDENTIALS" => Error::BadCredentials,
            "AAE_NOT_AUTHORIZED" => Error::AaeNotAuthorized(detail),
            "MALFORMED_CURSOR" => Error::MalformedCursor(detail),
            "NOT_APPROVED" => Error::NotApproved(detail),
            "NOT_PENDING" => Error::NotPending(detail),
            "UNKNOWN_WORKFLOW" => Error::UnknownWorkflow(detail),
            "DUPLICATE_WORKFLOW" => Error::DuplicateWorkflow(detail),
            "LINKAGE_DISABLED" => Error::LinkageDisabled,
            "INVALID_RESOLUTION" => Error::InvalidResolution(detail),
            "SCHEMA_VIOLATION" => Error::SchemaViolation(wire.violations),
            "INELIGIBLE_PLATFORM" => Error::IneligiblePlatform {
                platform_id: detail,
                missing: wire.missing,
            },
            "MALFORMED_PID" => Error::MalformedPid {
                text: detail,
                reason: wire.message,
            },
            "UNSUPPORTED_OBJECT_TYPE" => match detail.parse() {
                Ok(t) => Error::UnsupportedObjectType(t),
                Err(_) => Error::Protocol(wire.message),
            },
            "UNSUPPORTED_SCHEME" => match detail.parse() {
                Ok(s) => Error::UnsupportedScheme(s),
                Err(_) => Error::Protocol(wire.message),
            },
            "BAD_REQUEST" => Error::BadRequest(detail),
            "NODE_UNREACHABLE" => Error::NodeUnreachable {
                endpoint: detail,
                reason: wire.message,
            },
            _ => Error::Protocol(format!("{}: {}", wire.error, wire.message)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_form_preserves_variant_and_detail() {
        let errors = vec![
            Error::UnknownPid("guid:node-a/x".into()),
            Error::NotAuthorized("missing visa".into()),
            Error::AaeNotAuthorized("aae-9".into()),
            Error::BadCredentials,
            Error::IneligiblePlatform {
                platform_id: "node-c".into(),
                missing: ["audit-log".to_string()].into_iter().collect(),
            },
        ];
        for e in errors {
            let back = Error::from_wire(e.to_wire());
            assert_eq!(back.code(), e.code());
            assert_eq!(back.to_string(), e.to_string());
        }
    }
}
