//! JSON fixture describing one node: its users, hosted objects, AAE allow-list
//! and (for conformance self-tests) any deliberately broken behaviour.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{AaeDescriptor, AccessTier, Constraints};
use crate::error::{Error, Result};
use crate::identifiers::Pid;
use crate::manifest::DataObjectType;

fn default_ttl() -> i64 {
    3600
}

fn yes() -> bool {
    true
}

fn default_license_url() -> String {
    "https://creativecommons.org/publicdomain/zero/1.0/".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFixture {
    pub platform_id: String,
    #[serde(default)]
    pub name: String,
    pub issuer_secret: String,
    #[serde(default = "default_ttl")]
    pub token_ttl_secs: i64,
    #[serde(default)]
    pub attested_requirements: BTreeSet<String>,
    #[serde(default = "yes")]
    pub accepts_usage_reports: bool,
    #[serde(default)]
    pub requires_result_review: bool,
    #[serde(default = "default_license_url")]
    pub license_url: String,
    #[serde(default)]
    pub authorized_aaes: Vec<AaeDescriptor>,
    #[serde(default)]
    pub users: Vec<UserFixture>,
    #[serde(default)]
    pub objects: Vec<ObjectFixture>,
    #[serde(default)]
    pub faults: NodeFaults,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFixture {
    pub username: String,
    pub secret: String,
    #[serde(default)]
    pub registered: bool,
    #[serde(default)]
    pub visas: Vec<VisaFixture>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisaFixture {
    pub scope_pid: Pid,
    /// Absolute expiry; when absent the visa lives as long as the token.
    #[serde(default)]
    pub expires_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectFixture {
    pub pid: Pid,
    pub object_type: DataObjectType,
    pub access_tier: AccessTier,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub content_base64: Option<String>,
    /// Optional expected SHA-256; checked against the content at load time.
    #[serde(default)]
    pub checksum: Option<String>,
    #[serde(default)]
    pub constraints: Constraints,
    #[serde(default)]
    pub subject_ids: Option<Vec<String>>,
}

impl ObjectFixture {
    pub fn content_bytes(&self) -> Result<Vec<u8>> {
        match (&self.content, &self.content_base64) {
            (Some(text), None) => Ok(text.as_bytes().to_vec()),
            (None, Some(b64)) => STANDARD.decode(b64).map_err(|e| Error::BadFixture {
                path: self.pid.to_string(),
                reason: format!("content_base64: {e}"),
            }),
            (None, None) => Ok(Vec::new()),
            (Some(_), Some(_)) => Err(Error::BadFixture {
                path: self.pid.to_string(),
                reason: "both content and content_base64 given".into(),
            }),
        }
    }
}

/// Single-fault switches used to build broken nodes for conformance tests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NodeFaults {
    /// List local ids instead of PIDs.
    pub bare_local_ids: bool,
    /// Metadata endpoint answers 404.
    pub disable_metadata_endpoint: bool,
    /// Access descriptors advertise a wrong checksum.
    pub corrupt_checksums: bool,
    /// Tokens are accepted without checking the integrity tag.
    pub accept_tampered_tokens: bool,
    /// Transfers are granted to any analysis environment.
    pub accept_any_aae: bool,
}

impl NodeFaults {
    pub fn any(&self) -> bool {
        self != &NodeFaults::default()
    }
}

impl NodeFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::BadFixture {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::BadFixture {
            path: "<inline>".into(),
            reason: e.to_string(),
        })
    }
}
