//! Reference data platform.
//!
//! A node hosts objects under platform-issued PIDs and exposes the
//! platform-side APIs a mesh expects: metadata by PID, data access by PID,
//! token issuance and authorization, and transfer into authorized analysis
//! environments. It also accepts usage reports from hubs and evaluates
//! federated aggregates over its own objects.

mod authz;
mod fixture;
mod service;
pub mod token;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use authz::{decide, Decision};
pub use fixture::{NodeFaults, NodeFixture, ObjectFixture, UserFixture, VisaFixture};
pub use service::{Credentials, NodeService, TransferBody};
pub use token::{parse_passport, tamper, token_for_issuer, Token, TokenState, Visa, VisaType};

use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::federated::{AggregateKind, AggregateValue, ExecuteRequest, NodeAggregate};
use crate::http::encode_segment;
use crate::hub::UsageReport;
use crate::identifiers::{is_valid_namespace, Pid};
use crate::manifest::{DataObjectType, PlatformDescriptor};
use crate::pagination::{paginate, Page};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessTier {
    Open,
    Registered,
    Controlled,
}

impl AccessTier {
    pub const ALL: [AccessTier; 3] = [
        AccessTier::Open,
        AccessTier::Registered,
        AccessTier::Controlled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AccessTier::Open => "open",
            AccessTier::Registered => "registered",
            AccessTier::Controlled => "controlled",
        }
    }
}

impl fmt::Display for AccessTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessTier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AccessTier::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::BadRequest(format!("unknown access tier `{s}`")))
    }
}

/// What a recipient may do with data once it is inside an AAE.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub downloadable_out_of_aae: bool,
    pub redistributable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostedObject {
    pub platform_pid: Pid,
    pub object_type: DataObjectType,
    pub metadata: BTreeMap<String, Value>,
    pub access_tier: AccessTier,
    pub content: Vec<u8>,
    pub checksum: String,
    pub size: u64,
    pub constraints: Constraints,
    pub subject_ids: Option<Vec<String>>,
}

impl HostedObject {
    pub fn new(
        platform_pid: Pid,
        object_type: DataObjectType,
        access_tier: AccessTier,
        metadata: BTreeMap<String, Value>,
        content: Vec<u8>,
        constraints: Constraints,
    ) -> Self {
        Self {
            checksum: sha256_hex(&content),
            size: content.len() as u64,
            platform_pid,
            object_type,
            metadata,
            access_tier,
            content,
            constraints,
            subject_ids: None,
        }
    }

    fn text_matches(&self, needle: &str) -> bool {
        let needle = needle.to_lowercase();
        ["title", "description"].iter().any(|field| {
            self.metadata
                .get(*field)
                .and_then(Value::as_str)
                .is_some_and(|v| v.to_lowercase().contains(&needle))
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessGrant {
    pub pid: Pid,
    pub granted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Constraints>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AaeDescriptor {
    pub aae_id: String,
    #[serde(default)]
    pub attested_requirements: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub rel: String,
    pub href: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataResponse {
    pub pid: Pid,
    pub object_type: DataObjectType,
    pub access_tier: AccessTier,
    pub metadata: BTreeMap<String, Value>,
    pub links: Vec<Link>,
}

impl MetadataResponse {
    pub fn link(&self, rel: &str) -> Option<&str> {
        self.links
            .iter()
            .find(|l| l.rel == rel)
            .map(|l| l.href.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checksum {
    #[serde(rename = "type")]
    pub kind: String,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessMethod {
    #[serde(rename = "type")]
    pub kind: String,
    pub access_url: AccessUrl,
}

/// Minimal DRS-shaped object descriptor. Carries no content bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDescriptor {
    pub id: Pid,
    pub checksums: Vec<Checksum>,
    pub size: u64,
    pub access_methods: Vec<AccessMethod>,
}

impl DataDescriptor {
    pub fn sha256(&self) -> Option<&str> {
        self.checksums
            .iter()
            .find(|c| c.kind == "sha-256")
            .map(|c| c.checksum.as_str())
    }

    pub fn access_url(&self) -> Option<&str> {
        self.access_methods
            .first()
            .map(|m| m.access_url.url.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferGrant {
    pub pid: Pid,
    pub aae_id: String,
    pub constraints: Constraints,
    pub transfer_url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: DateTime<Utc>,
    pub op: String,
    pub pid: Pid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aae_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedToken {
    pub token: String,
    pub token_type: String,
    pub claims: Token,
}

#[derive(Debug, Clone)]
struct UserRecord {
    secret: String,
    registered: bool,
    visas: Vec<VisaFixture>,
}

/// Platform and period bounds of a received usage report.
type InboxKey = (String, DateTime<Utc>, DateTime<Utc>);

pub struct PlatformNode {
    platform_id: String,
    name: String,
    secret: Vec<u8>,
    token_ttl: Duration,
    attested_requirements: BTreeSet<String>,
    accepts_usage_reports: bool,
    requires_result_review: bool,
    license_url: String,
    endpoint: RwLock<String>,
    users: HashMap<String, UserRecord>,
    objects: BTreeMap<Pid, HostedObject>,
    authorized_aaes: BTreeMap<String, AaeDescriptor>,
    faults: NodeFaults,
    clock: Arc<dyn Clock>,
    audit: Mutex<Vec<AuditEntry>>,
    audit_file: Option<PathBuf>,
    usage_inbox: Mutex<BTreeMap<InboxKey, UsageReport>>,
}

impl fmt::Debug for PlatformNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlatformNode")
            .field("platform_id", &self.platform_id)
            .field("objects", &self.objects.len())
            .field("secret", &"[REDACTED]")
            .finish()
    }
}

impl PlatformNode {
    pub fn from_fixture(fixture: NodeFixture) -> Result<Self> {
        Self::with_clock(fixture, Arc::new(SystemClock))
    }

    pub fn with_clock(fixture: NodeFixture, clock: Arc<dyn Clock>) -> Result<Self> {
        let bad = |reason: String| Error::BadFixture {
            path: fixture.platform_id.clone(),
            reason,
        };
        if !is_valid_namespace(&fixture.platform_id) {
            return Err(bad("platform_id must match [a-z0-9.-]+".into()));
        }
        let mut objects = BTreeMap::new();
        for obj in &fixture.objects {
            let content = obj.content_bytes()?;
            let mut hosted = HostedObject::new(
                obj.pid.clone(),
                obj.object_type,
                obj.access_tier,
                obj.metadata.clone(),
                content,
                obj.constraints,
            );
            hosted.subject_ids = obj.subject_ids.clone();
            if let Some(expected) = &obj.checksum {
                if !expected.eq_ignore_ascii_case(&hosted.checksum) {
                    return Err(bad(format!("checksum mismatch for {}", obj.pid)));
                }
            }
            if objects.insert(obj.pid.clone(), hosted).is_some() {
                return Err(bad(format!("duplicate object {}", obj.pid)));
            }
        }
        let mut users = HashMap::new();
        for u in &fixture.users {
            let record = UserRecord {
                secret: u.secret.clone(),
                registered: u.registered,
                visas: u.visas.clone(),
            };
            if users.insert(u.username.clone(), record).is_some() {
                return Err(bad(format!("duplicate user {}", u.username)));
            }
        }
        let authorized_aaes = fixture
            .authorized_aaes
            .iter()
            .map(|a| (a.aae_id.clone(), a.clone()))
            .collect();
        Ok(Self {
            endpoint: RwLock::new(format!("local://{}", fixture.platform_id)),
            platform_id: fixture.platform_id,
            name: fixture.name,
            secret: fixture.issuer_secret.into_bytes(),
            token_ttl: Duration::seconds(fixture.token_ttl_secs),
            attested_requirements: fixture.attested_requirements,
            accepts_usage_reports: fixture.accepts_usage_reports,
            requires_result_review: fixture.requires_result_review,
            license_url: fixture.license_url,
            users,
            objects,
            authorized_aaes,
            faults: fixture.faults,
            clock,
            audit: Mutex::new(Vec::new()),
            audit_file: None,
            usage_inbox: Mutex::new(BTreeMap::new()),
        })
    }

    /// Also append audit entries to a JSONL file.
    pub fn with_audit_file(mut self, path: PathBuf) -> Self {
        self.audit_file = Some(path);
        self
    }

    pub fn platform_id(&self) -> &str {
        &self.platform_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn endpoint(&self) -> String {
        self.endpoint.read().unwrap().clone()
    }

    pub fn set_endpoint(&self, endpoint: &str) {
        *self.endpoint.write().unwrap() = endpoint.trim_end_matches('/').to_string();
    }

    pub fn faults(&self) -> &NodeFaults {
        &self.faults
    }

    pub fn requires_result_review(&self) -> bool {
        self.requires_result_review
    }

    pub fn objects(&self) -> impl Iterator<Item = &HostedObject> {
        self.objects.values()
    }

    pub fn object(&self, pid: &Pid) -> Result<&HostedObject> {
        self.objects
            .get(pid)
            .ok_or_else(|| Error::UnknownPid(pid.to_string()))
    }

    pub fn is_aae_authorized(&self, aae_id: &str) -> bool {
        self.authorized_aaes.contains_key(aae_id)
    }

    pub fn descriptor(&self) -> PlatformDescriptor {
        PlatformDescriptor {
            platform_id: self.platform_id.clone(),
            endpoint: self.endpoint(),
            attested_requirements: self.attested_requirements.clone(),
            access_tiers_served: self.objects.values().map(|o| o.access_tier).collect(),
            accepts_usage_reports: self.accepts_usage_reports,
        }
    }

    pub fn authenticate(&self, username: &str, secret: &str) -> Result<IssuedToken> {
        let user = self.users.get(username).ok_or(Error::BadCredentials)?;
        if user.secret != secret {
            return Err(Error::BadCredentials);
        }
        let now = self.clock.now();
        let expiry = now + self.token_ttl;
        let visas = user
            .visas
            .iter()
            .map(|v| Visa {
                visa_type: VisaType::ControlledAccessGrant,
                scope_pid: v.scope_pid.clone(),
                issuer: self.platform_id.clone(),
                expiry: v.expires_at.unwrap_or(expiry),
            })
            .collect();
        let claims = Token {
            subject: username.to_string(),
            issuer: self.platform_id.clone(),
            expiry,
            registered: user.registered,
            visas,
        };
        Ok(IssuedToken {
            token: claims.sign(&self.secret),
            token_type: "Bearer".into(),
            claims,
        })
    }

    /// Mints a token for arbitrary claims with this node's key. Test and
    /// probe helper; real callers go through [`PlatformNode::authenticate`].
    pub fn sign_claims(&self, claims: &Token) -> String {
        claims.sign(&self.secret)
    }

    pub fn verify_token(&self, token: Option<&str>) -> TokenState {
        let Some(text) = token else {
            return TokenState::Absent;
        };
        let now = self.clock.now();
        match Token::verify(text, &self.platform_id, &self.secret, now) {
            TokenState::Invalid(_) if self.faults.accept_tampered_tokens => {
                match Token::decode_unverified(text) {
                    Ok(t) => TokenState::Valid(t),
                    Err(e) => TokenState::Invalid(e.to_string()),
                }
            }
            state => state,
        }
    }

    fn link(&self, pid: &Pid, tail: &str) -> String {
        format!(
            "{}/objects/{}/{tail}",
            self.endpoint(),
            encode_segment(&pid.to_string())
        )
    }

    /// Metadata is public for every tier.
    pub fn get_metadata(&self, pid: &Pid) -> Result<MetadataResponse> {
        let obj = self.object(pid)?;
        let mut metadata = obj.metadata.clone();
        metadata.insert(
            "object_type".into(),
            Value::String(obj.object_type.to_string()),
        );
        metadata.insert(
            "access_tier".into(),
            Value::String(obj.access_tier.to_string()),
        );
        let license = obj
            .metadata
            .get("license_url")
            .and_then(Value::as_str)
            .unwrap_or(&self.license_url)
            .to_string();
        Ok(MetadataResponse {
            pid: pid.clone(),
            object_type: obj.object_type,
            access_tier: obj.access_tier,
            metadata,
            links: vec![
                Link {
                    rel: "data".into(),
                    href: self.link(pid, "access"),
                },
                Link {
                    rel: "license".into(),
                    href: license,
                },
                Link {
                    rel: "describedby".into(),
                    href: self.link(pid, "metadata"),
                },
            ],
        })
    }

    pub fn authorize(&self, token: Option<&str>, pid: &Pid) -> Result<AccessGrant> {
        let state = self.verify_token(token);
        self.authorize_state(&state, pid)
    }

    fn authorize_state(&self, state: &TokenState, pid: &Pid) -> Result<AccessGrant> {
        let obj = self.object(pid)?;
        let decision = decide(
            obj.access_tier,
            state,
            pid,
            &self.platform_id,
            self.clock.now(),
        );
        Ok(AccessGrant {
            pid: pid.clone(),
            granted: decision.granted,
            constraints: decision.granted.then_some(obj.constraints),
            reason: decision.reason,
        })
    }

    fn require_grant(&self, state: &TokenState, pid: &Pid) -> Result<&HostedObject> {
        let grant = self.authorize_state(state, pid)?;
        if !grant.granted {
            return Err(Error::NotAuthorized(grant.reason));
        }
        self.object(pid)
    }

    pub fn get_data(&self, pid: &Pid, token: Option<&str>) -> Result<DataDescriptor> {
        let state = self.verify_token(token);
        let obj = self.require_grant(&state, pid)?;
        self.audit("access", pid, state.subject(), None);
        let checksum = if self.faults.corrupt_checksums {
            sha256_hex(b"not the content")
        } else {
            obj.checksum.clone()
        };
        Ok(DataDescriptor {
            id: pid.clone(),
            checksums: vec![Checksum {
                kind: "sha-256".into(),
                checksum,
            }],
            size: obj.size,
            access_methods: vec![AccessMethod {
                kind: "https".into(),
                access_url: AccessUrl {
                    url: self.link(pid, "content"),
                },
            }],
        })
    }

    pub fn get_content(&self, pid: &Pid, token: Option<&str>) -> Result<Vec<u8>> {
        let state = self.verify_token(token);
        let obj = self.require_grant(&state, pid)?;
        self.audit("content", pid, state.subject(), None);
        Ok(obj.content.clone())
    }

    /// Grants an AAE access to an object on the caller's behalf. The node
    /// alone decides which AAEs it trusts.
    pub fn transfer_to_aae(
        &self,
        pid: &Pid,
        aae_id: &str,
        token: Option<&str>,
    ) -> Result<TransferGrant> {
        let state = self.verify_token(token);
        let obj = self.require_grant(&state, pid)?;
        if !self.faults.accept_any_aae && !self.is_aae_authorized(aae_id) {
            return Err(Error::AaeNotAuthorized(aae_id.to_string()));
        }
        self.audit("transfer", pid, state.subject(), Some(aae_id));
        Ok(TransferGrant {
            pid: pid.clone(),
            aae_id: aae_id.to_string(),
            constraints: obj.constraints,
            transfer_url: format!(
                "{}?aae={}",
                self.link(pid, "content"),
                encode_segment(aae_id)
            ),
        })
    }

    pub fn list_objects(&self, cursor: Option<&str>, limit: usize) -> Result<Page<Pid>> {
        // Order by the same key the cursor carries.
        let mut pids: Vec<Pid> = self.objects.keys().cloned().collect();
        pids.sort_by_cached_key(Pid::to_string);
        paginate(pids, |p| vec![p.to_string()], cursor, limit)
    }

    /// Finds an object by the bare local id a faulty listing hands out.
    pub(crate) fn find_by_local_id(&self, local: &str) -> Option<Pid> {
        self.objects.keys().find(|p| p.suffix() == local).cloned()
    }

    fn audit(&self, op: &str, pid: &Pid, subject: Option<&str>, aae_id: Option<&str>) {
        let entry = AuditEntry {
            timestamp: self.clock.now(),
            op: op.to_string(),
            pid: pid.clone(),
            subject: subject.map(str::to_string),
            aae_id: aae_id.map(str::to_string),
        };
        let mut log = self.audit.lock().unwrap();
        if let Some(path) = &self.audit_file {
            let line = serde_json::to_string(&entry).expect("audit entry serializes");
            let appended = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = appended {
                eprintln!("audit log {}: {e}", path.display());
            }
        }
        log.push(entry);
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.audit.lock().unwrap().clone()
    }

    /// Stores a hub's usage report. Redelivery of the same (platform, period)
    /// replaces the earlier copy.
    pub fn receive_usage_report(&self, report: UsageReport) -> Result<()> {
        if report.platform_id != self.platform_id {
            return Err(Error::BadRequest(format!(
                "report for `{}` delivered to `{}`",
                report.platform_id, self.platform_id
            )));
        }
        let key = (
            report.platform_id.clone(),
            report.period.start,
            report.period.end,
        );
        self.usage_inbox.lock().unwrap().insert(key, report);
        Ok(())
    }

    pub fn usage_reports(&self) -> Vec<UsageReport> {
        self.usage_inbox.lock().unwrap().values().cloned().collect()
    }

    /// Evaluates an aggregate over the objects the submitter may access.
    /// Only the aggregate leaves this function.
    pub fn execute_computation(&self, req: &ExecuteRequest) -> Result<NodeAggregate> {
        let state = self.verify_token(req.token.as_deref());
        match &state {
            TokenState::Invalid(why) => {
                return Err(Error::NotAuthorized(format!("invalid token: {why}")))
            }
            TokenState::Valid(t) if t.subject != req.submitter => {
                return Err(Error::NotAuthorized(
                    "token subject does not match submitter".into(),
                ))
            }
            _ => {}
        }
        let filter = &req.computation.filter;
        let mut matched: Vec<&HostedObject> = Vec::new();
        for obj in self.objects.values() {
            if filter.object_type.is_some_and(|t| t != obj.object_type)
                || filter.access_tier.is_some_and(|t| t != obj.access_tier)
                || filter.text.as_deref().is_some_and(|q| !obj.text_matches(q))
            {
                continue;
            }
            if self.authorize_state(&state, &obj.platform_pid)?.granted {
                matched.push(obj);
            }
        }
        let aggregate = match req.computation.aggregate {
            AggregateKind::Count => AggregateValue::Count(matched.len() as u64),
            AggregateKind::SumSize => AggregateValue::SumSize(matched.iter().map(|o| o.size).sum()),
            AggregateKind::ChecksumList => {
                let mut sums: Vec<String> = matched.iter().map(|o| o.checksum.clone()).collect();
                sums.sort();
                AggregateValue::ChecksumList(sums)
            }
        };
        Ok(NodeAggregate {
            platform_id: self.platform_id.clone(),
            aggregate,
            requires_review: self.requires_result_review,
        })
    }
}
