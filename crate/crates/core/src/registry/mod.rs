//! Data Mesh Metadata Service (DMMS).
//!
//! Registers objects hosted on mesh platforms, mints a mesh PID for each,
//! validates metadata against the manifest's minimum schema, and serves the
//! resulting records. State lives in memory and, optionally, in a JSONL
//! journal that is replayed at startup.

mod journal;
mod schema;
mod service;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use journal::{read_entries, Journal, JournalEntry};
pub use schema::{is_unfilled, validate_against_schema};
pub use service::{DmmsFaults, DmmsService, SupplementBody, MEMBER_KEY_HEADER};

use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::identifiers::{Pid, PidMinter, PidScheme, ResolutionRecord, ResolverTable};
use crate::manifest::{
    check_platform_eligibility, minimum_schema_for, DataObjectType, DmmVisibility, MeshManifest,
    PlatformDescriptor, Violation, ViolationCode,
};
use crate::pagination::{paginate, Page};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceSource {
    PlatformApi,
    Contributor,
    HubSupplement,
}

impl ProvenanceSource {
    /// Platform-published values outrank contributors, which outrank hub
    /// supplements.
    fn rank(self) -> u8 {
        match self {
            ProvenanceSource::PlatformApi => 3,
            ProvenanceSource::Contributor => 2,
            ProvenanceSource::HubSupplement => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceOutcome {
    Applied,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub field: String,
    pub source: ProvenanceSource,
    pub timestamp: chrono::DateTime<chrono::Utc>,
    pub outcome: ProvenanceOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmmRecord {
    pub mesh_pid: Pid,
    pub object_type: DataObjectType,
    pub hosting_platform_id: String,
    pub primary_platform_pid: Pid,
    #[serde(default)]
    pub publication_dois: Vec<Pid>,
    pub metadata: BTreeMap<String, Value>,
    pub visibility: Visibility,
    #[serde(default)]
    pub license: String,
    #[serde(default)]
    pub provenance: Vec<ProvenanceEntry>,
}

impl DmmRecord {
    pub fn title(&self) -> Option<&str> {
        self.metadata.get("title").and_then(Value::as_str)
    }

    pub fn access_tier(&self) -> Option<crate::node::AccessTier> {
        self.metadata
            .get("access_tier")
            .and_then(Value::as_str)
            .and_then(|s| s.parse().ok())
    }

    /// The source that last set `field`, if any.
    pub fn field_source(&self, field: &str) -> Option<ProvenanceSource> {
        self.provenance
            .iter()
            .rev()
            .find(|p| p.field == field && p.outcome == ProvenanceOutcome::Applied)
            .map(|p| p.source)
    }

    fn text_matches(&self, needle: &str) -> bool {
        let needle = needle.to_lowercase();
        ["title", "description"].iter().any(|f| {
            self.metadata
                .get(*f)
                .and_then(Value::as_str)
                .is_some_and(|v| v.to_lowercase().contains(&needle))
        })
    }

    fn sort_key(&self) -> Vec<String> {
        vec![
            self.object_type.as_str().to_string(),
            self.mesh_pid.to_string(),
        ]
    }

    fn sync_publication_dois(&mut self) {
        self.publication_dois = self
            .metadata
            .get("publication_dois")
            .and_then(Value::as_array)
            .map(|items| {
                items
                    .iter()
                    .filter_map(|v| v.as_str().and_then(|s| Pid::parse(s).ok()))
                    .filter(|p| p.scheme() == PidScheme::Doi)
                    .collect()
            })
            .unwrap_or_default();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmittedBy {
    PlatformHarvest,
    ContributorPortal,
    ContributorApi,
}

impl SubmittedBy {
    pub fn source(self) -> ProvenanceSource {
        match self {
            SubmittedBy::PlatformHarvest => ProvenanceSource::PlatformApi,
            SubmittedBy::ContributorPortal | SubmittedBy::ContributorApi => {
                ProvenanceSource::Contributor
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRequest {
    pub object_type: DataObjectType,
    pub hosting_platform_id: String,
    pub primary_platform_pid: Pid,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
    pub submitted_by: SubmittedBy,
    /// Only consulted when the manifest allows mixed visibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<Visibility>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterOutcome {
    pub record: DmmRecord,
    pub created: bool,
    pub changed: bool,
}

/// Who is asking. Private records are only shown to mesh members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Caller {
    Anonymous,
    Member(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFilter {
    #[serde(default)]
    pub object_type: Option<DataObjectType>,
    #[serde(default)]
    pub hosting_platform_id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Default)]
struct State {
    records: BTreeMap<Pid, DmmRecord>,
    by_origin: HashMap<(String, Pid), Pid>,
    platforms: BTreeMap<String, PlatformDescriptor>,
    seq: u64,
}

pub struct Registry {
    manifest: Arc<MeshManifest>,
    minter: PidMinter,
    resolver: ResolverTable,
    state: RwLock<State>,
    journal: Option<Mutex<Journal>>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("mesh_id", &self.manifest.mesh_id)
            .field("records", &self.state.read().unwrap().records.len())
            .finish()
    }
}

/// Outcome of merging one field into a record.
#[derive(Debug, PartialEq, Eq)]
enum Merge {
    Applied,
    Rejected,
    Unchanged,
}

fn merge_field(
    record: &mut DmmRecord,
    field: &str,
    value: &Value,
    source: ProvenanceSource,
    now: chrono::DateTime<chrono::Utc>,
) -> Merge {
    let current = record.metadata.get(field);
    if current == Some(value) {
        return Merge::Unchanged;
    }
    let current_unfilled = is_unfilled(current);
    if is_unfilled(Some(value)) && !current_unfilled {
        // An empty value never erases a filled one.
        return Merge::Unchanged;
    }
    let allowed = current_unfilled
        || record
            .field_source(field)
            .is_none_or(|existing| source.rank() >= existing.rank());
    let outcome = if allowed {
        record.metadata.insert(field.to_string(), value.clone());
        ProvenanceOutcome::Applied
    } else {
        ProvenanceOutcome::Rejected
    };
    record.provenance.push(ProvenanceEntry {
        field: field.to_string(),
        source,
        timestamp: now,
        outcome,
    });
    if allowed {
        Merge::Applied
    } else {
        Merge::Rejected
    }
}

impl Registry {
    pub fn in_memory(manifest: MeshManifest) -> Self {
        Self::build(manifest, None, Arc::new(SystemClock))
    }

    /// Opens a journal-backed registry, replaying any existing journal.
    pub fn open(manifest: MeshManifest, journal_path: &Path) -> Result<Self> {
        Self::open_with_clock(manifest, journal_path, Arc::new(SystemClock))
    }

    pub fn open_with_clock(
        manifest: MeshManifest,
        journal_path: &Path,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        let (journal, entries) = Journal::open(journal_path)?;
        let registry = Self::build(manifest, Some(journal), clock);
        {
            let mut state = registry.state.write().unwrap();
            for entry in entries {
                let record = entry.record;
                registry.minter.reserve(&record.mesh_pid);
                state.by_origin.insert(
                    (
                        record.hosting_platform_id.clone(),
                        record.primary_platform_pid.clone(),
                    ),
                    record.mesh_pid.clone(),
                );
                state.seq = state.seq.max(entry.seq);
                state.records.insert(record.mesh_pid.clone(), record);
            }
        }
        Ok(registry)
    }

    pub fn with_clock(manifest: MeshManifest, clock: Arc<dyn Clock>) -> Self {
        Self::build(manifest, None, clock)
    }

    fn build(manifest: MeshManifest, journal: Option<Journal>, clock: Arc<dyn Clock>) -> Self {
        Self {
            manifest: Arc::new(manifest),
            minter: PidMinter::new(),
            resolver: ResolverTable::new(),
            state: RwLock::new(State::default()),
            journal: journal.map(Mutex::new),
            clock,
        }
    }

    pub fn manifest(&self) -> &MeshManifest {
        &self.manifest
    }

    pub fn journal_lines(&self) -> Option<u64> {
        self.journal.as_ref().map(|j| j.lock().unwrap().lines())
    }

    /// Adds a platform to the mesh. Eligibility is checked at registration
    /// time, so an ineligible platform can be listed but cannot register.
    pub fn add_platform(&self, platform: PlatformDescriptor) -> Result<()> {
        let mut state = self.state.write().unwrap();
        if state.platforms.contains_key(&platform.platform_id) {
            return Err(Error::DuplicatePlatform(platform.platform_id));
        }
        for record in state
            .records
            .values()
            .filter(|r| r.hosting_platform_id == platform.platform_id)
        {
            self.index_resolution(record, &platform)?;
        }
        state
            .platforms
            .insert(platform.platform_id.clone(), platform);
        Ok(())
    }

    pub fn platforms(&self) -> Vec<PlatformDescriptor> {
        self.state
            .read()
            .unwrap()
            .platforms
            .values()
            .cloned()
            .collect()
    }

    pub fn platform(&self, platform_id: &str) -> Result<PlatformDescriptor> {
        self.state
            .read()
            .unwrap()
            .platforms
            .get(platform_id)
            .cloned()
            .ok_or_else(|| Error::UnknownPlatform(platform_id.to_string()))
    }

    fn index_resolution(&self, record: &DmmRecord, platform: &PlatformDescriptor) -> Result<()> {
        self.resolver.insert(ResolutionRecord {
            pid: record.mesh_pid.clone(),
            hosting_platform_id: record.hosting_platform_id.clone(),
            platform_endpoint: platform.endpoint.clone(),
            primary_platform_pid: Some(record.primary_platform_pid.clone()),
        })?;
        self.resolver.insert(ResolutionRecord {
            pid: record.primary_platform_pid.clone(),
            hosting_platform_id: record.hosting_platform_id.clone(),
            platform_endpoint: platform.endpoint.clone(),
            primary_platform_pid: None,
        })
    }

    fn commit(&self, state: &mut State, record: DmmRecord) -> Result<()> {
        state.seq += 1;
        if let Some(journal) = &self.journal {
            journal.lock().unwrap().append(&JournalEntry {
                seq: state.seq,
                committed_at: self.clock.now(),
                record: record.clone(),
            })?;
        }
        state.records.insert(record.mesh_pid.clone(), record);
        Ok(())
    }

    /// Injects the fields the registry knows from the request itself and
    /// flags any metadata that contradicts them.
    fn structural_metadata(req: &RegistrationRequest) -> (BTreeMap<String, Value>, Vec<Violation>) {
        let mut metadata = req.metadata.clone();
        let mut conflicts = Vec::new();
        let structural = [
            ("object_type", req.object_type.to_string()),
            ("hosting_platform_id", req.hosting_platform_id.clone()),
            ("primary_platform_pid", req.primary_platform_pid.to_string()),
        ];
        for (field, expected) in structural {
            let consistent = match metadata.get(field) {
                None | Some(Value::Null) => true,
                Some(Value::String(s)) if field == "primary_platform_pid" => {
                    Pid::parse(s).is_ok_and(|p| p == req.primary_platform_pid)
                }
                Some(Value::String(s)) => *s == expected,
                Some(_) => false,
            };
            if !consistent {
                conflicts.push(Violation::new(
                    ViolationCode::FieldConflict,
                    Some(field),
                    format!("metadata disagrees with request value `{expected}`"),
                ));
            }
            metadata.insert(field.to_string(), Value::String(expected));
        }
        (metadata, conflicts)
    }

    fn visibility_for(&self, req: &RegistrationRequest) -> Visibility {
        match self.manifest.dmm_visibility {
            DmmVisibility::Public => Visibility::Public,
            DmmVisibility::Private => Visibility::Private,
            DmmVisibility::Mixed => req.visibility.unwrap_or(Visibility::Public),
        }
    }

    /// Registers (or re-registers) an object. The pair
    /// (hosting platform, primary PID) identifies the object, so resubmitting
    /// it updates the existing record and keeps its mesh PID.
    pub fn register(&self, req: RegistrationRequest) -> Result<RegisterOutcome> {
        let schema = minimum_schema_for(&self.manifest, req.object_type)?;
        let mut state = self.state.write().unwrap();
        let platform = state
            .platforms
            .get(&req.hosting_platform_id)
            .cloned()
            .ok_or_else(|| Error::UnknownPlatform(req.hosting_platform_id.clone()))?;
        let eligibility = check_platform_eligibility(&self.manifest, &platform);
        if !eligibility.eligible {
            return Err(Error::IneligiblePlatform {
                platform_id: platform.platform_id,
                missing: eligibility.missing,
            });
        }
        let (incoming, conflicts) = Self::structural_metadata(&req);
        if !conflicts.is_empty() {
            return Err(Error::SchemaViolation(conflicts));
        }
        let source = req.submitted_by.source();
        let now = self.clock.now();
        let origin = (
            req.hosting_platform_id.clone(),
            req.primary_platform_pid.clone(),
        );

        if let Some(mesh_pid) = state.by_origin.get(&origin).cloned() {
            let mut record = state.records[&mesh_pid].clone();
            if record.object_type != req.object_type {
                return Err(Error::SchemaViolation(vec![Violation::new(
                    ViolationCode::FieldConflict,
                    Some("object_type"),
                    format!("already registered as `{}`", record.object_type),
                )]));
            }
            let mut touched = false;
            for (field, value) in &incoming {
                touched |= merge_field(&mut record, field, value, source, now) != Merge::Unchanged;
            }
            if !touched {
                return Ok(RegisterOutcome {
                    record,
                    created: false,
                    changed: false,
                });
            }
            let violations = validate_against_schema(&record.metadata, schema);
            if !violations.is_empty() {
                return Err(Error::SchemaViolation(violations));
            }
            record.sync_publication_dois();
            self.commit(&mut state, record.clone())?;
            return Ok(RegisterOutcome {
                record,
                created: false,
                changed: true,
            });
        }

        let violations = validate_against_schema(&incoming, schema);
        if !violations.is_empty() {
            return Err(Error::SchemaViolation(violations));
        }
        let visibility = self.visibility_for(&req);
        let mesh_pid = self.minter.mint(PidScheme::Mesh, &self.manifest.mesh_id)?;
        let provenance = incoming
            .iter()
            .filter(|(_, v)| !is_unfilled(Some(v)))
            .map(|(field, _)| ProvenanceEntry {
                field: field.clone(),
                source,
                timestamp: now,
                outcome: ProvenanceOutcome::Applied,
            })
            .collect();
        let mut record = DmmRecord {
            mesh_pid: mesh_pid.clone(),
            object_type: req.object_type,
            hosting_platform_id: req.hosting_platform_id,
            primary_platform_pid: req.primary_platform_pid,
            publication_dois: Vec::new(),
            metadata: incoming,
            visibility,
            license: self.manifest.dmm_license.clone(),
            provenance,
        };
        record.sync_publication_dois();
        self.index_resolution(&record, &platform)?;
        self.commit(&mut state, record.clone())?;
        state.by_origin.insert(origin, mesh_pid);
        Ok(RegisterOutcome {
            record,
            created: true,
            changed: true,
        })
    }

    pub fn register_object(&self, req: RegistrationRequest) -> Result<DmmRecord> {
        self.register(req).map(|o| o.record)
    }

    /// Merges metadata from a contributor or the hub. Values a platform
    /// published are only replaced by another platform value; attempts that
    /// lose are kept in the provenance trail.
    pub fn supplement_metadata(
        &self,
        mesh_pid: &Pid,
        fields: &BTreeMap<String, Value>,
        source: ProvenanceSource,
    ) -> Result<DmmRecord> {
        let mut state = self.state.write().unwrap();
        let mut record = state
            .records
            .get(mesh_pid)
            .cloned()
            .ok_or_else(|| Error::UnknownPid(mesh_pid.to_string()))?;
        let schema = minimum_schema_for(&self.manifest, record.object_type)?;
        let now = self.clock.now();
        let mut touched = false;
        for (field, value) in fields {
            if matches!(
                field.as_str(),
                "object_type" | "hosting_platform_id" | "primary_platform_pid"
            ) {
                return Err(Error::SchemaViolation(vec![Violation::new(
                    ViolationCode::FieldConflict,
                    Some(field),
                    "structural fields cannot be supplemented",
                )]));
            }
            touched |= merge_field(&mut record, field, value, source, now) != Merge::Unchanged;
        }
        if !touched {
            return Ok(record);
        }
        let violations = validate_against_schema(&record.metadata, schema);
        if !violations.is_empty() {
            return Err(Error::SchemaViolation(violations));
        }
        record.sync_publication_dois();
        self.commit(&mut state, record.clone())?;
        Ok(record)
    }

    pub fn get_record(&self, mesh_pid: &Pid, caller: &Caller) -> Result<DmmRecord> {
        let state = self.state.read().unwrap();
        let record = state
            .records
            .get(mesh_pid)
            .ok_or_else(|| Error::UnknownPid(mesh_pid.to_string()))?;
        if record.visibility == Visibility::Private && *caller == Caller::Anonymous {
            return Err(Error::NotAuthorized(
                "private record; mesh membership required".into(),
            ));
        }
        Ok(record.clone())
    }

    pub fn query_records(
        &self,
        filter: &RecordFilter,
        caller: &Caller,
        cursor: Option<&str>,
        limit: usize,
    ) -> Result<Page<DmmRecord>> {
        let state = self.state.read().unwrap();
        let mut hits: Vec<DmmRecord> = state
            .records
            .values()
            .filter(|r| r.visibility == Visibility::Public || *caller != Caller::Anonymous)
            .filter(|r| filter.object_type.is_none_or(|t| t == r.object_type))
            .filter(|r| {
                filter
                    .hosting_platform_id
                    .as_deref()
                    .is_none_or(|p| p == r.hosting_platform_id)
            })
            .filter(|r| filter.text.as_deref().is_none_or(|q| r.text_matches(q)))
            .cloned()
            .collect();
        drop(state);
        hits.sort_by_key(DmmRecord::sort_key);
        paginate(hits, DmmRecord::sort_key, cursor, limit)
    }

    /// Every record visible to `caller`, across all pages.
    pub fn all_records(&self, caller: &Caller) -> Vec<DmmRecord> {
        let mut out = Vec::new();
        let mut cursor = None;
        loop {
            let page = self
                .query_records(
                    &RecordFilter::default(),
                    caller,
                    cursor.as_deref(),
                    crate::pagination::MAX_PAGE_SIZE,
                )
                .expect("cursor produced by the registry itself");
            out.extend(page.items);
            match page.next_cursor {
                Some(c) => cursor = Some(c),
                None => return out,
            }
        }
    }

    pub fn resolve(&self, pid: &Pid) -> Result<ResolutionRecord> {
        self.resolver.resolve(pid)
    }

    pub fn len(&self) -> usize {
        self.state.read().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks every stored record against the record invariants; returns one
    /// line per problem.
    pub fn audit(&self) -> Vec<String> {
        let state = self.state.read().unwrap();
        let mut problems = Vec::new();
        let mut origins = HashMap::new();
        for record in state.records.values() {
            let pid = &record.mesh_pid;
            if pid.scheme() != PidScheme::Mesh || pid.namespace() != self.manifest.mesh_id {
                problems.push(format!(
                    "{pid}: not a PID in mesh `{}`",
                    self.manifest.mesh_id
                ));
            }
            match minimum_schema_for(&self.manifest, record.object_type) {
                Ok(schema) => {
                    for v in validate_against_schema(&record.metadata, schema) {
                        problems.push(format!("{pid}: {v}"));
                    }
                }
                Err(e) => problems.push(format!("{pid}: {e}")),
            }
            if record.metadata.get("object_type").and_then(Value::as_str)
                != Some(record.object_type.as_str())
            {
                problems.push(format!(
                    "{pid}: object_type field disagrees with record type"
                ));
            }
            if record.visibility == Visibility::Public && record.license.trim().is_empty() {
                problems.push(format!("{pid}: public record without license"));
            }
            if let Some(other) = origins.insert(
                (
                    record.hosting_platform_id.clone(),
                    record.primary_platform_pid.clone(),
                ),
                pid.clone(),
            ) {
                problems.push(format!("{pid}: shares origin with {other}"));
            }
            let indexed = state.by_origin.get(&(
                record.hosting_platform_id.clone(),
                record.primary_platform_pid.clone(),
            ));
            if indexed != Some(pid) {
                problems.push(format!("{pid}: origin index out of sync"));
            }
        }
        if state.by_origin.len() != state.records.len() {
            problems.push("origin index and record table differ in size".into());
        }
        problems
    }
}
