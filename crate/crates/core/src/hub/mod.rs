//! The data hub: harvests node metadata into the DMMS, answers searches with
//! per-caller availability, brokers AAE transfers, returns usage statistics
//! to the hosting platforms, and links subjects across platforms.
//!
//! The hub only ever handles metadata, grants and aggregates. It never asks
//! a node for object content.

mod linkage;
mod service;
mod usage;

use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use linkage::{link_subjects, linkage_token, normalize_subject, LinkageResult, LinkageToken};
pub use service::{AccessBody, HubService, LinkBody, SESSION_HEADER};
pub use usage::{aggregate_usage, Period, UsageEntry, UsageEvent, UsageReport};

use crate::client::NodeClient;
use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::federated::FederatedExecutor;
use crate::http::Transport;
use crate::identifiers::Pid;
use crate::manifest::{DataObjectType, PlatformDescriptor, Violation};
use crate::node::{decide, token_for_issuer, AccessTier, Token, TokenState, TransferGrant};
use crate::pagination::clamp_limit;
use crate::registry::{
    Caller, DmmRecord, RecordFilter, RegistrationRequest, Registry, SubmittedBy,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HubOptions {
    /// Ask the hosting node about every search hit instead of deciding from
    /// the cached tier and the caller's token claims.
    pub live_authz: bool,
}

/// Deliberate defects for exercising the conformance checker.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HubFaults {
    /// Put caller names into usage entries for open-tier objects.
    pub leak_open_identities: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Available,
    RequiresRegistration,
    RequiresVisa,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub record: DmmRecord,
    pub availability: Availability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPage {
    pub results: Vec<SearchResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
}

/// A hub response, carrying the usage collection notice on the first
/// interaction of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Noticed<T> {
    #[serde(flatten)]
    pub body: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage_collection_notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoticeRecord {
    pub session: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestFailure {
    /// The identifier as the node listed it.
    pub item: String,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeHarvest {
    pub platform_id: String,
    pub listed: usize,
    pub upserts: usize,
    pub new_pids: usize,
    pub failures: Vec<HarvestFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl NodeHarvest {
    pub fn schema_failures(&self) -> usize {
        self.failures
            .iter()
            .filter(|f| f.code == "SCHEMA_VIOLATION")
            .count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestSummary {
    pub nodes: Vec<NodeHarvest>,
}

impl HarvestSummary {
    pub fn upserts(&self) -> usize {
        self.nodes.iter().map(|n| n.upserts).sum()
    }

    pub fn new_pids(&self) -> usize {
        self.nodes.iter().map(|n| n.new_pids).sum()
    }

    pub fn node(&self, platform_id: &str) -> Option<&NodeHarvest> {
        self.nodes.iter().find(|n| n.platform_id == platform_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryStatus {
    Delivered,
    /// The mesh does not require reports and the platform opted out.
    Skipped,
    Queued,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageDelivery {
    pub report: UsageReport,
    pub status: DeliveryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRunSummary {
    pub deliveries: Vec<UsageDelivery>,
}

impl UsageRunSummary {
    pub fn reports(&self) -> impl Iterator<Item = &UsageReport> {
        self.deliveries.iter().map(|d| &d.report)
    }
}

pub struct Hub {
    registry: Arc<Registry>,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    options: HubOptions,
    faults: HubFaults,
    linkage_key: Vec<u8>,
    executor: FederatedExecutor,
    events: Mutex<Vec<UsageEvent>>,
    sessions: Mutex<HashSet<String>>,
    notices: Mutex<Vec<NoticeRecord>>,
    pending: Mutex<Vec<UsageReport>>,
}

impl Hub {
    pub fn new(registry: Arc<Registry>, transport: Arc<dyn Transport>) -> Self {
        Self::with_clock(registry, transport, Arc::new(SystemClock))
    }

    pub fn with_clock(
        registry: Arc<Registry>,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            executor: FederatedExecutor::new(registry.clone(), transport.clone()),
            registry,
            transport,
            clock,
            options: HubOptions::default(),
            faults: HubFaults::default(),
            linkage_key: b"mesh-linkage-key".to_vec(),
            events: Mutex::new(Vec::new()),
            sessions: Mutex::new(HashSet::new()),
            notices: Mutex::new(Vec::new()),
            pending: Mutex::new(Vec::new()),
        }
    }

    pub fn with_options(mut self, options: HubOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_faults(mut self, faults: HubFaults) -> Self {
        self.faults = faults;
        self
    }

    pub fn with_linkage_key(mut self, key: &[u8]) -> Self {
        self.linkage_key = key.to_vec();
        self
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn executor(&self) -> &FederatedExecutor {
        &self.executor
    }

    pub fn options(&self) -> &HubOptions {
        &self.options
    }

    fn node(&self, platform: &PlatformDescriptor) -> NodeClient {
        NodeClient::new(self.transport.clone(), &platform.endpoint)
    }

    /// Pulls every listed object's metadata from each mesh platform into the
    /// registry, one thread per node.
    pub fn harvest(&self) -> HarvestSummary {
        let platforms = self.registry.platforms();
        let nodes = std::thread::scope(|scope| {
            let handles: Vec<_> = platforms
                .iter()
                .map(|p| scope.spawn(move || self.harvest_node(p)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("harvest thread"))
                .collect()
        });
        HarvestSummary { nodes }
    }

    fn harvest_node(&self, platform: &PlatformDescriptor) -> NodeHarvest {
        let mut out = NodeHarvest {
            platform_id: platform.platform_id.clone(),
            ..NodeHarvest::default()
        };
        let client = self.node(platform);
        let listed = match client.list_all() {
            Ok(l) => l,
            Err(e) => {
                out.error = Some(e.to_string());
                return out;
            }
        };
        out.listed = listed.len();
        for item in listed {
            match self.harvest_one(&client, platform, &item) {
                Ok(created) => {
                    out.upserts += 1;
                    out.new_pids += usize::from(created);
                }
                Err(e) => {
                    let violations = match &e {
                        Error::SchemaViolation(v) => v.clone(),
                        _ => Vec::new(),
                    };
                    out.failures.push(HarvestFailure {
                        item,
                        code: e.code().to_string(),
                        message: e.to_string(),
                        violations,
                    });
                }
            }
        }
        out
    }

    fn harvest_one(
        &self,
        client: &NodeClient,
        platform: &PlatformDescriptor,
        item: &str,
    ) -> Result<bool> {
        let pid = Pid::parse(item)?;
        let meta = client.metadata(item)?;
        let outcome = self.registry.register(RegistrationRequest {
            object_type: meta.object_type,
            hosting_platform_id: platform.platform_id.clone(),
            primary_platform_pid: pid,
            metadata: meta.metadata,
            submitted_by: SubmittedBy::PlatformHarvest,
            visibility: None,
        })?;
        Ok(outcome.created)
    }

    /// Returns the notice if this is the session's first interaction. A
    /// request without a session always gets it.
    pub fn notify_collection(&self, session: Option<&str>) -> Option<String> {
        let first = match session {
            None => true,
            Some(s) => self.sessions.lock().unwrap().insert(s.to_string()),
        };
        if !first {
            return None;
        }
        self.notices.lock().unwrap().push(NoticeRecord {
            session: session.map(str::to_string),
            timestamp: self.clock.now(),
        });
        Some(self.registry.manifest().usage_collection_notice.clone())
    }

    pub fn notices(&self) -> Vec<NoticeRecord> {
        self.notices.lock().unwrap().clone()
    }

    fn claims_for(&self, passport: &[String], platform_id: &str) -> TokenState {
        match token_for_issuer(passport, platform_id) {
            None => TokenState::Absent,
            Some(text) => match Token::decode_unverified(text) {
                Ok(t) if self.clock.now() < t.expiry => TokenState::Valid(t),
                Ok(_) => TokenState::Invalid("token expired".into()),
                Err(e) => TokenState::Invalid(e.to_string()),
            },
        }
    }

    fn denied(tier: AccessTier) -> Availability {
        match tier {
            AccessTier::Open => Availability::Unavailable,
            AccessTier::Registered => Availability::RequiresRegistration,
            AccessTier::Controlled => Availability::RequiresVisa,
        }
    }

    pub fn availability(&self, record: &DmmRecord, passport: &[String]) -> Availability {
        let Some(tier) = record.access_tier() else {
            return Availability::Unavailable;
        };
        if self.options.live_authz {
            let Ok(platform) = self.registry.platform(&record.hosting_platform_id) else {
                return Availability::Unavailable;
            };
            let token = token_for_issuer(passport, &record.hosting_platform_id);
            return match self
                .node(&platform)
                .access(&record.primary_platform_pid.to_string(), token)
            {
                Ok(_) => Availability::Available,
                Err(Error::NotAuthorized(_)) => Self::denied(tier),
                Err(_) => Availability::Unavailable,
            };
        }
        let state = self.claims_for(passport, &record.hosting_platform_id);
        let decision = decide(
            tier,
            &state,
            &record.primary_platform_pid,
            &record.hosting_platform_id,
            self.clock.now(),
        );
        if decision.granted {
            Availability::Available
        } else {
            Self::denied(tier)
        }
    }

    pub fn search(
        &self,
        filter: &RecordFilter,
        passport: &[String],
        cursor: Option<&str>,
        limit: Option<usize>,
    ) -> Result<SearchPage> {
        let page =
            self.registry
                .query_records(filter, &Caller::Anonymous, cursor, clamp_limit(limit))?;
        Ok(SearchPage {
            results: page
                .items
                .into_iter()
                .map(|record| SearchResult {
                    availability: self.availability(&record, passport),
                    record,
                })
                .collect(),
            next_cursor: page.next_cursor,
        })
    }

    /// Every public record, across pages.
    pub fn search_all(
        &self,
        filter: &RecordFilter,
        passport: &[String],
    ) -> Result<Vec<SearchResult>> {
        let mut out = Vec::new();
        let mut cursor: Option<String> = None;
        loop {
            let page = self.search(
                filter,
                passport,
                cursor.as_deref(),
                Some(crate::pagination::MAX_PAGE_SIZE),
            )?;
            out.extend(page.results);
            match page.next_cursor {
                Some(c) => cursor = Some(c),
                None => return Ok(out),
            }
        }
    }

    /// Asks the hosting node to admit `aae_id` on the caller's behalf. The
    /// node's answer is returned unchanged; a grant is counted as one usage
    /// event.
    pub fn broker_access(
        &self,
        passport: &[String],
        mesh_pid: &Pid,
        aae_id: &str,
    ) -> Result<TransferGrant> {
        let record = self
            .registry
            .get_record(mesh_pid, &Caller::Member("hub".into()))?;
        let resolution = self.registry.resolve(mesh_pid)?;
        let primary = resolution
            .primary_platform_pid
            .ok_or_else(|| Error::InvalidResolution(format!("{mesh_pid} has no primary PID")))?;
        let platform = self.registry.platform(&resolution.hosting_platform_id)?;
        let token = token_for_issuer(passport, &platform.platform_id);
        let grant = self
            .node(&platform)
            .transfer(&primary.to_string(), aae_id, token)?;
        let tier = record.access_tier().unwrap_or(AccessTier::Open);
        let identify = tier >= AccessTier::Registered || self.faults.leak_open_identities;
        let subject = token
            .filter(|_| identify)
            .and_then(|t| Token::decode_unverified(t).ok())
            .map(|t| t.subject);
        self.events.lock().unwrap().push(UsageEvent {
            mesh_pid: mesh_pid.clone(),
            hosting_platform_id: platform.platform_id,
            access_tier: tier,
            subject,
            timestamp: self.clock.now(),
        });
        Ok(grant)
    }

    pub fn usage_events(&self) -> Vec<UsageEvent> {
        self.events.lock().unwrap().clone()
    }

    pub fn build_reports(&self, period: Period) -> Vec<UsageReport> {
        let events = self.events.lock().unwrap().clone();
        aggregate_usage(&events, period, self.faults.leak_open_identities)
    }

    /// Aggregates the period's events and pushes one report to each hosting
    /// platform. Failed deliveries are queued for [`Hub::retry_pending`].
    pub fn report_usage(&self, period: Period) -> UsageRunSummary {
        let required = self.registry.manifest().usage_stats_required;
        let mut deliveries = Vec::new();
        for report in self.build_reports(period) {
            let platform = self.registry.platform(&report.platform_id);
            if let Ok(p) = &platform {
                if !required && !p.accepts_usage_reports {
                    deliveries.push(UsageDelivery {
                        report,
                        status: DeliveryStatus::Skipped,
                        error: None,
                    });
                    continue;
                }
            }
            let sent = platform.and_then(|p| self.node(&p).deliver_usage_report(&report));
            match sent {
                Ok(()) => deliveries.push(UsageDelivery {
                    report,
                    status: DeliveryStatus::Delivered,
                    error: None,
                }),
                Err(e) => {
                    self.queue(report.clone());
                    deliveries.push(UsageDelivery {
                        report,
                        status: DeliveryStatus::Queued,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        UsageRunSummary { deliveries }
    }

    fn queue(&self, report: UsageReport) {
        let mut pending = self.pending.lock().unwrap();
        pending.retain(|r| {
            (r.platform_id.as_str(), r.period) != (report.platform_id.as_str(), report.period)
        });
        pending.push(report);
    }

    pub fn pending_reports(&self) -> Vec<UsageReport> {
        self.pending.lock().unwrap().clone()
    }

    /// Re-sends queued reports; returns how many were delivered.
    pub fn retry_pending(&self) -> usize {
        let queued = std::mem::take(&mut *self.pending.lock().unwrap());
        let mut delivered = 0;
        for report in queued {
            let sent = self
                .registry
                .platform(&report.platform_id)
                .and_then(|p| self.node(&p).deliver_usage_report(&report));
            match sent {
                Ok(()) => delivered += 1,
                Err(_) => self.queue(report),
            }
        }
        delivered
    }

    pub fn link_subjects(&self, a: &[String], b: &[String]) -> Result<LinkageResult> {
        link_subjects(
            self.registry.manifest().linkage_mode,
            a,
            b,
            &self.linkage_key,
        )
    }

    /// Count of public records per object type.
    pub fn type_counts(&self) -> BTreeMap<DataObjectType, usize> {
        let mut counts = BTreeMap::new();
        for r in self.registry.all_records(&Caller::Anonymous) {
            *counts.entry(r.object_type).or_insert(0) += 1;
        }
        counts
    }
}
