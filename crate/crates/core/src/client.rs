//! Typed clients for node, DMMS and hub endpoints over any [`Transport`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::federated::{
    ExecuteRequest, NodeAggregate, ReviewBody, ReviewDecision, WorkflowRequest, WorkflowResult,
};
use crate::http::{encode_segment, Request, Response, Transport};
use crate::hub::{
    AccessBody, HarvestSummary, LinkBody, LinkageResult, Noticed, Period, SearchPage, UsageReport,
    UsageRunSummary, SESSION_HEADER,
};
use crate::identifiers::{Pid, ResolutionRecord};
use crate::manifest::{MeshManifest, PlatformDescriptor};
use crate::node::{AuditEntry, DataDescriptor, IssuedToken, MetadataResponse, TransferGrant};
use crate::pagination::Page;
use crate::registry::{
    DmmRecord, ProvenanceSource, RecordFilter, RegistrationRequest, SupplementBody,
    MEMBER_KEY_HEADER,
};

#[derive(Clone)]
struct Endpoint {
    transport: Arc<dyn Transport>,
    base: String,
}

impl Endpoint {
    fn new(transport: Arc<dyn Transport>, base: &str) -> Self {
        Self {
            transport,
            base: base.trim_end_matches('/').to_string(),
        }
    }

    fn send(&self, req: Request) -> Result<Response> {
        self.transport.send(&self.base, req)
    }

    fn call<T: DeserializeOwned>(&self, req: Request) -> Result<T> {
        self.send(req)?.into_result()
    }
}

fn object_path(pid: &str, tail: &str) -> String {
    format!("/objects/{}/{tail}", encode_segment(pid))
}

fn passport_header(passport: &[String]) -> Option<String> {
    (!passport.is_empty()).then(|| passport.join(","))
}

/// Client for one platform node.
#[derive(Clone)]
pub struct NodeClient {
    ep: Endpoint,
}

impl NodeClient {
    pub fn new(transport: Arc<dyn Transport>, endpoint: &str) -> Self {
        Self {
            ep: Endpoint::new(transport, endpoint),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.ep.base
    }

    pub fn descriptor(&self) -> Result<PlatformDescriptor> {
        self.ep.call(Request::get("/"))
    }

    pub fn authenticate(&self, username: &str, secret: &str) -> Result<IssuedToken> {
        let body = serde_json::json!({"username": username, "secret": secret});
        self.ep.call(Request::post_json("/auth/token", &body))
    }

    /// Listed identifiers as the node wrote them; a faulty node may hand out
    /// strings that do not parse as PIDs.
    pub fn list_objects(&self, cursor: Option<&str>, limit: Option<usize>) -> Result<Page<String>> {
        let req = Request::get("/objects")
            .with_optional_query("cursor", cursor)
            .with_optional_query("limit", limit.map(|l| l.to_string()));
        self.ep.call(req)
    }

    pub fn list_all(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let mut cursor: Option<String> = None;
        loop {
            let page =
                self.list_objects(cursor.as_deref(), Some(crate::pagination::MAX_PAGE_SIZE))?;
            out.extend(page.items);
            match page.next_cursor {
                Some(c) => cursor = Some(c),
                None => return Ok(out),
            }
        }
    }

    pub fn metadata(&self, pid: &str) -> Result<MetadataResponse> {
        self.ep.call(Request::get(object_path(pid, "metadata")))
    }

    pub fn access(&self, pid: &str, token: Option<&str>) -> Result<DataDescriptor> {
        self.ep
            .call(Request::get(object_path(pid, "access")).with_bearer(token))
    }

    pub fn content(&self, pid: &str, token: Option<&str>) -> Result<Vec<u8>> {
        let resp = self
            .ep
            .send(Request::get(object_path(pid, "content")).with_bearer(token))?;
        if resp.is_success() {
            Ok(resp.body)
        } else {
            Err(resp.into_error())
        }
    }

    /// Fetches an absolute URL the node handed out (such as a descriptor's
    /// access URL). The URL must point back at this node.
    pub fn fetch(&self, url: &str, token: Option<&str>) -> Result<Vec<u8>> {
        let target = url
            .strip_prefix(self.endpoint())
            .filter(|rest| rest.starts_with('/'))
            .ok_or_else(|| {
                Error::Protocol(format!("`{url}` is not served by {}", self.endpoint()))
            })?;
        let req = Request::from_target(crate::http::Method::Get, target)?.with_bearer(token);
        let resp = self.ep.send(req)?;
        if resp.is_success() {
            Ok(resp.body)
        } else {
            Err(resp.into_error())
        }
    }

    pub fn transfer(&self, pid: &str, aae_id: &str, token: Option<&str>) -> Result<TransferGrant> {
        let body = serde_json::json!({ "aae_id": aae_id });
        self.ep
            .call(Request::post_json(object_path(pid, "transfer"), &body).with_bearer(token))
    }

    pub fn deliver_usage_report(&self, report: &UsageReport) -> Result<()> {
        let _: Value = self.ep.call(Request::post_json("/usage/reports", report))?;
        Ok(())
    }

    pub fn usage_reports(&self) -> Result<Vec<UsageReport>> {
        self.ep.call(Request::get("/usage/reports"))
    }

    pub fn execute(&self, req: &ExecuteRequest) -> Result<NodeAggregate> {
        self.ep.call(Request::post_json("/federated/execute", req))
    }

    pub fn audit(&self) -> Result<Vec<AuditEntry>> {
        self.ep.call(Request::get("/audit"))
    }
}

/// Client for the DMMS.
#[derive(Clone)]
pub struct DmmsClient {
    ep: Endpoint,
    member_key: Option<String>,
}

impl DmmsClient {
    pub fn new(transport: Arc<dyn Transport>, endpoint: &str) -> Self {
        Self {
            ep: Endpoint::new(transport, endpoint),
            member_key: None,
        }
    }

    /// Authenticates as a mesh member, which unlocks private records.
    pub fn with_member_key(mut self, key: &str) -> Self {
        self.member_key = Some(key.to_string());
        self
    }

    fn authed(&self, req: Request) -> Request {
        match &self.member_key {
            Some(k) => req.with_header(MEMBER_KEY_HEADER, k.clone()),
            None => req,
        }
    }

    pub fn register(&self, req: &RegistrationRequest) -> Result<DmmRecord> {
        self.ep.call(Request::post_json("/dmms/register", req))
    }

    pub fn supplement(
        &self,
        mesh_pid: &Pid,
        fields: &BTreeMap<String, Value>,
        source: ProvenanceSource,
    ) -> Result<DmmRecord> {
        let path = format!(
            "/dmms/records/{}/supplement",
            encode_segment(&mesh_pid.to_string())
        );
        let body = SupplementBody {
            fields: fields.clone(),
            source,
        };
        self.ep.call(Request::post_json(path, &body))
    }

    pub fn get_record(&self, mesh_pid: &Pid) -> Result<DmmRecord> {
        let path = format!("/dmms/records/{}", encode_segment(&mesh_pid.to_string()));
        self.ep.call(self.authed(Request::get(path)))
    }

    fn query_request(filter: &RecordFilter, cursor: Option<&str>, limit: Option<usize>) -> Request {
        Request::get("/dmms/records")
            .with_optional_query("type", filter.object_type.map(|t| t.to_string()))
            .with_optional_query("platform", filter.hosting_platform_id.clone())
            .with_optional_query("q", filter.text.clone())
            .with_optional_query("cursor", cursor)
            .with_optional_query("limit", limit.map(|l| l.to_string()))
    }

    pub fn query(
        &self,
        filter: &RecordFilter,
        cursor: Option<&str>,
        limit: Option<usize>,
    ) -> Result<Page<DmmRecord>> {
        self.ep
            .call(self.authed(Self::query_request(filter, cursor, limit)))
    }

    /// Same as [`DmmsClient::query`] but keeps records as raw JSON, so a
    /// caller can see exactly which fields the service sent.
    pub fn query_raw(
        &self,
        filter: &RecordFilter,
        cursor: Option<&str>,
        limit: Option<usize>,
    ) -> Result<Page<Value>> {
        self.ep
            .call(self.authed(Self::query_request(filter, cursor, limit)))
    }

    pub fn query_all_raw(&self, filter: &RecordFilter) -> Result<Vec<Value>> {
        let mut out = Vec::new();
        let mut cursor: Option<String> = None;
        loop {
            let page = self.query_raw(
                filter,
                cursor.as_deref(),
                Some(crate::pagination::MAX_PAGE_SIZE),
            )?;
            out.extend(page.items);
            match page.next_cursor {
                Some(c) => cursor = Some(c),
                None => return Ok(out),
            }
        }
    }

    pub fn query_all(&self, filter: &RecordFilter) -> Result<Vec<DmmRecord>> {
        self.query_all_raw(filter)?
            .into_iter()
            .map(|v| {
                serde_json::from_value(v)
                    .map_err(|e| Error::Protocol(format!("undecodable record: {e}")))
            })
            .collect()
    }

    pub fn resolve(&self, pid: &Pid) -> Result<ResolutionRecord> {
        let path = format!("/dmms/resolve/{}", encode_segment(&pid.to_string()));
        self.ep.call(Request::get(path))
    }

    pub fn manifest(&self) -> Result<MeshManifest> {
        self.ep.call(Request::get("/dmms/manifest"))
    }

    pub fn platforms(&self) -> Result<Vec<PlatformDescriptor>> {
        self.ep.call(Request::get("/dmms/platforms"))
    }
}

/// Search parameters for the hub.
#[derive(Debug, Clone, Default)]
pub struct SearchParams {
    pub filter: RecordFilter,
    pub cursor: Option<String>,
    pub limit: Option<usize>,
}

/// Client for the hub. A passport is the list of tokens the caller holds,
/// typically one per platform.
#[derive(Clone)]
pub struct HubClient {
    ep: Endpoint,
    passport: Vec<String>,
    session: Option<String>,
}

impl HubClient {
    pub fn new(transport: Arc<dyn Transport>, endpoint: &str) -> Self {
        Self {
            ep: Endpoint::new(transport, endpoint),
            passport: Vec::new(),
            session: None,
        }
    }

    pub fn with_passport(mut self, passport: Vec<String>) -> Self {
        self.passport = passport;
        self
    }

    pub fn with_session(mut self, session: &str) -> Self {
        self.session = Some(session.to_string());
        self
    }

    fn decorate(&self, req: Request) -> Request {
        let req = req.with_bearer(passport_header(&self.passport).as_deref());
        match &self.session {
            Some(s) => req.with_header(SESSION_HEADER, s.clone()),
            None => req,
        }
    }

    pub fn search(&self, params: &SearchParams) -> Result<Noticed<SearchPage>> {
        let req = Request::get("/hub/search")
            .with_optional_query("q", params.filter.text.clone())
            .with_optional_query("type", params.filter.object_type.map(|t| t.to_string()))
            .with_optional_query("platform", params.filter.hosting_platform_id.clone())
            .with_optional_query("cursor", params.cursor.clone())
            .with_optional_query("limit", params.limit.map(|l| l.to_string()));
        self.ep.call(self.decorate(req))
    }

    pub fn access(&self, mesh_pid: &Pid, aae_id: &str) -> Result<Noticed<TransferGrant>> {
        let body = AccessBody {
            mesh_pid: mesh_pid.clone(),
            aae_id: aae_id.to_string(),
        };
        self.ep
            .call(self.decorate(Request::post_json("/hub/access", &body)))
    }

    pub fn harvest(&self) -> Result<HarvestSummary> {
        self.ep
            .call(Request::post_json("/hub/harvest", &serde_json::json!({})))
    }

    pub fn report_usage(&self, period: &Period) -> Result<UsageRunSummary> {
        self.ep
            .call(Request::post_json("/hub/usage-reports", period))
    }

    pub fn link(&self, a: &[String], b: &[String]) -> Result<LinkageResult> {
        let body = LinkBody {
            a: a.to_vec(),
            b: b.to_vec(),
        };
        self.ep.call(Request::post_json("/hub/link", &body))
    }

    pub fn submit_workflow(&self, req: &WorkflowRequest) -> Result<WorkflowResult> {
        self.ep
            .call(self.decorate(Request::post_json("/federated/workflows", req)))
    }

    pub fn workflow(&self, workflow_id: &str) -> Result<WorkflowResult> {
        let path = format!("/federated/workflows/{}", encode_segment(workflow_id));
        self.ep.call(Request::get(path))
    }

    pub fn review(
        &self,
        workflow_id: &str,
        decision: ReviewDecision,
        reviewer: &str,
    ) -> Result<WorkflowResult> {
        let path = format!(
            "/federated/workflows/{}/review",
            encode_segment(workflow_id)
        );
        let body = ReviewBody {
            decision,
            reviewer: reviewer.to_string(),
        };
        self.ep.call(Request::post_json(path, &body))
    }
}
