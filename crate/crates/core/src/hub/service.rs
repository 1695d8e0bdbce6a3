use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Hub, Noticed, Period};
use crate::error::Result;
use crate::federated::{ReviewBody, WorkflowRequest};
use crate::http::{Method, Request, Response, Service};
use crate::identifiers::Pid;
use crate::node::parse_passport;
use crate::registry::RecordFilter;

pub const SESSION_HEADER: &str = "X-Session-Id";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccessBody {
    pub mesh_pid: Pid,
    pub aae_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkBody {
    pub a: Vec<String>,
    pub b: Vec<String>,
}

/// HTTP routes of the hub.
///
/// ```text
/// GET  /hub/search?q=&type=&platform=&cursor=&limit=   -> SearchPage
/// POST /hub/access            {mesh_pid, aae_id} -> TransferGrant
/// POST /hub/harvest           -> HarvestSummary
/// POST /hub/usage-reports     Period -> UsageRunSummary
/// POST /hub/link              {a, b} -> LinkageResult
/// POST /federated/workflows   WorkflowRequest -> WorkflowResult (submitter view)
/// GET  /federated/workflows/{id}          -> WorkflowResult (submitter view)
/// POST /federated/workflows/{id}/review   {decision, reviewer} -> WorkflowResult
/// ```
///
/// The caller's passport travels as `Authorization: Bearer t1,t2,...`.
/// Search and access responses carry `usage_collection_notice` on the first
/// request of an `X-Session-Id` session.
pub struct HubService {
    hub: Arc<Hub>,
}

impl HubService {
    pub fn new(hub: Arc<Hub>) -> Self {
        Self { hub }
    }

    fn noticed<T: Serialize>(&self, req: &Request, body: T) -> Response {
        Response::ok(&Noticed {
            body,
            usage_collection_notice: self.hub.notify_collection(req.header(SESSION_HEADER)),
        })
    }

    fn route(&self, req: &Request) -> Result<Response> {
        let segments = req.segments()?;
        let parts: Vec<&str> = segments.iter().map(String::as_str).collect();
        let hub = &self.hub;
        let passport = parse_passport(req.bearer());
        let resp = match (req.method, parts.as_slice()) {
            (Method::Get, ["hub", "search"]) => {
                let filter = RecordFilter {
                    object_type: req.query_param("type").map(str::parse).transpose()?,
                    hosting_platform_id: req.query_param("platform").map(str::to_string),
                    text: req.query_param("q").map(str::to_string),
                };
                let limit = req.query_param("limit").and_then(|l| l.parse().ok());
                let page = hub.search(&filter, &passport, req.query_param("cursor"), limit)?;
                self.noticed(req, page)
            }
            (Method::Post, ["hub", "access"]) => {
                let body: AccessBody = req.json()?;
                let grant = hub.broker_access(&passport, &body.mesh_pid, &body.aae_id)?;
                self.noticed(req, grant)
            }
            (Method::Post, ["hub", "harvest"]) => Response::ok(&hub.harvest()),
            (Method::Post, ["hub", "usage-reports"]) => {
                let period: Period = req.json()?;
                Response::ok(&hub.report_usage(period))
            }
            (Method::Post, ["hub", "link"]) => {
                let body: LinkBody = req.json()?;
                Response::ok(&hub.link_subjects(&body.a, &body.b)?)
            }
            (Method::Post, ["federated", "workflows"]) => {
                let body: WorkflowRequest = req.json()?;
                let id = body.workflow_id.clone();
                hub.executor().submit(body, passport)?;
                Response::ok(&hub.executor().execute(&id)?.submitter_view())
            }
            (Method::Get, ["federated", "workflows", id]) => {
                Response::ok(&hub.executor().submitter_view(id)?)
            }
            (Method::Post, ["federated", "workflows", id, "review"]) => {
                let body: ReviewBody = req.json()?;
                Response::ok(&hub.executor().review_and_release(
                    id,
                    body.decision,
                    &body.reviewer,
                )?)
            }
            _ => Response::not_found(&req.path),
        };
        Ok(resp)
    }
}

impl Service for HubService {
    fn handle(&self, req: &Request) -> Response {
        self.route(req).unwrap_or_else(|e| Response::error(&e))
    }
}
