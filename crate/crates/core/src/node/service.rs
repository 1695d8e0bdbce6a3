use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PlatformNode;
use crate::error::{Error, Result};
use crate::federated::ExecuteRequest;
use crate::http::{Method, Request, Response, Service};
use crate::hub::UsageReport;
use crate::identifiers::Pid;
use crate::pagination::{clamp_limit, Page};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub secret: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferBody {
    pub aae_id: String,
}

/// HTTP routes of a platform node.
///
/// ```text
/// POST /auth/token                 {username, secret} -> IssuedToken
/// GET  /objects?cursor=&limit=     -> {items: [pid], next_cursor}
/// GET  /objects/{pid}/metadata     -> MetadataResponse
/// GET  /objects/{pid}/access       -> DataDescriptor
/// GET  /objects/{pid}/content      -> bytes
/// POST /objects/{pid}/transfer     {aae_id} -> TransferGrant
/// POST /usage/reports              UsageReport
/// GET  /usage/reports              -> [UsageReport]
/// POST /federated/execute          ExecuteRequest -> NodeAggregate
/// GET  /audit                      -> [AuditEntry]
/// ```
#[derive(Clone)]
pub struct NodeService {
    node: Arc<PlatformNode>,
}

impl Credentials {
    pub fn new(username: &str, secret: &str) -> Self {
        Self {
            username: username.into(),
            secret: secret.into(),
        }
    }
}

impl NodeService {
    pub fn new(node: Arc<PlatformNode>) -> Self {
        Self { node }
    }

    fn pid_from_path(&self, segment: &str) -> Result<Pid> {
        match Pid::parse(segment) {
            Ok(pid) => Ok(pid),
            Err(e) if self.node.faults().bare_local_ids => {
                self.node.find_by_local_id(segment).ok_or(e)
            }
            Err(e) => Err(e),
        }
    }

    fn list(&self, req: &Request) -> Result<Page<String>> {
        let limit = clamp_limit(req.query_param("limit").and_then(|l| l.parse().ok()));
        let page = self.node.list_objects(req.query_param("cursor"), limit)?;
        let bare = self.node.faults().bare_local_ids;
        Ok(Page {
            items: page
                .items
                .into_iter()
                .map(|p| {
                    if bare {
                        p.suffix().to_string()
                    } else {
                        p.to_string()
                    }
                })
                .collect(),
            next_cursor: page.next_cursor,
        })
    }

    fn route(&self, req: &Request) -> Result<Response> {
        let segments = req.segments()?;
        let parts: Vec<&str> = segments.iter().map(String::as_str).collect();
        let token = req.bearer();
        let node = &self.node;
        let resp = match (req.method, parts.as_slice()) {
            (Method::Post, ["auth", "token"]) => {
                let creds: Credentials = req.json()?;
                Response::ok(&node.authenticate(&creds.username, &creds.secret)?)
            }
            (Method::Get, ["objects"]) => Response::ok(&self.list(req)?),
            (Method::Get, ["objects", _, "metadata"])
                if node.faults().disable_metadata_endpoint =>
            {
                Response::not_found(&req.path)
            }
            (Method::Get, ["objects", pid, "metadata"]) => {
                Response::ok(&node.get_metadata(&self.pid_from_path(pid)?)?)
            }
            (Method::Get, ["objects", pid, "access"]) => {
                Response::ok(&node.get_data(&self.pid_from_path(pid)?, token)?)
            }
            (Method::Get, ["objects", pid, "content"]) => {
                Response::bytes(node.get_content(&self.pid_from_path(pid)?, token)?)
            }
            (Method::Post, ["objects", pid, "transfer"]) => {
                let body: TransferBody = req.json()?;
                Response::ok(&node.transfer_to_aae(
                    &self.pid_from_path(pid)?,
                    &body.aae_id,
                    token,
                )?)
            }
            (Method::Post, ["usage", "reports"]) => {
                let report: UsageReport = req.json()?;
                node.receive_usage_report(report)?;
                Response::ok(&serde_json::json!({"accepted": true}))
            }
            (Method::Get, ["usage", "reports"]) => Response::ok(&node.usage_reports()),
            (Method::Post, ["federated", "execute"]) => {
                let body: ExecuteRequest = req.json()?;
                Response::ok(&node.execute_computation(&body)?)
            }
            (Method::Get, ["audit"]) => Response::ok(&node.audit_log()),
            (Method::Get, []) => Response::ok(&node.descriptor()),
            _ => Response::not_found(&req.path),
        };
        Ok(resp)
    }
}

impl Service for NodeService {
    fn handle(&self, req: &Request) -> Response {
        self.route(req).unwrap_or_else(|e| Response::error(&e))
    }
}

impl From<Error> for Response {
    fn from(e: Error) -> Self {
        Response::error(&e)
    }
}
