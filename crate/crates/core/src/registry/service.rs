use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Caller, DmmRecord, ProvenanceSource, RecordFilter, RegistrationRequest, Registry};
use crate::error::{Error, Result};
use crate::http::{Method, Request, Response, Service};
use crate::identifiers::{Pid, PidScheme};
use crate::pagination::{clamp_limit, Page};

pub const MEMBER_KEY_HEADER: &str = "X-Mesh-Member-Key";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupplementBody {
    pub fields: BTreeMap<String, Value>,
    pub source: ProvenanceSource,
}

/// Deliberate defects for exercising the conformance checker.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmmsFaults {
    /// Remove this metadata field from every served record.
    pub strip_field: Option<String>,
    /// Answer every mesh PID resolution with UnknownPid.
    pub break_resolution: bool,
    /// Omit the license from served records.
    pub drop_license: bool,
}

/// HTTP routes of the DMMS.
///
/// ```text
/// POST /dmms/register                     RegistrationRequest -> DmmRecord
/// POST /dmms/records/{pid}/supplement     {fields, source} -> DmmRecord
/// GET  /dmms/records/{pid}                -> DmmRecord
/// GET  /dmms/records?type=&platform=&q=&cursor=&limit=
/// GET  /dmms/resolve/{pid}                -> ResolutionRecord
/// GET  /dmms/manifest                     -> MeshManifest
/// GET  /dmms/platforms                    -> [PlatformDescriptor]
/// ```
///
/// Private records need an `X-Mesh-Member-Key` header naming a known member.
pub struct DmmsService {
    registry: Arc<Registry>,
    members: HashMap<String, String>,
    faults: DmmsFaults,
}

impl DmmsService {
    pub fn new(registry: Arc<Registry>) -> Self {
        Self {
            registry,
            members: HashMap::new(),
            faults: DmmsFaults::default(),
        }
    }

    /// `members` maps API key to member name.
    pub fn with_members(mut self, members: HashMap<String, String>) -> Self {
        self.members = members;
        self
    }

    pub fn with_faults(mut self, faults: DmmsFaults) -> Self {
        self.faults = faults;
        self
    }

    fn caller(&self, req: &Request) -> Result<Caller> {
        match req.header(MEMBER_KEY_HEADER) {
            None => Ok(Caller::Anonymous),
            Some(key) => self
                .members
                .get(key)
                .map(|m| Caller::Member(m.clone()))
                .ok_or(Error::BadCredentials),
        }
    }

    fn present(&self, record: DmmRecord) -> Value {
        let mut record = record;
        if let Some(field) = &self.faults.strip_field {
            record.metadata.remove(field);
        }
        let mut value = serde_json::to_value(&record).expect("record serializes");
        if self.faults.drop_license {
            if let Some(obj) = value.as_object_mut() {
                obj.remove("license");
            }
        }
        value
    }

    fn filter(req: &Request) -> Result<RecordFilter> {
        Ok(RecordFilter {
            object_type: req.query_param("type").map(str::parse).transpose()?,
            hosting_platform_id: req.query_param("platform").map(str::to_string),
            text: req.query_param("q").map(str::to_string),
        })
    }

    fn route(&self, req: &Request) -> Result<Response> {
        let segments = req.segments()?;
        let parts: Vec<&str> = segments.iter().map(String::as_str).collect();
        let registry = &self.registry;
        let resp = match (req.method, parts.as_slice()) {
            (Method::Post, ["dmms", "register"]) => {
                let body: RegistrationRequest = req.json()?;
                Response::ok(&self.present(registry.register_object(body)?))
            }
            (Method::Post, ["dmms", "records", pid, "supplement"]) => {
                let body: SupplementBody = req.json()?;
                let record =
                    registry.supplement_metadata(&Pid::parse(pid)?, &body.fields, body.source)?;
                Response::ok(&self.present(record))
            }
            (Method::Get, ["dmms", "records", pid]) => {
                let record = registry.get_record(&Pid::parse(pid)?, &self.caller(req)?)?;
                Response::ok(&self.present(record))
            }
            (Method::Get, ["dmms", "records"]) => {
                let limit = clamp_limit(req.query_param("limit").and_then(|l| l.parse().ok()));
                let page = registry.query_records(
                    &Self::filter(req)?,
                    &self.caller(req)?,
                    req.query_param("cursor"),
                    limit,
                )?;
                Response::ok(&Page {
                    items: page
                        .items
                        .into_iter()
                        .map(|r| self.present(r))
                        .collect::<Vec<_>>(),
                    next_cursor: page.next_cursor,
                })
            }
            (Method::Get, ["dmms", "resolve", pid]) => {
                let pid = Pid::parse(pid)?;
                if self.faults.break_resolution && pid.scheme() == PidScheme::Mesh {
                    return Err(Error::UnknownPid(pid.to_string()));
                }
                Response::ok(&registry.resolve(&pid)?)
            }
            (Method::Get, ["dmms", "manifest"]) => Response::ok(registry.manifest()),
            (Method::Get, ["dmms", "platforms"]) => Response::ok(&registry.platforms()),
            _ => Response::not_found(&req.path),
        };
        Ok(resp)
    }
}

impl Service for DmmsService {
    fn handle(&self, req: &Request) -> Response {
        self.route(req).unwrap_or_else(|e| Response::error(&e))
    }
}
