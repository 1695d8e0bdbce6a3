use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ConformanceReport, PillarCheck, ProbeConfig, Probes, Target};
use crate::client::{DmmsClient, HubClient, NodeClient};
use crate::error::Error;
use crate::http::Transport;
use crate::hub::Period;
use crate::identifiers::PidScheme;
use crate::manifest::{minimum_schema_for, validate_manifest, MeshManifest, PlatformDescriptor};
use crate::node::AccessTier;
use crate::registry::{validate_against_schema, DmmRecord, RecordFilter};

/// Where a mesh deployment lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshDescriptor {
    pub dmms: String,
    pub hub: String,
    /// Manifest to check instead of the one the DMMS publishes.
    #[serde(default)]
    pub manifest: Option<MeshManifest>,
    /// Mesh member key, for deployments whose records are private.
    #[serde(default)]
    pub member_key: Option<String>,
}

struct Ctx<'a> {
    transport: Arc<dyn Transport>,
    cfg: &'a ProbeConfig,
    desc: &'a MeshDescriptor,
    manifest: Result<MeshManifest, String>,
    platforms: Vec<PlatformDescriptor>,
    /// Records as served, untyped, plus their typed reading where it parses.
    raw: Vec<Value>,
    records: Vec<DmmRecord>,
    anonymous_query: Result<Vec<Value>, String>,
}

impl Ctx<'_> {
    fn node(&self, platform_id: &str) -> Option<NodeClient> {
        self.platforms
            .iter()
            .find(|p| p.platform_id == platform_id)
            .map(|p| NodeClient::new(self.transport.clone(), &p.endpoint))
    }
}

pub fn check_mesh(
    transport: Arc<dyn Transport>,
    desc: &MeshDescriptor,
    cfg: &ProbeConfig,
) -> ConformanceReport {
    let target = Target::Mesh {
        dmms: desc.dmms.clone(),
        hub: desc.hub.clone(),
    };
    let anon = DmmsClient::new(transport.clone(), &desc.dmms);
    let anonymous_query = match anon.query_all_raw(&RecordFilter::default()) {
        Err(e @ Error::NodeUnreachable { .. }) => {
            return ConformanceReport::unreachable(target, 6..=10, "dmms", &e.to_string())
        }
        other => other.map_err(|e| e.to_string()),
    };
    let dmms = match &desc.member_key {
        Some(k) => anon.clone().with_member_key(k),
        None => anon,
    };
    let manifest = match &desc.manifest {
        Some(m) => Ok(m.clone()),
        None => dmms.manifest().map_err(|e| e.to_string()),
    };
    let platforms = dmms.platforms().unwrap_or_default();
    let raw = if desc.member_key.is_some() {
        dmms.query_all_raw(&RecordFilter::default())
            .unwrap_or_default()
    } else {
        anonymous_query.clone().unwrap_or_default()
    };
    let records = raw
        .iter()
        .filter_map(|v| serde_json::from_value::<DmmRecord>(v.clone()).ok())
        .collect();
    let ctx = Ctx {
        transport,
        cfg,
        desc,
        manifest,
        platforms,
        raw,
        records,
        anonymous_query,
    };
    let checks = vec![
        pillar6(&ctx),
        pillar7(&ctx),
        pillar8(&ctx, &dmms),
        pillar9(&ctx),
        pillar10(&ctx),
    ];
    ConformanceReport::new(target, checks)
}

fn pillar6(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    match &ctx.manifest {
        Err(e) => p.fail(
            "p6.manifest_present",
            e.clone(),
            "a published mesh manifest",
        ),
        Ok(m) => {
            p.pass(
                "p6.manifest_present",
                format!("mesh `{}`", m.mesh_id),
                "a published mesh manifest",
            );
            let violations = validate_manifest(m);
            let observed = if violations.is_empty() {
                "no violations".to_string()
            } else {
                violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            p.record(
                "p6.manifest_valid",
                violations.is_empty(),
                observed,
                "no violations",
            );
        }
    }
    PillarCheck::from_probes(6, p)
}

fn pillar7(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    let Ok(manifest) = &ctx.manifest else {
        p.fail(
            "p7.schemas",
            "no manifest",
            "minimum schemas to validate against",
        );
        return PillarCheck::from_probes(7, p);
    };
    p.record(
        "p7.records_present",
        !ctx.raw.is_empty(),
        format!("{} records", ctx.raw.len()),
        "at least one record",
    );
    p.record(
        "p7.records_decode",
        ctx.records.len() == ctx.raw.len(),
        format!("{} of {} decode", ctx.records.len(), ctx.raw.len()),
        "every record decodes",
    );
    for r in &ctx.records {
        let name = format!("p7.schema[{}]", r.mesh_pid);
        match minimum_schema_for(manifest, r.object_type) {
            Ok(schema) => {
                let v = validate_against_schema(&r.metadata, schema);
                let observed = if v.is_empty() {
                    "valid".to_string()
                } else {
                    v.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("; ")
                };
                p.record(name, v.is_empty(), observed, "valid");
            }
            Err(e) => p.fail(name, e.to_string(), "a schema for the record's type"),
        }
    }
    PillarCheck::from_probes(7, p)
}

fn pillar8(ctx: &Ctx, dmms: &DmmsClient) -> PillarCheck {
    let mut p = Probes::default();
    if ctx.records.is_empty() {
        p.fail("p8.records", "no records", "records to resolve");
    }
    let mesh_id = ctx.manifest.as_ref().map(|m| m.mesh_id.clone()).ok();
    for r in &ctx.records {
        let pid_ok = r.mesh_pid.scheme() == PidScheme::Mesh
            && mesh_id
                .as_deref()
                .is_none_or(|ns| r.mesh_pid.namespace() == ns);
        p.record(
            format!("p8.mesh_pid[{}]", r.mesh_pid),
            pid_ok,
            format!("{}:{}", r.mesh_pid.scheme(), r.mesh_pid.namespace()),
            format!("mesh:{}", mesh_id.as_deref().unwrap_or("<mesh id>")),
        );
        let name = format!("p8.resolve[{}]", r.mesh_pid);
        match dmms.resolve(&r.mesh_pid) {
            Ok(res) => {
                let ok = res.hosting_platform_id == r.hosting_platform_id
                    && res.primary_platform_pid.as_ref() == Some(&r.primary_platform_pid);
                let observed = format!(
                    "{} / {}",
                    res.hosting_platform_id,
                    res.primary_platform_pid
                        .map_or("none".into(), |p| p.to_string())
                );
                p.record(
                    name,
                    ok,
                    observed,
                    format!("{} / {}", r.hosting_platform_id, r.primary_platform_pid),
                );
            }
            Err(e) => p.fail(name, e.to_string(), "resolution record"),
        }
        let name = format!("p8.primary[{}]", r.mesh_pid);
        match ctx.node(&r.hosting_platform_id) {
            Some(node) => match node.metadata(&r.primary_platform_pid.to_string()) {
                Ok(m) => p.record(
                    name,
                    m.pid == r.primary_platform_pid,
                    m.pid.to_string(),
                    r.primary_platform_pid.to_string(),
                ),
                Err(e) => p.fail(name, e.to_string(), "hosting node serves the primary PID"),
            },
            None => p.fail(
                name,
                "hosting platform not listed",
                "hosting platform in the mesh",
            ),
        }
    }
    PillarCheck::from_probes(8, p)
}

fn pick<'a>(
    ctx: &'a Ctx,
    reporting: &[String],
    want: impl Fn(AccessTier) -> bool,
) -> Option<&'a DmmRecord> {
    ctx.records
        .iter()
        .find(|r| reporting.contains(&r.hosting_platform_id) && r.access_tier().is_some_and(&want))
}

fn pillar9(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    let Ok(manifest) = &ctx.manifest else {
        p.fail(
            "p9.manifest",
            "no manifest",
            "usage policy from the manifest",
        );
        return PillarCheck::from_probes(9, p);
    };
    let reporting: Vec<String> = ctx
        .platforms
        .iter()
        .filter(|pl| manifest.usage_stats_required || pl.accepts_usage_reports)
        .map(|pl| pl.platform_id.clone())
        .collect();
    if reporting.is_empty() {
        p.pass(
            "p9.applicability",
            format!(
                "usage_stats_required={}, {} platforms opted out",
                manifest.usage_stats_required,
                ctx.platforms.len()
            ),
            "reports required or accepted by some platform",
        );
        return PillarCheck::not_applicable(9, p);
    }
    let (Some(open), Some(named)) = (
        pick(ctx, &reporting, |t| t == AccessTier::Open),
        pick(ctx, &reporting, |t| t == AccessTier::Registered),
    ) else {
        p.fail(
            "p9.fixtures",
            "no open and registered record on a reporting platform",
            "one of each",
        );
        return PillarCheck::from_probes(9, p);
    };
    let Some(creds) = &ctx.cfg.registered else {
        p.fail(
            "p9.credentials",
            "probe credentials not configured",
            "a registered user",
        );
        return PillarCheck::from_probes(9, p);
    };
    let mut passport = Vec::new();
    let mut platforms: Vec<&str> = vec![
        open.hosting_platform_id.as_str(),
        named.hosting_platform_id.as_str(),
    ];
    platforms.dedup();
    for platform in &platforms {
        match ctx
            .node(platform)
            .map(|n| n.authenticate(&creds.username, &creds.secret))
        {
            Some(Ok(t)) => passport.push(t.token),
            Some(Err(e)) => p.fail(
                format!("p9.login[{platform}]"),
                e.to_string(),
                "token issued",
            ),
            None => p.fail(
                format!("p9.login[{platform}]"),
                "platform not listed",
                "token issued",
            ),
        }
    }
    let hub = HubClient::new(ctx.transport.clone(), &ctx.desc.hub).with_passport(passport);
    let start = Utc::now() - Duration::seconds(1);
    for (label, record) in [("open", open), ("registered", named)] {
        if let Err(e) = hub.access(&record.mesh_pid, &ctx.cfg.aae_id) {
            p.fail(
                format!("p9.access_{label}"),
                e.to_string(),
                "brokered grant",
            );
        }
    }
    let period = Period::new(start, Utc::now() + Duration::seconds(1));
    if let Err(e) = hub.report_usage(&period) {
        p.fail("p9.report_trigger", e.to_string(), "hub emits reports");
        return PillarCheck::from_probes(9, p);
    }
    let mut received: BTreeMap<&str, Vec<crate::hub::UsageReport>> = BTreeMap::new();
    for platform in &platforms {
        let reports = ctx
            .node(platform)
            .map(|n| n.usage_reports().unwrap_or_default())
            .unwrap_or_default();
        received.insert(
            platform,
            reports.into_iter().filter(|r| r.period == period).collect(),
        );
    }
    let entry = |record: &DmmRecord| {
        received
            .get(record.hosting_platform_id.as_str())
            .and_then(|rs| rs.iter().find_map(|r| r.entry(&record.mesh_pid).cloned()))
    };
    match entry(open) {
        Some(e) => p.record(
            "p9.open_entry",
            e.count >= 1 && e.identities.is_empty(),
            format!(
                "count {}, {} identities",
                if e.count >= 1 { ">=1" } else { "0" },
                e.identities.len()
            ),
            "count >=1, 0 identities",
        ),
        None => p.fail(
            "p9.open_entry",
            "no report entry at the node",
            "count >=1, 0 identities",
        ),
    }
    match entry(named) {
        Some(e) => p.record(
            "p9.registered_entry",
            e.identities.contains(&creds.username),
            format!(
                "identities include {}: {}",
                creds.username,
                e.identities.contains(&creds.username)
            ),
            format!("identities include {}: true", creds.username),
        ),
        None => p.fail(
            "p9.registered_entry",
            "no report entry at the node",
            "entry naming the user",
        ),
    }
    PillarCheck::from_probes(9, p)
}

fn pillar10(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    let records = match &ctx.anonymous_query {
        Ok(r) => r,
        Err(e) => {
            p.fail("p10.anonymous_query", e.clone(), "anonymous query succeeds");
            return PillarCheck::from_probes(10, p);
        }
    };
    p.pass(
        "p10.anonymous_query",
        format!("{} records", records.len()),
        "anonymous query succeeds",
    );
    for v in records {
        let pid = v.get("mesh_pid").and_then(Value::as_str).unwrap_or("?");
        let license = v.get("license").and_then(Value::as_str).unwrap_or("");
        p.record(
            format!("p10.license[{pid}]"),
            !license.trim().is_empty(),
            if license.is_empty() {
                "absent".into()
            } else {
                license.to_string()
            },
            "nonempty license",
        );
    }
    PillarCheck::from_probes(10, p)
}
