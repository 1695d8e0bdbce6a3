use std::sync::Arc;

use super::{ConformanceReport, PillarCheck, ProbeConfig, Probes, Target};
use crate::client::NodeClient;
use crate::error::Error;
use crate::http::{encode_segment, Transport};
use crate::identifiers::Pid;
use crate::node::{sha256_hex, tamper, AccessTier, MetadataResponse};

/// Fields a node must show anonymously for every object.
const PUBLIC_FIELDS: [&str; 4] = ["title", "description", "object_type", "access_tier"];

/// Grant pattern over (no token, tampered, registered, registered + visa).
type Row = [bool; 4];

fn expected_row(tier: AccessTier) -> Row {
    match tier {
        AccessTier::Open => [true, true, true, true],
        AccessTier::Registered => [false, false, true, true],
        AccessTier::Controlled => [false, false, false, true],
    }
}

fn row_text(row: Row) -> String {
    row.iter()
        .map(|g| if *g { "grant" } else { "deny" })
        .collect::<Vec<_>>()
        .join("/")
}

struct Ctx<'a> {
    client: NodeClient,
    cfg: &'a ProbeConfig,
    /// Listed identifiers exactly as the node returned them.
    listed: Vec<String>,
    metadata: Vec<Option<MetadataResponse>>,
}

pub fn check_node(
    transport: Arc<dyn Transport>,
    endpoint: &str,
    cfg: &ProbeConfig,
) -> ConformanceReport {
    let target = Target::Node {
        endpoint: endpoint.to_string(),
    };
    let client = NodeClient::new(transport, endpoint);
    let listed = match client.list_all() {
        Ok(l) => l,
        Err(e @ Error::NodeUnreachable { .. }) => {
            return ConformanceReport::unreachable(target, 1..=5, "node", &e.to_string())
        }
        Err(e) => {
            let checks = (1..=5)
                .map(|p| {
                    let mut probes = Probes::default();
                    probes.fail("listing", e.to_string(), "GET /objects succeeds");
                    PillarCheck::from_probes(p, probes)
                })
                .collect();
            return ConformanceReport::new(target, checks);
        }
    };
    let metadata = listed
        .iter()
        .map(|item| client.metadata(item).ok())
        .collect();
    let ctx = Ctx {
        client,
        cfg,
        listed,
        metadata,
    };
    let checks = vec![
        pillar1(&ctx),
        pillar2(&ctx),
        pillar3(&ctx),
        pillar4(&ctx),
        pillar5(&ctx),
    ];
    ConformanceReport::new(target, checks)
}

fn pillar1(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    p.record(
        "p1.listing_nonempty",
        !ctx.listed.is_empty(),
        format!("{} objects listed", ctx.listed.len()),
        "at least one object",
    );
    let bad: Vec<&String> = ctx
        .listed
        .iter()
        .filter(|i| Pid::parse(i).is_err())
        .collect();
    p.record(
        "p1.listed_ids_are_pids",
        bad.is_empty(),
        if bad.is_empty() {
            "all listed identifiers parse".to_string()
        } else {
            format!(
                "unparseable: {}",
                bad.iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        },
        "scheme:namespace/suffix for every listed identifier",
    );
    let mut seen = std::collections::HashSet::new();
    let dupes = ctx
        .listed
        .iter()
        .filter(|i| !seen.insert(i.as_str()))
        .count();
    p.record(
        "p1.listing_unique",
        dupes == 0,
        format!("{dupes} duplicates"),
        "0 duplicates",
    );
    PillarCheck::from_probes(1, p)
}

fn pillar2(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    if ctx.listed.is_empty() {
        p.fail(
            "p2.metadata",
            "nothing listed",
            "metadata for every listed object",
        );
    }
    for (item, meta) in ctx.listed.iter().zip(&ctx.metadata) {
        let name = format!("p2.metadata[{item}]");
        let Some(meta) = meta else {
            let err = ctx
                .client
                .metadata(item)
                .err()
                .map(|e| e.to_string())
                .unwrap_or_default();
            p.fail(name, err, "metadata resolves");
            continue;
        };
        let data_suffix = format!("/objects/{}/access", encode_segment(&meta.pid.to_string()));
        let data_ok = meta.link("data").is_some_and(|h| h.ends_with(&data_suffix));
        let license_ok = meta.link("license").is_some_and(|h| !h.trim().is_empty());
        let missing: Vec<&str> = PUBLIC_FIELDS
            .iter()
            .copied()
            .filter(|f| crate::registry::is_unfilled(meta.metadata.get(*f)))
            .collect();
        let ok = data_ok && license_ok && missing.is_empty();
        let observed = format!(
            "data link {}, license link {}, missing fields [{}]",
            if data_ok { "ok" } else { "absent or wrong" },
            if license_ok { "ok" } else { "absent" },
            missing.join(", ")
        );
        p.record(
            name,
            ok,
            observed,
            "typed data and license links; public core fields",
        );
    }
    PillarCheck::from_probes(2, p)
}

fn pillar3(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    let granted = ctx
        .listed
        .iter()
        .find_map(|item| ctx.client.access(item, None).ok().map(|d| (item, d)));
    let Some((item, descriptor)) = granted else {
        p.fail(
            "p3.open_access",
            "no object accessible anonymously",
            "at least one open object",
        );
        return PillarCheck::from_probes(3, p);
    };
    p.pass(
        "p3.open_access",
        format!("{item} accessible anonymously"),
        "at least one open object",
    );
    let Some(url) = descriptor.access_url() else {
        p.fail(
            "p3.access_url",
            "descriptor has no access method",
            "an access URL",
        );
        return PillarCheck::from_probes(3, p);
    };
    match ctx.client.fetch(url, None) {
        Ok(bytes) => {
            let digest = sha256_hex(&bytes);
            let declared = descriptor.sha256().unwrap_or("none");
            p.record(
                "p3.checksum",
                declared == digest,
                format!("declared {declared}, content hashes to {digest}"),
                "declared sha-256 equals content digest",
            );
            p.record(
                "p3.size",
                descriptor.size == bytes.len() as u64,
                format!("declared {}, fetched {}", descriptor.size, bytes.len()),
                "declared size equals content length",
            );
        }
        Err(e) => p.fail(
            "p3.access_url",
            e.to_string(),
            "content retrievable via the access URL",
        ),
    }
    PillarCheck::from_probes(3, p)
}

fn pillar4(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    let (Some(reg), Some(visa)) = (&ctx.cfg.registered, &ctx.cfg.visa_holder) else {
        p.fail(
            "p4.credentials",
            "probe credentials not configured",
            "registered and visa-holder users",
        );
        return PillarCheck::from_probes(4, p);
    };
    let reg_token = match ctx.client.authenticate(&reg.username, &reg.secret) {
        Ok(t) => {
            let ok = t.claims.registered && t.claims.subject == reg.username;
            p.record(
                "p4.token_issuance",
                ok,
                format!(
                    "subject {}, registered {}",
                    t.claims.subject, t.claims.registered
                ),
                format!("subject {}, registered true", reg.username),
            );
            t.token
        }
        Err(e) => {
            p.fail("p4.token_issuance", e.to_string(), "token issued");
            return PillarCheck::from_probes(4, p);
        }
    };
    match ctx
        .client
        .authenticate(&reg.username, &format!("{}-wrong", reg.secret))
    {
        Err(Error::BadCredentials) => {
            p.pass("p4.bad_credentials", "BAD_CREDENTIALS", "BAD_CREDENTIALS")
        }
        Err(e) => p.fail("p4.bad_credentials", e.code(), "BAD_CREDENTIALS"),
        Ok(_) => p.fail("p4.bad_credentials", "token issued", "BAD_CREDENTIALS"),
    }
    let visa_token = match ctx.client.authenticate(&visa.username, &visa.secret) {
        Ok(t) => t.token,
        Err(e) => {
            p.fail("p4.visa_token", e.to_string(), "token issued");
            return PillarCheck::from_probes(4, p);
        }
    };
    let tampered = tamper(&reg_token);
    let states: [Option<&str>; 4] = [None, Some(&tampered), Some(&reg_token), Some(&visa_token)];
    for (item, meta) in ctx.listed.iter().zip(&ctx.metadata) {
        let row: Row = states.map(|t| ctx.client.access(item, t).is_ok());
        let name = format!("p4.matrix[{item}]");
        match meta {
            Some(m) => {
                let want = expected_row(m.access_tier);
                p.record(
                    name,
                    row == want,
                    row_text(row),
                    format!("{} row {}", m.access_tier, row_text(want)),
                );
            }
            None => {
                let ok = AccessTier::ALL.iter().any(|t| expected_row(*t) == row);
                p.record(
                    name,
                    ok,
                    row_text(row),
                    "one of the open/registered/controlled rows",
                );
            }
        }
    }
    PillarCheck::from_probes(4, p)
}

fn pillar5(ctx: &Ctx) -> PillarCheck {
    let mut p = Probes::default();
    let token = ctx
        .cfg
        .visa_holder
        .as_ref()
        .and_then(|c| ctx.client.authenticate(&c.username, &c.secret).ok())
        .map(|t| t.token);
    let Some(item) = ctx.listed.first() else {
        p.fail("p5.listed_aae", "nothing listed", "an object to transfer");
        return PillarCheck::from_probes(5, p);
    };
    match ctx.client.transfer(item, &ctx.cfg.aae_id, token.as_deref()) {
        Ok(g) => p.record(
            "p5.listed_aae",
            g.aae_id == ctx.cfg.aae_id,
            format!("granted to {}", g.aae_id),
            format!("grant for {}", ctx.cfg.aae_id),
        ),
        Err(e) => p.fail("p5.listed_aae", e.code(), "grant"),
    }
    match ctx
        .client
        .transfer(item, &ctx.cfg.unlisted_aae_id, token.as_deref())
    {
        Err(Error::AaeNotAuthorized(_)) => p.pass(
            "p5.unlisted_aae",
            "AAE_NOT_AUTHORIZED",
            "AAE_NOT_AUTHORIZED",
        ),
        Err(e) => p.fail("p5.unlisted_aae", e.code(), "AAE_NOT_AUTHORIZED"),
        Ok(_) => p.fail("p5.unlisted_aae", "granted", "AAE_NOT_AUTHORIZED"),
    }
    let restricted = ctx.listed.iter().zip(&ctx.metadata).find(|(_, m)| {
        m.as_ref()
            .is_some_and(|m| m.access_tier != AccessTier::Open)
    });
    if let Some((item, _)) = restricted {
        match ctx.client.transfer(item, &ctx.cfg.aae_id, None) {
            Err(Error::NotAuthorized(_)) => p.pass(
                "p5.anonymous_restricted",
                "NOT_AUTHORIZED",
                "NOT_AUTHORIZED",
            ),
            Err(e) => p.fail("p5.anonymous_restricted", e.code(), "NOT_AUTHORIZED"),
            Ok(_) => p.fail("p5.anonymous_restricted", "granted", "NOT_AUTHORIZED"),
        }
    }
    PillarCheck::from_probes(5, p)
}
