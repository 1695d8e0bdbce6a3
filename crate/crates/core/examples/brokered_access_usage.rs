//! Broker access through the hub, then deliver usage reports: open objects
//! are reported as counts only, restricted ones name the users.

use chrono::{Duration, Utc};
use meshkit::hub::Period;
use meshkit::mesh::Mesh;
use meshkit::node::AccessTier;

fn main() -> meshkit::Result<()> {
    let mesh = Mesh::demo()?;
    mesh.harvest();
    let records = mesh.dmms_client().query_all(&Default::default())?;
    let on_a = |tier| {
        records
            .iter()
            .find(|r| r.hosting_platform_id == "node-a" && r.access_tier() == Some(tier))
            .unwrap()
            .mesh_pid
            .clone()
    };
    let (open, controlled) = (on_a(AccessTier::Open), on_a(AccessTier::Controlled));

    let start = Utc::now() - Duration::seconds(1);
    for user in ["rita", "u1", "rita"] {
        let hub = mesh
            .hub_client()
            .with_passport(mesh.passport(user, &format!("{user}-secret")));
        hub.access(&open, "aae-1")?;
    }
    let u1 = mesh
        .hub_client()
        .with_passport(mesh.passport("u1", "u1-secret"));
    for _ in 0..2 {
        let grant = u1.access(&controlled, "aae-1")?;
        println!("u1 -> {} via {}", grant.body.pid, grant.body.transfer_url);
    }
    match mesh.hub_client().access(&controlled, "aae-1") {
        Err(e) => println!("anonymous -> controlled: {e}"),
        Ok(_) => println!("anonymous -> controlled: unexpectedly granted"),
    }

    let period = Period::new(start, Utc::now() + Duration::seconds(1));
    let summary = mesh.hub_client().report_usage(&period)?;
    for d in &summary.deliveries {
        println!("report to {}: {:?}", d.report.platform_id, d.status);
        for e in &d.report.entries {
            println!(
                "  {} count {} identities {:?}",
                e.mesh_pid, e.count, e.identities
            );
        }
    }
    let node = mesh.node("node-a").unwrap();
    println!("node-a holds {} report(s)", node.usage_reports().len());
    Ok(())
}
