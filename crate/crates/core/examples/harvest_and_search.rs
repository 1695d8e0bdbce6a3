//! Harvest both demo nodes into the DMMS and search through the hub, first
//! anonymously and then with a passport.

use meshkit::client::SearchParams;
use meshkit::mesh::Mesh;
use meshkit::registry::RecordFilter;
use meshkit::DataObjectType;

fn main() -> meshkit::Result<()> {
    let mesh = Mesh::demo()?;
    let summary = mesh.harvest();
    for n in &summary.nodes {
        println!(
            "harvested {}: {} listed, {} new",
            n.platform_id, n.listed, n.new_pids
        );
    }
    let again = mesh.harvest();
    println!("second harvest: {} new PIDs", again.new_pids());

    let hub = mesh.hub_client().with_session("example");
    let page = hub.search(&SearchParams::default())?;
    if let Some(notice) = &page.usage_collection_notice {
        println!("notice: {notice}");
    }
    for r in &page.body.results {
        let res = mesh.dmms_client().resolve(&r.record.mesh_pid)?;
        println!(
            "{:<48} {:<14} {:?} -> {} {}",
            r.record.mesh_pid.to_string(),
            r.record.object_type.as_str(),
            r.availability,
            res.hosting_platform_id,
            res.primary_platform_pid
                .map(|p| p.to_string())
                .unwrap_or_default()
        );
    }

    let hub = mesh
        .hub_client()
        .with_session("example")
        .with_passport(mesh.passport("u1", "u1-secret"));
    let trials = hub.search(&SearchParams {
        filter: RecordFilter {
            object_type: Some(DataObjectType::ClinicalTrial),
            ..Default::default()
        },
        ..Default::default()
    })?;
    println!("clinical trials: {}", trials.body.results.len());
    let all = hub.search(&SearchParams::default())?;
    for r in &all.body.results {
        println!(
            "as u1: {} {:?}",
            r.record.title().unwrap_or(""),
            r.availability
        );
    }
    Ok(())
}
