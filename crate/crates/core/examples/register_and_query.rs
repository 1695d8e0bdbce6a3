//! Register objects with the DMMS, supplement metadata and page through the
//! public query API.

use std::collections::BTreeMap;

use meshkit::manifest::{MeshManifest, PlatformDescriptor};
use meshkit::registry::{
    Caller, ProvenanceSource, RecordFilter, RegistrationRequest, Registry, SubmittedBy,
};
use meshkit::{DataObjectType, Pid};
use serde_json::json;

fn main() -> meshkit::Result<()> {
    let manifest = MeshManifest::with_default_schemas(
        "example-mesh",
        [DataObjectType::Dataset, DataObjectType::Study],
    );
    let registry = Registry::in_memory(manifest);
    registry.add_platform(PlatformDescriptor {
        platform_id: "lab".into(),
        endpoint: "http://lab.example".into(),
        attested_requirements: Default::default(),
        access_tiers_served: Default::default(),
        accepts_usage_reports: true,
    })?;

    for (i, title) in [
        "Glioma MRI",
        "Sleep Actigraphy",
        "Cardiac Echo",
        "Retinal Scans",
    ]
    .iter()
    .enumerate()
    {
        let req = RegistrationRequest {
            object_type: DataObjectType::Dataset,
            hosting_platform_id: "lab".into(),
            primary_platform_pid: Pid::parse(&format!("guid:lab/ds-{i}"))?,
            metadata: BTreeMap::from([
                ("title".to_string(), json!(title)),
                (
                    "description".to_string(),
                    json!(format!("{title} collection")),
                ),
                ("access_tier".to_string(), json!("open")),
            ]),
            submitted_by: SubmittedBy::PlatformHarvest,
            visibility: None,
        };
        let outcome = registry.register(req.clone())?;
        let again = registry.register(req)?;
        println!(
            "{} -> {} (re-registered: same pid {})",
            title,
            outcome.record.mesh_pid,
            again.record.mesh_pid == outcome.record.mesh_pid
        );
    }

    let first = registry.all_records(&Caller::Anonymous).remove(0);
    let fields = BTreeMap::from([("title".to_string(), json!("Hub rename"))]);
    let after =
        registry.supplement_metadata(&first.mesh_pid, &fields, ProvenanceSource::HubSupplement)?;
    let last = after.provenance.last().unwrap();
    println!(
        "hub supplement of title: {:?} (title stays {:?})",
        last.outcome,
        after.title()
    );

    let mut cursor = None;
    let mut page_no = 1;
    loop {
        let page = registry.query_records(
            &RecordFilter::default(),
            &Caller::Anonymous,
            cursor.as_deref(),
            3,
        )?;
        for r in &page.items {
            println!(
                "page {page_no}: {} {:?} license={}",
                r.mesh_pid,
                r.title(),
                r.license
            );
        }
        match page.next_cursor {
            Some(c) => cursor = Some(c),
            None => break,
        }
        page_no += 1;
    }
    let hits = registry.query_records(
        &RecordFilter {
            text: Some("glioma".into()),
            ..Default::default()
        },
        &Caller::Anonymous,
        None,
        10,
    )?;
    println!("text search `glioma`: {} hit(s)", hits.items.len());
    Ok(())
}
