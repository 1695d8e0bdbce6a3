//! Validate the demo governance manifest, then a broken copy, and check
//! platform eligibility against its security requirements.

use meshkit::manifest::{check_platform_eligibility, minimum_schema_for, validate_manifest};
use meshkit::mesh::MeshSpec;
use meshkit::DataObjectType;

fn main() {
    let spec = MeshSpec::demo();
    let manifest = &spec.manifest;
    println!(
        "mesh {}: {} violations",
        manifest.mesh_id,
        validate_manifest(manifest).len()
    );
    let schema = minimum_schema_for(manifest, DataObjectType::ClinicalTrial).unwrap();
    let names: Vec<&str> = schema
        .required_fields
        .iter()
        .map(|f| f.name.as_str())
        .collect();
    println!("clinical_trial requires {}", names.join(", "));

    let mut broken = manifest.clone();
    broken.schemas.remove(&DataObjectType::Study);
    broken.mesh_id = "Not A Namespace".into();
    for v in validate_manifest(&broken) {
        println!("broken: {v}");
    }

    for node in &spec.nodes {
        let mut descriptor = meshkit::node::PlatformNode::from_fixture(node.clone())
            .unwrap()
            .descriptor();
        let e = check_platform_eligibility(manifest, &descriptor);
        println!("{}: eligible {}", node.platform_id, e.eligible);
        descriptor.attested_requirements.clear();
        let e = check_platform_eligibility(manifest, &descriptor);
        println!(
            "{} without attestations: missing {:?}",
            node.platform_id, e.missing
        );
    }
}
