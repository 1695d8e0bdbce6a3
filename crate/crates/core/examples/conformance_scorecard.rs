//! Scores the demo nodes on pillars 1-5 and the demo mesh on 6-10, then
//! breaks one node and shows the failing evidence.

use meshkit::conformance::{check_mesh, check_node, render_report, ProbeConfig, ReportFormat};
use meshkit::mesh::{Mesh, MeshSpec};

fn main() -> meshkit::Result<()> {
    let mesh = Mesh::demo()?;
    mesh.harvest();
    let cfg = ProbeConfig::default();
    for node in &mesh.nodes {
        let report = check_node(mesh.transport(), &node.endpoint(), &cfg);
        print!("{}", render_report(&report, ReportFormat::Text));
    }
    let report = check_mesh(mesh.transport(), &mesh.descriptor(), &cfg);
    print!("{}", render_report(&report, ReportFormat::Text));

    let mut spec = MeshSpec::demo();
    spec.nodes[0].faults.corrupt_checksums = true;
    let broken = Mesh::local(&spec)?;
    let report = check_node(broken.transport(), &broken.nodes[0].endpoint(), &cfg);
    println!("\nWith corrupted checksums:");
    print!("{}", render_report(&report, ReportFormat::Text));
    Ok(())
}
