//! Serve the whole demo mesh over HTTP on OS-assigned ports and drive it
//! with the same clients used in-process.

use meshkit::client::SearchParams;
use meshkit::conformance::{check_mesh, check_node, ProbeConfig};
use meshkit::mesh::{Mesh, MeshSpec};

fn main() -> meshkit::Result<()> {
    let mesh = Mesh::serve(&MeshSpec::demo(), "127.0.0.1", Some(0))?;
    print!("{}", mesh.endpoint_table());
    let summary = mesh.hub_client().harvest()?;
    println!("harvested {} records over HTTP", summary.upserts());
    let page = mesh.hub_client().search(&SearchParams::default())?;
    println!("search returned {} records", page.body.results.len());
    let cfg = ProbeConfig::default();
    for node in &mesh.nodes {
        let (passed, total) = check_node(mesh.transport(), &node.endpoint(), &cfg).score();
        println!("{}: {passed}/{total}", node.platform_id());
    }
    let (passed, total) = check_mesh(mesh.transport(), &mesh.descriptor(), &cfg).score();
    println!("mesh: {passed}/{total}");
    let sentinel = mesh.hub_capture.occurrences(b"SENTINEL");
    println!("hosted-content bytes seen by the hub: {sentinel}");
    mesh.shutdown();
    Ok(())
}
