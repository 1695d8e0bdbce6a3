//! Mint mesh PIDs, parse the four schemes and resolve a PID to its host.

use meshkit::identifiers::{ResolutionRecord, ResolverTable};
use meshkit::{Pid, PidMinter, PidScheme};

fn main() -> meshkit::Result<()> {
    let minter = PidMinter::new();
    for _ in 0..3 {
        println!("minted {}", minter.mint(PidScheme::Mesh, "demo-mesh")?);
    }
    match minter.mint(PidScheme::Doi, "10.5555") {
        Err(e) => println!("doi: {e}"),
        Ok(p) => println!("unexpected: {p}"),
    }

    for text in [
        "doi:10.5555/node-a.st-0002",
        "ark:99999/b1-tr-0001",
        "guid:node-a/ds-0001",
        "nope",
    ] {
        match Pid::parse(text) {
            Ok(p) => println!(
                "{text} -> scheme {} namespace {} suffix {}",
                p.scheme(),
                p.namespace(),
                p.suffix()
            ),
            Err(e) => println!("{text} -> {e}"),
        }
    }

    let table = ResolverTable::new();
    let mesh_pid = minter.mint(PidScheme::Mesh, "demo-mesh")?;
    table.insert(ResolutionRecord {
        pid: mesh_pid.clone(),
        hosting_platform_id: "node-a".into(),
        platform_endpoint: "http://127.0.0.1:7102".into(),
        primary_platform_pid: Some(Pid::parse("guid:node-a/ds-0001")?),
    })?;
    let r = table.resolve(&mesh_pid)?;
    println!(
        "{mesh_pid} is hosted by {} at {}",
        r.hosting_platform_id, r.platform_endpoint
    );
    Ok(())
}
