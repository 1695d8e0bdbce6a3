//! Print the access decision matrix for the demo node: each tier against
//! no token, a tampered token, a registered token and a visa token.

use meshkit::mesh::MeshSpec;
use meshkit::node::{tamper, AccessTier, PlatformNode};

fn main() -> meshkit::Result<()> {
    let node = PlatformNode::from_fixture(MeshSpec::demo().nodes[0].clone())?;
    let registered = node.authenticate("rita", "rita-secret")?.token;
    let visa = node.authenticate("u1", "u1-secret")?.token;
    let tampered = tamper(&registered);
    let states: [(&str, Option<&str>); 4] = [
        ("none", None),
        ("tampered", Some(&tampered)),
        ("registered", Some(&registered)),
        ("visa", Some(&visa)),
    ];
    println!(
        "{:<12} {:<10} {:<10} {:<12} visa",
        "tier", "none", "tampered", "registered"
    );
    for tier in AccessTier::ALL {
        let obj = node.objects().find(|o| o.access_tier == tier).unwrap();
        let row: Vec<String> = states
            .iter()
            .map(|(_, t)| {
                let g = node.authorize(*t, &obj.platform_pid).unwrap();
                if g.granted {
                    "grant".into()
                } else {
                    "deny".to_string()
                }
            })
            .collect();
        println!(
            "{:<12} {:<10} {:<10} {:<12} {}",
            tier.as_str(),
            row[0],
            row[1],
            row[2],
            row[3]
        );
    }

    let controlled = node
        .objects()
        .find(|o| o.access_tier == AccessTier::Controlled)
        .unwrap();
    let grant = node.transfer_to_aae(&controlled.platform_pid, "aae-1", Some(&visa))?;
    println!("transfer to aae-1: constraints {:?}", grant.constraints);
    match node.transfer_to_aae(&controlled.platform_pid, "rogue-env", Some(&visa)) {
        Err(e) => println!("transfer to rogue-env: {e}"),
        Ok(_) => println!("transfer to rogue-env: unexpectedly granted"),
    }
    Ok(())
}
