//! Link subjects across two platforms with keyed hashes: the hub sees only
//! tokens, and a different key gives different tokens but the same matches.

use meshkit::hub::link_subjects;
use meshkit::manifest::LinkageMode;

fn main() -> meshkit::Result<()> {
    let a: Vec<String> = ["P-001", " p-002", "P-003", "P-004"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let b: Vec<String> = ["p-003", "P-002 ", "P-099"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let first = link_subjects(LinkageMode::Guid, &a, &b, b"key-one")?;
    let second = link_subjects(LinkageMode::Guid, &a, &b, b"key-two")?;
    for (i, j) in &first.pairs {
        println!(
            "match: a[{i}] {:?} ~ b[{j}] {:?} token {}…",
            a[*i],
            b[*j],
            &first.tokens_a[*i].0[..16]
        );
    }
    println!(
        "same matches under a new key: {}",
        first.pairs == second.pairs
    );
    println!(
        "tokens changed under a new key: {}",
        first
            .tokens_a
            .iter()
            .zip(&second.tokens_a)
            .all(|(x, y)| x != y)
    );
    match link_subjects(LinkageMode::None, &a, &b, b"key-one") {
        Err(e) => println!("linkage off: {e}"),
        Ok(_) => println!("linkage off: unexpectedly linked"),
    }
    Ok(())
}
