//! Privacy-preserving record linkage with keyed-hash tokens.
//!
//! Subject identifiers are normalized (trim, lowercase) and replaced by
//! HMAC-SHA256 tokens under the mesh linkage key. Only tokens and index
//! pairs leave [`link_subjects`].

use std::collections::HashMap;

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::manifest::LinkageMode;

pub fn normalize_subject(id: &str) -> String {
    id.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkageToken(pub String);

pub fn linkage_token(key: &[u8], subject_id: &str) -> LinkageToken {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(normalize_subject(subject_id).as_bytes());
    LinkageToken(hex::encode(mac.finalize().into_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkageResult {
    pub tokens_a: Vec<LinkageToken>,
    pub tokens_b: Vec<LinkageToken>,
    /// `(index into a, index into b)`, sorted.
    pub pairs: Vec<(usize, usize)>,
}

pub fn link_subjects(
    mode: LinkageMode,
    a: &[String],
    b: &[String],
    key: &[u8],
) -> Result<LinkageResult> {
    if mode == LinkageMode::None {
        return Err(Error::LinkageDisabled);
    }
    let tokens_a: Vec<LinkageToken> = a.iter().map(|s| linkage_token(key, s)).collect();
    let tokens_b: Vec<LinkageToken> = b.iter().map(|s| linkage_token(key, s)).collect();
    let mut index: HashMap<&LinkageToken, Vec<usize>> = HashMap::new();
    for (j, t) in tokens_b.iter().enumerate() {
        index.entry(t).or_default().push(j);
    }
    let mut pairs: Vec<(usize, usize)> = tokens_a
        .iter()
        .enumerate()
        .flat_map(|(i, t)| index.get(t).into_iter().flatten().map(move |&j| (i, j)))
        .collect();
    pairs.sort_unstable();
    Ok(LinkageResult {
        tokens_a,
        tokens_b,
        pairs,
    })
}
