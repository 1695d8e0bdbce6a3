//! Keyset pagination with opaque cursors.
//!
//! A cursor encodes the sort key of the last item on the previous page, so a
//! page boundary stays put even if records are inserted elsewhere.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
}

pub fn encode_cursor(key: &[String]) -> String {
    let json = serde_json::to_vec(key).expect("string list serializes");
    URL_SAFE_NO_PAD.encode(json)
}

pub fn decode_cursor(cursor: &str) -> Result<Vec<String>> {
    let malformed = || Error::MalformedCursor(cursor.to_string());
    let bytes = URL_SAFE_NO_PAD.decode(cursor).map_err(|_| malformed())?;
    serde_json::from_slice(&bytes).map_err(|_| malformed())
}

pub fn clamp_limit(limit: Option<usize>) -> usize {
    limit.unwrap_or(DEFAULT_PAGE_SIZE).clamp(1, MAX_PAGE_SIZE)
}

/// Slices `items` (already sorted ascending by `key`) into one page.
pub fn paginate<T>(
    items: Vec<T>,
    key: impl Fn(&T) -> Vec<String>,
    cursor: Option<&str>,
    limit: usize,
) -> Result<Page<T>> {
    let after = cursor.map(decode_cursor).transpose()?;
    let limit = limit.max(1);
    let mut rest = items
        .into_iter()
        .filter(|item| after.as_ref().is_none_or(|a| key(item) > *a))
        .peekable();
    let mut page = Vec::with_capacity(limit);
    while page.len() < limit {
        match rest.next() {
            Some(item) => page.push(item),
            None => break,
        }
    }
    let next_cursor = match (rest.peek(), page.last()) {
        (Some(_), Some(last)) => Some(encode_cursor(&key(last))),
        _ => None,
    };
    Ok(Page {
        items: page,
        next_cursor,
    })
}
