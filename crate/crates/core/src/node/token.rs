//! Passport-style bearer tokens.
//!
//! A token is `base64url(claims JSON) "." hex(HMAC-SHA256(issuer secret, first part))`.
//! This stands in for a signed OIDC/passport token: only the issuer can mint
//! one, anyone holding the issuer secret can check it, and the claims are
//! readable without the secret.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Utc};
use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::identifiers::Pid;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisaType {
    ControlledAccessGrant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visa {
    pub visa_type: VisaType,
    pub scope_pid: Pid,
    pub issuer: String,
    pub expiry: DateTime<Utc>,
}

impl Visa {
    pub fn is_live(&self, now: DateTime<Utc>) -> bool {
        now < self.expiry
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub subject: String,
    pub issuer: String,
    pub expiry: DateTime<Utc>,
    pub registered: bool,
    #[serde(default)]
    pub visas: Vec<Visa>,
}

fn tag(secret: &[u8], payload: &str) -> Vec<u8> {
    let mut mac = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(payload.as_bytes());
    mac.finalize().into_bytes().to_vec()
}

impl Token {
    pub fn sign(&self, secret: &[u8]) -> String {
        let claims = serde_json::to_vec(self).expect("claims serialize");
        let payload = URL_SAFE_NO_PAD.encode(claims);
        let mac = hex::encode(tag(secret, &payload));
        format!("{payload}.{mac}")
    }

    /// Reads the claims without checking integrity. Callers that act on the
    /// result must treat it as a hint, not an authorization decision.
    pub fn decode_unverified(text: &str) -> Result<Token> {
        let (payload, _) = text
            .split_once('.')
            .ok_or_else(|| Error::NotAuthorized("malformed token".into()))?;
        let claims = URL_SAFE_NO_PAD
            .decode(payload)
            .map_err(|_| Error::NotAuthorized("malformed token".into()))?;
        serde_json::from_slice(&claims).map_err(|_| Error::NotAuthorized("malformed token".into()))
    }

    /// Checks tag, issuer and expiry.
    pub fn verify(text: &str, issuer: &str, secret: &[u8], now: DateTime<Utc>) -> TokenState {
        let Some((payload, mac_hex)) = text.split_once('.') else {
            return TokenState::Invalid("malformed token".into());
        };
        let Ok(mac) = hex::decode(mac_hex) else {
            return TokenState::Invalid("malformed tag".into());
        };
        let mut check = HmacSha256::new_from_slice(secret).expect("HMAC accepts any key length");
        check.update(payload.as_bytes());
        if check.verify_slice(&mac).is_err() {
            return TokenState::Invalid("integrity tag mismatch".into());
        }
        let token = match Token::decode_unverified(text) {
            Ok(t) => t,
            Err(_) => return TokenState::Invalid("malformed claims".into()),
        };
        if token.issuer != issuer {
            return TokenState::Invalid(format!("issued by `{}`", token.issuer));
        }
        if now >= token.expiry {
            return TokenState::Invalid("token expired".into());
        }
        TokenState::Valid(token)
    }

    pub fn has_live_visa_for(
        &self,
        pid: &Pid,
        platform_scope: &Pid,
        issuer: &str,
        now: DateTime<Utc>,
    ) -> bool {
        self.visas.iter().any(|v| {
            v.visa_type == VisaType::ControlledAccessGrant
                && v.issuer == issuer
                && v.is_live(now)
                && (v.scope_pid == *pid || v.scope_pid == *platform_scope)
        })
    }
}

/// What a node learned from the bearer credential on a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenState {
    Absent,
    Invalid(String),
    Valid(Token),
}

impl TokenState {
    pub fn subject(&self) -> Option<&str> {
        match self {
            TokenState::Valid(t) => Some(&t.subject),
            _ => None,
        }
    }
}

/// Flips one character of the integrity tag. Used by probes that need a
/// token which looks right but must not verify.
pub fn tamper(token: &str) -> String {
    let mut out: Vec<char> = token.chars().collect();
    if let Some(last) = out.last_mut() {
        *last = if *last == '0' { '1' } else { '0' };
    }
    out.into_iter().collect()
}

/// Splits a passport header value (`t1,t2,...`) into its tokens.
pub fn parse_passport(value: Option<&str>) -> Vec<String> {
    value
        .map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Picks the passport token whose claims name `issuer`. Integrity is left to
/// the issuing node.
pub fn token_for_issuer<'a>(passport: &'a [String], issuer: &str) -> Option<&'a str> {
    passport
        .iter()
        .find(|t| Token::decode_unverified(t).is_ok_and(|c| c.issuer == issuer))
        .map(String::as_str)
}
