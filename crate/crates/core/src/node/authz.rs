use chrono::{DateTime, Utc};

use super::token::TokenState;
use super::AccessTier;
use crate::identifiers::Pid;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub granted: bool,
    pub reason: String,
}

impl Decision {
    fn grant(reason: &str) -> Self {
        Self {
            granted: true,
            reason: reason.into(),
        }
    }

    fn deny(reason: impl Into<String>) -> Self {
        Self {
            granted: false,
            reason: reason.into(),
        }
    }
}

/// The tier × token-state decision matrix.
///
/// | tier       | no token | invalid | registered | registered + visa |
/// |------------|----------|---------|------------|-------------------|
/// | open       | grant    | grant   | grant      | grant             |
/// | registered | deny     | deny    | grant      | grant             |
/// | controlled | deny     | deny    | deny       | grant             |
pub fn decide(
    tier: AccessTier,
    token: &TokenState,
    pid: &Pid,
    platform_id: &str,
    now: DateTime<Utc>,
) -> Decision {
    if tier == AccessTier::Open {
        return Decision::grant("open access");
    }
    let token = match token {
        TokenState::Absent => return Decision::deny("authentication required"),
        TokenState::Invalid(why) => return Decision::deny(format!("invalid token: {why}")),
        TokenState::Valid(t) => t,
    };
    match tier {
        AccessTier::Open => unreachable!(),
        AccessTier::Registered if token.registered => Decision::grant("registered user"),
        AccessTier::Registered => Decision::deny("registration required"),
        AccessTier::Controlled => {
            let scope = Pid::platform_scope(platform_id).ok();
            let covered = scope
                .as_ref()
                .is_some_and(|scope| token.has_live_visa_for(pid, scope, platform_id, now));
            if covered {
                Decision::grant("controlled access visa")
            } else {
                Decision::deny("missing visa")
            }
        }
    }
}
