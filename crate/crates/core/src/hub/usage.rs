use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::identifiers::Pid;
use crate::node::AccessTier;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEvent {
    pub mesh_pid: Pid,
    pub hosting_platform_id: String,
    pub access_tier: AccessTier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub timestamp: DateTime<Utc>,
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Period {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Period {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        Self { start, end }
    }

    /// The UTC day containing `at`.
    pub fn day_of(at: DateTime<Utc>) -> Self {
        let start = at
            .date_naive()
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc();
        Self {
            start,
            end: start + Duration::days(1),
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub mesh_pid: Pid,
    pub count: u64,
    pub identities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReport {
    pub platform_id: String,
    pub period: Period,
    pub entries: Vec<UsageEntry>,
}

impl UsageReport {
    pub fn entry(&self, mesh_pid: &Pid) -> Option<&UsageEntry> {
        self.entries.iter().find(|e| &e.mesh_pid == mesh_pid)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }
}

/// Groups events inside `period` into one report per platform. Identities
/// are kept only for registered and controlled tiers, unless
/// `identify_open` is set.
pub fn aggregate_usage(
    events: &[UsageEvent],
    period: Period,
    identify_open: bool,
) -> Vec<UsageReport> {
    let mut grouped: BTreeMap<&str, BTreeMap<&Pid, (u64, BTreeSet<&str>)>> = BTreeMap::new();
    for event in events.iter().filter(|e| period.contains(e.timestamp)) {
        let slot = grouped
            .entry(&event.hosting_platform_id)
            .or_default()
            .entry(&event.mesh_pid)
            .or_default();
        slot.0 += 1;
        let identify = identify_open || event.access_tier >= AccessTier::Registered;
        if let (true, Some(subject)) = (identify, event.subject.as_deref()) {
            slot.1.insert(subject);
        }
    }
    grouped
        .into_iter()
        .map(|(platform_id, entries)| UsageReport {
            platform_id: platform_id.to_string(),
            period,
            entries: entries
                .into_iter()
                .map(|(pid, (count, ids))| UsageEntry {
                    mesh_pid: pid.clone(),
                    count,
                    identities: ids.into_iter().map(str::to_string).collect(),
                })
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn at(h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 3, 1, h, 0, 0).unwrap()
    }

    fn event(
        pid: &str,
        platform: &str,
        tier: AccessTier,
        subject: Option<&str>,
        h: u32,
    ) -> UsageEvent {
        UsageEvent {
            mesh_pid: Pid::parse(pid).unwrap(),
            hosting_platform_id: platform.into(),
            access_tier: tier,
            subject: subject.map(str::to_string),
            timestamp: at(h),
        }
    }

    #[test]
    fn open_counts_without_names_controlled_with_names() {
        let events = vec![
            event("mesh:m/open", "a", AccessTier::Open, None, 1),
            event("mesh:m/open", "a", AccessTier::Open, None, 2),
            event("mesh:m/open", "a", AccessTier::Open, None, 3),
            event("mesh:m/ctl", "a", AccessTier::Controlled, Some("u1"), 4),
            event("mesh:m/ctl", "a", AccessTier::Controlled, Some("u1"), 5),
        ];
        let reports = aggregate_usage(&events, Period::day_of(at(0)), false);
        assert_eq!(reports.len(), 1);
        let open = reports[0]
            .entry(&Pid::parse("mesh:m/open").unwrap())
            .unwrap();
        assert_eq!((open.count, open.identities.len()), (3, 0));
        let ctl = reports[0]
            .entry(&Pid::parse("mesh:m/ctl").unwrap())
            .unwrap();
        assert_eq!(
            (ctl.count, ctl.identities.clone()),
            (2, vec!["u1".to_string()])
        );
    }

    #[test]
    fn empty_period_yields_nothing() {
        let events = vec![event("mesh:m/x", "a", AccessTier::Open, None, 1)];
        let later = Period::new(at(5), at(6));
        assert!(aggregate_usage(&events, later, false).is_empty());
    }

    #[test]
    fn period_is_half_open() {
        let p = Period::new(at(1), at(2));
        assert!(p.contains(at(1)));
        assert!(!p.contains(at(2)));
    }

    fn arb_event() -> impl Strategy<Value = UsageEvent> {
        (
            0usize..4,
            0usize..2,
            0usize..3,
            proptest::option::of(0usize..3),
            0u32..24,
        )
            .prop_map(|(obj, plat, tier, who, h)| {
                let platform = ["a", "b"][plat];
                UsageEvent {
                    mesh_pid: Pid::parse(&format!("mesh:m/{platform}{obj}")).unwrap(),
                    hosting_platform_id: platform.into(),
                    access_tier: AccessTier::ALL[tier],
                    subject: who.map(|w| format!("user{w}")),
                    timestamp: at(h),
                }
            })
    }

    proptest! {
        #[test]
        fn counts_conserved_and_open_entries_anonymous(events in proptest::collection::vec(arb_event(), 0..60)) {
            let period = Period::new(at(0), at(12));
            let reports = aggregate_usage(&events, period, false);
            let in_period: Vec<_> = events.iter().filter(|e| period.contains(e.timestamp)).collect();
            let total: u64 = reports.iter().map(UsageReport::total).sum();
            prop_assert_eq!(total, in_period.len() as u64);
            for report in &reports {
                for entry in &report.entries {
                    let matching: Vec<_> = in_period
                        .iter()
                        .filter(|e| e.mesh_pid == entry.mesh_pid && e.hosting_platform_id == report.platform_id)
                        .collect();
                    prop_assert_eq!(entry.count, matching.len() as u64);
                    prop_assert!(entry.count >= entry.identities.len() as u64);
                    if matching.iter().all(|e| e.access_tier == AccessTier::Open) {
                        prop_assert!(entry.identities.is_empty());
                    }
                }
            }
        }
    }
}
