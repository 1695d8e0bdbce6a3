//! Persistent identifiers.
//!
//! Every addressable object carries a [`Pid`] with canonical text form
//! `scheme:namespace/suffix`. Platforms and the mesh mint `guid` and `mesh`
//! identifiers locally; `doi` and `ark` identifiers are accepted as foreign,
//! parse-only schemes.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use uuid::Uuid;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PidScheme {
    Doi,
    Guid,
    Ark,
    Mesh,
}

impl PidScheme {
    pub const ALL: [PidScheme; 4] = [
        PidScheme::Doi,
        PidScheme::Guid,
        PidScheme::Ark,
        PidScheme::Mesh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PidScheme::Doi => "doi",
            PidScheme::Guid => "guid",
            PidScheme::Ark => "ark",
            PidScheme::Mesh => "mesh",
        }
    }

    /// Whether identifiers of this scheme may be minted by this software.
    pub fn is_mintable(self) -> bool {
        matches!(self, PidScheme::Guid | PidScheme::Mesh)
    }
}

impl fmt::Display for PidScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PidScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "doi" => Ok(PidScheme::Doi),
            "guid" => Ok(PidScheme::Guid),
            "ark" => Ok(PidScheme::Ark),
            "mesh" => Ok(PidScheme::Mesh),
            _ => Err(Error::MalformedPid {
                text: s.to_string(),
                reason: "unknown scheme".into(),
            }),
        }
    }
}

/// Returns true if `ns` (already lowercased) matches `[a-z0-9.-]+`.
pub fn is_valid_namespace(ns: &str) -> bool {
    !ns.is_empty()
        && ns
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'.' || b == b'-')
}

fn is_valid_suffix(suffix: &str) -> bool {
    !suffix.is_empty() && suffix.bytes().all(|b| (0x21..=0x7e).contains(&b))
}

/// A persistent identifier. Scheme and namespace are stored lowercased; the
/// suffix is case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pid {
    scheme: PidScheme,
    namespace: String,
    suffix: String,
}

impl Pid {
    pub fn new(scheme: PidScheme, namespace: &str, suffix: &str) -> Result<Self> {
        let namespace = namespace.to_ascii_lowercase();
        if !is_valid_namespace(&namespace) {
            return Err(Error::MalformedPid {
                text: format!("{scheme}:{namespace}/{suffix}"),
                reason: "namespace must match [a-z0-9.-]+".into(),
            });
        }
        if !is_valid_suffix(suffix) {
            return Err(Error::MalformedPid {
                text: format!("{scheme}:{namespace}/{suffix}"),
                reason: "suffix must be nonempty visible ASCII".into(),
            });
        }
        Ok(Self {
            scheme,
            namespace,
            suffix: suffix.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let malformed = |reason: &str| Error::MalformedPid {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let (scheme, rest) = text
            .split_once(':')
            .ok_or_else(|| malformed("missing `:` separator"))?;
        let scheme: PidScheme = scheme.parse().map_err(|_| malformed("unknown scheme"))?;
        let (namespace, suffix) = rest
            .split_once('/')
            .ok_or_else(|| malformed("missing `/` separator"))?;
        if namespace.is_empty() || suffix.is_empty() {
            return Err(malformed("empty namespace or suffix"));
        }
        Pid::new(scheme, namespace, suffix).map_err(|e| match e {
            Error::MalformedPid { reason, .. } => malformed(&reason),
            other => other,
        })
    }

    pub fn scheme(&self) -> PidScheme {
        self.scheme
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn suffix(&self) -> &str {
        &self.suffix
    }

    /// The scope PID under which a visa covers every object a platform hosts.
    pub fn platform_scope(platform_id: &str) -> Result<Self> {
        Pid::new(PidScheme::Guid, platform_id, "ALL")
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}/{}", self.scheme, self.namespace, self.suffix)
    }
}

impl FromStr for Pid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pid::parse(s)
    }
}

impl Serialize for Pid {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Pid::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Mints `guid` and `mesh` identifiers with random 128-bit suffixes and
/// refuses to hand out the same PID twice.
#[derive(Debug, Default)]
pub struct PidMinter {
    minted: Mutex<HashSet<Pid>>,
}

impl PidMinter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mint(&self, scheme: PidScheme, namespace: &str) -> Result<Pid> {
        if !scheme.is_mintable() {
            return Err(Error::UnsupportedScheme(scheme));
        }
        let mut minted = self.minted.lock().unwrap();
        loop {
            let suffix = Uuid::new_v4().hyphenated().to_string();
            let pid = Pid::new(scheme, namespace, &suffix)?;
            if minted.insert(pid.clone()) {
                return Ok(pid);
            }
        }
    }

    /// Marks an existing PID as issued, e.g. when replaying a journal.
    pub fn reserve(&self, pid: &Pid) -> bool {
        self.minted.lock().unwrap().insert(pid.clone())
    }

    pub fn minted_count(&self) -> usize {
        self.minted.lock().unwrap().len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionRecord {
    pub pid: Pid,
    pub hosting_platform_id: String,
    pub platform_endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_platform_pid: Option<Pid>,
}

impl ResolutionRecord {
    pub fn check(&self) -> Result<()> {
        if self.pid.scheme() == PidScheme::Mesh && self.primary_platform_pid.is_none() {
            return Err(Error::InvalidResolution(format!(
                "mesh PID {} has no primary platform PID",
                self.pid
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct ResolverTable {
    entries: RwLock<HashMap<Pid, ResolutionRecord>>,
}

impl ResolverTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, record: ResolutionRecord) -> Result<()> {
        record.check()?;
        self.entries
            .write()
            .unwrap()
            .insert(record.pid.clone(), record);
        Ok(())
    }

    pub fn resolve(&self, pid: &Pid) -> Result<ResolutionRecord> {
        self.entries
            .read()
            .unwrap()
            .get(pid)
            .cloned()
            .ok_or_else(|| Error::UnknownPid(pid.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Canonical grammar, written out independently of the parser.
    fn matches_mesh_grammar(text: &str, mesh_id: &str) -> bool {
        let Some(rest) = text.strip_prefix("mesh:") else {
            return false;
        };
        let Some(suffix) = rest.strip_prefix(&format!("{mesh_id}/")) else {
            return false;
        };
        let groups: Vec<&str> = suffix.split('-').collect();
        suffix.len() == 36
            && groups.iter().map(|g| g.len()).collect::<Vec<_>>() == [8, 4, 4, 4, 12]
            && suffix
                .chars()
                .all(|c| c == '-' || c.is_ascii_digit() || ('a'..='f').contains(&c))
    }

    #[test]
    fn mint_twice_gives_distinct_suffixes() {
        let minter = PidMinter::new();
        let a = minter.mint(PidScheme::Guid, "nodeA").unwrap();
        let b = minter.mint(PidScheme::Guid, "nodeA").unwrap();
        assert_ne!(a.suffix(), b.suffix());
        assert_eq!(a.namespace(), "nodea");
    }

    #[test]
    fn minted_mesh_pid_matches_canonical_grammar() {
        let pid = PidMinter::new().mint(PidScheme::Mesh, "demo-mesh").unwrap();
        assert!(matches_mesh_grammar(&pid.to_string(), "demo-mesh"), "{pid}");
    }

    #[test]
    fn minting_foreign_schemes_is_refused() {
        let minter = PidMinter::new();
        assert!(matches!(
            minter.mint(PidScheme::Doi, "10.5555"),
            Err(Error::UnsupportedScheme(PidScheme::Doi))
        ));
        assert!(matches!(
            minter.mint(PidScheme::Ark, "13030"),
            Err(Error::UnsupportedScheme(PidScheme::Ark))
        ));
    }

    #[test]
    fn parse_grammar_cases() {
        let doi = Pid::parse("doi:10.5555/abc123").unwrap();
        assert_eq!(
            (doi.scheme(), doi.namespace(), doi.suffix()),
            (PidScheme::Doi, "10.5555", "abc123")
        );
        let mesh = Pid::parse("mesh:demo-mesh/xyz").unwrap();
        assert_eq!(
            (mesh.scheme(), mesh.namespace(), mesh.suffix()),
            (PidScheme::Mesh, "demo-mesh", "xyz")
        );
        for bad in [
            "not-a-pid",
            "foo:bar/baz",
            "doi:/x",
            "doi:10.1",
            "doi:10.1/",
            "guid:a b/x",
            "guid:a/x y",
        ] {
            assert!(
                matches!(Pid::parse(bad), Err(Error::MalformedPid { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn equality_normalizes_scheme_and_namespace_only() {
        assert_eq!(
            Pid::parse("DOI:10.5555/Abc").unwrap(),
            Pid::parse("doi:10.5555/Abc").unwrap()
        );
        assert_eq!(
            Pid::parse("guid:NodeA/x").unwrap(),
            Pid::parse("guid:nodea/x").unwrap()
        );
        assert_ne!(
            Pid::parse("guid:nodea/X").unwrap(),
            Pid::parse("guid:nodea/x").unwrap()
        );
    }

    #[test]
    fn suffix_may_contain_slashes() {
        let pid = Pid::parse("doi:10.1000/journal/vol/1").unwrap();
        assert_eq!(pid.suffix(), "journal/vol/1");
        assert_eq!(pid.to_string(), "doi:10.1000/journal/vol/1");
    }

    #[test]
    fn resolve_round_trip_and_unknown() {
        let table = ResolverTable::new();
        let primary = Pid::parse("guid:nodea/s1").unwrap();
        let mesh = PidMinter::new().mint(PidScheme::Mesh, "demo-mesh").unwrap();
        table
            .insert(ResolutionRecord {
                pid: mesh.clone(),
                hosting_platform_id: "nodeA".into(),
                platform_endpoint: "http://a".into(),
                primary_platform_pid: Some(primary.clone()),
            })
            .unwrap();
        table
            .insert(ResolutionRecord {
                pid: primary.clone(),
                hosting_platform_id: "nodeA".into(),
                platform_endpoint: "http://a".into(),
                primary_platform_pid: None,
            })
            .unwrap();
        let rec = table.resolve(&mesh).unwrap();
        assert_eq!(rec.hosting_platform_id, "nodeA");
        assert_eq!(rec.primary_platform_pid, Some(primary.clone()));
        assert_eq!(table.resolve(&primary).unwrap().primary_platform_pid, None);
        let unknown = Pid::parse("guid:nodea/none").unwrap();
        assert!(matches!(
            ResolverTable::new().resolve(&unknown),
            Err(Error::UnknownPid(_))
        ));
    }

    #[test]
    fn mesh_resolution_requires_primary() {
        let table = ResolverTable::new();
        let err = table.insert(ResolutionRecord {
            pid: Pid::parse("mesh:m/x").unwrap(),
            hosting_platform_id: "a".into(),
            platform_endpoint: "http://a".into(),
            primary_platform_pid: None,
        });
        assert!(matches!(err, Err(Error::InvalidResolution(_))));
    }

    #[test]
    fn concurrent_minting_stays_unique() {
        let minter = PidMinter::new();
        let pids: Vec<Pid> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    s.spawn(|| {
                        (0..500)
                            .map(|_| minter.mint(PidScheme::Guid, "n").unwrap())
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().unwrap())
                .collect()
        });
        let unique: HashSet<_> = pids.iter().collect();
        assert_eq!(unique.len(), 4000);
        assert_eq!(minter.minted_count(), 4000);
    }

    fn arb_pid() -> impl Strategy<Value = Pid> {
        (
            prop::sample::select(PidScheme::ALL.to_vec()),
            "[a-zA-Z0-9.-]{1,16}",
            "[!-~]{1,40}",
        )
            .prop_map(|(s, ns, suffix)| Pid::new(s, &ns, &suffix).unwrap())
    }

    proptest! {
        #[test]
        fn parse_render_round_trip(pid in arb_pid()) {
            prop_assert_eq!(Pid::parse(&pid.to_string()).unwrap(), pid.clone());
            let json = serde_json::to_string(&pid).unwrap();
            prop_assert_eq!(serde_json::from_str::<Pid>(&json).unwrap(), pid);
        }
    }
}
