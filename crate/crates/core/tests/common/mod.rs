#![allow(dead_code)]

use std::collections::BTreeSet;

use meshkit::conformance::{check_mesh, check_node, ConformanceReport, ProbeConfig};
use meshkit::federated::{AggregateKind, ObjectFilter};
use meshkit::manifest::MetadataSchema;
use meshkit::mesh::{Mesh, MeshSpec};
use meshkit::node::AccessTier;
use meshkit::registry::DmmRecord;
use meshkit::DataObjectType;

/// One deliberately broken deployment and the pillar it should fail.
pub struct Mutation {
    pub name: &'static str,
    pub pillar: u8,
    apply: fn(&mut MeshSpec),
}

pub fn mutations() -> Vec<Mutation> {
    vec![
        Mutation {
            name: "node lists bare local ids",
            pillar: 1,
            apply: |s| s.nodes[0].faults.bare_local_ids = true,
        },
        Mutation {
            name: "node metadata endpoint disabled",
            pillar: 2,
            apply: |s| s.nodes[0].faults.disable_metadata_endpoint = true,
        },
        Mutation {
            name: "node advertises wrong checksums",
            pillar: 3,
            apply: |s| s.nodes[0].faults.corrupt_checksums = true,
        },
        Mutation {
            name: "node accepts tampered tokens",
            pillar: 4,
            apply: |s| s.nodes[0].faults.accept_tampered_tokens = true,
        },
        Mutation {
            name: "node trusts any analysis environment",
            pillar: 5,
            apply: |s| s.nodes[0].faults.accept_any_aae = true,
        },
        Mutation {
            name: "manifest supports a type without a schema",
            pillar: 6,
            apply: |s| {
                s.manifest
                    .supported_types
                    .insert(DataObjectType::ImagingObject);
                s.manifest.schemas.remove(&DataObjectType::ImagingObject);
            },
        },
        Mutation {
            name: "dmms drops a required field",
            pillar: 7,
            apply: |s| s.faults.dmms.strip_field = Some("description".into()),
        },
        Mutation {
            name: "dmms resolution broken",
            pillar: 8,
            apply: |s| s.faults.dmms.break_resolution = true,
        },
        Mutation {
            name: "hub leaks identities for open data",
            pillar: 9,
            apply: |s| s.faults.hub.leak_open_identities = true,
        },
        Mutation {
            name: "dmms omits licenses",
            pillar: 10,
            apply: |s| s.faults.dmms.drop_license = true,
        },
    ]
}

impl Mutation {
    pub fn spec(&self) -> MeshSpec {
        let mut spec = MeshSpec::demo();
        (self.apply)(&mut spec);
        spec
    }

    /// Runs the scorecard that covers this mutation's pillar.
    pub fn run(&self) -> ConformanceReport {
        let mesh = Mesh::local(&self.spec()).expect("mutated mesh starts");
        score(&mesh, self.pillar <= 5)
    }
}

pub fn score(mesh: &Mesh, node_side: bool) -> ConformanceReport {
    let cfg = ProbeConfig::default();
    if node_side {
        check_node(mesh.transport(), &mesh.nodes[0].endpoint(), &cfg)
    } else {
        mesh.harvest();
        check_mesh(mesh.transport(), &mesh.descriptor(), &cfg)
    }
}

pub fn all_pillars_pass(report: &ConformanceReport) -> bool {
    let (passed, total) = report.score();
    report.failing().is_empty() && passed == total && total == 5
}

pub fn fixture_json(name: &str) -> serde_json::Value {
    let path = format!("{}/fixtures/demo/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn record_for<'a>(records: &'a [DmmRecord], platform: &str, tier: AccessTier) -> &'a DmmRecord {
    records
        .iter()
        .find(|r| r.hosting_platform_id == platform && r.access_tier() == Some(tier))
        .unwrap_or_else(|| panic!("no {tier} record on {platform}"))
}

/// Every content string in the demo fixtures.
pub fn sentinels() -> Vec<String> {
    ["node-a.json", "node-b.json"]
        .iter()
        .flat_map(|f| {
            fixture_json(f)["objects"]
                .as_array()
                .unwrap()
                .iter()
                .map(|o| o["content"].as_str().unwrap().to_string())
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn default_schema_fields(t: DataObjectType) -> BTreeSet<String> {
    MetadataSchema::default_for(t)
        .required_fields
        .into_iter()
        .map(|f| f.name)
        .collect()
}

/// Brute-force answer for a federated count or byte sum on one node,
/// computed straight from the fixture JSON.
pub fn oracle_aggregate(
    node_file: &str,
    user: Option<&str>,
    filter: &ObjectFilter,
    kind: AggregateKind,
) -> u64 {
    let fixture = fixture_json(node_file);
    let account = user.and_then(|u| {
        fixture["users"]
            .as_array()
            .unwrap()
            .iter()
            .find(|x| x["username"] == u)
            .cloned()
    });
    let registered = account.as_ref().is_some_and(|a| a["registered"] == true);
    let visas: Vec<String> = account
        .as_ref()
        .and_then(|a| a["visas"].as_array().cloned())
        .unwrap_or_default()
        .iter()
        .map(|v| v["scope_pid"].as_str().unwrap().to_string())
        .collect();
    let mut total = 0;
    for obj in fixture["objects"].as_array().unwrap() {
        let tier = obj["access_tier"].as_str().unwrap();
        let pid = obj["pid"].as_str().unwrap();
        if filter
            .object_type
            .is_some_and(|t| t.as_str() != obj["object_type"])
        {
            continue;
        }
        if filter.access_tier.is_some_and(|t| t.as_str() != tier) {
            continue;
        }
        if let Some(q) = &filter.text {
            let q = q.to_lowercase();
            let hit = ["title", "description"].iter().any(|f| {
                obj["metadata"][*f]
                    .as_str()
                    .is_some_and(|s| s.to_lowercase().contains(&q))
            });
            if !hit {
                continue;
            }
        }
        let allowed = match tier {
            "open" => true,
            "registered" => registered,
            _ => registered && visas.iter().any(|v| v == pid),
        };
        if allowed {
            total += match kind {
                AggregateKind::SumSize => obj["content"].as_str().unwrap().len() as u64,
                _ => 1,
            };
        }
    }
    total
}

/// Filters worth checking against the demo fixtures.
pub fn oracle_filters() -> Vec<ObjectFilter> {
    let mut out = vec![ObjectFilter::default()];
    for t in [
        DataObjectType::Dataset,
        DataObjectType::Study,
        DataObjectType::SequenceFile,
    ] {
        out.push(ObjectFilter {
            object_type: Some(t),
            ..ObjectFilter::default()
        });
    }
    for tier in AccessTier::ALL {
        out.push(ObjectFilter {
            access_tier: Some(tier),
            ..ObjectFilter::default()
        });
    }
    for q in ["tumor", "STUDY", "nothing-matches"] {
        out.push(ObjectFilter {
            text: Some(q.into()),
            ..ObjectFilter::default()
        });
    }
    out
}

/// A `meshkit mesh up` child process, killed on drop.
pub struct MeshProcess {
    child: std::process::Child,
    /// `(service, url)` rows from the endpoint table.
    pub rows: Vec<(String, String)>,
}

impl MeshProcess {
    pub fn spawn(extra: &[&str]) -> Self {
        use std::io::BufRead;
        let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_meshkit"))
            .args(extra)
            .args(["mesh", "up", "--port", "0"])
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::inherit())
            .spawn()
            .expect("meshkit starts");
        let mut lines = std::io::BufReader::new(child.stdout.take().unwrap()).lines();
        let header = lines.next().expect("endpoint table").unwrap();
        assert!(
            header.starts_with("SERVICE"),
            "unexpected header `{header}`"
        );
        let mut rows = Vec::new();
        for line in lines {
            let line = line.unwrap();
            if line.trim().is_empty() {
                break;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            rows.push((cols[0].to_string(), cols[cols.len() - 1].to_string()));
            if rows.len() == 4 {
                break;
            }
        }
        Self { child, rows }
    }

    pub fn url(&self, service: &str) -> &str {
        &self
            .rows
            .iter()
            .find(|(s, _)| s == service)
            .expect("service listed")
            .1
    }
}

impl Drop for MeshProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn meshkit(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_meshkit"))
        .args(args)
        .output()
        .expect("meshkit runs")
}

/// A scenario directory holding copies of the demo fixtures, so a test can
/// edit them.
pub fn scenario_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let src = format!("{}/fixtures/demo", env!("CARGO_MANIFEST_DIR"));
    for f in [
        "manifest.json",
        "node-a.json",
        "node-b.json",
        "scenario.json",
    ] {
        std::fs::copy(format!("{src}/{f}"), dir.path().join(f)).unwrap();
    }
    dir
}
