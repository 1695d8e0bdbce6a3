//! Assembling a whole mesh (nodes, DMMS, hub) from fixtures, either
//! in-process over `local://` endpoints or served over HTTP.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::client::{DmmsClient, HubClient, NodeClient};
use crate::conformance::MeshDescriptor;
use crate::error::{Error, Result};
use crate::http::server::{HttpServer, ServerHandle};
use crate::http::{
    Capture, CapturingService, CapturingTransport, HttpTransport, LocalTransport, Service,
    Transport,
};
use crate::hub::{HarvestSummary, Hub, HubFaults, HubOptions, HubService};
use crate::manifest::MeshManifest;
use crate::node::{NodeFixture, NodeService, PlatformNode};
use crate::registry::{DmmsFaults, DmmsService, Registry};

const DEMO_MANIFEST: &str = include_str!("../fixtures/demo/manifest.json");
const DEMO_NODE_A: &str = include_str!("../fixtures/demo/node-a.json");
const DEMO_NODE_B: &str = include_str!("../fixtures/demo/node-b.json");

pub const DMMS_LOCAL: &str = "local://dmms";
pub const HUB_LOCAL: &str = "local://hub";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshFaults {
    pub dmms: DmmsFaults,
    pub hub: HubFaults,
}

/// On-disk description of a mesh. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub manifest: PathBuf,
    pub nodes: Vec<PathBuf>,
    #[serde(default)]
    pub hub: HubOptions,
    /// Registry journal and node audit logs go here when set.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Member API key to member name, for private records.
    #[serde(default)]
    pub members: HashMap<String, String>,
    #[serde(default)]
    pub linkage_key: Option<String>,
    #[serde(default)]
    pub faults: MeshFaults,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::BadFixture {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.nodes = cfg.nodes.iter().map(|n| base.join(n)).collect();
        cfg.output_dir = cfg.output_dir.map(|d| base.join(d));
        Ok(cfg)
    }
}

/// Everything needed to start a mesh, already parsed.
#[derive(Debug, Clone)]
pub struct MeshSpec {
    pub manifest: MeshManifest,
    pub nodes: Vec<NodeFixture>,
    pub hub: HubOptions,
    pub members: HashMap<String, String>,
    pub linkage_key: Option<String>,
    pub faults: MeshFaults,
    pub output_dir: Option<PathBuf>,
}

impl MeshSpec {
    /// The shipped two-node demo: six objects over all three tiers, three
    /// users per node, one trusted AAE.
    pub fn demo() -> Self {
        Self {
            manifest: serde_json::from_str(DEMO_MANIFEST).expect("demo manifest parses"),
            nodes: vec![
                NodeFixture::from_json(DEMO_NODE_A).expect("demo node-a parses"),
                NodeFixture::from_json(DEMO_NODE_B).expect("demo node-b parses"),
            ],
            hub: HubOptions::default(),
            members: HashMap::from([(
                "demo-member-key".to_string(),
                "consortium-analyst".to_string(),
            )]),
            linkage_key: Some("demo-linkage-key".into()),
            faults: MeshFaults::default(),
            output_dir: None,
        }
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let nodes = cfg
            .nodes
            .iter()
            .map(|p| NodeFixture::load(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            manifest: MeshManifest::load(&cfg.manifest)?,
            nodes,
            hub: cfg.hub.clone(),
            members: cfg.members.clone(),
            linkage_key: cfg.linkage_key.clone(),
            faults: cfg.faults.clone(),
            output_dir: cfg.output_dir.clone(),
        })
    }

    pub fn load(config_path: &Path) -> Result<Self> {
        Self::from_config(&ScenarioConfig::load(config_path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointRow {
    pub service: String,
    pub kind: String,
    pub url: String,
}

/// A running mesh. Dropping it stops any HTTP servers.
pub struct Mesh {
    pub registry: Arc<Registry>,
    pub hub: Arc<Hub>,
    pub nodes: Vec<Arc<PlatformNode>>,
    /// Every byte the hub sent or received.
    pub hub_capture: Capture,
    transport: Arc<dyn Transport>,
    local: Option<Arc<LocalTransport>>,
    dmms_endpoint: String,
    hub_endpoint: String,
    servers: Vec<(String, ServerHandle)>,
}

struct Parts {
    registry: Arc<Registry>,
    nodes: Vec<Arc<PlatformNode>>,
}

fn build_parts(spec: &MeshSpec, node_endpoints: &[String]) -> Result<Parts> {
    let registry = match &spec.output_dir {
        Some(dir) => Registry::open(spec.manifest.clone(), &dir.join("registry.jsonl"))?,
        None => Registry::in_memory(spec.manifest.clone()),
    };
    let mut nodes = Vec::new();
    for (fixture, endpoint) in spec.nodes.iter().zip(node_endpoints) {
        let mut node = PlatformNode::from_fixture(fixture.clone())?;
        if let Some(dir) = &spec.output_dir {
            std::fs::create_dir_all(dir)?;
            node = node.with_audit_file(dir.join(format!("audit-{}.jsonl", fixture.platform_id)));
        }
        node.set_endpoint(endpoint);
        registry.add_platform(node.descriptor())?;
        nodes.push(Arc::new(node));
    }
    Ok(Parts {
        registry: Arc::new(registry),
        nodes,
    })
}

fn build_hub(spec: &MeshSpec, registry: Arc<Registry>, transport: Arc<dyn Transport>) -> Hub {
    let mut hub = Hub::new(registry, transport)
        .with_options(spec.hub.clone())
        .with_faults(spec.faults.hub.clone());
    if let Some(key) = &spec.linkage_key {
        hub = hub.with_linkage_key(key.as_bytes());
    }
    hub
}

fn dmms_service(spec: &MeshSpec, registry: Arc<Registry>) -> DmmsService {
    DmmsService::new(registry)
        .with_members(spec.members.clone())
        .with_faults(spec.faults.dmms.clone())
}

impl Mesh {
    /// Starts every component in-process, wired over `local://` endpoints.
    pub fn local(spec: &MeshSpec) -> Result<Self> {
        let endpoints: Vec<String> = spec
            .nodes
            .iter()
            .map(|n| format!("local://{}", n.platform_id))
            .collect();
        let parts = build_parts(spec, &endpoints)?;
        let local = Arc::new(LocalTransport::new());
        let capture = Capture::new();
        let hub_transport: Arc<dyn Transport> =
            Arc::new(CapturingTransport::new(local.clone(), capture.clone()));
        let hub = Arc::new(build_hub(spec, parts.registry.clone(), hub_transport));
        for (node, endpoint) in parts.nodes.iter().zip(&endpoints) {
            local.bind(endpoint, Arc::new(NodeService::new(node.clone())));
        }
        local.bind(
            DMMS_LOCAL,
            Arc::new(dmms_service(spec, parts.registry.clone())),
        );
        let hub_service = CapturingService::new(HubService::new(hub.clone()), capture.clone());
        local.bind(HUB_LOCAL, Arc::new(hub_service));
        Ok(Self {
            registry: parts.registry,
            hub,
            nodes: parts.nodes,
            hub_capture: capture,
            transport: local.clone(),
            local: Some(local),
            dmms_endpoint: DMMS_LOCAL.into(),
            hub_endpoint: HUB_LOCAL.into(),
            servers: Vec::new(),
        })
    }

    /// Serves every component over HTTP on `host`. With `port_base` the DMMS
    /// takes that port, the hub the next, and nodes the ones after; without
    /// it the OS picks free ports.
    pub fn serve(spec: &MeshSpec, host: &str, port_base: Option<u16>) -> Result<Self> {
        let port = |offset: u16| -> Result<u16> {
            match port_base {
                None | Some(0) => Ok(0),
                Some(base) => base
                    .checked_add(offset)
                    .ok_or_else(|| Error::BadRequest(format!("port {base}+{offset} out of range"))),
            }
        };
        let dmms_server = HttpServer::bind(&format!("{host}:{}", port(0)?))?;
        let hub_server = HttpServer::bind(&format!("{host}:{}", port(1)?))?;
        let mut node_servers = Vec::new();
        for (i, _) in spec.nodes.iter().enumerate() {
            node_servers.push(HttpServer::bind(&format!(
                "{host}:{}",
                port(2 + i as u16)?
            ))?);
        }
        let endpoints: Vec<String> = node_servers.iter().map(HttpServer::url).collect();
        let parts = build_parts(spec, &endpoints)?;
        let http: Arc<dyn Transport> = Arc::new(HttpTransport::new(Duration::from_secs(10)));
        let capture = Capture::new();
        let hub_transport: Arc<dyn Transport> =
            Arc::new(CapturingTransport::new(http.clone(), capture.clone()));
        let hub = Arc::new(build_hub(spec, parts.registry.clone(), hub_transport));

        let dmms_endpoint = dmms_server.url();
        let hub_endpoint = hub_server.url();
        let mut servers = Vec::new();
        servers.push((
            "dmms".to_string(),
            dmms_server.serve(Arc::new(dmms_service(spec, parts.registry.clone()))),
        ));
        let hub_service: Arc<dyn Service> = Arc::new(CapturingService::new(
            HubService::new(hub.clone()),
            capture.clone(),
        ));
        servers.push(("hub".to_string(), hub_server.serve(hub_service)));
        for (node, server) in parts.nodes.iter().zip(node_servers) {
            servers.push((
                node.platform_id().to_string(),
                server.serve(Arc::new(NodeService::new(node.clone()))),
            ));
        }
        Ok(Self {
            registry: parts.registry,
            hub,
            nodes: parts.nodes,
            hub_capture: capture,
            transport: http,
            local: None,
            dmms_endpoint,
            hub_endpoint,
            servers,
        })
    }

    pub fn demo() -> Result<Self> {
        Self::local(&MeshSpec::demo())
    }

    /// Transport a client outside the hub should use to reach this mesh.
    pub fn transport(&self) -> Arc<dyn Transport> {
        self.transport.clone()
    }

    pub fn dmms_endpoint(&self) -> &str {
        &self.dmms_endpoint
    }

    pub fn hub_endpoint(&self) -> &str {
        &self.hub_endpoint
    }

    pub fn node(&self, platform_id: &str) -> Option<&Arc<PlatformNode>> {
        self.nodes.iter().find(|n| n.platform_id() == platform_id)
    }

    pub fn node_client(&self, platform_id: &str) -> Option<NodeClient> {
        self.node(platform_id)
            .map(|n| NodeClient::new(self.transport.clone(), &n.endpoint()))
    }

    pub fn dmms_client(&self) -> DmmsClient {
        DmmsClient::new(self.transport.clone(), &self.dmms_endpoint)
    }

    pub fn hub_client(&self) -> HubClient {
        HubClient::new(self.transport.clone(), &self.hub_endpoint)
    }

    pub fn descriptor(&self) -> MeshDescriptor {
        MeshDescriptor {
            dmms: self.dmms_endpoint.clone(),
            hub: self.hub_endpoint.clone(),
            manifest: None,
            member_key: None,
        }
    }

    pub fn harvest(&self) -> HarvestSummary {
        self.hub.harvest()
    }

    /// Signs in `username` on every node that knows them; returns the
    /// resulting passport.
    pub fn passport(&self, username: &str, secret: &str) -> Vec<String> {
        self.nodes
            .iter()
            .filter_map(|n| n.authenticate(username, secret).ok())
            .map(|t| t.token)
            .collect()
    }

    /// Makes a node unreachable (in-process meshes only).
    pub fn take_down(&self, platform_id: &str) -> bool {
        let (Some(local), Some(node)) = (&self.local, self.node(platform_id)) else {
            return false;
        };
        local.unbind(&node.endpoint()).is_some()
    }

    /// Restores a node removed with [`Mesh::take_down`].
    pub fn bring_up(&self, platform_id: &str) -> bool {
        let (Some(local), Some(node)) = (&self.local, self.node(platform_id)) else {
            return false;
        };
        local.bind(&node.endpoint(), Arc::new(NodeService::new(node.clone())));
        true
    }

    pub fn endpoints(&self) -> Vec<EndpointRow> {
        let mut rows = vec![
            EndpointRow {
                service: "dmms".into(),
                kind: "metadata service".into(),
                url: self.dmms_endpoint.clone(),
            },
            EndpointRow {
                service: "hub".into(),
                kind: "hub".into(),
                url: self.hub_endpoint.clone(),
            },
        ];
        rows.extend(self.nodes.iter().map(|n| EndpointRow {
            service: n.platform_id().to_string(),
            kind: "node".into(),
            url: n.endpoint(),
        }));
        rows
    }

    pub fn endpoint_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<12} {:<18} URL", "SERVICE", "KIND").unwrap();
        for row in self.endpoints() {
            writeln!(out, "{:<12} {:<18} {}", row.service, row.kind, row.url).unwrap();
        }
        out
    }

    pub fn shutdown(self) {
        for (_, server) in self.servers {
            server.shutdown();
        }
    }
}
