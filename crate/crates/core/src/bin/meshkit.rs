//! `meshkit`: drive a mesh from the command line.
//!
//! Every command that talks to a service takes its endpoint as a flag. An
//! `http://` endpoint is called over the network; a `local://` endpoint (the
//! default) is served by an in-process mesh built from `--config`, or from
//! the shipped demo fixtures when no config is given.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use meshkit::client::{DmmsClient, HubClient, NodeClient, SearchParams};
use meshkit::conformance::{
    check_mesh, check_node, render_report, MeshDescriptor, ProbeConfig, ReportFormat,
};
use meshkit::federated::{
    AggregateKind, Computation, ObjectFilter, ReviewDecision, WorkflowRequest,
};
use meshkit::http::{HttpTransport, Transport};
use meshkit::hub::Period;
use meshkit::manifest::MeshManifest;
use meshkit::mesh::{Mesh, MeshSpec, ScenarioConfig, DMMS_LOCAL, HUB_LOCAL};
use meshkit::node::AccessTier;
use meshkit::registry::{RecordFilter, RegistrationRequest};
use meshkit::{DataObjectType, Error, Pid, Result};

#[derive(Parser)]
#[command(
    name = "meshkit",
    version,
    about = "Run and probe a federated data mesh"
)]
struct Cli {
    /// Scenario config (JSON) describing the manifest and node fixtures.
    #[arg(long, global = true, env = "MESHKIT_CONFIG")]
    config: Option<PathBuf>,
    /// Manifest file; overrides the one named in the config.
    #[arg(long, global = true, env = "MESHKIT_MANIFEST")]
    manifest: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start or inspect a mesh.
    Mesh {
        #[command(subcommand)]
        action: MeshAction,
    },
    /// Register a data object from a request file; prints its mesh PID.
    Register {
        request: PathBuf,
        #[arg(long, env = "MESHKIT_DMMS", default_value = DMMS_LOCAL)]
        dmms: String,
    },
    /// Harvest every platform into the DMMS.
    Harvest(HubArgs),
    /// Search the mesh.
    Search {
        #[command(flatten)]
        hub: HubArgs,
        #[command(flatten)]
        login: Login,
        #[arg(long)]
        q: Option<String>,
        #[arg(long = "type")]
        object_type: Option<DataObjectType>,
        #[arg(long)]
        platform: Option<String>,
        #[arg(long)]
        cursor: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Ask the hub to broker access to an object for an analysis environment.
    Access {
        mesh_pid: Pid,
        #[arg(long, default_value = "aae-1")]
        aae: String,
        #[command(flatten)]
        hub: HubArgs,
        #[command(flatten)]
        login: Login,
    },
    /// Build and deliver usage reports for a period (default: today, UTC).
    UsageReport {
        #[command(flatten)]
        hub: HubArgs,
        #[arg(long)]
        start: Option<DateTime<Utc>>,
        #[arg(long)]
        end: Option<DateTime<Utc>>,
    },
    /// Submit a federated computation and optionally review its result.
    Federate(FederateArgs),
    /// Score a node (pillars 1-5) or a mesh (pillars 6-10).
    Conformance(ConformanceArgs),
}

#[derive(Subcommand)]
enum MeshAction {
    /// Serve the DMMS, hub and every node over HTTP and print their endpoints.
    Up {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// First port: DMMS on it, hub on the next, nodes after. 0 lets the
        /// OS pick.
        #[arg(long, env = "MESHKIT_PORT_BASE")]
        port: Option<u16>,
        /// Harvest once the services are up.
        #[arg(long)]
        harvest: bool,
        /// Print the table and exit instead of serving until killed.
        #[arg(long)]
        no_wait: bool,
    },
}

#[derive(Args, Clone)]
struct HubArgs {
    #[arg(long, env = "MESHKIT_HUB", default_value = HUB_LOCAL)]
    hub: String,
    /// DMMS used to find platforms to sign in to.
    #[arg(long, env = "MESHKIT_DMMS", default_value = DMMS_LOCAL)]
    dmms: String,
}

impl HubArgs {
    fn endpoints(&self, with_dmms: bool) -> Vec<&str> {
        if with_dmms {
            vec![&self.hub, &self.dmms]
        } else {
            vec![&self.hub]
        }
    }
}

#[derive(Args, Clone, Default)]
struct Login {
    /// Sign in to every platform as this user.
    #[arg(long, requires = "secret")]
    user: Option<String>,
    #[arg(long, requires = "user")]
    secret: Option<String>,
    /// Extra bearer tokens to carry.
    #[arg(long = "token")]
    tokens: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Decision {
    Released,
    Withheld,
}

#[derive(Args)]
struct FederateArgs {
    #[command(flatten)]
    hub: HubArgs,
    #[command(flatten)]
    login: Login,
    /// Full workflow request as JSON; the flags below build one otherwise.
    #[arg(long)]
    request: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    #[arg(long, value_enum, default_value = "count")]
    aggregate: Aggregate,
    #[arg(long = "type")]
    object_type: Option<DataObjectType>,
    #[arg(long)]
    tier: Option<AccessTier>,
    #[arg(long)]
    q: Option<String>,
    /// Governance approval for the workflow.
    #[arg(long)]
    approved: bool,
    #[arg(long)]
    submitter: Option<String>,
    #[arg(long)]
    workflow_id: Option<String>,
    /// Review the result right after it runs.
    #[arg(long, value_enum)]
    review: Option<Decision>,
    #[arg(long, default_value = "reviewer")]
    reviewer: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Aggregate {
    Count,
    SumSize,
    ChecksumList,
}

#[derive(Args)]
struct ConformanceArgs {
    /// Node endpoint to probe.
    #[arg(long, conflicts_with = "mesh")]
    node: Option<String>,
    /// DMMS endpoint of the mesh to probe.
    #[arg(long, requires = "hub")]
    mesh: Option<String>,
    #[arg(long)]
    hub: Option<String>,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    /// Mesh member key, for meshes whose records are private.
    #[arg(long)]
    member_key: Option<String>,
}

/// Resolves endpoints to a transport, starting an in-process mesh when any
/// endpoint is `local://`.
struct Backend {
    transport: Arc<dyn Transport>,
    mesh: Option<Mesh>,
}

impl Backend {
    fn new(cli: &Cli, endpoints: &[&str]) -> Result<Self> {
        let local = endpoints
            .iter()
            .filter(|e| e.starts_with("local://"))
            .count();
        if local > 0 && local < endpoints.len() {
            return Err(Error::BadRequest(format!(
                "cannot mix local:// and network endpoints ({}); pass --hub and --dmms together",
                endpoints.join(", ")
            )));
        }
        if local == 0 {
            return Ok(Self {
                transport: Arc::new(HttpTransport::default()),
                mesh: None,
            });
        }
        let mesh = Mesh::local(&load_spec(cli)?)?;
        Ok(Self {
            transport: mesh.transport(),
            mesh: Some(mesh),
        })
    }

    /// In-process meshes start empty, so fill them before reading.
    fn prime(&self) {
        if let Some(mesh) = &self.mesh {
            mesh.harvest();
        }
    }

    fn dmms(&self, endpoint: &str) -> DmmsClient {
        DmmsClient::new(self.transport.clone(), endpoint)
    }

    fn passport(&self, dmms: &str, login: &Login) -> Result<Vec<String>> {
        let mut passport = login.tokens.clone();
        if let (Some(user), Some(secret)) = (&login.user, &login.secret) {
            for platform in self.dmms(dmms).platforms()? {
                match NodeClient::new(self.transport.clone(), &platform.endpoint)
                    .authenticate(user, secret)
                {
                    Ok(t) => passport.push(t.token),
                    Err(Error::BadCredentials) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(passport)
    }

    fn hub(&self, args: &HubArgs, login: &Login) -> Result<HubClient> {
        let passport = self.passport(&args.dmms, login)?;
        Ok(HubClient::new(self.transport.clone(), &args.hub).with_passport(passport))
    }
}

fn load_spec(cli: &Cli) -> Result<MeshSpec> {
    let mut spec = match &cli.config {
        Some(path) => MeshSpec::from_config(&ScenarioConfig::load(path)?)?,
        None => MeshSpec::demo(),
    };
    if let Some(path) = &cli.manifest {
        spec.manifest = MeshManifest::load(path)?;
    }
    Ok(spec)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bad = |reason: String| Error::BadFixture {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("output serializes")
        );
    } else {
        print!("{}", text());
    }
}

fn notice_line(notice: &Option<String>) -> String {
    notice
        .as_ref()
        .map(|n| format!("notice: {n}\n"))
        .unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            if cli.json {
                eprintln!(
                    "{}",
                    serde_json::to_string(&e.to_wire()).expect("error serializes")
                );
            } else {
                eprintln!("error: {e}");
                if let Error::SchemaViolation(violations) = &e {
                    for v in violations {
                        eprintln!("  {v}");
                    }
                }
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Mesh {
            action:
                MeshAction::Up {
                    host,
                    port,
                    harvest,
                    no_wait,
                },
        } => mesh_up(cli, host, *port, *harvest, *no_wait),
        Command::Register { request, dmms } => {
            let req: RegistrationRequest = read_json(request)?;
            let backend = Backend::new(cli, &[dmms])?;
            let record = backend.dmms(dmms).register(&req)?;
            emit(cli.json, &record, || format!("{}\n", record.mesh_pid));
            Ok(ExitCode::SUCCESS)
        }
        Command::Harvest(args) => {
            let backend = Backend::new(cli, &[&args.hub])?;
            let summary = HubClient::new(backend.transport.clone(), &args.hub).harvest()?;
            emit(cli.json, &summary, || {
                let mut out = String::new();
                for n in &summary.nodes {
                    out += &format!(
                        "{}\tlisted {}\tupserts {}\tnew {}\tfailures {}{}\n",
                        n.platform_id,
                        n.listed,
                        n.upserts,
                        n.new_pids,
                        n.failures.len(),
                        n.error
                            .as_ref()
                            .map(|e| format!("\terror {e}"))
                            .unwrap_or_default()
                    );
                }
                out
            });
            Ok(ExitCode::SUCCESS)
        }
        Command::Search {
            hub,
            login,
            q,
            object_type,
            platform,
            cursor,
            limit,
        } => {
            let backend = Backend::new(cli, &hub.endpoints(login.user.is_some()))?;
            backend.prime();
            let params = SearchParams {
                filter: RecordFilter {
                    object_type: *object_type,
                    hosting_platform_id: platform.clone(),
                    text: q.clone(),
                },
                cursor: cursor.clone(),
                limit: *limit,
            };
            let page = backend.hub(hub, login)?.search(&params)?;
            emit(cli.json, &page, || {
                let mut out = notice_line(&page.usage_collection_notice);
                for r in &page.body.results {
                    out += &format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        r.record.mesh_pid,
                        r.record.object_type,
                        r.record.hosting_platform_id,
                        serde_json::to_value(r.availability)
                            .unwrap()
                            .as_str()
                            .unwrap_or(""),
                        r.record.title().unwrap_or("")
                    );
                }
                if let Some(c) = &page.body.next_cursor {
                    out += &format!("next_cursor: {c}\n");
                }
                out
            });
            Ok(ExitCode::SUCCESS)
        }
        Command::Access {
            mesh_pid,
            aae,
            hub,
            login,
        } => {
            let backend = Backend::new(cli, &hub.endpoints(login.user.is_some()))?;
            backend.prime();
            let grant = backend.hub(hub, login)?.access(mesh_pid, aae)?;
            emit(cli.json, &grant, || {
                format!(
                    "{}granted {} to {} via {}\n",
                    notice_line(&grant.usage_collection_notice),
                    grant.body.pid,
                    grant.body.aae_id,
                    grant.body.transfer_url
                )
            });
            Ok(ExitCode::SUCCESS)
        }
        Command::UsageReport { hub, start, end } => {
            let now = Utc::now();
            let period = match (start, end) {
                (Some(s), Some(e)) => Period::new(*s, *e),
                (None, None) => Period::day_of(now),
                _ => {
                    return Err(Error::BadRequest(
                        "give both --start and --end, or neither".into(),
                    ))
                }
            };
            let backend = Backend::new(cli, &[&hub.hub])?;
            let summary =
                HubClient::new(backend.transport.clone(), &hub.hub).report_usage(&period)?;
            emit(cli.json, &summary, || {
                let mut out = String::new();
                for d in &summary.deliveries {
                    let status = serde_json::to_value(d.status).unwrap();
                    out += &format!(
                        "{}\t{}\tentries {}\ttotal {}\n",
                        d.report.platform_id,
                        status.as_str().unwrap_or(""),
                        d.report.entries.len(),
                        d.report.total()
                    );
                }
                out
            });
            Ok(ExitCode::SUCCESS)
        }
        Command::Federate(args) => federate(cli, args),
        Command::Conformance(args) => conformance(cli, args),
    }
}

fn mesh_up(
    cli: &Cli,
    host: &str,
    port: Option<u16>,
    harvest: bool,
    no_wait: bool,
) -> Result<ExitCode> {
    let mesh = Mesh::serve(&load_spec(cli)?, host, port)?;
    if harvest {
        mesh.harvest();
    }
    emit(cli.json, &mesh.endpoints(), || mesh.endpoint_table());
    use std::io::Write;
    std::io::stdout().flush()?;
    if !no_wait {
        loop {
            std::thread::park();
        }
    }
    mesh.shutdown();
    Ok(ExitCode::SUCCESS)
}

fn federate(cli: &Cli, args: &FederateArgs) -> Result<ExitCode> {
    let needs_dmms =
        args.login.user.is_some() || (args.request.is_none() && args.targets.is_empty());
    let backend = Backend::new(cli, &args.hub.endpoints(needs_dmms))?;
    backend.prime();
    let request = match &args.request {
        Some(path) => read_json(path)?,
        None => {
            let targets = if args.targets.is_empty() {
                backend
                    .dmms(&args.hub.dmms)
                    .platforms()?
                    .into_iter()
                    .map(|p| p.platform_id)
                    .collect()
            } else {
                args.targets.clone()
            };
            WorkflowRequest {
                workflow_id: args
                    .workflow_id
                    .clone()
                    .unwrap_or_else(|| format!("wf-{}", uuid_suffix())),
                approved: args.approved,
                target_platforms: targets,
                computation: Computation {
                    filter: ObjectFilter {
                        object_type: args.object_type,
                        access_tier: args.tier,
                        text: args.q.clone(),
                    },
                    aggregate: match args.aggregate {
                        Aggregate::Count => AggregateKind::Count,
                        Aggregate::SumSize => AggregateKind::SumSize,
                        Aggregate::ChecksumList => AggregateKind::ChecksumList,
                    },
                },
                submitter: args
                    .submitter
                    .clone()
                    .or_else(|| args.login.user.clone())
                    .unwrap_or_else(|| "anonymous".into()),
            }
        }
    };
    let hub = backend.hub(&args.hub, &args.login)?;
    let mut result = hub.submit_workflow(&request)?;
    if let Some(decision) = args.review {
        let decision = match decision {
            Decision::Released => ReviewDecision::Released,
            Decision::Withheld => ReviewDecision::Withheld,
        };
        result = hub
            .review(&request.workflow_id, decision, &args.reviewer)?
            .submitter_view();
    }
    emit(cli.json, &result, || {
        let mut out = format!(
            "workflow {}\t{}\n",
            result.workflow_id,
            serde_json::to_value(result.review_status)
                .unwrap()
                .as_str()
                .unwrap_or("")
        );
        for (platform, r) in &result.per_platform {
            let value = match &r.aggregate {
                Some(a) => serde_json::to_string(a).unwrap(),
                None => "-".into(),
            };
            let status = serde_json::to_value(r.status).unwrap();
            out += &format!(
                "{platform}\t{}\t{value}{}\n",
                status.as_str().unwrap_or(""),
                r.error
                    .as_ref()
                    .map(|e| format!("\t{e}"))
                    .unwrap_or_default()
            );
        }
        out
    });
    Ok(ExitCode::SUCCESS)
}

fn uuid_suffix() -> String {
    uuid::Uuid::new_v4().simple().to_string()[..12].to_string()
}

fn conformance(cli: &Cli, args: &ConformanceArgs) -> Result<ExitCode> {
    let format = if cli.json {
        ReportFormat::Json
    } else {
        args.format
    };
    let cfg = ProbeConfig::default();
    let report = match (&args.node, &args.mesh, &args.hub) {
        (Some(node), None, _) => {
            let backend = Backend::new(cli, &[node])?;
            check_node(backend.transport.clone(), node, &cfg)
        }
        (None, Some(dmms), Some(hub)) => {
            let backend = Backend::new(cli, &[dmms, hub])?;
            backend.prime();
            let desc = MeshDescriptor {
                dmms: dmms.clone(),
                hub: hub.clone(),
                manifest: None,
                member_key: args.member_key.clone(),
            };
            check_mesh(backend.transport.clone(), &desc, &cfg)
        }
        _ => {
            return Err(Error::BadRequest(
                "give --node <url>, or --mesh <dmms-url> --hub <hub-url>".into(),
            ))
        }
    };
    print!("{}", render_report(&report, format));
    if format == ReportFormat::Json {
        println!();
    }
    Ok(ExitCode::from(report.exit_code() as u8))
}
