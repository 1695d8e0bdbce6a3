//! Federated execution: approved workflows run inside each target node and
//! only aggregates come back, optionally held for review before release.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::client::NodeClient;
use crate::error::{Error, Result};
use crate::http::Transport;
use crate::manifest::DataObjectType;
use crate::node::{token_for_issuer, AccessTier};
use crate::registry::Registry;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectFilter {
    pub object_type: Option<DataObjectType>,
    pub access_tier: Option<AccessTier>,
    /// Case-insensitive substring over title and description.
    pub text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateKind {
    Count,
    SumSize,
    ChecksumList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Computation {
    #[serde(default)]
    pub filter: ObjectFilter,
    pub aggregate: AggregateKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateValue {
    Count(u64),
    SumSize(u64),
    ChecksumList(Vec<String>),
}

impl AggregateValue {
    /// Count or byte sum; `None` for list aggregates.
    pub fn as_number(&self) -> Option<u64> {
        match self {
            AggregateValue::Count(n) | AggregateValue::SumSize(n) => Some(*n),
            AggregateValue::ChecksumList(_) => None,
        }
    }
}

/// Body of `POST {node}/federated/execute`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecuteRequest {
    pub computation: Computation,
    #[serde(default)]
    pub token: Option<String>,
    pub submitter: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAggregate {
    pub platform_id: String,
    pub aggregate: AggregateValue,
    pub requires_review: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowRequest {
    pub workflow_id: String,
    pub approved: bool,
    pub target_platforms: Vec<String>,
    pub computation: Computation,
    pub submitter: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatformStatus {
    Pending,
    Ok,
    Rejected,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformResult {
    pub status: PlatformStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<AggregateValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PlatformResult {
    fn pending() -> Self {
        Self {
            status: PlatformStatus::Pending,
            aggregate: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    /// Submitted but not yet executed.
    Scheduled,
    PendingReview,
    Released,
    Withheld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewDecision {
    Released,
    Withheld,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewBody {
    pub decision: ReviewDecision,
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowResult {
    pub workflow_id: String,
    pub submitter: String,
    pub per_platform: BTreeMap<String, PlatformResult>,
    pub review_status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer: Option<String>,
}

impl WorkflowResult {
    /// What the submitter may see: aggregates only once released.
    pub fn submitter_view(&self) -> WorkflowResult {
        let mut view = self.clone();
        if view.review_status != ReviewStatus::Released {
            for result in view.per_platform.values_mut() {
                result.aggregate = None;
            }
        }
        view
    }

    pub fn aggregate(&self, platform_id: &str) -> Option<&AggregateValue> {
        self.per_platform
            .get(platform_id)
            .and_then(|r| r.aggregate.as_ref())
    }
}

struct Workflow {
    request: WorkflowRequest,
    passport: Vec<String>,
    result: WorkflowResult,
}

/// Holds submitted workflows and drives their execution on target nodes.
pub struct FederatedExecutor {
    registry: Arc<Registry>,
    transport: Arc<dyn Transport>,
    workflows: Mutex<HashMap<String, Workflow>>,
}

impl FederatedExecutor {
    pub fn new(registry: Arc<Registry>, transport: Arc<dyn Transport>) -> Self {
        Self {
            registry,
            transport,
            workflows: Mutex::new(HashMap::new()),
        }
    }

    pub fn submit(
        &self,
        request: WorkflowRequest,
        passport: Vec<String>,
    ) -> Result<WorkflowResult> {
        if !request.approved {
            return Err(Error::NotApproved(request.workflow_id));
        }
        if request.target_platforms.is_empty() {
            return Err(Error::BadRequest(
                "target_platforms must not be empty".into(),
            ));
        }
        for platform in &request.target_platforms {
            self.registry.platform(platform)?;
        }
        let mut workflows = self.workflows.lock().unwrap();
        if workflows.contains_key(&request.workflow_id) {
            return Err(Error::DuplicateWorkflow(request.workflow_id));
        }
        let result = WorkflowResult {
            workflow_id: request.workflow_id.clone(),
            submitter: request.submitter.clone(),
            per_platform: request
                .target_platforms
                .iter()
                .map(|p| (p.clone(), PlatformResult::pending()))
                .collect(),
            review_status: ReviewStatus::Scheduled,
            reviewer: None,
        };
        workflows.insert(
            request.workflow_id.clone(),
            Workflow {
                request,
                passport,
                result: result.clone(),
            },
        );
        Ok(result)
    }

    fn run_on(
        &self,
        platform_id: &str,
        request: &WorkflowRequest,
        passport: &[String],
    ) -> (PlatformResult, bool) {
        let outcome = self.registry.platform(platform_id).and_then(|platform| {
            NodeClient::new(self.transport.clone(), &platform.endpoint).execute(&ExecuteRequest {
                computation: request.computation.clone(),
                token: token_for_issuer(passport, platform_id).map(str::to_string),
                submitter: request.submitter.clone(),
            })
        });
        match outcome {
            Ok(agg) if agg.platform_id == platform_id => (
                PlatformResult {
                    status: PlatformStatus::Ok,
                    aggregate: Some(agg.aggregate),
                    error: None,
                },
                agg.requires_review,
            ),
            Ok(agg) => (
                PlatformResult {
                    status: PlatformStatus::Error,
                    aggregate: None,
                    error: Some(format!("answer came from `{}`", agg.platform_id)),
                },
                false,
            ),
            Err(e) => {
                let status = match e {
                    Error::NotAuthorized(_) | Error::BadCredentials => PlatformStatus::Rejected,
                    _ => PlatformStatus::Error,
                };
                (
                    PlatformResult {
                        status,
                        aggregate: None,
                        error: Some(e.to_string()),
                    },
                    false,
                )
            }
        }
    }

    /// Runs the workflow on every target platform concurrently. A failing
    /// platform is recorded in its slot and does not affect the others.
    pub fn execute(&self, workflow_id: &str) -> Result<WorkflowResult> {
        let (request, passport) = {
            let workflows = self.workflows.lock().unwrap();
            let wf = workflows
                .get(workflow_id)
                .ok_or_else(|| Error::UnknownWorkflow(workflow_id.to_string()))?;
            if wf.result.review_status != ReviewStatus::Scheduled {
                return Ok(wf.result.clone());
            }
            (wf.request.clone(), wf.passport.clone())
        };
        let outcomes: Vec<(String, PlatformResult, bool)> = std::thread::scope(|scope| {
            let handles: Vec<_> = request
                .target_platforms
                .iter()
                .map(|p| {
                    let (request, passport) = (&request, &passport);
                    scope.spawn(move || {
                        let (result, review) = self.run_on(p, request, passport);
                        (p.clone(), result, review)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("executor thread"))
                .collect()
        });
        let needs_review = outcomes.iter().any(|(_, _, review)| *review);
        let mut workflows = self.workflows.lock().unwrap();
        let wf = workflows.get_mut(workflow_id).expect("workflow present");
        for (platform, result, _) in outcomes {
            wf.result.per_platform.insert(platform, result);
        }
        wf.result.review_status = if needs_review {
            ReviewStatus::PendingReview
        } else {
            ReviewStatus::Released
        };
        Ok(wf.result.clone())
    }

    pub fn review_and_release(
        &self,
        workflow_id: &str,
        decision: ReviewDecision,
        reviewer: &str,
    ) -> Result<WorkflowResult> {
        let mut workflows = self.workflows.lock().unwrap();
        let wf = workflows
            .get_mut(workflow_id)
            .ok_or_else(|| Error::UnknownWorkflow(workflow_id.to_string()))?;
        if wf.result.review_status != ReviewStatus::PendingReview {
            return Err(Error::NotPending(workflow_id.to_string()));
        }
        wf.result.review_status = match decision {
            ReviewDecision::Released => ReviewStatus::Released,
            ReviewDecision::Withheld => ReviewStatus::Withheld,
        };
        wf.result.reviewer = Some(reviewer.to_string());
        Ok(wf.result.clone())
    }

    /// Full result, including aggregates still under review.
    pub fn result(&self, workflow_id: &str) -> Result<WorkflowResult> {
        self.workflows
            .lock()
            .unwrap()
            .get(workflow_id)
            .map(|wf| wf.result.clone())
            .ok_or_else(|| Error::UnknownWorkflow(workflow_id.to_string()))
    }

    pub fn submitter_view(&self, workflow_id: &str) -> Result<WorkflowResult> {
        self.result(workflow_id).map(|r| r.submitter_view())
    }
}
