//! Federated workflows checked against a brute-force oracle over the fixtures.

mod common;

use meshkit::federated::{
    AggregateKind, AggregateValue, Computation, ObjectFilter, PlatformStatus, ReviewDecision,
    ReviewStatus, WorkflowRequest,
};
use meshkit::mesh::Mesh;
use meshkit::node::sha256_hex;
use meshkit::Error;

use common::{fixture_json, oracle_aggregate, oracle_filters};

const USERS: [Option<&str>; 4] = [None, Some("olivia"), Some("rita"), Some("u1")];

fn request(
    id: &str,
    submitter: &str,
    filter: ObjectFilter,
    aggregate: AggregateKind,
) -> WorkflowRequest {
    WorkflowRequest {
        workflow_id: id.into(),
        approved: true,
        target_platforms: vec!["node-a".into(), "node-b".into()],
        computation: Computation { filter, aggregate },
        submitter: submitter.into(),
    }
}

fn passport(mesh: &Mesh, user: Option<&str>) -> Vec<String> {
    user.map(|u| mesh.passport(u, &format!("{u}-secret")))
        .unwrap_or_default()
}

#[test]
fn aggregates_match_oracle() {
    let mesh = Mesh::demo().unwrap();
    let exec = mesh.hub.executor();
    let mut n = 0;
    for user in USERS {
        for filter in oracle_filters() {
            for kind in [AggregateKind::Count, AggregateKind::SumSize] {
                n += 1;
                let id = format!("wf-{n}");
                let submitter = user.unwrap_or("anonymous");
                exec.submit(
                    request(&id, submitter, filter.clone(), kind),
                    passport(&mesh, user),
                )
                .unwrap();
                let result = exec.execute(&id).unwrap();
                // node-b holds results for review.
                assert_eq!(result.review_status, ReviewStatus::PendingReview);
                for (platform, file) in [("node-a", "node-a.json"), ("node-b", "node-b.json")] {
                    let got = result
                        .aggregate(platform)
                        .and_then(AggregateValue::as_number);
                    let want = oracle_aggregate(file, user, &filter, kind);
                    assert_eq!(
                        got,
                        Some(want),
                        "{user:?} {filter:?} {kind:?} on {platform}"
                    );
                }
                assert!(exec
                    .submitter_view(&id)
                    .unwrap()
                    .per_platform
                    .values()
                    .all(|r| r.aggregate.is_none()));
                let released = exec
                    .review_and_release(&id, ReviewDecision::Released, "rev")
                    .unwrap();
                assert_eq!(released.submitter_view(), released);
            }
        }
    }
}

#[test]
fn checksum_list_is_authorized_content_hashes() {
    let mesh = Mesh::demo().unwrap();
    let exec = mesh.hub.executor();
    exec.submit(
        request(
            "sums",
            "u1",
            ObjectFilter::default(),
            AggregateKind::ChecksumList,
        ),
        passport(&mesh, Some("u1")),
    )
    .unwrap();
    let result = exec.execute("sums").unwrap();
    for (platform, file) in [("node-a", "node-a.json"), ("node-b", "node-b.json")] {
        let mut want: Vec<String> = fixture_json(file)["objects"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| sha256_hex(o["content"].as_str().unwrap().as_bytes()))
            .collect();
        want.sort();
        assert_eq!(
            result.aggregate(platform),
            Some(&AggregateValue::ChecksumList(want))
        );
    }
}

#[test]
fn withheld_results_stay_hidden() {
    let mesh = Mesh::demo().unwrap();
    let hub = mesh.hub_client().with_passport(passport(&mesh, Some("u1")));
    let view = hub
        .submit_workflow(&request(
            "held",
            "u1",
            ObjectFilter::default(),
            AggregateKind::Count,
        ))
        .unwrap();
    assert_eq!(view.review_status, ReviewStatus::PendingReview);
    assert!(view.per_platform.values().all(|r| r.aggregate.is_none()));
    let withheld = hub.review("held", ReviewDecision::Withheld, "rev").unwrap();
    assert_eq!(withheld.review_status, ReviewStatus::Withheld);
    assert_eq!(withheld.reviewer.as_deref(), Some("rev"));
    let later = hub.workflow("held").unwrap();
    assert!(later.per_platform.values().all(|r| r.aggregate.is_none()));
    assert!(matches!(
        hub.review("held", ReviewDecision::Released, "rev"),
        Err(Error::NotPending(_))
    ));
}

#[test]
fn nodes_without_review_release_immediately() {
    let mesh = Mesh::demo().unwrap();
    let exec = mesh.hub.executor();
    let mut req = request(
        "a-only",
        "rita",
        ObjectFilter::default(),
        AggregateKind::Count,
    );
    req.target_platforms = vec!["node-a".into()];
    exec.submit(req, passport(&mesh, Some("rita"))).unwrap();
    let result = exec.execute("a-only").unwrap();
    assert_eq!(result.review_status, ReviewStatus::Released);
    assert_eq!(
        exec.submitter_view("a-only").unwrap().aggregate("node-a"),
        Some(&AggregateValue::Count(2))
    );
}

#[test]
fn submission_rules() {
    let mesh = Mesh::demo().unwrap();
    let exec = mesh.hub.executor();
    let mut unapproved = request("x", "u1", ObjectFilter::default(), AggregateKind::Count);
    unapproved.approved = false;
    assert!(matches!(
        exec.submit(unapproved, vec![]),
        Err(Error::NotApproved(_))
    ));

    let mut nowhere = request("y", "u1", ObjectFilter::default(), AggregateKind::Count);
    nowhere.target_platforms = vec!["node-z".into()];
    assert!(exec.submit(nowhere, vec![]).is_err());

    let mut empty = request("z", "u1", ObjectFilter::default(), AggregateKind::Count);
    empty.target_platforms.clear();
    assert!(matches!(
        exec.submit(empty, vec![]),
        Err(Error::BadRequest(_))
    ));

    exec.submit(
        request("dup", "u1", ObjectFilter::default(), AggregateKind::Count),
        vec![],
    )
    .unwrap();
    assert!(matches!(
        exec.submit(
            request("dup", "u1", ObjectFilter::default(), AggregateKind::Count),
            vec![]
        ),
        Err(Error::DuplicateWorkflow(_))
    ));
    assert!(matches!(
        exec.execute("missing"),
        Err(Error::UnknownWorkflow(_))
    ));
    assert!(matches!(
        exec.review_and_release("dup", ReviewDecision::Released, "rev"),
        Err(Error::NotPending(_))
    ));
}

#[test]
fn borrowed_token_is_rejected_per_node() {
    let mesh = Mesh::demo().unwrap();
    let exec = mesh.hub.executor();
    // rita submits with u1's tokens.
    exec.submit(
        request(
            "borrowed",
            "rita",
            ObjectFilter::default(),
            AggregateKind::Count,
        ),
        passport(&mesh, Some("u1")),
    )
    .unwrap();
    let result = exec.execute("borrowed").unwrap();
    assert!(result
        .per_platform
        .values()
        .all(|r| r.status == PlatformStatus::Rejected));
}

#[test]
fn one_node_down_leaves_the_other_intact() {
    let mesh = Mesh::demo().unwrap();
    assert!(mesh.take_down("node-b"));
    let exec = mesh.hub.executor();
    exec.submit(
        request(
            "partial",
            "u1",
            ObjectFilter::default(),
            AggregateKind::Count,
        ),
        passport(&mesh, Some("u1")),
    )
    .unwrap();
    let result = exec.execute("partial").unwrap();
    assert_eq!(result.per_platform["node-b"].status, PlatformStatus::Error);
    assert_eq!(result.per_platform["node-a"].status, PlatformStatus::Ok);
    assert_eq!(result.aggregate("node-a"), Some(&AggregateValue::Count(3)));
    assert_eq!(result.review_status, ReviewStatus::Released);
}

#[test]
fn execution_never_moves_content_through_the_hub() {
    let mesh = Mesh::demo().unwrap();
    let hub = mesh.hub_client().with_passport(passport(&mesh, Some("u1")));
    hub.submit_workflow(&request(
        "wf",
        "u1",
        ObjectFilter::default(),
        AggregateKind::SumSize,
    ))
    .unwrap();
    hub.review("wf", ReviewDecision::Released, "rev").unwrap();
    for s in common::sentinels() {
        assert_eq!(mesh.hub_capture.occurrences(s.trim().as_bytes()), 0);
    }
}
