//! Run an approved federated count across both demo nodes. node-b requires
//! review, so nothing is visible until a reviewer releases the result.

use meshkit::federated::{
    AggregateKind, Computation, ObjectFilter, ReviewDecision, WorkflowRequest,
};
use meshkit::mesh::Mesh;

fn main() -> meshkit::Result<()> {
    let mesh = Mesh::demo()?;
    mesh.harvest();
    let hub = mesh
        .hub_client()
        .with_passport(mesh.passport("u1", "u1-secret"));
    let request = |id: &str, aggregate| WorkflowRequest {
        workflow_id: id.into(),
        approved: true,
        target_platforms: vec!["node-a".into(), "node-b".into()],
        computation: Computation {
            filter: ObjectFilter::default(),
            aggregate,
        },
        submitter: "u1".into(),
    };

    let submitted = hub.submit_workflow(&request("wf-count", AggregateKind::Count))?;
    println!("after run: {:?}", submitted.review_status);
    for (p, r) in &submitted.per_platform {
        println!(
            "  {p}: {:?} aggregate visible: {}",
            r.status,
            r.aggregate.is_some()
        );
    }
    let released = hub.review("wf-count", ReviewDecision::Released, "dac-chair")?;
    for (p, r) in &released.per_platform {
        println!("  released {p}: {:?}", r.aggregate);
    }

    hub.submit_workflow(&request("wf-size", AggregateKind::SumSize))?;
    let withheld = hub
        .review("wf-size", ReviewDecision::Withheld, "dac-chair")?
        .submitter_view();
    println!(
        "withheld: any aggregate visible = {}",
        withheld
            .per_platform
            .values()
            .any(|r| r.aggregate.is_some())
    );

    let mut unapproved = request("wf-x", AggregateKind::Count);
    unapproved.approved = false;
    match hub.submit_workflow(&unapproved) {
        Err(e) => println!("unapproved: {e}"),
        Ok(_) => println!("unapproved: unexpectedly accepted"),
    }
    Ok(())
}
