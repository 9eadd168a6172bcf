use std::collections::BTreeMap;
use std::path::Path;

use didgov::metering::TimeMode;
use didgov::model::{ProposalRequest, ProposalStatus, Vote};
use didgov::scenario::{run_scenario, Scenario};
use didgov::sweep::{sweep, sweep_sequential, SweepGrid};
use didgov::{
    generate_keypair, AuthzConfig, AuthzKind, ChangeSet, CoordConfig, CoordKind, CostSchedule, Did,
    EditRightLevel, ExecutionMode, GovernanceGroup, Registry,
};

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name);
    Scenario::from_file(&path).unwrap()
}

#[test]
fn golden_scenarios_are_schedule_independent_in_outcome() {
    let cheap = CostSchedule {
        base_tx: 1,
        storage_write_new: 1,
        storage_write_update: 1,
        event_base: 1,
        event_per_byte: 1,
        sig_verify: 1,
        iteration_step: 1,
    };
    for name in [
        "key-rotation-2of3.json",
        "governance-evolution.json",
        "deadline-expiry.json",
        "offchain-token-batch.json",
        "override-precedence.json",
    ] {
        let s = scenario(name);
        let (a, ea) = run_scenario(&s, Some(CostSchedule::default()));
        let (b, eb) = run_scenario(&s, Some(cheap));
        let (c, ec) = run_scenario(&s, None);
        assert!(ea.is_none() && eb.is_none() && ec.is_none(), "{name}");
        assert_eq!(a.registry.events(), b.registry.events(), "{name}");
        assert_eq!(a.registry.events(), c.registry.events(), "{name}");
        assert_eq!(a.reports.len(), b.reports.len());
        assert!(c.reports.is_empty());
    }
}

#[test]
fn key_rotation_ends_at_version_two() {
    let (run, err) = run_scenario(&scenario("key-rotation-2of3.json"), None);
    assert!(err.is_none());
    let doc = run.registry.state().documents.values().next().unwrap();
    assert_eq!(doc.version, 2);
    assert_eq!(
        run.registry.proposal(1).unwrap().status,
        ProposalStatus::Approved
    );
}

#[test]
fn parallel_and_sequential_sweeps_agree() {
    let grid = SweepGrid {
        groups: vec![1, 3],
        members: (1..=4).collect(),
        authz: vec![AuthzKind::Acl, AuthzKind::Token, AuthzKind::Vc],
        coord: vec![
            CoordKind::NOfM,
            CoordKind::TurnoutSensitive,
            CoordKind::Weighted,
        ],
        execution: vec![ExecutionMode::OnChain, ExecutionMode::OffChain],
        time: vec![TimeMode::Unlimited, TimeMode::Limited],
    };
    let a = sweep(Registry::default, &grid).unwrap();
    let b = sweep_sequential(Registry::default, &grid).unwrap();
    assert!(a.failures.is_empty());
    assert_eq!(a, b);
}

#[test]
fn lifecycle_through_public_api() {
    let members: Vec<_> = (1..=3u8).map(|i| generate_keypair([i; 32])).collect();
    let did = Did::from_public_key(&generate_keypair([9; 32]).public_key());
    let group = GovernanceGroup {
        group_id: 0,
        edit_right: EditRightLevel::All,
        authz_config: AuthzConfig::Acl {
            members: members.iter().map(|k| k.public_key()).collect(),
            weights: None,
        },
        coord_config: CoordConfig::NOfM { n: 2, m: 3 },
        execution: ExecutionMode::OnChain,
        time_limit: None,
    };
    let mut reg = Registry::default();
    reg.anchor(did.clone(), vec![], BTreeMap::new(), vec![group])
        .unwrap();

    let new_key = generate_keypair([42; 32]).public_key();
    let request = ProposalRequest::sign(
        &members[0],
        did.clone(),
        1,
        1,
        0,
        ChangeSet::key_rotation(vec![new_key]),
        None,
    );
    reg.propose(&request).unwrap();
    for k in &members[..2] {
        let d = didgov::model::Decision::sign(k, &did, 1, 1, Vote::Approve, None);
        reg.decide(&d).unwrap();
    }
    let doc = reg.document(&did).unwrap();
    assert_eq!(doc.version, 2);
    assert_eq!(doc.public_keys, vec![new_key]);

    let rebuilt = Registry::from_events(reg.events().to_vec(), None).unwrap();
    assert_eq!(rebuilt.state().to_json(), reg.state().to_json());
}
