use super::*;
use crate::coord::Ratio;
use crate::crypto::generate_keypair;
use encoding::{canonical_decode, canonical_encode};
use proptest::prelude::*;

fn kp(n: u8) -> KeyPair {
    generate_keypair([n; 32])
}

fn acl_group(id: GroupId, edit_right: EditRightLevel, members: &[u8]) -> GovernanceGroup {
    GovernanceGroup {
        group_id: id,
        edit_right,
        authz_config: AuthzConfig::Acl {
            members: members.iter().map(|&m| kp(m).public_key()).collect(),
            weights: None,
        },
        coord_config: CoordConfig::NOfM {
            n: 1,
            m: members.len() as u64,
        },
        execution: ExecutionMode::OnChain,
        time_limit: None,
    }
}

fn document() -> DidDocument {
    DidDocument {
        did: Did::from_public_key(&kp(1).public_key()),
        version: 1,
        public_keys: vec![kp(1).public_key()],
        attributes: BTreeMap::from([("service".to_owned(), "https://example.org".to_owned())]),
        groups: vec![
            acl_group(0, EditRightLevel::All, &[1, 2, 3]),
            acl_group(1, EditRightLevel::Document, &[4]),
        ],
    }
}

#[test]
fn did_parsing() {
    let did = Did::from_public_key(&kp(1).public_key());
    assert_eq!(Did::parse(did.as_str()).unwrap(), did);
    assert!(Did::parse(&did.as_str().to_uppercase()).is_err());
    assert!(Did::parse("abc").is_err());
    assert!(serde_json::from_str::<Did>("\"zz\"").is_err());
}

#[test]
fn edit_right_order() {
    use EditRightLevel::*;
    assert!(
        All > DelegatesCreation && DelegatesCreation > SelfGovernance && SelfGovernance > Document
    );
}

#[test]
fn group_validation() {
    let mut g = acl_group(0, EditRightLevel::All, &[1]);
    g.time_limit = Some(0);
    assert!(matches!(
        g.validate(),
        Err(ConfigError::InvalidGroup { group: 0, .. })
    ));
    g.time_limit = None;
    g.coord_config = CoordConfig::NOfM { n: 2, m: 1 };
    assert!(g.validate().is_err());

    let a = acl_group(0, EditRightLevel::All, &[1]);
    assert_eq!(validate_groups(&[]), Err(ConfigError::NoGroups));
    assert_eq!(
        validate_groups(&[a.clone(), a.clone()]),
        Err(ConfigError::DuplicateGroupId(0))
    );
    let b = acl_group(1, EditRightLevel::All, &[2]);
    assert_eq!(
        validate_groups(&[a, b]),
        Err(ConfigError::MultipleAllGroups)
    );
}

#[test]
fn change_set_applies_content_then_ops() {
    let doc = document();
    let replacement = GovernanceGroup {
        coord_config: CoordConfig::Weighted { threshold: 4 },
        authz_config: AuthzConfig::Acl {
            members: vec![kp(1).public_key(), kp(2).public_key(), kp(3).public_key()],
            weights: Some(vec![3, 1, 1]),
        },
        ..doc.groups[0].clone()
    };
    let cs = ChangeSet {
        new_public_keys: Some(vec![kp(9).public_key()]),
        new_attributes: None,
        group_ops: vec![
            GroupOp::ReplaceGroup {
                group_id: 0,
                group: replacement.clone(),
            },
            GroupOp::RemoveGroup { group_id: 1 },
            GroupOp::AddGroup {
                group: acl_group(5, EditRightLevel::Document, &[7]),
            },
        ],
    };
    let next = doc.apply_change_set(&cs).unwrap();
    assert_eq!(next.version, 2);
    assert_eq!(next.public_keys, vec![kp(9).public_key()]);
    assert_eq!(next.attributes, doc.attributes);
    assert_eq!(
        next.groups.iter().map(|g| g.group_id).collect::<Vec<_>>(),
        vec![0, 5]
    );
    assert_eq!(next.group(0), Some(&replacement));
    // the original is untouched
    assert_eq!(doc.version, 1);
}

#[test]
fn change_set_failures_are_reported() {
    let doc = document();
    let mismatched = ChangeSet {
        group_ops: vec![GroupOp::ReplaceGroup {
            group_id: 1,
            group: acl_group(2, EditRightLevel::Document, &[1]),
        }],
        ..Default::default()
    };
    assert_eq!(
        doc.apply_change_set(&mismatched),
        Err(ConfigError::ReplacementIdMismatch {
            target: 1,
            found: 2
        })
    );
    let remove_all = ChangeSet {
        group_ops: vec![
            GroupOp::RemoveGroup { group_id: 0 },
            GroupOp::RemoveGroup { group_id: 1 },
        ],
        ..Default::default()
    };
    assert_eq!(
        doc.apply_change_set(&remove_all),
        Err(ConfigError::NoGroups)
    );
    let unknown = ChangeSet {
        group_ops: vec![GroupOp::RemoveGroup { group_id: 42 }],
        ..Default::default()
    };
    assert_eq!(
        doc.apply_change_set(&unknown),
        Err(ConfigError::UnknownGroup(42))
    );
}

#[test]
fn group_json_projection() {
    let json = r#"{
        "group_id": 3,
        "edit_right": "self_governance",
        "authz_kind": "vc",
        "authz_config": {"trusted_issuers": [], "required_claims": {"role": "admin"}},
        "coord_kind": "turnout_sensitive",
        "coord_config": {"quorum": 2, "ratio": "1/2"},
        "execution": "off_chain",
        "time_limit": 10
    }"#;
    let g: GovernanceGroup = serde_json::from_str(json).unwrap();
    assert_eq!(
        g.coord_config,
        CoordConfig::TurnoutSensitive {
            quorum: 2,
            ratio: Ratio::new(1, 2).unwrap()
        }
    );
    assert_eq!(g.execution, ExecutionMode::OffChain);
    let back: GovernanceGroup = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
    assert_eq!(back, g);

    // fields belonging to another strategy are refused
    let wrong = json.replace(r#""quorum": 2"#, r#""quorum": 2, "threshold": 4"#);
    assert!(serde_json::from_str::<GovernanceGroup>(&wrong).is_err());
    let missing = json.replace(r#", "ratio": "1/2""#, "");
    assert!(serde_json::from_str::<GovernanceGroup>(&missing).is_err());
}

#[test]
fn event_json_shape() {
    let event = GovernanceEvent {
        sequence: 4,
        tick: 2,
        payload: EventPayload::Scheduled {
            proposal_id: 1,
            deadline: 12,
        },
    };
    let json = serde_json::to_string(&event).unwrap();
    assert_eq!(
        json,
        r#"{"sequence":4,"tick":2,"kind":"Scheduled","payload":{"proposal_id":1,"deadline":12}}"#
    );
    assert_eq!(
        serde_json::from_str::<GovernanceEvent>(&json).unwrap(),
        event
    );
}

#[test]
fn decision_encoding_is_deterministic_and_injective() {
    let did = Did::from_public_key(&kp(1).public_key());
    let a = Decision::sign(&kp(2), &did, 1, 1, Vote::Approve, None);
    assert_eq!(canonical_encode(&a), canonical_encode(&a.clone()));
    let variants = [
        Decision::sign(&kp(3), &did, 1, 1, Vote::Approve, None),
        Decision::sign(&kp(2), &did, 2, 1, Vote::Approve, None),
        Decision::sign(&kp(2), &did, 1, 2, Vote::Approve, None),
        Decision::sign(&kp(2), &did, 1, 1, Vote::Reject, None),
    ];
    for v in &variants {
        assert_ne!(canonical_encode(v), canonical_encode(&a));
    }
    assert_eq!(
        canonical_decode::<Decision>(&canonical_encode(&a)).unwrap(),
        a
    );
}

#[test]
fn decision_signature_binds_context() {
    let did = Did::from_public_key(&kp(1).public_key());
    let d = Decision::sign(&kp(2), &did, 5, 1, Vote::Approve, None);
    assert!(d.verify_signature(&did, 1));
    assert!(!d.verify_signature(&did, 2));
    let other = Did::from_public_key(&kp(3).public_key());
    assert!(!d.verify_signature(&other, 1));
    let moved = Decision {
        proposal_id: 6,
        ..d.clone()
    };
    assert!(!moved.verify_signature(&did, 1));
    let flipped = Decision {
        verdict: Vote::Reject,
        ..d
    };
    assert!(!flipped.verify_signature(&did, 1));
}

#[test]
fn proposal_request_signature() {
    let did = Did::from_public_key(&kp(1).public_key());
    let cs = ChangeSet::key_rotation(vec![kp(5).public_key()]);
    let req = ProposalRequest::sign(&kp(2), did, 1, 1, 0, cs, None);
    assert!(req.verify_signature());
    let resent = ProposalRequest {
        proposal_id: 2,
        ..req.clone()
    };
    assert!(!resent.verify_signature());
    let tampered = ProposalRequest {
        change_set: ChangeSet::key_rotation(vec![kp(6).public_key()]),
        ..req
    };
    assert!(!tampered.verify_signature());
}

fn arb_key() -> impl Strategy<Value = PublicKey> {
    any::<[u8; 32]>().prop_map(PublicKey)
}

fn arb_group(id: GroupId) -> impl Strategy<Value = GovernanceGroup> {
    let authz = prop_oneof![
        prop::collection::vec(arb_key(), 1..4).prop_flat_map(|members| {
            let n = members.len();
            (
                Just(members),
                prop::option::of(prop::collection::vec(1u64..10, n)),
            )
                .prop_map(|(members, weights)| AuthzConfig::Acl { members, weights })
        }),
        prop::collection::vec(arb_key(), 0..3)
            .prop_map(|trusted_issuers| AuthzConfig::Token { trusted_issuers }),
        (
            prop::collection::vec(arb_key(), 0..3),
            prop::collection::btree_map("[a-z]{1,5}", "[a-z0-9]{0,5}", 0..3)
        )
            .prop_map(|(trusted_issuers, required_claims)| AuthzConfig::Vc {
                trusted_issuers,
                required_claims
            }),
    ];
    let coord = prop_oneof![
        (1u64..5, 0u64..5).prop_map(|(n, extra)| CoordConfig::NOfM { n, m: n + extra }),
        (1u64..5, 1u64..5, 0u64..5).prop_map(|(q, n, extra)| CoordConfig::TurnoutSensitive {
            quorum: q,
            ratio: Ratio::new(n, n + extra).unwrap()
        }),
        (1u64..50).prop_map(|threshold| CoordConfig::Weighted { threshold }),
    ];
    let right = prop_oneof![
        Just(EditRightLevel::Document),
        Just(EditRightLevel::SelfGovernance),
        Just(EditRightLevel::DelegatesCreation),
    ];
    let exec = prop_oneof![Just(ExecutionMode::OnChain), Just(ExecutionMode::OffChain)];
    (authz, coord, right, exec, prop::option::of(1u64..100)).prop_map(
        move |(authz_config, coord_config, edit_right, execution, time_limit)| GovernanceGroup {
            group_id: id,
            edit_right,
            authz_config,
            coord_config,
            execution,
            time_limit,
        },
    )
}

fn arb_document() -> impl Strategy<Value = DidDocument> {
    (
        arb_key(),
        1u64..10,
        prop::collection::vec(arb_key(), 0..3),
        prop::collection::btree_map("[a-z]{1,6}", ".{0,8}", 0..3),
        prop::collection::vec(arb_group(0), 1..4),
    )
        .prop_map(
            |(k, version, public_keys, attributes, groups)| DidDocument {
                did: Did::from_public_key(&k),
                version,
                public_keys,
                attributes,
                groups: groups
                    .into_iter()
                    .enumerate()
                    .map(|(i, g)| GovernanceGroup {
                        group_id: i as GroupId,
                        ..g
                    })
                    .collect(),
            },
        )
}

proptest! {
    #[test]
    fn document_canonical_round_trip(doc in arb_document()) {
        let bytes = canonical_encode(&doc);
        prop_assert_eq!(canonical_decode::<DidDocument>(&bytes).unwrap(), doc.clone());
        prop_assert!(canonical_decode::<DidDocument>(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn document_json_round_trip(doc in arb_document()) {
        let json = serde_json::to_string(&doc).unwrap();
        prop_assert_eq!(serde_json::from_str::<DidDocument>(&json).unwrap(), doc);
    }

    #[test]
    fn distinct_documents_encode_differently(a in arb_document(), b in arb_document()) {
        prop_assert_eq!(a == b, canonical_encode(&a) == canonical_encode(&b));
    }

    #[test]
    fn group_encoded_size_ignores_coordination_choice(g in arb_group(0), c in arb_group(0)) {
        let swapped = GovernanceGroup { coord_config: c.coord_config, ..g.clone() };
        prop_assert_eq!(canonical_encode(&g).len(), canonical_encode(&swapped).len());
    }
}
