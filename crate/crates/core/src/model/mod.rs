//! Domain records shared by every other module.
//!
//! Everything here is a plain value type. State only changes inside
//! [`crate::registry`].

pub mod encoding;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authz::{AuthzConfig, AuthzConfigRepr, AuthzKind};
use crate::coord::{CoordConfig, CoordConfigRepr, CoordKind, ResolutionReason, Verdict};
use crate::crypto::{domain, CredentialPresentation, KeyPair, Nonce, PublicKey, Signature};
use encoding::{tag_enum, Canonical, DecodeError, Decoder, Encoder};

pub type Tick = u64;
pub type GroupId = u64;
pub type ProposalId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid DID {0:?}: expected 64 lowercase hex characters")]
    InvalidDid(String),
    #[error("document must have at least one governance group")]
    NoGroups,
    #[error("duplicate group id {0}")]
    DuplicateGroupId(GroupId),
    #[error("at most one group may hold edit right `all`")]
    MultipleAllGroups,
    #[error("group {group}: {reason}")]
    InvalidGroup { group: GroupId, reason: String },
    #[error("unknown group id {0}")]
    UnknownGroup(GroupId),
    #[error("change set is empty")]
    EmptyChangeSet,
    #[error("replacement for group {target} carries group id {found}")]
    ReplacementIdMismatch { target: GroupId, found: GroupId },
}

/// A DID: the lowercase hex encoding of a controller public key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Did(String);

impl Did {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let ok = s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(Did(s.to_owned()))
        } else {
            Err(ConfigError::InvalidDid(s.to_owned()))
        }
    }

    pub fn from_public_key(key: &PublicKey) -> Self {
        Did(key.to_hex())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Did {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Did::parse(&s)
    }
}

impl From<Did> for String {
    fn from(did: Did) -> String {
        did.0
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Edit right levels, declared in ascending privilege so the derived `Ord`
/// gives `All > DelegatesCreation > SelfGovernance > Document`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditRightLevel {
    Document,
    SelfGovernance,
    DelegatesCreation,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    OnChain,
    OffChain,
}

impl ExecutionMode {
    pub fn label(self) -> &'static str {
        match self {
            ExecutionMode::OnChain => "onchain",
            ExecutionMode::OffChain => "offchain",
        }
    }
}

/// Governance settings bundle: who may act (authorization), how decisions
/// combine (coordination), where decisions are collected, how long the
/// process may run, and what its proposals may touch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GroupRepr", into = "GroupRepr")]
pub struct GovernanceGroup {
    pub group_id: GroupId,
    pub edit_right: EditRightLevel,
    pub authz_config: AuthzConfig,
    pub coord_config: CoordConfig,
    pub execution: ExecutionMode,
    pub time_limit: Option<Tick>,
}

impl GovernanceGroup {
    pub fn authz_kind(&self) -> AuthzKind {
        self.authz_config.kind()
    }

    pub fn coord_kind(&self) -> CoordKind {
        self.coord_config.kind()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |reason: String| ConfigError::InvalidGroup {
            group: self.group_id,
            reason,
        };
        self.authz_config.validate().map_err(invalid)?;
        self.coord_config.validate().map_err(invalid)?;
        if self.time_limit == Some(0) {
            return Err(invalid("time limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupRepr {
    group_id: GroupId,
    edit_right: EditRightLevel,
    authz_kind: AuthzKind,
    authz_config: AuthzConfigRepr,
    coord_kind: CoordKind,
    coord_config: CoordConfigRepr,
    execution: ExecutionMode,
    #[serde(default)]
    time_limit: Option<Tick>,
}

impl TryFrom<GroupRepr> for GovernanceGroup {
    type Error = String;

    fn try_from(r: GroupRepr) -> Result<Self, String> {
        Ok(GovernanceGroup {
            group_id: r.group_id,
            edit_right: r.edit_right,
            authz_config: AuthzConfig::from_repr(r.authz_kind, r.authz_config)?,
            coord_config: CoordConfig::from_repr(r.coord_kind, r.coord_config)?,
            execution: r.execution,
            time_limit: r.time_limit,
        })
    }
}

impl From<GovernanceGroup> for GroupRepr {
    fn from(g: GovernanceGroup) -> Self {
        GroupRepr {
            group_id: g.group_id,
            edit_right: g.edit_right,
            authz_kind: g.authz_kind(),
            authz_config: g.authz_config.to_repr(),
            coord_kind: g.coord_kind(),
            coord_config: g.coord_config.to_repr(),
            execution: g.execution,
            time_limit: g.time_limit,
        }
    }
}

/// Validates a group list as it would sit on an anchored document.
pub fn validate_groups(groups: &[GovernanceGroup]) -> Result<(), ConfigError> {
    if groups.is_empty() {
        return Err(ConfigError::NoGroups);
    }
    let mut ids = BTreeSet::new();
    let mut all_count = 0;
    for group in groups {
        if !ids.insert(group.group_id) {
            return Err(ConfigError::DuplicateGroupId(group.group_id));
        }
        if group.edit_right == EditRightLevel::All {
            all_count += 1;
        }
        group.validate()?;
    }
    if all_count > 1 {
        return Err(ConfigError::MultipleAllGroups);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub did: Did,
    pub version: u64,
    pub public_keys: Vec<PublicKey>,
    pub attributes: BTreeMap<String, String>,
    pub groups: Vec<GovernanceGroup>,
}

impl DidDocument {
    pub fn group(&self, id: GroupId) -> Option<&GovernanceGroup> {
        self.groups.iter().find(|g| g.group_id == id)
    }

    /// Returns the document that results from applying `change_set`, with the
    /// version bumped by one. Content first, then group ops in order.
    pub fn apply_change_set(&self, change_set: &ChangeSet) -> Result<DidDocument, ConfigError> {
        let mut next = self.clone();
        if let Some(keys) = &change_set.new_public_keys {
            next.public_keys = keys.clone();
        }
        if let Some(attrs) = &change_set.new_attributes {
            next.attributes = attrs.clone();
        }
        for op in &change_set.group_ops {
            match op {
                GroupOp::AddGroup { group } => next.groups.push(group.clone()),
                GroupOp::ReplaceGroup { group_id, group } => {
                    if group.group_id != *group_id {
                        return Err(ConfigError::ReplacementIdMismatch {
                            target: *group_id,
                            found: group.group_id,
                        });
                    }
                    let slot = next
                        .groups
                        .iter_mut()
                        .find(|g| g.group_id == *group_id)
                        .ok_or(ConfigError::UnknownGroup(*group_id))?;
                    *slot = group.clone();
                }
                GroupOp::RemoveGroup { group_id } => {
                    let before = next.groups.len();
                    next.groups.retain(|g| g.group_id != *group_id);
                    if next.groups.len() == before {
                        return Err(ConfigError::UnknownGroup(*group_id));
                    }
                }
            }
        }
        validate_groups(&next.groups)?;
        next.version += 1;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum GroupOp {
    AddGroup {
        group: GovernanceGroup,
    },
    ReplaceGroup {
        group_id: GroupId,
        group: GovernanceGroup,
    },
    RemoveGroup {
        group_id: GroupId,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    #[serde(default)]
    pub new_public_keys: Option<Vec<PublicKey>>,
    #[serde(default)]
    pub new_attributes: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub group_ops: Vec<GroupOp>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.new_public_keys.is_none() && self.new_attributes.is_none() && self.group_ops.is_empty()
    }

    pub fn touches_content(&self) -> bool {
        self.new_public_keys.is_some() || self.new_attributes.is_some()
    }

    pub fn key_rotation(keys: Vec<PublicKey>) -> Self {
        ChangeSet {
            new_public_keys: Some(keys),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Active,
    Approved,
    Rejected,
    Overridden,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateProposal {
    pub proposal_id: ProposalId,
    pub did: Did,
    pub base_version: u64,
    pub originating_group: GroupId,
    pub change_set: ChangeSet,
    pub created_at: Tick,
    pub deadline: Option<Tick>,
    pub status: ProposalStatus,
}

/// A proposal submission as sent by a controller. The signature stands in
/// for the ledger's transaction signature and pins the proposal id the
/// proposer expects to be assigned, so a captured request cannot be resent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalRequest {
    pub did: Did,
    pub proposal_id: ProposalId,
    pub base_version: u64,
    pub originating_group: GroupId,
    pub change_set: ChangeSet,
    pub proposer_key: PublicKey,
    #[serde(default)]
    pub credential: Option<CredentialPresentation>,
    pub signature: Signature,
}

impl ProposalRequest {
    pub fn signing_payload(
        did: &Did,
        proposal_id: ProposalId,
        base_version: u64,
        originating_group: GroupId,
        change_set: &ChangeSet,
    ) -> Vec<u8> {
        let mut enc = Encoder::with_domain(domain::PROPOSAL);
        enc.put(did);
        enc.u64(proposal_id);
        enc.u64(base_version);
        enc.u64(originating_group);
        enc.put(change_set);
        enc.finish()
    }

    pub fn sign(
        proposer: &KeyPair,
        did: Did,
        proposal_id: ProposalId,
        base_version: u64,
        originating_group: GroupId,
        change_set: ChangeSet,
        credential: Option<CredentialPresentation>,
    ) -> Self {
        let payload = Self::signing_payload(
            &did,
            proposal_id,
            base_version,
            originating_group,
            &change_set,
        );
        ProposalRequest {
            signature: proposer.sign(&payload),
            did,
            proposal_id,
            base_version,
            originating_group,
            change_set,
            proposer_key: proposer.public_key(),
            credential,
        }
    }

    pub fn verify_signature(&self) -> bool {
        let payload = Self::signing_payload(
            &self.did,
            self.proposal_id,
            self.base_version,
            self.originating_group,
            &self.change_set,
        );
        self.proposer_key.verify(&payload, &self.signature)
    }
}

/// A controller's verdict on a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub proposal_id: ProposalId,
    pub controller_key: PublicKey,
    pub verdict: Vote,
    #[serde(default)]
    pub credential: Option<CredentialPresentation>,
    pub signature: Signature,
}

impl Decision {
    pub fn signing_payload(
        did: &Did,
        proposal_id: ProposalId,
        base_version: u64,
        verdict: Vote,
    ) -> Vec<u8> {
        let mut enc = Encoder::with_domain(domain::DECISION);
        enc.put(did);
        enc.u64(proposal_id);
        enc.u64(base_version);
        enc.put(&verdict);
        enc.finish()
    }

    pub fn sign(
        controller: &KeyPair,
        did: &Did,
        proposal_id: ProposalId,
        base_version: u64,
        verdict: Vote,
        credential: Option<CredentialPresentation>,
    ) -> Self {
        Decision {
            proposal_id,
            controller_key: controller.public_key(),
            verdict,
            credential,
            signature: controller.sign(&Self::signing_payload(
                did,
                proposal_id,
                base_version,
                verdict,
            )),
        }
    }

    pub fn verify_signature(&self, did: &Did, base_version: u64) -> bool {
        let payload = Self::signing_payload(did, self.proposal_id, base_version, self.verdict);
        self.controller_key.verify(&payload, &self.signature)
    }
}

/// A consumed bearer-token nonce, keyed by issuer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConsumedNonce {
    pub issuer_key: PublicKey,
    pub nonce: Nonce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Anchored,
    ProposalSubmitted,
    ProposalOverridden,
    DecisionAccepted,
    Scheduled,
    Resolved,
    ClockAdvanced,
}

/// Event bodies. Each carries what a replay needs to rebuild the registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventPayload {
    Anchored {
        document: DidDocument,
    },
    ProposalSubmitted {
        proposal: UpdateProposal,
        consumed_nonce: Option<ConsumedNonce>,
    },
    ProposalOverridden {
        proposal_id: ProposalId,
        did: Did,
        overridden_by: ProposalId,
    },
    DecisionAccepted {
        proposal_id: ProposalId,
        controller_key: PublicKey,
        verdict: Vote,
        weight: u64,
        consumed_nonce: Option<ConsumedNonce>,
    },
    Scheduled {
        proposal_id: ProposalId,
        deadline: Tick,
    },
    Resolved {
        proposal_id: ProposalId,
        did: Did,
        verdict: Verdict,
        reason: ResolutionReason,
        version: u64,
    },
    ClockAdvanced {
        from: Tick,
        to: Tick,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::Anchored { .. } => EventKind::Anchored,
            EventPayload::ProposalSubmitted { .. } => EventKind::ProposalSubmitted,
            EventPayload::ProposalOverridden { .. } => EventKind::ProposalOverridden,
            EventPayload::DecisionAccepted { .. } => EventKind::DecisionAccepted,
            EventPayload::Scheduled { .. } => EventKind::Scheduled,
            EventPayload::Resolved { .. } => EventKind::Resolved,
            EventPayload::ClockAdvanced { .. } => EventKind::ClockAdvanced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernanceEvent {
    pub sequence: u64,
    pub tick: Tick,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl GovernanceEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

// --- canonical encodings -------------------------------------------------

impl Canonical for Did {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.string(&self.0);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let s = dec.string()?;
        Did::parse(&s).map_err(|e| DecodeError::Invalid(e.to_string()))
    }
}

tag_enum!(
    EditRightLevel,
    "edit right",
    [
        EditRightLevel::Document = 0,
        EditRightLevel::SelfGovernance = 1,
        EditRightLevel::DelegatesCreation = 2,
        EditRightLevel::All = 3,
    ]
);

tag_enum!(
    ExecutionMode,
    "execution mode",
    [ExecutionMode::OnChain = 0, ExecutionMode::OffChain = 1]
);

tag_enum!(Vote, "vote", [Vote::Approve = 0, Vote::Reject = 1]);

tag_enum!(
    ProposalStatus,
    "proposal status",
    [
        ProposalStatus::Active = 0,
        ProposalStatus::Approved = 1,
        ProposalStatus::Rejected = 2,
        ProposalStatus::Overridden = 3,
        ProposalStatus::Expired = 4,
    ]
);

impl Canonical for GovernanceGroup {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.u64(self.group_id);
        enc.put(&self.edit_right);
        enc.put(&self.authz_config);
        enc.put(&self.coord_config);
        enc.put(&self.execution);
        enc.put(&self.time_limit);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(GovernanceGroup {
            group_id: dec.u64()?,
            edit_right: dec.get()?,
            authz_config: dec.get()?,
            coord_config: dec.get()?,
            execution: dec.get()?,
            time_limit: dec.get()?,
        })
    }
}

impl Canonical for DidDocument {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.did);
        enc.u64(self.version);
        enc.list(&self.public_keys);
        enc.string_map(&self.attributes);
        enc.list(&self.groups);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(DidDocument {
            did: dec.get()?,
            version: dec.u64()?,
            public_keys: dec.list()?,
            attributes: dec.string_map()?,
            groups: dec.list()?,
        })
    }
}

impl Canonical for GroupOp {
    fn encode_into(&self, enc: &mut Encoder) {
        match self {
            GroupOp::AddGroup { group } => {
                enc.u8(0);
                enc.put(group);
            }
            GroupOp::ReplaceGroup { group_id, group } => {
                enc.u8(1);
                enc.u64(*group_id);
                enc.put(group);
            }
            GroupOp::RemoveGroup { group_id } => {
                enc.u8(2);
                enc.u64(*group_id);
            }
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(GroupOp::AddGroup { group: dec.get()? }),
            1 => Ok(GroupOp::ReplaceGroup {
                group_id: dec.u64()?,
                group: dec.get()?,
            }),
            2 => Ok(GroupOp::RemoveGroup {
                group_id: dec.u64()?,
            }),
            tag => Err(dec.bad_tag("group op", tag)),
        }
    }
}

impl Canonical for ChangeSet {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.new_public_keys);
        enc.put(&self.new_attributes);
        enc.list(&self.group_ops);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ChangeSet {
            new_public_keys: dec.get()?,
            new_attributes: dec.get()?,
            group_ops: dec.list()?,
        })
    }
}

impl Canonical for UpdateProposal {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.u64(self.proposal_id);
        enc.put(&self.did);
        enc.u64(self.base_version);
        enc.u64(self.originating_group);
        enc.put(&self.change_set);
        enc.u64(self.created_at);
        enc.put(&self.deadline);
        enc.put(&self.status);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(UpdateProposal {
            proposal_id: dec.u64()?,
            did: dec.get()?,
            base_version: dec.u64()?,
            originating_group: dec.u64()?,
            change_set: dec.get()?,
            created_at: dec.u64()?,
            deadline: dec.get()?,
            status: dec.get()?,
        })
    }
}

impl Canonical for Decision {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.u64(self.proposal_id);
        enc.put(&self.controller_key);
        enc.put(&self.verdict);
        enc.put(&self.credential);
        enc.put(&self.signature);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Decision {
            proposal_id: dec.u64()?,
            controller_key: dec.get()?,
            verdict: dec.get()?,
            credential: dec.get()?,
            signature: dec.get()?,
        })
    }
}

impl Canonical for ConsumedNonce {
    const FIXED_WIDTH: Option<usize> = Some(32 + 16);

    fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.issuer_key);
        enc.put(&self.nonce);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ConsumedNonce {
            issuer_key: dec.get()?,
            nonce: dec.get()?,
        })
    }
}

impl Canonical for EventPayload {
    fn encode_into(&self, enc: &mut Encoder) {
        match self {
            EventPayload::Anchored { document } => {
                enc.u8(0);
                enc.put(document);
            }
            EventPayload::ProposalSubmitted {
                proposal,
                consumed_nonce,
            } => {
                enc.u8(1);
                enc.put(proposal);
                enc.put(consumed_nonce);
            }
            EventPayload::ProposalOverridden {
                proposal_id,
                did,
                overridden_by,
            } => {
                enc.u8(2);
                enc.u64(*proposal_id);
                enc.put(did);
                enc.u64(*overridden_by);
            }
            EventPayload::DecisionAccepted {
                proposal_id,
                controller_key,
                verdict,
                weight,
                consumed_nonce,
            } => {
                enc.u8(3);
                enc.u64(*proposal_id);
                enc.put(controller_key);
                enc.put(verdict);
                enc.u64(*weight);
                enc.put(consumed_nonce);
            }
            EventPayload::Scheduled {
                proposal_id,
                deadline,
            } => {
                enc.u8(4);
                enc.u64(*proposal_id);
                enc.u64(*deadline);
            }
            EventPayload::Resolved {
                proposal_id,
                did,
                verdict,
                reason,
                version,
            } => {
                enc.u8(5);
                enc.u64(*proposal_id);
                enc.put(did);
                enc.put(verdict);
                enc.put(reason);
                enc.u64(*version);
            }
            EventPayload::ClockAdvanced { from, to } => {
                enc.u8(6);
                enc.u64(*from);
                enc.u64(*to);
            }
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            0 => EventPayload::Anchored {
                document: dec.get()?,
            },
            1 => EventPayload::ProposalSubmitted {
                proposal: dec.get()?,
                consumed_nonce: dec.get()?,
            },
            2 => EventPayload::ProposalOverridden {
                proposal_id: dec.u64()?,
                did: dec.get()?,
                overridden_by: dec.u64()?,
            },
            3 => EventPayload::DecisionAccepted {
                proposal_id: dec.u64()?,
                controller_key: dec.get()?,
                verdict: dec.get()?,
                weight: dec.u64()?,
                consumed_nonce: dec.get()?,
            },
            4 => EventPayload::Scheduled {
                proposal_id: dec.u64()?,
                deadline: dec.u64()?,
            },
            5 => EventPayload::Resolved {
                proposal_id: dec.u64()?,
                did: dec.get()?,
                verdict: dec.get()?,
                reason: dec.get()?,
                version: dec.u64()?,
            },
            6 => EventPayload::ClockAdvanced {
                from: dec.u64()?,
                to: dec.u64()?,
            },
            tag => return Err(dec.bad_tag("event payload", tag)),
        })
    }
}

impl Canonical for GovernanceEvent {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.u64(self.sequence);
        enc.u64(self.tick);
        enc.put(&self.payload);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(GovernanceEvent {
            sequence: dec.u64()?,
            tick: dec.u64()?,
            payload: dec.get()?,
        })
    }
}

#[cfg(test)]
mod tests;
