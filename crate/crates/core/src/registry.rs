//! The DID governance registry.
//!
//! Commands validate against the current state, charge a [`Meter`], and emit
//! events. State only ever changes by applying those events, so replaying the
//! log into an empty [`RegistryState`] rebuilds the exact same snapshot.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authz::{authorize, Action, AuthzError, AuthzRequest, NonceLedger};
use crate::coord::{
    self, CoordError, DecisionBatch, ResolutionReason, SkipReason, SkippedDecision, Tally,
    TallyEntry, Verdict,
};
use crate::crypto::PublicKey;
use crate::metering::{CostBreakdown, CostCategory, CostSchedule, Meter};
use crate::model::encoding::canonical_encode;
use crate::model::{
    validate_groups, ChangeSet, ConfigError, ConsumedNonce, Decision, Did, DidDocument,
    EditRightLevel, EventPayload, GovernanceEvent, GovernanceGroup, GroupId, GroupOp, ProposalId,
    ProposalRequest, ProposalStatus, Tick, UpdateProposal,
};
use crate::scheduler::{ScheduleQueue, ScheduleRequest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("{0} is already anchored")]
    AlreadyAnchored(Did),
    #[error("{0} is not anchored")]
    NotAnchored(Did),
    #[error("invalid governance configuration: {0}")]
    InvalidGroupConfig(ConfigError),
    #[error("change set would produce an invalid document: {0}")]
    InvalidChangeSet(ConfigError),
    #[error("change set is empty")]
    EmptyChangeSet,
    #[error("document has no group {0}")]
    UnknownGroup(GroupId),
    #[error("request is bound to proposal id {found}, next id is {expected}")]
    StaleRequest {
        expected: ProposalId,
        found: ProposalId,
    },
    #[error("request targets version {found}, document is at {expected}")]
    StaleBaseVersion { expected: u64, found: u64 },
    #[error("signature does not verify")]
    BadSignature,
    #[error("unauthorized: {0}")]
    Unauthorized(AuthzError),
    #[error("change set exceeds the originating group's edit right")]
    EditRightViolation,
    #[error("proposal {active} holds precedence")]
    ActiveProposalPrecedence { active: ProposalId },
    #[error("proposal {0} is not active")]
    NoActiveProposal(ProposalId),
    #[error("no proposal {0}")]
    UnknownProposal(ProposalId),
    #[error("deadline {deadline} has passed (now {now})")]
    DeadlinePassed { deadline: Tick, now: Tick },
    #[error(transparent)]
    Coord(CoordError),
    #[error("no decision in the batch was accepted")]
    NoValidDecisions(Vec<SkippedDecision>),
    #[error("clock cannot move back from {now} to {to}")]
    ClockRegression { now: Tick, to: Tick },
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::AlreadyAnchored(_) => "AlreadyAnchored",
            EngineError::NotAnchored(_) => "NotAnchored",
            EngineError::InvalidGroupConfig(_) => "InvalidGroupConfig",
            EngineError::InvalidChangeSet(_) => "InvalidChangeSet",
            EngineError::EmptyChangeSet => "EmptyChangeSet",
            EngineError::UnknownGroup(_) => "UnknownGroup",
            EngineError::StaleRequest { .. } => "StaleRequest",
            EngineError::StaleBaseVersion { .. } => "StaleBaseVersion",
            EngineError::BadSignature => "BadSignature",
            EngineError::Unauthorized(e) => e.code(),
            EngineError::EditRightViolation => "EditRightViolation",
            EngineError::ActiveProposalPrecedence { .. } => "ActiveProposalPrecedence",
            EngineError::NoActiveProposal(_) => "NoActiveProposal",
            EngineError::UnknownProposal(_) => "UnknownProposal",
            EngineError::DeadlinePassed { .. } => "DeadlinePassed",
            EngineError::Coord(e) => e.code(),
            EngineError::NoValidDecisions(_) => "NoValidDecisions",
            EngineError::ClockRegression { .. } => "ClockRegression",
            EngineError::Internal(_) => "Internal",
        }
    }
}

impl From<CoordError> for EngineError {
    fn from(e: CoordError) -> Self {
        EngineError::Coord(e)
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("event {sequence}: {reason}")]
    Inconsistent { sequence: u64, reason: String },
    #[error("event log line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Everything the registry knows, minus the event log itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryState {
    pub clock: Tick,
    pub next_sequence: u64,
    pub next_proposal_id: ProposalId,
    pub documents: BTreeMap<Did, DidDocument>,
    pub proposals: BTreeMap<ProposalId, UpdateProposal>,
    pub active_proposals: BTreeMap<Did, ProposalId>,
    pub tallies: BTreeMap<ProposalId, Tally>,
    pub nonce_ledger: NonceLedger,
    pub schedule_queue: ScheduleQueue,
}

impl Default for RegistryState {
    fn default() -> Self {
        RegistryState {
            clock: 0,
            next_sequence: 1,
            next_proposal_id: 1,
            documents: BTreeMap::new(),
            proposals: BTreeMap::new(),
            active_proposals: BTreeMap::new(),
            tallies: BTreeMap::new(),
            nonce_ledger: NonceLedger::default(),
            schedule_queue: ScheduleQueue::default(),
        }
    }
}

impl RegistryState {
    pub fn replay<'a>(
        events: impl IntoIterator<Item = &'a GovernanceEvent>,
    ) -> Result<Self, ReplayError> {
        let mut state = RegistryState::default();
        for event in events {
            state.apply(event)?;
        }
        Ok(state)
    }

    /// Pretty JSON with a trailing newline. Maps are ordered, so equal states
    /// produce identical bytes.
    pub fn to_json(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("registry state serializes");
        json.push('\n');
        json
    }

    pub fn active_proposal(&self, did: &Did) -> Option<&UpdateProposal> {
        self.active_proposals.get(did).map(|id| &self.proposals[id])
    }

    /// The single mutation path.
    pub fn apply(&mut self, event: &GovernanceEvent) -> Result<(), ReplayError> {
        let fail = |reason: String| ReplayError::Inconsistent {
            sequence: event.sequence,
            reason,
        };
        if event.sequence != self.next_sequence {
            return Err(fail(format!("expected sequence {}", self.next_sequence)));
        }
        let expected_tick = match event.payload {
            EventPayload::ClockAdvanced { to, .. } => to,
            _ => self.clock,
        };
        if event.tick != expected_tick {
            return Err(fail(format!(
                "tick {} does not match clock {}",
                event.tick, expected_tick
            )));
        }
        match &event.payload {
            EventPayload::Anchored { document } => {
                if self.documents.contains_key(&document.did) {
                    return Err(fail(format!("{} anchored twice", document.did)));
                }
                if document.version != 1 {
                    return Err(fail("anchored document must start at version 1".into()));
                }
                validate_groups(&document.groups).map_err(|e| fail(e.to_string()))?;
                self.documents
                    .insert(document.did.clone(), document.clone());
            }
            EventPayload::ProposalSubmitted {
                proposal,
                consumed_nonce,
            } => {
                if proposal.proposal_id != self.next_proposal_id {
                    return Err(fail(format!(
                        "proposal id {} out of order",
                        proposal.proposal_id
                    )));
                }
                if proposal.status != ProposalStatus::Active {
                    return Err(fail("submitted proposal must be active".into()));
                }
                let document = self
                    .documents
                    .get(&proposal.did)
                    .ok_or_else(|| fail(format!("{} not anchored", proposal.did)))?;
                if document.version != proposal.base_version {
                    return Err(fail("proposal base version is stale".into()));
                }
                if document.group(proposal.originating_group).is_none() {
                    return Err(fail(format!(
                        "unknown group {}",
                        proposal.originating_group
                    )));
                }
                if self.active_proposals.contains_key(&proposal.did) {
                    return Err(fail(format!(
                        "{} already has an active proposal",
                        proposal.did
                    )));
                }
                self.consume_nonce(consumed_nonce.as_ref()).map_err(fail)?;
                self.next_proposal_id += 1;
                self.active_proposals
                    .insert(proposal.did.clone(), proposal.proposal_id);
                self.tallies
                    .insert(proposal.proposal_id, Tally::new(proposal.proposal_id));
                self.proposals
                    .insert(proposal.proposal_id, proposal.clone());
            }
            EventPayload::ProposalOverridden {
                proposal_id, did, ..
            } => {
                if self.active_proposals.get(did) != Some(proposal_id) {
                    return Err(fail(format!(
                        "proposal {proposal_id} is not active for {did}"
                    )));
                }
                self.active_proposals.remove(did);
                self.finish(*proposal_id, ProposalStatus::Overridden)
                    .map_err(fail)?;
            }
            EventPayload::DecisionAccepted {
                proposal_id,
                controller_key,
                verdict,
                weight,
                consumed_nonce,
            } => {
                self.require_active(*proposal_id).map_err(fail)?;
                let tally = self
                    .tallies
                    .get(proposal_id)
                    .ok_or_else(|| fail("missing tally".into()))?;
                if tally.finalized || tally.has_decided(controller_key) {
                    return Err(fail("tally cannot take this decision".into()));
                }
                self.consume_nonce(consumed_nonce.as_ref()).map_err(fail)?;
                let tally = self.tallies.get_mut(proposal_id).expect("checked above");
                tally.accepted.push(TallyEntry {
                    controller_key: *controller_key,
                    verdict: *verdict,
                    weight: *weight,
                });
            }
            EventPayload::Scheduled {
                proposal_id,
                deadline,
            } => {
                self.require_active(*proposal_id).map_err(fail)?;
                if *deadline <= self.clock {
                    return Err(fail("deadline is not in the future".into()));
                }
                self.schedule_queue.insert(ScheduleRequest {
                    proposal_id: *proposal_id,
                    deadline: *deadline,
                });
            }
            EventPayload::Resolved {
                proposal_id,
                did,
                verdict,
                reason,
                version,
            } => {
                let proposal = self.require_active(*proposal_id).map_err(fail)?.clone();
                if proposal.did != *did {
                    return Err(fail("resolution names the wrong DID".into()));
                }
                let document = &self.documents[did];
                if *verdict == Verdict::Approved {
                    let next = document
                        .apply_change_set(&proposal.change_set)
                        .map_err(|e| fail(e.to_string()))?;
                    if next.version != *version {
                        return Err(fail(format!(
                            "resolution version {version}, applied {}",
                            next.version
                        )));
                    }
                    self.documents.insert(did.clone(), next);
                } else if document.version != *version {
                    return Err(fail(format!(
                        "resolution version {version}, document {}",
                        document.version
                    )));
                }
                let status = match (verdict, reason) {
                    (Verdict::Approved, _) => ProposalStatus::Approved,
                    (Verdict::Rejected, ResolutionReason::Expired) => ProposalStatus::Expired,
                    (Verdict::Rejected, _) => ProposalStatus::Rejected,
                };
                self.active_proposals.remove(did);
                self.finish(*proposal_id, status).map_err(fail)?;
            }
            EventPayload::ClockAdvanced { from, to } => {
                if *from != self.clock || to <= from {
                    return Err(fail(format!(
                        "clock cannot move from {from} to {to} at {}",
                        self.clock
                    )));
                }
                self.clock = *to;
                self.schedule_queue.drain_due(*to);
            }
        }
        self.next_sequence += 1;
        Ok(())
    }

    fn require_active(&self, proposal_id: ProposalId) -> Result<&UpdateProposal, String> {
        match self.proposals.get(&proposal_id) {
            Some(p) if p.status == ProposalStatus::Active => Ok(p),
            _ => Err(format!("proposal {proposal_id} is not active")),
        }
    }

    fn consume_nonce(&mut self, nonce: Option<&ConsumedNonce>) -> Result<(), String> {
        match nonce {
            Some(n) if !self.nonce_ledger.consume(*n) => Err(format!("nonce {} replayed", n.nonce)),
            _ => Ok(()),
        }
    }

    fn finish(&mut self, proposal_id: ProposalId, status: ProposalStatus) -> Result<(), String> {
        let tally = self.tallies.get_mut(&proposal_id).ok_or("missing tally")?;
        if tally.finalized {
            return Err(format!("tally {proposal_id} already finalized"));
        }
        tally.finalized = true;
        self.proposals
            .get_mut(&proposal_id)
            .ok_or("missing proposal")?
            .status = status;
        Ok(())
    }
}

/// The outcome of one registry transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub events: Vec<GovernanceEvent>,
    pub cost: CostBreakdown,
    pub proposal_id: Option<ProposalId>,
    pub verdict: Option<Verdict>,
    pub skipped: Vec<SkippedDecision>,
}

impl Receipt {
    pub(crate) fn new(events: Vec<GovernanceEvent>, meter: &Meter) -> Self {
        Receipt {
            events,
            cost: meter.breakdown(),
            proposal_id: None,
            verdict: None,
            skipped: Vec::new(),
        }
    }
}

/// Storage slots a group occupies: a header word, its authorization list,
/// the packed coordination parameters, and the time limit if it has one.
pub fn group_storage_slots(group: &GovernanceGroup) -> u64 {
    1 + group.authz_config.stored_entries() + 1 + u64::from(group.time_limit.is_some())
}

fn change_set_slots(change_set: &ChangeSet) -> u64 {
    let keys = change_set
        .new_public_keys
        .as_ref()
        .map_or(0, |k| k.len() as u64);
    let attrs = change_set
        .new_attributes
        .as_ref()
        .map_or(0, |a| a.len() as u64);
    let ops: u64 = change_set
        .group_ops
        .iter()
        .map(|op| match op {
            GroupOp::AddGroup { group } | GroupOp::ReplaceGroup { group, .. } => {
                group_storage_slots(group)
            }
            GroupOp::RemoveGroup { .. } => 1,
        })
        .sum();
    1 + keys + attrs + ops
}

/// Whether a group at `level` may propose `change_set`. Groups may only be
/// rewritten up to the rewriting group's own level.
pub fn allowed_changes(
    level: EditRightLevel,
    originating_group: GroupId,
    change_set: &ChangeSet,
) -> bool {
    change_set.group_ops.iter().all(|op| match op {
        GroupOp::RemoveGroup { .. } => level == EditRightLevel::All,
        GroupOp::AddGroup { group } => match level {
            EditRightLevel::All => true,
            EditRightLevel::DelegatesCreation => group.edit_right == EditRightLevel::Document,
            _ => false,
        },
        GroupOp::ReplaceGroup { group_id, group } => match level {
            EditRightLevel::All => true,
            EditRightLevel::Document => false,
            _ => *group_id == originating_group && group.edit_right <= level,
        },
    })
}

/// Warnings for a configuration that is valid but probably a mistake.
pub fn lint_groups(groups: &[GovernanceGroup]) -> Vec<String> {
    let mut warnings = Vec::new();
    if groups
        .iter()
        .all(|g| g.edit_right < EditRightLevel::SelfGovernance)
    {
        warnings.push(
            "no group can change governance settings; the configuration is frozen".to_owned(),
        );
    }
    warnings
}

#[derive(Debug, Clone)]
pub struct Registry {
    state: RegistryState,
    events: Vec<GovernanceEvent>,
    schedule: Option<CostSchedule>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::new(Some(CostSchedule::default()))
    }
}

impl Registry {
    /// `None` turns metering off; receipts then carry an empty breakdown.
    pub fn new(schedule: Option<CostSchedule>) -> Self {
        Registry {
            state: RegistryState::default(),
            events: Vec::new(),
            schedule,
        }
    }

    pub fn from_events(
        events: Vec<GovernanceEvent>,
        schedule: Option<CostSchedule>,
    ) -> Result<Self, ReplayError> {
        let state = RegistryState::replay(&events)?;
        Ok(Registry {
            state,
            events,
            schedule,
        })
    }

    pub fn state(&self) -> &RegistryState {
        &self.state
    }

    pub fn events(&self) -> &[GovernanceEvent] {
        &self.events
    }

    pub fn document(&self, did: &Did) -> Option<&DidDocument> {
        self.state.documents.get(did)
    }

    pub fn proposal(&self, id: ProposalId) -> Option<&UpdateProposal> {
        self.state.proposals.get(&id)
    }

    pub fn tally(&self, id: ProposalId) -> Option<&Tally> {
        self.state.tallies.get(&id)
    }

    pub fn now(&self) -> Tick {
        self.state.clock
    }

    pub(crate) fn transaction_meter(&self) -> Meter {
        Meter::for_transaction(self.schedule)
    }

    /// Applies `payloads` as one atomic step: either every event applies or
    /// the state is left untouched.
    pub(crate) fn commit(
        &mut self,
        payloads: Vec<EventPayload>,
        meter: &mut Meter,
    ) -> Vec<GovernanceEvent> {
        self.try_commit(payloads, meter)
            .expect("validated transaction produced an inconsistent event")
    }

    fn try_commit(
        &mut self,
        payloads: Vec<EventPayload>,
        meter: &mut Meter,
    ) -> Result<Vec<GovernanceEvent>, ReplayError> {
        let mut next = self.state.clone();
        let mut emitted = Vec::with_capacity(payloads.len());
        for payload in payloads {
            meter.charge_event(canonical_encode(&payload).len());
            let tick = match payload {
                EventPayload::ClockAdvanced { to, .. } => to,
                _ => next.clock,
            };
            let event = GovernanceEvent {
                sequence: next.next_sequence,
                tick,
                payload,
            };
            next.apply(&event)?;
            emitted.push(event);
        }
        self.state = next;
        self.events.extend(emitted.iter().cloned());
        Ok(emitted)
    }

    /// Registers a new DID with its initial governance configuration.
    pub fn anchor(
        &mut self,
        did: Did,
        public_keys: Vec<PublicKey>,
        attributes: BTreeMap<String, String>,
        groups: Vec<GovernanceGroup>,
    ) -> Result<Receipt, EngineError> {
        if self.state.documents.contains_key(&did) {
            return Err(EngineError::AlreadyAnchored(did));
        }
        validate_groups(&groups).map_err(EngineError::InvalidGroupConfig)?;
        let mut meter = self.transaction_meter();
        let slots: u64 = groups.iter().map(group_storage_slots).sum();
        meter.charge(
            CostCategory::StorageWriteNew,
            1 + public_keys.len() as u64 + attributes.len() as u64 + slots,
        );
        let scan: u64 = groups
            .iter()
            .map(|g| 1 + g.authz_config.stored_entries())
            .sum();
        meter.charge(CostCategory::IterationStep, scan);
        let document = DidDocument {
            did,
            version: 1,
            public_keys,
            attributes,
            groups,
        };
        let events = self.commit(vec![EventPayload::Anchored { document }], &mut meter);
        Ok(Receipt::new(events, &meter))
    }

    /// Opens a governance process for a change to a DID document.
    pub fn propose(&mut self, request: &ProposalRequest) -> Result<Receipt, EngineError> {
        let document = self
            .state
            .documents
            .get(&request.did)
            .ok_or_else(|| EngineError::NotAnchored(request.did.clone()))?;
        let group = document
            .group(request.originating_group)
            .ok_or(EngineError::UnknownGroup(request.originating_group))?;
        if request.proposal_id != self.state.next_proposal_id {
            return Err(EngineError::StaleRequest {
                expected: self.state.next_proposal_id,
                found: request.proposal_id,
            });
        }
        if request.base_version != document.version {
            return Err(EngineError::StaleBaseVersion {
                expected: document.version,
                found: request.base_version,
            });
        }
        if !request.verify_signature() {
            return Err(EngineError::BadSignature);
        }
        let mut meter = self.transaction_meter();
        let mut nonces = self.state.nonce_ledger.clone();
        let grant = authorize(
            &group.authz_config,
            &AuthzRequest {
                did: &request.did,
                proposal_id: request.proposal_id,
                controller_key: &request.proposer_key,
                credential: request.credential.as_ref(),
                action: Action::Propose,
            },
            &mut nonces,
            &mut meter,
        )
        .map_err(EngineError::Unauthorized)?;
        if request.change_set.is_empty() {
            return Err(EngineError::EmptyChangeSet);
        }
        if !allowed_changes(group.edit_right, group.group_id, &request.change_set) {
            return Err(EngineError::EditRightViolation);
        }
        meter.charge(CostCategory::IterationStep, document.groups.len() as u64);
        document
            .apply_change_set(&request.change_set)
            .map_err(EngineError::InvalidChangeSet)?;

        let mut payloads = Vec::new();
        if let Some(active) = self.state.active_proposal(&request.did) {
            let holder = document
                .group(active.originating_group)
                .map_or(EditRightLevel::Document, |g| g.edit_right);
            if group.edit_right <= holder {
                return Err(EngineError::ActiveProposalPrecedence {
                    active: active.proposal_id,
                });
            }
            meter.charge(CostCategory::StorageWriteUpdate, 2);
            payloads.push(EventPayload::ProposalOverridden {
                proposal_id: active.proposal_id,
                did: request.did.clone(),
                overridden_by: request.proposal_id,
            });
        }

        let mut proposal = UpdateProposal {
            proposal_id: request.proposal_id,
            did: request.did.clone(),
            base_version: request.base_version,
            originating_group: request.originating_group,
            change_set: request.change_set.clone(),
            created_at: self.state.clock,
            deadline: None,
            status: ProposalStatus::Active,
        };
        meter.charge(
            CostCategory::StorageWriteNew,
            change_set_slots(&proposal.change_set),
        );
        let (_, schedule) = coord::init_process(group, &proposal, self.state.clock, &mut meter)?;
        proposal.deadline = schedule.map(|s| s.deadline);
        payloads.push(EventPayload::ProposalSubmitted {
            proposal,
            consumed_nonce: grant.consumed_nonce,
        });
        if let Some(s) = schedule {
            payloads.push(EventPayload::Scheduled {
                proposal_id: s.proposal_id,
                deadline: s.deadline,
            });
        }
        let events = self.commit(payloads, &mut meter);
        let mut receipt = Receipt::new(events, &meter);
        receipt.proposal_id = Some(request.proposal_id);
        Ok(receipt)
    }

    fn open_process(
        &self,
        proposal_id: ProposalId,
    ) -> Result<(&UpdateProposal, &GovernanceGroup), EngineError> {
        let proposal = match self.state.proposals.get(&proposal_id) {
            Some(p) if p.status == ProposalStatus::Active => p,
            _ => return Err(EngineError::NoActiveProposal(proposal_id)),
        };
        if let Some(deadline) = proposal.deadline {
            if self.state.clock > deadline {
                return Err(EngineError::DeadlinePassed {
                    deadline,
                    now: self.state.clock,
                });
            }
        }
        let group = self.state.documents[&proposal.did]
            .group(proposal.originating_group)
            .ok_or_else(|| {
                EngineError::Internal(format!("proposal {proposal_id} lost its group"))
            })?;
        Ok((proposal, group))
    }

    /// Submits one on-chain decision. A decisive tally resolves in the same
    /// transaction.
    pub fn decide(&mut self, decision: &Decision) -> Result<Receipt, EngineError> {
        let (proposal, group) = self.open_process(decision.proposal_id)?;
        let tally = &self.state.tallies[&proposal.proposal_id];
        if group.execution != crate::model::ExecutionMode::OnChain {
            return Err(CoordError::WrongExecutionMode(group.execution).into());
        }
        if !decision.verify_signature(&proposal.did, proposal.base_version) {
            return Err(EngineError::BadSignature);
        }
        let mut meter = self.transaction_meter();
        let mut nonces = self.state.nonce_ledger.clone();
        let grant = authorize(
            &group.authz_config,
            &AuthzRequest {
                did: &proposal.did,
                proposal_id: proposal.proposal_id,
                controller_key: &decision.controller_key,
                credential: decision.credential.as_ref(),
                action: Action::Decide,
            },
            &mut nonces,
            &mut meter,
        )
        .map_err(EngineError::Unauthorized)?;
        let entry = TallyEntry {
            controller_key: decision.controller_key,
            verdict: decision.verdict,
            weight: grant.effective_weight,
        };
        let result = coord::submit_decision(
            &group.coord_config,
            group.execution,
            tally,
            entry,
            &mut meter,
        )?;
        let mut payloads = vec![EventPayload::DecisionAccepted {
            proposal_id: proposal.proposal_id,
            controller_key: entry.controller_key,
            verdict: entry.verdict,
            weight: entry.weight,
            consumed_nonce: grant.consumed_nonce,
        }];
        let mut verdict = None;
        if result.early_outcome.is_some() {
            let (payload, v) = self.resolution(
                proposal,
                group,
                &result.tally,
                ResolutionReason::Decisive,
                &mut meter,
            )?;
            payloads.push(payload);
            verdict = Some(v);
        }
        let proposal_id = proposal.proposal_id;
        let events = self.commit(payloads, &mut meter);
        let mut receipt = Receipt::new(events, &meter);
        receipt.proposal_id = Some(proposal_id);
        receipt.verdict = verdict;
        Ok(receipt)
    }

    /// Submits an aggregated off-chain batch. Invalid entries are skipped and
    /// reported; the batch fails only if nothing in it is usable.
    pub fn decide_batch(&mut self, batch: &DecisionBatch) -> Result<Receipt, EngineError> {
        let (proposal, group) = self.open_process(batch.proposal_id)?;
        let tally = &self.state.tallies[&proposal.proposal_id];
        let mut meter = self.transaction_meter();
        let mut nonces = self.state.nonce_ledger.clone();
        let mut grants = vec![None; batch.decisions.len()];
        let check =
            |index: usize, d: &Decision, meter: &mut Meter| -> Result<TallyEntry, SkipReason> {
                meter.charge(CostCategory::SigVerify, 1);
                if !d.verify_signature(&proposal.did, proposal.base_version) {
                    return Err(SkipReason::BadSignature);
                }
                let grant = authorize(
                    &group.authz_config,
                    &AuthzRequest {
                        did: &proposal.did,
                        proposal_id: proposal.proposal_id,
                        controller_key: &d.controller_key,
                        credential: d.credential.as_ref(),
                        action: Action::Decide,
                    },
                    &mut nonces,
                    meter,
                )
                .map_err(SkipReason::Unauthorized)?;
                grants[index] = grant.consumed_nonce;
                Ok(TallyEntry {
                    controller_key: d.controller_key,
                    verdict: d.verdict,
                    weight: grant.effective_weight,
                })
            };
        let result = coord::submit_batch(
            &group.coord_config,
            group.execution,
            tally,
            batch,
            check,
            &mut meter,
        )?;
        if result.accepted.is_empty() {
            return Err(EngineError::NoValidDecisions(result.skipped));
        }
        let mut payloads: Vec<EventPayload> = result
            .accepted
            .iter()
            .zip(&result.tally.accepted)
            .map(|(&index, entry)| EventPayload::DecisionAccepted {
                proposal_id: proposal.proposal_id,
                controller_key: entry.controller_key,
                verdict: entry.verdict,
                weight: entry.weight,
                consumed_nonce: grants[index],
            })
            .collect();
        let mut verdict = None;
        if result.early_outcome.is_some() {
            let (payload, v) = self.resolution(
                proposal,
                group,
                &result.tally,
                ResolutionReason::Decisive,
                &mut meter,
            )?;
            payloads.push(payload);
            verdict = Some(v);
        }
        let proposal_id = proposal.proposal_id;
        let events = self.commit(payloads, &mut meter);
        let mut receipt = Receipt::new(events, &meter);
        receipt.proposal_id = Some(proposal_id);
        receipt.verdict = verdict;
        receipt.skipped = result.skipped;
        Ok(receipt)
    }

    /// Builds the `Resolved` event for `proposal` given its final tally and
    /// charges the writes it implies.
    fn resolution(
        &self,
        proposal: &UpdateProposal,
        group: &GovernanceGroup,
        tally: &Tally,
        reason: ResolutionReason,
        meter: &mut Meter,
    ) -> Result<(EventPayload, Verdict), EngineError> {
        let mut tally = tally.clone();
        let verdict = coord::resolve(&group.coord_config, &mut tally, reason, meter)?;
        meter.charge(CostCategory::StorageWriteUpdate, 2);
        let document = &self.state.documents[&proposal.did];
        if document.version != proposal.base_version {
            return Err(EngineError::StaleBaseVersion {
                expected: document.version,
                found: proposal.base_version,
            });
        }
        let mut version = document.version;
        if verdict == Verdict::Approved {
            let next = document
                .apply_change_set(&proposal.change_set)
                .map_err(EngineError::InvalidChangeSet)?;
            version = next.version;
            let cs = &proposal.change_set;
            let content = cs.new_public_keys.as_ref().map_or(0, |k| k.len() as u64)
                + cs.new_attributes.as_ref().map_or(0, |a| a.len() as u64);
            meter.charge(CostCategory::StorageWriteUpdate, 1 + content);
            for op in &cs.group_ops {
                match op {
                    GroupOp::AddGroup { group } => {
                        meter.charge(CostCategory::StorageWriteNew, group_storage_slots(group))
                    }
                    GroupOp::ReplaceGroup { group, .. } => {
                        meter.charge(CostCategory::StorageWriteUpdate, group_storage_slots(group))
                    }
                    GroupOp::RemoveGroup { .. } => {
                        meter.charge(CostCategory::StorageWriteUpdate, 1)
                    }
                }
            }
        }
        let payload = EventPayload::Resolved {
            proposal_id: proposal.proposal_id,
            did: proposal.did.clone(),
            verdict,
            reason,
            version,
        };
        Ok((payload, verdict))
    }

    /// Resolves a proposal from its current tally.
    pub fn apply_resolution(
        &mut self,
        proposal_id: ProposalId,
        reason: ResolutionReason,
    ) -> Result<Receipt, EngineError> {
        let proposal = self
            .state
            .proposals
            .get(&proposal_id)
            .ok_or(EngineError::UnknownProposal(proposal_id))?;
        let tally = &self.state.tallies[&proposal_id];
        if tally.finalized {
            return Err(CoordError::AlreadyFinalized.into());
        }
        let group = self.state.documents[&proposal.did]
            .group(proposal.originating_group)
            .ok_or_else(|| {
                EngineError::Internal(format!("proposal {proposal_id} lost its group"))
            })?;
        let mut meter = self.transaction_meter();
        let (payload, verdict) = self.resolution(proposal, group, tally, reason, &mut meter)?;
        let events = self.commit(vec![payload], &mut meter);
        let mut receipt = Receipt::new(events, &meter);
        receipt.proposal_id = Some(proposal_id);
        receipt.verdict = Some(verdict);
        Ok(receipt)
    }

    /// Closes a process on request, judging it on the decisions collected.
    pub fn resolve_manual(&mut self, proposal_id: ProposalId) -> Result<Receipt, EngineError> {
        self.apply_resolution(proposal_id, ResolutionReason::Manual)
    }
}

/// Writes events as JSON lines.
pub fn write_event_log<W: Write>(events: &[GovernanceEvent], mut out: W) -> io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_event_log<R: BufRead>(input: R) -> Result<Vec<GovernanceEvent>, ReplayError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|source| ReplayError::Parse {
            line: i + 1,
            source,
        })?;
        events.push(event);
    }
    Ok(events)
}
