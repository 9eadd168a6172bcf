//! Declarative scenarios.
//!
//! A scenario is a JSON file naming keys by seed, declaring credentials, and
//! listing actions to run in order against a fresh registry. Actions refer to
//! keys by name and the runner signs everything itself.
//!
//! ```json
//! {
//!   "seed_keys": { "alice": "01…01", "subject": "ff…ff" },
//!   "credentials": { "t1": { "kind": "token", "issuer": "alice", "nonce": "00…01" } },
//!   "actions": [
//!     { "action": "anchor", "did": "subject", "groups": [ … ] },
//!     { "action": "propose", "did": "subject", "proposer": "alice", "group": 0,
//!       "change_set": { "new_public_keys": ["alice"] } },
//!     { "action": "decide", "proposal": 1, "controller": "alice", "verdict": "approve" },
//!     { "action": "assert_state", "did": "subject", "version": 2 }
//!   ]
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::authz::AuthzKind;
use crate::coord::{CoordKind, DecisionBatch};
use crate::crypto::{
    generate_keypair, issue_token, issue_vc, BearerToken, CredentialPresentation, KeyPair, Nonce,
    PublicKey, VerifiableCredential,
};
use crate::metering::{
    write_csv, CostCategory, CostReport, CostSchedule, Dimensions, MeteringError, TimeMode,
};
use crate::model::{
    ChangeSet, Decision, Did, EditRightLevel, GovernanceGroup, GroupId, ProposalId,
    ProposalRequest, ProposalStatus, Tick, Vote,
};
use crate::registry::{
    lint_groups, read_event_log, write_event_log, EngineError, Receipt, Registry, RegistryState,
    ReplayError,
};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const COSTS_FILE: &str = "costs.csv";
pub const STATE_FILE: &str = "state.json";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("action {index}: assertion failed on `{field}`: expected {expected}, got {actual}")]
    AssertionFailed {
        index: usize,
        field: String,
        expected: String,
        actual: String,
    },
    #[error("action {index}: {error} [{}]", error.code())]
    Engine { index: usize, error: EngineError },
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Metering(#[from] MeteringError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ScenarioError {
    /// Process exit code: 1 assertion failure, 2 parse or configuration
    /// error, 3 engine error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::AssertionFailed { .. } | ScenarioError::ReplayMismatch(_) => 1,
            ScenarioError::Parse { .. }
            | ScenarioError::Invalid(_)
            | ScenarioError::Metering(_) => 2,
            ScenarioError::Engine { .. } | ScenarioError::Replay(_) | ScenarioError::Io(_) => 3,
        }
    }

    /// Machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Parse { .. } => "ParseError",
            ScenarioError::Invalid(_) => "ParseError",
            ScenarioError::AssertionFailed { .. } => "AssertionFailed",
            ScenarioError::Engine { error, .. } => error.code(),
            ScenarioError::ReplayMismatch(_) => "ReplayMismatch",
            ScenarioError::Replay(_) => "ReplayError",
            ScenarioError::Metering(_) => "ScheduleError",
            ScenarioError::Io(_) => "IoError",
        }
    }
}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> Self {
        ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

// --- file format ---------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed_keys: BTreeMap<String, String>,
    #[serde(default)]
    credentials: BTreeMap<String, RawCredential>,
    actions: Vec<RawAction>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawCredential {
    Token {
        issuer: String,
        nonce: String,
    },
    Vc {
        issuer: String,
        holder: String,
        #[serde(default)]
        claims: BTreeMap<String, String>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVote {
    controller: String,
    verdict: Vote,
    #[serde(default)]
    credential: Option<String>,
    #[serde(default)]
    signed_for: Option<ProposalId>,
}

#[derive(Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
enum RawAction {
    Anchor {
        did: String,
        #[serde(default)]
        public_keys: Vec<String>,
        #[serde(default)]
        attributes: BTreeMap<String, String>,
        groups: Vec<Value>,
        #[serde(default)]
        expect_error: Option<String>,
    },
    Propose {
        did: String,
        proposer: String,
        group: GroupId,
        change_set: Value,
        #[serde(default)]
        credential: Option<String>,
        #[serde(default)]
        expect_error: Option<String>,
    },
    Decide {
        proposal: ProposalId,
        #[serde(flatten)]
        vote: RawVote,
        #[serde(default)]
        expect_error: Option<String>,
    },
    DecideBatch {
        proposal: ProposalId,
        decisions: Vec<RawVote>,
        #[serde(default)]
        expect_error: Option<String>,
    },
    AdvanceTime {
        to: Tick,
        #[serde(default)]
        expect_error: Option<String>,
    },
    ResolveManual {
        proposal: ProposalId,
        #[serde(default)]
        expect_error: Option<String>,
    },
    AssertState(RawAssertion),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAssertion {
    did: Option<String>,
    version: Option<u64>,
    public_keys: Option<Vec<String>>,
    attributes: Option<BTreeMap<String, String>>,
    group_count: Option<usize>,
    active_proposal: Option<ProposalId>,
    no_active_proposal: Option<bool>,
    group: Option<GroupId>,
    edit_right: Option<EditRightLevel>,
    authz_kind: Option<AuthzKind>,
    coord_kind: Option<CoordKind>,
    proposal: Option<ProposalId>,
    status: Option<ProposalStatus>,
    turnout: Option<u64>,
    clock: Option<Tick>,
}

// --- resolved form -------------------------------------------------------

#[derive(Debug, Clone)]
enum Credential {
    Token(BearerToken),
    Vc {
        credential: VerifiableCredential,
        holder: String,
    },
}

#[derive(Debug, Clone)]
pub struct VoteSpec {
    controller: String,
    verdict: Vote,
    credential: Option<String>,
    signed_for: Option<ProposalId>,
}

#[derive(Debug, Clone, Default)]
pub struct StateAssertion {
    did: Option<Did>,
    version: Option<u64>,
    public_keys: Option<Vec<PublicKey>>,
    attributes: Option<BTreeMap<String, String>>,
    group_count: Option<usize>,
    active_proposal: Option<ProposalId>,
    no_active_proposal: Option<bool>,
    group: Option<GroupId>,
    edit_right: Option<EditRightLevel>,
    authz_kind: Option<AuthzKind>,
    coord_kind: Option<CoordKind>,
    proposal: Option<ProposalId>,
    status: Option<ProposalStatus>,
    turnout: Option<u64>,
    clock: Option<Tick>,
}

#[derive(Debug, Clone)]
pub enum Action {
    Anchor {
        did: Did,
        public_keys: Vec<PublicKey>,
        attributes: BTreeMap<String, String>,
        groups: Vec<GovernanceGroup>,
    },
    Propose {
        did: Did,
        proposer: String,
        group: GroupId,
        change_set: ChangeSet,
        credential: Option<String>,
    },
    Decide {
        proposal: ProposalId,
        vote: VoteSpec,
    },
    DecideBatch {
        proposal: ProposalId,
        votes: Vec<VoteSpec>,
    },
    AdvanceTime {
        to: Tick,
    },
    ResolveManual {
        proposal: ProposalId,
    },
    AssertState(StateAssertion),
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Anchor { .. } => "anchor",
            Action::Propose { .. } => "propose",
            Action::Decide { .. } => "decide",
            Action::DecideBatch { .. } => "decide_batch",
            Action::AdvanceTime { .. } => "advance_time",
            Action::ResolveManual { .. } => "resolve_manual",
            Action::AssertState(_) => "assert_state",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub action: Action,
    pub expect_error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    keys: BTreeMap<String, KeyPair>,
    credentials: BTreeMap<String, Credential>,
    pub steps: Vec<Step>,
}

/// Fields whose values are lists of key names, replaced by hex public keys
/// before a group or change set is decoded.
const KEY_LIST_FIELDS: [&str; 4] = [
    "members",
    "trusted_issuers",
    "public_keys",
    "new_public_keys",
];

struct Names<'a> {
    keys: &'a BTreeMap<String, KeyPair>,
    credentials: &'a BTreeMap<String, RawCredential>,
}

impl Names<'_> {
    fn key(&self, name: &str, index: usize) -> Result<&KeyPair, ScenarioError> {
        self.keys.get(name).ok_or_else(|| {
            ScenarioError::Invalid(format!("action {index}: undeclared key `{name}`"))
        })
    }

    fn public(&self, name: &str, index: usize) -> Result<PublicKey, ScenarioError> {
        self.key(name, index).map(KeyPair::public_key)
    }

    fn did(&self, name: &str, index: usize) -> Result<Did, ScenarioError> {
        Ok(Did::from_public_key(&self.public(name, index)?))
    }

    fn credential(
        &self,
        name: Option<String>,
        index: usize,
    ) -> Result<Option<String>, ScenarioError> {
        match name {
            Some(n) if !self.credentials.contains_key(&n) => Err(ScenarioError::Invalid(format!(
                "action {index}: undeclared credential `{n}`"
            ))),
            other => Ok(other),
        }
    }

    fn vote(&self, raw: RawVote, index: usize) -> Result<VoteSpec, ScenarioError> {
        self.key(&raw.controller, index)?;
        Ok(VoteSpec {
            controller: raw.controller,
            verdict: raw.verdict,
            credential: self.credential(raw.credential, index)?,
            signed_for: raw.signed_for,
        })
    }

    fn rewrite_keys(&self, value: &mut Value, index: usize) -> Result<(), ScenarioError> {
        match value {
            Value::Object(map) => {
                for (field, v) in map.iter_mut() {
                    if KEY_LIST_FIELDS.contains(&field.as_str()) {
                        if let Value::Array(items) = v {
                            for item in items {
                                let name = item.as_str().ok_or_else(|| {
                                    ScenarioError::Invalid(format!(
                                        "action {index}: `{field}` must list key names"
                                    ))
                                })?;
                                *item = Value::String(self.public(name, index)?.to_hex());
                            }
                            continue;
                        }
                    }
                    self.rewrite_keys(v, index)?;
                }
            }
            Value::Array(items) => {
                for item in items {
                    self.rewrite_keys(item, index)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn decode<T: serde::de::DeserializeOwned>(
        &self,
        mut value: Value,
        index: usize,
    ) -> Result<T, ScenarioError> {
        self.rewrite_keys(&mut value, index)?;
        serde_json::from_value(value)
            .map_err(|e| ScenarioError::Invalid(format!("action {index}: {e}")))
    }
}

fn parse_seed(name: &str, hex_seed: &str) -> Result<KeyPair, ScenarioError> {
    let bytes = hex::decode(hex_seed)
        .map_err(|e| ScenarioError::Invalid(format!("seed for `{name}`: {e}")))?;
    let seed: [u8; 32] = bytes
        .try_into()
        .map_err(|_| ScenarioError::Invalid(format!("seed for `{name}` must be 32 bytes")))?;
    Ok(generate_keypair(seed))
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(json)?;
        let keys = raw
            .seed_keys
            .iter()
            .map(|(name, seed)| Ok((name.clone(), parse_seed(name, seed)?)))
            .collect::<Result<BTreeMap<_, _>, ScenarioError>>()?;
        let names = Names {
            keys: &keys,
            credentials: &raw.credentials,
        };

        let mut credentials = BTreeMap::new();
        for (name, decl) in &raw.credentials {
            let undeclared = |k: &str| {
                ScenarioError::Invalid(format!("credential `{name}`: undeclared key `{k}`"))
            };
            let cred = match decl {
                RawCredential::Token { issuer, nonce } => {
                    let issuer = keys.get(issuer).ok_or_else(|| undeclared(issuer))?;
                    let nonce = Nonce::from_hex(nonce).map_err(|e| {
                        ScenarioError::Invalid(format!("credential `{name}`: nonce: {e}"))
                    })?;
                    Credential::Token(issue_token(issuer, nonce))
                }
                RawCredential::Vc {
                    issuer,
                    holder,
                    claims,
                } => {
                    let issuer = keys.get(issuer).ok_or_else(|| undeclared(issuer))?;
                    let holder_key = keys.get(holder).ok_or_else(|| undeclared(holder))?;
                    Credential::Vc {
                        credential: issue_vc(issuer, holder_key.public_key(), claims.clone()),
                        holder: holder.clone(),
                    }
                }
            };
            credentials.insert(name.clone(), cred);
        }

        let mut steps = Vec::with_capacity(raw.actions.len());
        for (index, raw_action) in raw.actions.into_iter().enumerate() {
            let (action, expect_error) = match raw_action {
                RawAction::Anchor {
                    did,
                    public_keys,
                    attributes,
                    groups,
                    expect_error,
                } => (
                    Action::Anchor {
                        did: names.did(&did, index)?,
                        public_keys: public_keys
                            .iter()
                            .map(|k| names.public(k, index))
                            .collect::<Result<_, _>>()?,
                        attributes,
                        groups: groups
                            .into_iter()
                            .map(|g| names.decode(g, index))
                            .collect::<Result<_, _>>()?,
                    },
                    expect_error,
                ),
                RawAction::Propose {
                    did,
                    proposer,
                    group,
                    change_set,
                    credential,
                    expect_error,
                } => {
                    names.key(&proposer, index)?;
                    (
                        Action::Propose {
                            did: names.did(&did, index)?,
                            proposer,
                            group,
                            change_set: names.decode(change_set, index)?,
                            credential: names.credential(credential, index)?,
                        },
                        expect_error,
                    )
                }
                RawAction::Decide {
                    proposal,
                    vote,
                    expect_error,
                } => (
                    Action::Decide {
                        proposal,
                        vote: names.vote(vote, index)?,
                    },
                    expect_error,
                ),
                RawAction::DecideBatch {
                    proposal,
                    decisions,
                    expect_error,
                } => (
                    Action::DecideBatch {
                        proposal,
                        votes: decisions
                            .into_iter()
                            .map(|v| names.vote(v, index))
                            .collect::<Result<_, _>>()?,
                    },
                    expect_error,
                ),
                RawAction::AdvanceTime { to, expect_error } => {
                    (Action::AdvanceTime { to }, expect_error)
                }
                RawAction::ResolveManual {
                    proposal,
                    expect_error,
                } => (Action::ResolveManual { proposal }, expect_error),
                RawAction::AssertState(a) => (
                    Action::AssertState(resolve_assertion(&names, a, index)?),
                    None,
                ),
            };
            steps.push(Step {
                action,
                expect_error,
            });
        }
        Ok(Scenario {
            keys,
            credentials,
            steps,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        Scenario::from_json(&fs::read_to_string(path)?)
    }
}

fn resolve_assertion(
    names: &Names<'_>,
    a: RawAssertion,
    index: usize,
) -> Result<StateAssertion, ScenarioError> {
    let needs = |cond: bool, field: &str, needed: &str| {
        if cond {
            Err(ScenarioError::Invalid(format!(
                "action {index}: `{field}` needs `{needed}` in the same assertion"
            )))
        } else {
            Ok(())
        }
    };
    let document_checks = a.version.is_some()
        || a.public_keys.is_some()
        || a.attributes.is_some()
        || a.group_count.is_some()
        || a.active_proposal.is_some()
        || a.no_active_proposal.is_some()
        || a.group.is_some();
    needs(document_checks && a.did.is_none(), "document field", "did")?;
    let group_checks = a.edit_right.is_some() || a.authz_kind.is_some() || a.coord_kind.is_some();
    needs(group_checks && a.group.is_none(), "group field", "group")?;
    needs(
        (a.status.is_some() || a.turnout.is_some()) && a.proposal.is_none(),
        "status",
        "proposal",
    )?;
    Ok(StateAssertion {
        did: a.did.map(|d| names.did(&d, index)).transpose()?,
        version: a.version,
        public_keys: a
            .public_keys
            .map(|ks| {
                ks.iter()
                    .map(|k| names.public(k, index))
                    .collect::<Result<_, _>>()
            })
            .transpose()?,
        attributes: a.attributes,
        group_count: a.group_count,
        active_proposal: a.active_proposal,
        no_active_proposal: a.no_active_proposal,
        group: a.group,
        edit_right: a.edit_right,
        authz_kind: a.authz_kind,
        coord_kind: a.coord_kind,
        proposal: a.proposal,
        status: a.status,
        turnout: a.turnout,
        clock: a.clock,
    })
}

// --- execution -----------------------------------------------------------

/// What a run produced, even if it stopped early.
#[derive(Debug)]
pub struct ScenarioRun {
    pub registry: Registry,
    pub reports: Vec<CostReport>,
    pub warnings: Vec<String>,
    /// Number of actions that completed.
    pub completed: usize,
}

impl ScenarioRun {
    /// Writes `events.jsonl`, `costs.csv` and `state.json` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir)?;
        write_event_log(
            self.registry.events(),
            io::BufWriter::new(fs::File::create(dir.join(EVENTS_FILE))?),
        )?;
        write_csv(&self.reports, fs::File::create(dir.join(COSTS_FILE))?)?;
        fs::write(dir.join(STATE_FILE), self.registry.state().to_json())?;
        Ok(())
    }
}

fn mismatch<T: std::fmt::Debug>(
    index: usize,
    field: &str,
    expected: T,
    actual: T,
) -> ScenarioError {
    ScenarioError::AssertionFailed {
        index,
        field: field.to_owned(),
        expected: format!("{expected:?}"),
        actual: format!("{actual:?}"),
    }
}

struct Runner<'a> {
    scenario: &'a Scenario,
    run: ScenarioRun,
}

impl Runner<'_> {
    fn presentation(
        &self,
        name: &Option<String>,
        did: &Did,
        proposal_id: ProposalId,
    ) -> Option<CredentialPresentation> {
        let cred = &self.scenario.credentials[name.as_ref()?];
        Some(match cred {
            Credential::Token(token) => CredentialPresentation::token(token.clone()),
            Credential::Vc { credential, holder } => CredentialPresentation::present_vc(
                &self.scenario.keys[holder],
                did,
                proposal_id,
                credential.clone(),
            ),
        })
    }

    fn decision(&self, proposal_id: ProposalId, vote: &VoteSpec) -> Decision {
        let controller = &self.scenario.keys[&vote.controller];
        let (did, base) = match self.run.registry.proposal(proposal_id) {
            Some(p) => (p.did.clone(), p.base_version),
            None => (Did::from_public_key(&controller.public_key()), 0),
        };
        let signed_for = vote.signed_for.unwrap_or(proposal_id);
        let credential = self.presentation(&vote.credential, &did, proposal_id);
        let mut decision =
            Decision::sign(controller, &did, signed_for, base, vote.verdict, credential);
        decision.proposal_id = proposal_id;
        decision
    }

    fn dimensions(&self, did: &Did, group_id: Option<GroupId>) -> Option<Dimensions> {
        let doc = self.run.registry.document(did)?;
        let group = match group_id {
            Some(id) => doc.group(id)?,
            None => doc.groups.first()?,
        };
        let members = match &group.authz_config {
            crate::authz::AuthzConfig::Acl { members, .. } => members.len(),
            _ => 0,
        };
        Some(Dimensions {
            groups: doc.groups.len(),
            members,
            authz: group.authz_kind(),
            coord: group.coord_kind(),
            execution: group.execution,
            time: if group.time_limit.is_some() {
                TimeMode::Limited
            } else {
                TimeMode::Unlimited
            },
        })
    }

    /// Dimensions for a proposal, taken before the transaction runs so that
    /// a resolution that rewrites the group is attributed to the old one.
    fn proposal_dimensions(&self, proposal_id: ProposalId) -> Option<Dimensions> {
        let p = self.run.registry.proposal(proposal_id)?;
        self.dimensions(&p.did, Some(p.originating_group))
    }

    fn record(&mut self, phase: &str, receipt: &Receipt, dims: Option<Dimensions>) {
        if receipt.cost.count(CostCategory::BaseTx) == 0 {
            return;
        }
        if let Some(d) = dims {
            self.run
                .reports
                .push(CostReport::new(phase, &receipt.cost, d));
        }
    }

    fn execute(&mut self, index: usize, action: &Action) -> Result<(), EngineError> {
        let registry = &mut self.run.registry;
        match action {
            Action::Anchor {
                did,
                public_keys,
                attributes,
                groups,
            } => {
                let receipt = registry.anchor(
                    did.clone(),
                    public_keys.clone(),
                    attributes.clone(),
                    groups.clone(),
                )?;
                for w in lint_groups(groups) {
                    self.run.warnings.push(format!("action {index}: {w}"));
                }
                let dims = self.dimensions(did, None);
                self.record("anchor", &receipt, dims);
            }
            Action::Propose {
                did,
                proposer,
                group,
                change_set,
                credential,
            } => {
                let proposal_id = registry.state().next_proposal_id;
                let version = registry.document(did).map_or(0, |d| d.version);
                let credential = self.presentation(credential, did, proposal_id);
                let request = ProposalRequest::sign(
                    &self.scenario.keys[proposer],
                    did.clone(),
                    proposal_id,
                    version,
                    *group,
                    change_set.clone(),
                    credential,
                );
                let dims = self.dimensions(did, Some(*group));
                let receipt = self.run.registry.propose(&request)?;
                self.record("propose", &receipt, dims);
            }
            Action::Decide { proposal, vote } => {
                let decision = self.decision(*proposal, vote);
                let dims = self.proposal_dimensions(*proposal);
                let receipt = self.run.registry.decide(&decision)?;
                self.record("decide", &receipt, dims);
            }
            Action::DecideBatch { proposal, votes } => {
                let decisions = votes.iter().map(|v| self.decision(*proposal, v)).collect();
                let dims = self.proposal_dimensions(*proposal);
                let batch = DecisionBatch {
                    proposal_id: *proposal,
                    decisions,
                };
                let receipt = self.run.registry.decide_batch(&batch)?;
                for skipped in &receipt.skipped {
                    self.run.warnings.push(format!(
                        "action {index}: batch entry {} skipped: {}",
                        skipped.index, skipped.reason
                    ));
                }
                self.record("decide_batch", &receipt, dims);
            }
            Action::AdvanceTime { to } => {
                let due: Vec<_> = registry
                    .state()
                    .schedule_queue
                    .due(*to)
                    .into_iter()
                    .map(|r| self.proposal_dimensions(r.proposal_id))
                    .collect();
                let receipts = self.run.registry.advance_clock(*to)?;
                // the first receipt is the clock move itself
                let mut dims = due.into_iter();
                for receipt in receipts.iter().skip(1) {
                    let pid = receipt.proposal_id;
                    let d = dims
                        .next()
                        .flatten()
                        .or_else(|| pid.and_then(|p| self.proposal_dimensions(p)));
                    self.record("expire", receipt, d);
                }
            }
            Action::ResolveManual { proposal } => {
                let dims = self.proposal_dimensions(*proposal);
                let receipt = self.run.registry.resolve_manual(*proposal)?;
                self.record("resolve", &receipt, dims);
            }
            Action::AssertState(_) => {}
        }
        Ok(())
    }

    fn check(&self, index: usize, a: &StateAssertion) -> Result<(), ScenarioError> {
        let state = self.run.registry.state();
        if let Some(clock) = a.clock {
            if state.clock != clock {
                return Err(mismatch(index, "clock", clock, state.clock));
            }
        }
        if let Some(did) = &a.did {
            let doc = state
                .documents
                .get(did)
                .ok_or_else(|| ScenarioError::AssertionFailed {
                    index,
                    field: "did".into(),
                    expected: format!("{did} anchored"),
                    actual: "not anchored".into(),
                })?;
            if let Some(v) = a.version {
                if doc.version != v {
                    return Err(mismatch(index, "version", v, doc.version));
                }
            }
            if let Some(keys) = &a.public_keys {
                if &doc.public_keys != keys {
                    return Err(mismatch(index, "public_keys", keys, &doc.public_keys));
                }
            }
            if let Some(attrs) = &a.attributes {
                if &doc.attributes != attrs {
                    return Err(mismatch(index, "attributes", attrs, &doc.attributes));
                }
            }
            if let Some(n) = a.group_count {
                if doc.groups.len() != n {
                    return Err(mismatch(index, "group_count", n, doc.groups.len()));
                }
            }
            let active = state.active_proposals.get(did).copied();
            if let Some(id) = a.active_proposal {
                if active != Some(id) {
                    return Err(mismatch(index, "active_proposal", Some(id), active));
                }
            }
            if let Some(none) = a.no_active_proposal {
                if none != active.is_none() {
                    return Err(mismatch(
                        index,
                        "no_active_proposal",
                        none,
                        active.is_none(),
                    ));
                }
            }
            if let Some(gid) = a.group {
                let group = doc
                    .group(gid)
                    .ok_or_else(|| ScenarioError::AssertionFailed {
                        index,
                        field: "group".into(),
                        expected: format!("group {gid}"),
                        actual: "absent".into(),
                    })?;
                if let Some(e) = a.edit_right {
                    if group.edit_right != e {
                        return Err(mismatch(index, "edit_right", e, group.edit_right));
                    }
                }
                if let Some(k) = a.authz_kind {
                    if group.authz_kind() != k {
                        return Err(mismatch(index, "authz_kind", k, group.authz_kind()));
                    }
                }
                if let Some(k) = a.coord_kind {
                    if group.coord_kind() != k {
                        return Err(mismatch(index, "coord_kind", k, group.coord_kind()));
                    }
                }
            }
        }
        if let Some(pid) = a.proposal {
            let proposal = state.proposals.get(&pid);
            if let Some(status) = a.status {
                let actual = proposal.map(|p| p.status);
                if actual != Some(status) {
                    return Err(mismatch(index, "status", Some(status), actual));
                }
            }
            if let Some(turnout) = a.turnout {
                let actual = state.tallies.get(&pid).map(|t| t.turnout());
                if actual != Some(turnout) {
                    return Err(mismatch(index, "turnout", Some(turnout), actual));
                }
            }
        }
        Ok(())
    }
}

/// Runs every step in order. The run is returned alongside the first error
/// so partial artifacts can still be written.
pub fn run_scenario(
    scenario: &Scenario,
    schedule: Option<CostSchedule>,
) -> (ScenarioRun, Option<ScenarioError>) {
    let mut runner = Runner {
        scenario,
        run: ScenarioRun {
            registry: Registry::new(schedule),
            reports: Vec::new(),
            warnings: Vec::new(),
            completed: 0,
        },
    };
    for (index, step) in scenario.steps.iter().enumerate() {
        let outcome = match &step.action {
            Action::AssertState(a) => runner.check(index, a),
            action => match (runner.execute(index, action), &step.expect_error) {
                (Ok(()), None) => Ok(()),
                (Err(e), Some(code)) if e.code() == code => Ok(()),
                (Err(e), Some(code)) => Err(mismatch(index, "error", code.as_str(), e.code())),
                (Ok(()), Some(code)) => Err(mismatch(index, "error", code.as_str(), "none")),
                (Err(error), None) => Err(ScenarioError::Engine { index, error }),
            },
        };
        if let Err(e) = outcome {
            return (runner.run, Some(e));
        }
        runner.run.completed += 1;
    }
    (runner.run, None)
}

/// Rebuilds the registry state from an event log.
pub fn replay_file(events: &Path) -> Result<RegistryState, ScenarioError> {
    let file = io::BufReader::new(fs::File::open(events)?);
    Ok(RegistryState::replay(&read_event_log(file)?)?)
}

/// Replays `events` and compares the rebuilt snapshot byte for byte with
/// `expected_state`.
pub fn verify_replay(events: &Path, expected_state: &Path) -> Result<RegistryState, ScenarioError> {
    let state = replay_file(events)?;
    let expected = fs::read_to_string(expected_state)?;
    let actual = state.to_json();
    if actual != expected {
        let line = actual
            .lines()
            .zip(expected.lines())
            .position(|(a, b)| a != b)
            .map_or_else(
                || actual.lines().count().min(expected.lines().count()) + 1,
                |i| i + 1,
            );
        return Err(ScenarioError::ReplayMismatch(format!(
            "rebuilt state differs from {} at line {line}",
            expected_state.display()
        )));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(n: u8) -> String {
        hex::encode([n; 32])
    }

    fn scenario(actions: &str) -> String {
        format!(
            r#"{{
  "seed_keys": {{"alice": "{}", "bob": "{}", "carol": "{}", "subject": "{}", "issuer": "{}"}},
  "credentials": {{"vc_bob": {{"kind": "vc", "issuer": "issuer", "holder": "bob", "claims": {{"role": "admin"}}}}}},
  "actions": {actions}
}}"#,
            seed(1),
            seed(2),
            seed(3),
            seed(4),
            seed(5)
        )
    }

    const ANCHOR: &str = r#"{"action": "anchor", "did": "subject", "groups": [{
        "group_id": 0, "edit_right": "all",
        "authz_kind": "acl", "authz_config": {"members": ["alice", "bob", "carol"]},
        "coord_kind": "n_of_m", "coord_config": {"n": 2, "m": 3},
        "execution": "on_chain"}]}"#;

    #[test]
    fn undeclared_key_is_a_parse_error() {
        let json = scenario(
            r#"[{"action": "decide", "proposal": 1, "controller": "mallory", "verdict": "approve"}]"#,
        );
        let err = Scenario::from_json(&json).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("mallory"));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = Scenario::from_json("{\n  \"seed_keys\": {,\n}").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn wrong_version_assertion_fails() {
        let json = scenario(&format!(
            r#"[{ANCHOR},
            {{"action": "propose", "did": "subject", "proposer": "alice", "group": 0, "change_set": {{"new_public_keys": ["bob"]}}}},
            {{"action": "decide", "proposal": 1, "controller": "alice", "verdict": "approve"}},
            {{"action": "decide", "proposal": 1, "controller": "bob", "verdict": "approve"}},
            {{"action": "assert_state", "did": "subject", "version": 3}}]"#
        ));
        let (run, err) = run_scenario(
            &Scenario::from_json(&json).unwrap(),
            Some(CostSchedule::default()),
        );
        let err = err.unwrap();
        assert_eq!(err.exit_code(), 1);
        assert!(matches!(
            err,
            ScenarioError::AssertionFailed { index: 4, .. }
        ));
        assert_eq!(run.completed, 4);
        assert_eq!(run.reports.len(), 4);
    }

    #[test]
    fn expected_errors_are_matched_by_code() {
        let json = scenario(&format!(
            r#"[{ANCHOR},
            {{"action": "propose", "did": "subject", "proposer": "alice", "group": 0, "change_set": {{"new_public_keys": ["bob"]}}}},
            {{"action": "decide", "proposal": 1, "controller": "alice", "verdict": "approve", "signed_for": 2, "expect_error": "BadSignature"}},
            {{"action": "decide", "proposal": 1, "controller": "subject", "verdict": "approve", "expect_error": "NotAMember"}},
            {{"action": "resolve_manual", "proposal": 1}},
            {{"action": "resolve_manual", "proposal": 1, "expect_error": "AlreadyFinalized"}},
            {{"action": "assert_state", "proposal": 1, "status": "rejected", "turnout": 0}}]"#
        ));
        let (_, err) = run_scenario(&Scenario::from_json(&json).unwrap(), None);
        assert!(err.is_none(), "{err:?}");
    }

    #[test]
    fn unexpected_engine_error_exits_three() {
        let json = scenario(&format!(r#"[{ANCHOR}, {ANCHOR}]"#));
        let (_, err) = run_scenario(&Scenario::from_json(&json).unwrap(), None);
        let err = err.unwrap();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(err.code(), "AlreadyAnchored");
    }

    #[test]
    fn assertion_fields_need_their_subject() {
        let json = scenario(r#"[{"action": "assert_state", "version": 1}]"#);
        assert!(matches!(
            Scenario::from_json(&json),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn artifacts_replay_byte_identically() {
        let json = scenario(&format!(
            r#"[{ANCHOR},
            {{"action": "propose", "did": "subject", "proposer": "alice", "group": 0, "change_set": {{"new_public_keys": ["bob"]}}}},
            {{"action": "decide", "proposal": 1, "controller": "carol", "verdict": "reject"}},
            {{"action": "advance_time", "to": 7}}]"#
        ));
        let (run, err) = run_scenario(
            &Scenario::from_json(&json).unwrap(),
            Some(CostSchedule::default()),
        );
        assert!(err.is_none());
        let dir = tempfile::tempdir().unwrap();
        run.write_artifacts(dir.path()).unwrap();
        verify_replay(&dir.path().join(EVENTS_FILE), &dir.path().join(STATE_FILE)).unwrap();
        let csv = fs::read_to_string(dir.path().join(COSTS_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 1 + 3);
        assert!(csv.starts_with("phase,groups,members,authz,coord,execution,time,total,base_tx"));
    }
}
