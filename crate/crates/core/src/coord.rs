//! Coordination strategies: n-of-m, turnout-sensitive and weighted voting.
//!
//! A [`Tally`] collects accepted decisions. On-chain submissions are checked
//! for a decisive outcome after every vote; off-chain batches are tallied in
//! one go. [`resolve`] computes the final verdict from whatever has been
//! tallied, whether the process ended decisively, manually or by expiry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::authz::AuthzError;
use crate::crypto::PublicKey;
use crate::metering::{CostCategory, Meter};
use crate::model::encoding::{tag_enum, Canonical, DecodeError, Decoder, Encoder};
use crate::model::{
    Decision, ExecutionMode, GovernanceGroup, ProposalId, ProposalStatus, UpdateProposal, Vote,
};
use crate::scheduler::ScheduleRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordKind {
    NOfM,
    TurnoutSensitive,
    Weighted,
}

impl CoordKind {
    pub fn label(self) -> &'static str {
        match self {
            CoordKind::NOfM => "nofm",
            CoordKind::TurnoutSensitive => "turnout",
            CoordKind::Weighted => "weighted",
        }
    }
}

/// An exact rational in (0, 1], serialized as `"numerator/denominator"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    numerator: u64,
    denominator: u64,
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, String> {
        if numerator == 0 || denominator == 0 || numerator > denominator {
            return Err(format!(
                "ratio {numerator}/{denominator} must lie in (0, 1]"
            ));
        }
        Ok(Ratio {
            numerator,
            denominator,
        })
    }

    pub fn numerator(self) -> u64 {
        self.numerator
    }

    pub fn denominator(self) -> u64 {
        self.denominator
    }

    /// `ceil(self × count)`, computed exactly.
    pub fn ceil_mul(self, count: u64) -> u64 {
        let num = self.numerator as u128 * count as u128;
        let den = self.denominator as u128;
        num.div_ceil(den) as u64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = s
            .split_once('/')
            .ok_or_else(|| format!("ratio {s:?} is not `n/d`"))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<u64>()
                .map_err(|e| format!("ratio {s:?}: {e}"))
        };
        Ratio::new(parse(n)?, parse(d)?)
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordConfig {
    /// Approve once `n` approvals are in. `m` bounds how many decisions are
    /// counted, which makes it a turnout cap for credential-based groups.
    NOfM { n: u64, m: u64 },
    /// Approve iff turnout reaches `quorum` and approvals reach
    /// `ceil(ratio × turnout)`.
    TurnoutSensitive { quorum: u64, ratio: Ratio },
    /// Approve once the summed weight of approvals reaches `threshold`.
    Weighted { threshold: u64 },
}

impl CoordConfig {
    pub fn kind(&self) -> CoordKind {
        match self {
            CoordConfig::NOfM { .. } => CoordKind::NOfM,
            CoordConfig::TurnoutSensitive { .. } => CoordKind::TurnoutSensitive,
            CoordConfig::Weighted { .. } => CoordKind::Weighted,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            CoordConfig::NOfM { n, m } if n == 0 || n > m => {
                Err(format!("n-of-m needs 1 <= n <= m, got {n}-of-{m}"))
            }
            CoordConfig::TurnoutSensitive { quorum: 0, .. } => {
                Err("quorum must be positive".into())
            }
            CoordConfig::Weighted { threshold: 0 } => {
                Err("weighted threshold must be positive".into())
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn from_repr(kind: CoordKind, r: CoordConfigRepr) -> Result<Self, String> {
        let need = |v: Option<u64>, name: &str| {
            v.ok_or_else(|| format!("{} config requires `{name}`", kind.label()))
        };
        let config = match kind {
            CoordKind::NOfM => CoordConfig::NOfM {
                n: need(r.n, "n")?,
                m: need(r.m, "m")?,
            },
            CoordKind::TurnoutSensitive => CoordConfig::TurnoutSensitive {
                quorum: need(r.quorum, "quorum")?,
                ratio: r.ratio.ok_or("turnout config requires `ratio`")?,
            },
            CoordKind::Weighted => CoordConfig::Weighted {
                threshold: need(r.threshold, "threshold")?,
            },
        };
        if config.to_repr() != r {
            return Err(format!(
                "unexpected fields for {} coordination",
                kind.label()
            ));
        }
        Ok(config)
    }

    pub(crate) fn to_repr(self) -> CoordConfigRepr {
        match self {
            CoordConfig::NOfM { n, m } => CoordConfigRepr {
                n: Some(n),
                m: Some(m),
                ..Default::default()
            },
            CoordConfig::TurnoutSensitive { quorum, ratio } => CoordConfigRepr {
                quorum: Some(quorum),
                ratio: Some(ratio),
                ..Default::default()
            },
            CoordConfig::Weighted { threshold } => CoordConfigRepr {
                threshold: Some(threshold),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CoordConfigRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quorum: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio: Option<Ratio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<u64>,
}

// Every variant occupies one tag plus three words, so swapping strategies
// never changes the encoded size of a group.
impl Canonical for CoordConfig {
    const FIXED_WIDTH: Option<usize> = Some(1 + 3 * 8);

    fn encode_into(&self, enc: &mut Encoder) {
        let (tag, words) = match *self {
            CoordConfig::NOfM { n, m } => (0, [n, m, 0]),
            CoordConfig::TurnoutSensitive { quorum, ratio } => {
                (1, [quorum, ratio.numerator, ratio.denominator])
            }
            CoordConfig::Weighted { threshold } => (2, [threshold, 0, 0]),
        };
        enc.u8(tag);
        for w in words {
            enc.u64(w);
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag = dec.u8()?;
        let words = [dec.u64()?, dec.u64()?, dec.u64()?];
        let padding_ok = |used: usize| words[used..].iter().all(|&w| w == 0);
        match tag {
            0 if padding_ok(2) => Ok(CoordConfig::NOfM {
                n: words[0],
                m: words[1],
            }),
            1 => Ok(CoordConfig::TurnoutSensitive {
                quorum: words[0],
                ratio: Ratio::new(words[1], words[2]).map_err(DecodeError::Invalid)?,
            }),
            2 if padding_ok(1) => Ok(CoordConfig::Weighted {
                threshold: words[0],
            }),
            0 | 2 => Err(DecodeError::Invalid(
                "non-zero padding in coordination config".into(),
            )),
            tag => Err(DecodeError::BadTag {
                ty: "coord config",
                tag,
                offset: dec.position() - 25,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionReason {
    Decisive,
    Manual,
    Expired,
}

tag_enum!(
    Verdict,
    "verdict",
    [Verdict::Approved = 0, Verdict::Rejected = 1]
);
tag_enum!(
    ResolutionReason,
    "resolution reason",
    [
        ResolutionReason::Decisive = 0,
        ResolutionReason::Manual = 1,
        ResolutionReason::Expired = 2,
    ]
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyEntry {
    pub controller_key: PublicKey,
    pub verdict: Vote,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub proposal_id: ProposalId,
    pub accepted: Vec<TallyEntry>,
    pub finalized: bool,
}

impl Tally {
    pub fn new(proposal_id: ProposalId) -> Self {
        Tally {
            proposal_id,
            accepted: Vec::new(),
            finalized: false,
        }
    }

    pub fn turnout(&self) -> u64 {
        self.accepted.len() as u64
    }

    pub fn approvals(&self) -> u64 {
        self.accepted
            .iter()
            .filter(|e| e.verdict == Vote::Approve)
            .count() as u64
    }

    pub fn rejections(&self) -> u64 {
        self.turnout() - self.approvals()
    }

    pub fn approve_weight(&self) -> u64 {
        self.accepted
            .iter()
            .filter(|e| e.verdict == Vote::Approve)
            .map(|e| e.weight)
            .sum()
    }

    pub fn has_decided(&self, controller: &PublicKey) -> bool {
        self.accepted
            .iter()
            .any(|e| e.controller_key == *controller)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionBatch {
    pub proposal_id: ProposalId,
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoordError {
    #[error("proposal {0} is not active")]
    NotActive(ProposalId),
    #[error("controller already submitted a decision")]
    DuplicateDecision,
    #[error("tally is finalized")]
    TallyFinalized,
    #[error("turnout cap of {0} decisions reached")]
    TallyFull(u64),
    #[error("operation not available for {0:?} coordination")]
    WrongExecutionMode(ExecutionMode),
    #[error("decision batch is empty")]
    EmptyBatch,
    #[error("a batch can only be submitted against an empty tally")]
    TallyNotEmpty,
    #[error("tally already finalized")]
    AlreadyFinalized,
}

impl CoordError {
    pub fn code(&self) -> &'static str {
        match self {
            CoordError::NotActive(_) => "NotActive",
            CoordError::DuplicateDecision => "DuplicateDecision",
            CoordError::TallyFinalized => "TallyFinalized",
            CoordError::TallyFull(_) => "TallyFull",
            CoordError::WrongExecutionMode(_) => "WrongExecutionMode",
            CoordError::EmptyBatch => "EmptyBatch",
            CoordError::TallyNotEmpty => "TallyNotEmpty",
            CoordError::AlreadyFinalized => "AlreadyFinalized",
        }
    }
}

/// Starts a coordination process for an admitted proposal.
pub fn init_process(
    group: &GovernanceGroup,
    proposal: &UpdateProposal,
    now: u64,
    meter: &mut Meter,
) -> Result<(Tally, Option<ScheduleRequest>), CoordError> {
    if proposal.status != ProposalStatus::Active {
        return Err(CoordError::NotActive(proposal.proposal_id));
    }
    meter.charge(CostCategory::StorageWriteNew, 1);
    if group.execution == ExecutionMode::OffChain {
        // aggregated submissions are only accepted once the process records it
        meter.charge(CostCategory::StorageWriteNew, 1);
    }
    let schedule = group.time_limit.map(|limit| {
        meter.charge(CostCategory::StorageWriteNew, 1);
        ScheduleRequest {
            proposal_id: proposal.proposal_id,
            deadline: now + limit,
        }
    });
    Ok((Tally::new(proposal.proposal_id), schedule))
}

fn admit(config: &CoordConfig, tally: &Tally, controller: &PublicKey) -> Result<(), CoordError> {
    if tally.finalized {
        return Err(CoordError::TallyFinalized);
    }
    if tally.has_decided(controller) {
        return Err(CoordError::DuplicateDecision);
    }
    if let CoordConfig::NOfM { m, .. } = *config {
        if tally.turnout() >= m {
            return Err(CoordError::TallyFull(m));
        }
    }
    Ok(())
}

/// The outcome if it is already settled by the decisions tallied so far.
pub fn early_outcome(config: &CoordConfig, tally: &Tally) -> Option<Verdict> {
    match *config {
        CoordConfig::NOfM { n, m } => {
            if tally.approvals() >= n {
                Some(Verdict::Approved)
            } else if tally.rejections() > m - n {
                Some(Verdict::Rejected)
            } else {
                None
            }
        }
        CoordConfig::Weighted { threshold } => {
            (tally.approve_weight() >= threshold).then_some(Verdict::Approved)
        }
        CoordConfig::TurnoutSensitive { .. } => None,
    }
}

fn charge_early_check(config: &CoordConfig, tally: &Tally, meter: &mut Meter) {
    if config.kind() != CoordKind::TurnoutSensitive {
        meter.charge(CostCategory::IterationStep, tally.turnout());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmitResult {
    pub tally: Tally,
    pub early_outcome: Option<Verdict>,
}

/// Adds one on-chain decision and checks whether the outcome is settled.
pub fn submit_decision(
    config: &CoordConfig,
    execution: ExecutionMode,
    tally: &Tally,
    entry: TallyEntry,
    meter: &mut Meter,
) -> Result<SubmitResult, CoordError> {
    if execution != ExecutionMode::OnChain {
        return Err(CoordError::WrongExecutionMode(execution));
    }
    admit(config, tally, &entry.controller_key)?;
    let mut tally = tally.clone();
    tally.accepted.push(entry);
    meter.charge(CostCategory::StorageWriteNew, 1);
    charge_early_check(config, &tally, meter);
    let early_outcome = early_outcome(config, &tally);
    Ok(SubmitResult {
        tally,
        early_outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkipReason {
    #[error("decision references proposal {0}")]
    WrongProposal(ProposalId),
    #[error("decision signature does not verify")]
    BadSignature,
    #[error("unauthorized: {0}")]
    Unauthorized(AuthzError),
    #[error("duplicate decision from controller")]
    Duplicate,
    #[error("turnout cap reached")]
    TallyFull,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedDecision {
    pub index: usize,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchResult {
    pub tally: Tally,
    pub early_outcome: Option<Verdict>,
    /// Batch positions that were tallied, in order.
    pub accepted: Vec<usize>,
    pub skipped: Vec<SkippedDecision>,
}

/// Tallies an off-chain batch. `check` verifies and authorizes the decision at
/// a given batch position;
/// entries that fail it, or that the tally cannot take, are skipped and
/// reported rather than failing the whole batch.
pub fn submit_batch<F>(
    config: &CoordConfig,
    execution: ExecutionMode,
    tally: &Tally,
    batch: &DecisionBatch,
    mut check: F,
    meter: &mut Meter,
) -> Result<BatchResult, CoordError>
where
    F: FnMut(usize, &Decision, &mut Meter) -> Result<TallyEntry, SkipReason>,
{
    if execution != ExecutionMode::OffChain {
        return Err(CoordError::WrongExecutionMode(execution));
    }
    if tally.finalized {
        return Err(CoordError::TallyFinalized);
    }
    if !tally.accepted.is_empty() {
        return Err(CoordError::TallyNotEmpty);
    }
    if batch.decisions.is_empty() {
        return Err(CoordError::EmptyBatch);
    }
    let mut tally = tally.clone();
    let mut accepted = Vec::new();
    let mut skipped = Vec::new();
    for (index, decision) in batch.decisions.iter().enumerate() {
        let outcome = if decision.proposal_id != batch.proposal_id {
            Err(SkipReason::WrongProposal(decision.proposal_id))
        } else {
            match admit(config, &tally, &decision.controller_key) {
                Ok(()) => check(index, decision, meter),
                Err(CoordError::DuplicateDecision) => Err(SkipReason::Duplicate),
                Err(_) => Err(SkipReason::TallyFull),
            }
        };
        match outcome {
            Ok(entry) => {
                tally.accepted.push(entry);
                meter.charge(CostCategory::StorageWriteNew, 1);
                accepted.push(index);
            }
            Err(reason) => skipped.push(SkippedDecision { index, reason }),
        }
    }
    charge_early_check(config, &tally, meter);
    let early_outcome = early_outcome(config, &tally);
    Ok(BatchResult {
        tally,
        early_outcome,
        accepted,
        skipped,
    })
}

/// The verdict the tally supports right now.
pub fn evaluate(config: &CoordConfig, tally: &Tally) -> Verdict {
    let approved = match *config {
        CoordConfig::NOfM { n, .. } => tally.approvals() >= n,
        CoordConfig::Weighted { threshold } => tally.approve_weight() >= threshold,
        CoordConfig::TurnoutSensitive { quorum, ratio } => {
            let turnout = tally.turnout();
            turnout >= quorum && tally.approvals() >= ratio.ceil_mul(turnout)
        }
    };
    if approved {
        Verdict::Approved
    } else {
        Verdict::Rejected
    }
}

/// Finalizes the tally and returns its verdict. The reason does not change
/// the formula: an expired process is judged on what it collected.
pub fn resolve(
    config: &CoordConfig,
    tally: &mut Tally,
    _reason: ResolutionReason,
    meter: &mut Meter,
) -> Result<Verdict, CoordError> {
    if tally.finalized {
        return Err(CoordError::AlreadyFinalized);
    }
    let passes = match config.kind() {
        CoordKind::TurnoutSensitive => 2,
        _ => 1,
    };
    meter.charge(CostCategory::IterationStep, passes * tally.turnout());
    tally.finalized = true;
    Ok(evaluate(config, tally))
}
