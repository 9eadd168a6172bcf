//! Cost sweeps over governance configurations.
//!
//! Each grid point runs the standard workflow against a fresh registry:
//! anchor, propose, decide (one on-chain vote, or one off-chain batch of
//! every member), then a manual resolution. Thresholds are set out of reach
//! so the decide phase never triggers an early resolution and the resolve
//! phase is measured on its own.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::authz::{AuthzConfig, AuthzKind};
use crate::coord::{CoordConfig, CoordKind, DecisionBatch, Ratio};
use crate::crypto::{
    generate_keypair, issue_token, issue_vc, CredentialPresentation, KeyPair, Nonce,
};
use crate::metering::{CostReport, Dimensions, TimeMode};
use crate::model::{
    ChangeSet, Decision, Did, EditRightLevel, ExecutionMode, GovernanceGroup, ProposalRequest, Vote,
};
use crate::registry::{EngineError, Registry};

/// Time limit used for time-limited grid points.
pub const SWEEP_TIME_LIMIT: u64 = 100;

pub const PHASES: [&str; 4] = ["anchor", "propose", "decide", "resolve"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepGrid {
    pub groups: Vec<usize>,
    pub members: Vec<usize>,
    pub authz: Vec<AuthzKind>,
    pub coord: Vec<CoordKind>,
    pub execution: Vec<ExecutionMode>,
    pub time: Vec<TimeMode>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), SweepError> {
        let dims = [
            ("groups", self.groups.len()),
            ("members", self.members.len()),
            ("authz", self.authz.len()),
            ("coord", self.coord.len()),
            ("execution", self.execution.len()),
            ("time", self.time.len()),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, len)| *len == 0) {
            return Err(SweepError::InvalidGrid(format!("`{name}` has no values")));
        }
        if self.groups.contains(&0) || self.members.contains(&0) {
            return Err(SweepError::InvalidGrid(
                "groups and members must be at least 1".into(),
            ));
        }
        if self.members.iter().any(|&m| m > u16::MAX as usize)
            || self.groups.iter().any(|&g| g > u16::MAX as usize)
        {
            return Err(SweepError::InvalidGrid(
                "groups and members must fit in 16 bits".into(),
            ));
        }
        Ok(())
    }

    /// Grid points in row order: groups, members, authz, coord, execution, time.
    pub fn points(&self) -> Vec<Dimensions> {
        let mut points = Vec::new();
        for &groups in &self.groups {
            for &members in &self.members {
                for &authz in &self.authz {
                    for &coord in &self.coord {
                        for &execution in &self.execution {
                            for &time in &self.time {
                                points.push(Dimensions {
                                    groups,
                                    members,
                                    authz,
                                    coord,
                                    execution,
                                    time,
                                });
                            }
                        }
                    }
                }
            }
        }
        points
    }
}

/// A grid point whose workflow failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointFailure {
    pub dimensions: Dimensions,
    pub phase: &'static str,
    pub error: EngineError,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepResult {
    pub reports: Vec<CostReport>,
    pub failures: Vec<PointFailure>,
}

impl SweepResult {
    fn collect(outcomes: Vec<Result<Vec<CostReport>, PointFailure>>) -> Self {
        let mut result = SweepResult::default();
        for outcome in outcomes {
            match outcome {
                Ok(reports) => result.reports.extend(reports),
                Err(failure) => result.failures.push(failure),
            }
        }
        result
    }

    pub fn phase(&self, phase: &str) -> impl Iterator<Item = &CostReport> {
        let phase = phase.to_owned();
        self.reports
            .iter()
            .filter(move |r| r.transaction_label == phase)
    }
}

/// Runs the grid, in parallel when the `parallel` feature is enabled.
/// Output order follows [`SweepGrid::points`] either way.
pub fn sweep<F>(factory: F, grid: &SweepGrid) -> Result<SweepResult, SweepError>
where
    F: Fn() -> Registry + Sync,
{
    #[cfg(feature = "parallel")]
    {
        sweep_parallel(factory, grid)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sweep_sequential(factory, grid)
    }
}

pub fn sweep_sequential<F>(factory: F, grid: &SweepGrid) -> Result<SweepResult, SweepError>
where
    F: Fn() -> Registry,
{
    grid.validate()?;
    let outcomes = grid
        .points()
        .into_iter()
        .map(|p| run_point(factory(), p))
        .collect();
    Ok(SweepResult::collect(outcomes))
}

#[cfg(feature = "parallel")]
pub fn sweep_parallel<F>(factory: F, grid: &SweepGrid) -> Result<SweepResult, SweepError>
where
    F: Fn() -> Registry + Sync,
{
    use rayon::prelude::*;

    grid.validate()?;
    let outcomes = grid
        .points()
        .into_par_iter()
        .map(|p| run_point(factory(), p))
        .collect();
    Ok(SweepResult::collect(outcomes))
}

/// Deterministic actors for one grid point.
struct Actors {
    did: Did,
    issuer: KeyPair,
    members: Vec<Vec<KeyPair>>,
}

fn seeded(tag: u8, a: usize, b: usize) -> KeyPair {
    let mut seed = [0u8; 32];
    seed[0] = tag;
    seed[1..3].copy_from_slice(&(a as u16).to_be_bytes());
    seed[3..5].copy_from_slice(&(b as u16).to_be_bytes());
    generate_keypair(seed)
}

impl Actors {
    fn new(d: &Dimensions) -> Self {
        Actors {
            did: Did::from_public_key(&seeded(b'd', 0, 0).public_key()),
            issuer: seeded(b'i', 0, 0),
            members: (0..d.groups)
                .map(|g| (0..d.members).map(|m| seeded(b'm', g, m)).collect())
                .collect(),
        }
    }

    fn group(&self, d: &Dimensions, index: usize) -> GovernanceGroup {
        let m = d.members as u64;
        let authz_config = match d.authz {
            AuthzKind::Acl => AuthzConfig::Acl {
                members: self.members[index]
                    .iter()
                    .map(KeyPair::public_key)
                    .collect(),
                weights: (d.coord == CoordKind::Weighted).then(|| vec![1; d.members]),
            },
            AuthzKind::Token => AuthzConfig::Token {
                trusted_issuers: vec![self.issuer.public_key()],
            },
            AuthzKind::Vc => AuthzConfig::Vc {
                trusted_issuers: vec![self.issuer.public_key()],
                required_claims: BTreeMap::new(),
            },
        };
        let coord_config = match d.coord {
            CoordKind::NOfM => CoordConfig::NOfM { n: m + 1, m: m + 1 },
            CoordKind::TurnoutSensitive => CoordConfig::TurnoutSensitive {
                quorum: 1,
                ratio: Ratio::new(1, 2).expect("valid ratio"),
            },
            CoordKind::Weighted => CoordConfig::Weighted { threshold: m + 1 },
        };
        GovernanceGroup {
            group_id: index as u64,
            edit_right: if index == 0 {
                EditRightLevel::All
            } else {
                EditRightLevel::Document
            },
            authz_config,
            coord_config,
            execution: d.execution,
            time_limit: (d.time == TimeMode::Limited).then_some(SWEEP_TIME_LIMIT),
        }
    }

    /// The credential member `index` of group 0 presents for `proposal_id`.
    fn credential(
        &self,
        d: &Dimensions,
        index: usize,
        proposal_id: u64,
        use_no: u8,
    ) -> Option<CredentialPresentation> {
        let holder = &self.members[0][index];
        match d.authz {
            AuthzKind::Acl => None,
            AuthzKind::Token => {
                let mut nonce = [0u8; 16];
                nonce[0] = use_no;
                nonce[1..3].copy_from_slice(&(index as u16).to_be_bytes());
                Some(CredentialPresentation::token(issue_token(
                    &self.issuer,
                    Nonce(nonce),
                )))
            }
            AuthzKind::Vc => {
                let vc = issue_vc(&self.issuer, holder.public_key(), BTreeMap::new());
                Some(CredentialPresentation::present_vc(
                    holder,
                    &self.did,
                    proposal_id,
                    vc,
                ))
            }
        }
    }

    fn decision(
        &self,
        d: &Dimensions,
        index: usize,
        proposal_id: u64,
        base_version: u64,
    ) -> Decision {
        let credential = self.credential(d, index, proposal_id, 1);
        Decision::sign(
            &self.members[0][index],
            &self.did,
            proposal_id,
            base_version,
            Vote::Approve,
            credential,
        )
    }
}

fn fail(d: Dimensions, phase: &'static str) -> impl FnOnce(EngineError) -> PointFailure {
    move |error| PointFailure {
        dimensions: d,
        phase,
        error,
    }
}

/// Anchors and opens proposal 1 from member 0 of group 0.
fn setup(
    reg: &mut Registry,
    actors: &Actors,
    d: Dimensions,
) -> Result<[CostReport; 2], PointFailure> {
    let groups = (0..d.groups).map(|g| actors.group(&d, g)).collect();
    let anchor = reg
        .anchor(actors.did.clone(), vec![], BTreeMap::new(), groups)
        .map_err(fail(d, "anchor"))?;
    let rotation = ChangeSet::key_rotation(vec![seeded(b'r', 0, 0).public_key()]);
    let request = ProposalRequest::sign(
        &actors.members[0][0],
        actors.did.clone(),
        1,
        1,
        0,
        rotation,
        actors.credential(&d, 0, 1, 0),
    );
    let propose = reg.propose(&request).map_err(fail(d, "propose"))?;
    Ok([
        CostReport::new("anchor", &anchor.cost, d),
        CostReport::new("propose", &propose.cost, d),
    ])
}

/// Runs the four-phase workflow for one grid point.
pub fn run_point(mut reg: Registry, d: Dimensions) -> Result<Vec<CostReport>, PointFailure> {
    let actors = Actors::new(&d);
    let [anchor, propose] = setup(&mut reg, &actors, d)?;
    let decide = match d.execution {
        ExecutionMode::OnChain => {
            // the last member, so an ACL lookup scans the whole list
            let decision = actors.decision(&d, d.members - 1, 1, 1);
            reg.decide(&decision).map_err(fail(d, "decide"))?
        }
        ExecutionMode::OffChain => {
            let decisions = (0..d.members)
                .map(|i| actors.decision(&d, i, 1, 1))
                .collect();
            reg.decide_batch(&DecisionBatch {
                proposal_id: 1,
                decisions,
            })
            .map_err(fail(d, "decide"))?
        }
    };
    let resolve = reg.resolve_manual(1).map_err(fail(d, "resolve"))?;
    Ok(vec![
        anchor,
        propose,
        CostReport::new("decide", &decide.cost, d),
        CostReport::new("resolve", &resolve.cost, d),
    ])
}

/// Total cost of every member of group 0 voting in separate on-chain
/// transactions, and of the same votes submitted as one off-chain batch.
/// Only `execution` in `d` is ignored.
pub fn individual_vs_batch<F>(factory: F, d: Dimensions) -> Result<(u64, u64), PointFailure>
where
    F: Fn() -> Registry,
{
    let on = Dimensions {
        execution: ExecutionMode::OnChain,
        ..d
    };
    let actors = Actors::new(&on);
    let mut reg = factory();
    setup(&mut reg, &actors, on)?;
    let mut individual = 0;
    for i in 0..on.members {
        individual += reg
            .decide(&actors.decision(&on, i, 1, 1))
            .map_err(fail(on, "decide"))?
            .cost
            .total;
    }

    let off = Dimensions {
        execution: ExecutionMode::OffChain,
        ..d
    };
    let mut reg = factory();
    setup(&mut reg, &actors, off)?;
    let decisions = (0..off.members)
        .map(|i| actors.decision(&off, i, 1, 1))
        .collect();
    let batch = reg
        .decide_batch(&DecisionBatch {
            proposal_id: 1,
            decisions,
        })
        .map_err(fail(off, "decide"))?;
    Ok((individual, batch.cost.total))
}

/// Parses an inclusive `a..b` range or a single number.
pub fn parse_range(s: &str) -> Result<Vec<usize>, SweepError> {
    let bad = || SweepError::InvalidGrid(format!("{s:?} is not a number or an `a..b` range"));
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(SweepError::InvalidGrid(format!("empty range {s:?}")));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![num(s)?]),
    }
}

fn parse_labels<T: Copy>(s: &str, what: &str, options: &[(&str, T)]) -> Result<Vec<T>, SweepError> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            options
                .iter()
                .find(|(label, _)| *label == x)
                .map(|(_, v)| *v)
                .ok_or_else(|| SweepError::InvalidGrid(format!("unknown {what} {x:?}")))
        })
        .collect()
}

pub fn parse_authz(s: &str) -> Result<Vec<AuthzKind>, SweepError> {
    let options = [AuthzKind::Acl, AuthzKind::Token, AuthzKind::Vc].map(|k| (k.label(), k));
    parse_labels(s, "authz kind", &options)
}

pub fn parse_coord(s: &str) -> Result<Vec<CoordKind>, SweepError> {
    let options = [
        CoordKind::NOfM,
        CoordKind::TurnoutSensitive,
        CoordKind::Weighted,
    ]
    .map(|k| (k.label(), k));
    parse_labels(s, "coordination kind", &options)
}

pub fn parse_execution(s: &str) -> Result<Vec<ExecutionMode>, SweepError> {
    let options = [ExecutionMode::OnChain, ExecutionMode::OffChain].map(|k| (k.label(), k));
    parse_labels(s, "execution mode", &options)
}

pub fn parse_time(s: &str) -> Result<Vec<TimeMode>, SweepError> {
    let options = [TimeMode::Unlimited, TimeMode::Limited].map(|k| (k.label(), k));
    parse_labels(s, "time mode", &options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SweepGrid {
        SweepGrid {
            groups: (1..=5).collect(),
            members: (1..=5).collect(),
            authz: vec![AuthzKind::Acl],
            coord: vec![CoordKind::NOfM],
            execution: vec![ExecutionMode::OnChain],
            time: vec![TimeMode::Unlimited],
        }
    }

    #[test]
    fn cardinality_is_points_times_phases() {
        let result = sweep(Registry::default, &grid()).unwrap();
        assert!(result.failures.is_empty());
        assert_eq!(result.reports.len(), 25 * 4);
        for phase in PHASES {
            assert_eq!(result.phase(phase).count(), 25);
        }
    }

    #[test]
    fn every_configuration_runs() {
        let g = SweepGrid {
            groups: vec![1, 2],
            members: vec![1, 3],
            authz: vec![AuthzKind::Acl, AuthzKind::Token, AuthzKind::Vc],
            coord: vec![
                CoordKind::NOfM,
                CoordKind::TurnoutSensitive,
                CoordKind::Weighted,
            ],
            execution: vec![ExecutionMode::OnChain, ExecutionMode::OffChain],
            time: vec![TimeMode::Unlimited, TimeMode::Limited],
        };
        let result = sweep(Registry::default, &g).unwrap();
        assert_eq!(result.failures, vec![]);
        assert_eq!(result.reports.len(), g.points().len() * 4);
    }

    #[test]
    fn sequential_matches_default() {
        let a = sweep(Registry::default, &grid()).unwrap();
        let b = sweep_sequential(Registry::default, &grid()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dimension_is_rejected() {
        let mut g = grid();
        g.authz.clear();
        assert!(matches!(
            sweep(Registry::default, &g),
            Err(SweepError::InvalidGrid(_))
        ));
        let mut g = grid();
        g.members = vec![0];
        assert!(sweep(Registry::default, &g).is_err());
    }

    #[test]
    fn range_and_list_parsing() {
        assert_eq!(parse_range("1..10").unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_range("4").unwrap(), vec![4]);
        assert!(parse_range("5..2").is_err());
        assert!(parse_range("x..2").is_err());
        assert_eq!(
            parse_authz("token,vc").unwrap(),
            vec![AuthzKind::Token, AuthzKind::Vc]
        );
        assert_eq!(
            parse_coord("turnout").unwrap(),
            vec![CoordKind::TurnoutSensitive]
        );
        assert_eq!(
            parse_execution("offchain").unwrap(),
            vec![ExecutionMode::OffChain]
        );
        assert_eq!(parse_time("unlimited,limited").unwrap().len(), 2);
        assert!(parse_authz("rbac").is_err());
    }
}
