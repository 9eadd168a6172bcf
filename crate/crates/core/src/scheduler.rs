//! Simulated-time scheduler.
//!
//! Stands in for a cron contract plus the off-chain watcher that calls back
//! once a governance process has run out of time. Time is an integer tick
//! that only moves when [`Registry::advance_clock`] is called.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::coord::ResolutionReason;
use crate::metering::Meter;
use crate::model::{EventPayload, ProposalId, ProposalStatus, Tick};
use crate::registry::{EngineError, Receipt, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleRequest {
    pub proposal_id: ProposalId,
    pub deadline: Tick,
}

impl Ord for ScheduleRequest {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.deadline, self.proposal_id).cmp(&(other.deadline, other.proposal_id))
    }
}

impl PartialOrd for ScheduleRequest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending expiries ordered by deadline, then proposal id. Entries for
/// proposals that resolved early stay queued and are dropped when they fire.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScheduleQueue {
    pending: BTreeSet<ScheduleRequest>,
}

impl ScheduleQueue {
    pub fn insert(&mut self, request: ScheduleRequest) {
        self.pending.insert(request);
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScheduleRequest> {
        self.pending.iter()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Entries due at or before `tick`, in firing order.
    pub fn due(&self, tick: Tick) -> Vec<ScheduleRequest> {
        self.pending
            .iter()
            .take_while(|r| r.deadline <= tick)
            .copied()
            .collect()
    }

    pub(crate) fn drain_due(&mut self, tick: Tick) -> Vec<ScheduleRequest> {
        let due = self.due(tick);
        for r in &due {
            self.pending.remove(r);
        }
        due
    }
}

impl Registry {
    /// Queues an expiry for an active proposal.
    pub fn schedule(&mut self, request: ScheduleRequest) -> Result<Receipt, EngineError> {
        let status = self
            .state()
            .proposals
            .get(&request.proposal_id)
            .map(|p| p.status);
        if status != Some(ProposalStatus::Active) {
            return Err(EngineError::UnknownProposal(request.proposal_id));
        }
        if request.deadline <= self.state().clock {
            return Err(EngineError::DeadlinePassed {
                deadline: request.deadline,
                now: self.state().clock,
            });
        }
        let mut meter = self.transaction_meter();
        let events = self.commit(
            vec![EventPayload::Scheduled {
                proposal_id: request.proposal_id,
                deadline: request.deadline,
            }],
            &mut meter,
        );
        Ok(Receipt::new(events, &meter))
    }

    /// Moves the clock forward to `to` and resolves every still-active
    /// proposal whose deadline has passed, earliest deadline first. The
    /// first receipt records the clock move itself; each expiry resolution
    /// is its own metered transaction.
    pub fn advance_clock(&mut self, to: Tick) -> Result<Vec<Receipt>, EngineError> {
        let now = self.state().clock;
        if to < now {
            return Err(EngineError::ClockRegression { now, to });
        }
        if to == now {
            return Ok(Vec::new());
        }
        let due = self.state().schedule_queue.due(to);
        let mut unmetered = Meter::disabled();
        let tick = self.commit(
            vec![EventPayload::ClockAdvanced { from: now, to }],
            &mut unmetered,
        );
        let mut receipts = vec![Receipt::new(tick, &unmetered)];
        for request in due {
            let active = self
                .state()
                .proposals
                .get(&request.proposal_id)
                .is_some_and(|p| p.status == ProposalStatus::Active);
            if active {
                receipts
                    .push(self.apply_resolution(request.proposal_id, ResolutionReason::Expired)?);
            }
        }
        Ok(receipts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_orders_by_deadline_then_id() {
        let mut q = ScheduleQueue::default();
        q.insert(ScheduleRequest {
            proposal_id: 2,
            deadline: 15,
        });
        q.insert(ScheduleRequest {
            proposal_id: 3,
            deadline: 10,
        });
        q.insert(ScheduleRequest {
            proposal_id: 1,
            deadline: 15,
        });
        let order: Vec<_> = q.iter().map(|r| r.proposal_id).collect();
        assert_eq!(order, vec![3, 1, 2]);
        assert_eq!(q.due(14).len(), 1);
        assert_eq!(q.drain_due(15).len(), 3);
        assert!(q.is_empty());
    }
}
