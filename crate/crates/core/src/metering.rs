//! Abstract cost model.
//!
//! Every registry transaction is charged in abstract units, itemized by
//! category. The default schedule uses EVM-like magnitudes so that cost
//! curves have comparable shapes; the absolute numbers mean nothing.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authz::AuthzKind;
use crate::coord::CoordKind;
use crate::model::ExecutionMode;

#[derive(Debug, Error)]
pub enum MeteringError {
    #[error("unknown cost category {0:?}")]
    UnknownCategory(String),
    #[error("cost schedule entry `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("invalid cost schedule: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostCategory {
    BaseTx,
    StorageWriteNew,
    StorageWriteUpdate,
    EventBase,
    EventPerByte,
    SigVerify,
    IterationStep,
}

impl CostCategory {
    pub const ALL: [CostCategory; 7] = [
        CostCategory::BaseTx,
        CostCategory::StorageWriteNew,
        CostCategory::StorageWriteUpdate,
        CostCategory::EventBase,
        CostCategory::EventPerByte,
        CostCategory::SigVerify,
        CostCategory::IterationStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostCategory::BaseTx => "base_tx",
            CostCategory::StorageWriteNew => "storage_write_new",
            CostCategory::StorageWriteUpdate => "storage_write_update",
            CostCategory::EventBase => "event_base",
            CostCategory::EventPerByte => "event_per_byte",
            CostCategory::SigVerify => "sig_verify",
            CostCategory::IterationStep => "iteration_step",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for CostCategory {
    type Err = MeteringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CostCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| MeteringError::UnknownCategory(s.to_owned()))
    }
}

impl fmt::Display for CostCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unit cost per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSchedule {
    pub base_tx: u64,
    pub storage_write_new: u64,
    pub storage_write_update: u64,
    pub event_base: u64,
    pub event_per_byte: u64,
    pub sig_verify: u64,
    pub iteration_step: u64,
}

impl Default for CostSchedule {
    fn default() -> Self {
        CostSchedule {
            base_tx: 21_000,
            storage_write_new: 20_000,
            storage_write_update: 5_000,
            event_base: 375,
            event_per_byte: 8,
            sig_verify: 3_000,
            iteration_step: 200,
        }
    }
}

impl CostSchedule {
    pub fn unit(&self, category: CostCategory) -> u64 {
        match category {
            CostCategory::BaseTx => self.base_tx,
            CostCategory::StorageWriteNew => self.storage_write_new,
            CostCategory::StorageWriteUpdate => self.storage_write_update,
            CostCategory::EventBase => self.event_base,
            CostCategory::EventPerByte => self.event_per_byte,
            CostCategory::SigVerify => self.sig_verify,
            CostCategory::IterationStep => self.iteration_step,
        }
    }

    pub fn validate(&self) -> Result<(), MeteringError> {
        for category in CostCategory::ALL {
            if self.unit(category) == 0 {
                return Err(MeteringError::NonPositive(category.name()));
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, MeteringError> {
        let schedule: CostSchedule = serde_json::from_str(json)?;
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Accumulates charges for a single transaction.
#[derive(Debug, Clone)]
pub struct Meter {
    schedule: Option<CostSchedule>,
    counts: [u64; 7],
}

impl Meter {
    /// A meter with nothing charged yet.
    pub fn new(schedule: CostSchedule) -> Self {
        Meter {
            schedule: Some(schedule),
            counts: [0; 7],
        }
    }

    /// A meter for a fresh transaction: the base cost is already charged.
    pub fn for_transaction(schedule: Option<CostSchedule>) -> Self {
        let mut meter = Meter {
            schedule,
            counts: [0; 7],
        };
        meter.charge(CostCategory::BaseTx, 1);
        meter
    }

    /// A meter that records nothing.
    pub fn disabled() -> Self {
        Meter {
            schedule: None,
            counts: [0; 7],
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.schedule.is_some()
    }

    pub fn charge(&mut self, category: CostCategory, count: u64) {
        if self.schedule.is_some() {
            self.counts[category.index()] += count;
        }
    }

    pub fn charge_named(&mut self, category: &str, count: u64) -> Result<(), MeteringError> {
        self.charge(category.parse()?, count);
        Ok(())
    }

    /// One event emission carrying `payload_len` bytes.
    pub fn charge_event(&mut self, payload_len: usize) {
        self.charge(CostCategory::EventBase, 1);
        self.charge(CostCategory::EventPerByte, payload_len as u64);
    }

    pub fn count(&self, category: CostCategory) -> u64 {
        self.counts[category.index()]
    }

    pub fn total(&self) -> u64 {
        self.breakdown().total
    }

    pub fn breakdown(&self) -> CostBreakdown {
        let Some(schedule) = self.schedule else {
            return CostBreakdown::default();
        };
        let items: Vec<CostItem> = CostCategory::ALL
            .into_iter()
            .map(|category| {
                let count = self.count(category);
                CostItem {
                    category,
                    count,
                    units: count * schedule.unit(category),
                }
            })
            .collect();
        CostBreakdown {
            total: items.iter().map(|i| i.units).sum(),
            items,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostItem {
    pub category: CostCategory,
    pub count: u64,
    pub units: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: u64,
    pub items: Vec<CostItem>,
}

impl CostBreakdown {
    pub fn units(&self, category: CostCategory) -> u64 {
        self.items
            .iter()
            .find(|i| i.category == category)
            .map_or(0, |i| i.units)
    }

    pub fn count(&self, category: CostCategory) -> u64 {
        self.items
            .iter()
            .find(|i| i.category == category)
            .map_or(0, |i| i.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Unlimited,
    Limited,
}

impl TimeMode {
    pub fn label(self) -> &'static str {
        match self {
            TimeMode::Unlimited => "unlimited",
            TimeMode::Limited => "limited",
        }
    }
}

/// The governance aspects a cost report is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dimensions {
    pub groups: usize,
    pub members: usize,
    pub authz: AuthzKind,
    pub coord: CoordKind,
    pub execution: ExecutionMode,
    pub time: TimeMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub transaction_label: String,
    pub total: u64,
    pub items: Vec<CostItem>,
    pub dimensions: Dimensions,
}

impl CostReport {
    pub fn new(label: impl Into<String>, cost: &CostBreakdown, dimensions: Dimensions) -> Self {
        CostReport {
            transaction_label: label.into(),
            total: cost.total,
            items: cost.items.clone(),
            dimensions,
        }
    }

    pub fn units(&self, category: CostCategory) -> u64 {
        self.items
            .iter()
            .find(|i| i.category == category)
            .map_or(0, |i| i.units)
    }
}

pub fn csv_header() -> Vec<&'static str> {
    let mut header = vec![
        "phase",
        "groups",
        "members",
        "authz",
        "coord",
        "execution",
        "time",
        "total",
    ];
    header.extend(CostCategory::ALL.iter().map(|c| c.name()));
    header
}

/// Writes reports as CSV, one row per report, category columns in units.
pub fn write_csv<W: io::Write>(reports: &[CostReport], out: W) -> Result<(), MeteringError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(csv_header())?;
    for report in reports {
        let d = &report.dimensions;
        let mut row = vec![
            report.transaction_label.clone(),
            d.groups.to_string(),
            d.members.to_string(),
            d.authz.label().to_owned(),
            d.coord.label().to_owned(),
            d.execution.label().to_owned(),
            d.time.label().to_owned(),
            report.total.to_string(),
        ];
        row.extend(
            CostCategory::ALL
                .iter()
                .map(|&c| report.units(c).to_string()),
        );
        writer.write_record(&row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charge_sig_verify_adds_one_unit_cost() {
        let schedule = CostSchedule::default();
        let mut meter = Meter::new(schedule);
        meter.charge(CostCategory::SigVerify, 1);
        assert_eq!(meter.total(), schedule.sig_verify);
    }

    #[test]
    fn charge_iterations_scales_with_count() {
        let schedule = CostSchedule::default();
        let mut meter = Meter::new(schedule);
        meter.charge(CostCategory::IterationStep, 7);
        assert_eq!(meter.total(), 7 * schedule.iteration_step);
    }

    #[test]
    fn empty_transaction_costs_base() {
        let schedule = CostSchedule::default();
        assert_eq!(
            Meter::for_transaction(Some(schedule)).total(),
            schedule.base_tx
        );
    }

    #[test]
    fn unknown_category_is_an_error() {
        let mut meter = Meter::new(CostSchedule::default());
        assert!(matches!(
            meter.charge_named("gas_refund", 1),
            Err(MeteringError::UnknownCategory(_))
        ));
        meter.charge_named("event_base", 2).unwrap();
        assert_eq!(meter.count(CostCategory::EventBase), 2);
    }

    #[test]
    fn total_is_sum_of_items() {
        let mut meter = Meter::for_transaction(Some(CostSchedule::default()));
        meter.charge(CostCategory::StorageWriteNew, 3);
        meter.charge_event(41);
        let b = meter.breakdown();
        assert_eq!(b.total, b.items.iter().map(|i| i.units).sum::<u64>());
        assert_eq!(b.count(CostCategory::EventPerByte), 41);
    }

    #[test]
    fn disabled_meter_is_zero() {
        let mut meter = Meter::disabled();
        meter.charge(CostCategory::SigVerify, 10);
        assert_eq!(meter.total(), 0);
    }

    #[test]
    fn schedule_json_round_trip_and_validation() {
        let json = serde_json::to_string(&CostSchedule::default()).unwrap();
        assert_eq!(
            CostSchedule::from_json(&json).unwrap(),
            CostSchedule::default()
        );
        let zero = json.replace("\"sig_verify\":3000", "\"sig_verify\":0");
        assert!(matches!(
            CostSchedule::from_json(&zero),
            Err(MeteringError::NonPositive("sig_verify"))
        ));
        assert!(CostSchedule::from_json(r#"{"base_tx":1}"#).is_err());
    }
}
