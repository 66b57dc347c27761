//! Basic ERICA rate allocation.
//!
//! Each output port measures, over fixed intervals, the ABR input rate, the
//! high-priority (VBR/CBR) load and the set of active VCs. At the end of an
//! interval it derives
//!
//! ```text
//! target_rate = U * link_rate - hp_rate         (floored at 0.1 Mbps)
//! overload    = input_rate / target_rate        (floored at 0.01)
//! fair_share  = target_rate / max(n_active, 1)
//! ```
//!
//! and a VC's allocation is `max(vc_rate / overload, fair_share)`, clamped
//! to `[0, link_rate]`.

use std::collections::{BTreeMap, BTreeSet};

use crate::protocol::{cells_to_mbps, ServiceClass, VcId};
use crate::time::SimTime;

pub const DEFAULT_TARGET_UTILIZATION: f64 = 0.9;
pub const DEFAULT_INTERVAL: SimTime = SimTime::from_millis(1);
pub const TARGET_RATE_FLOOR: f64 = 0.1;
pub const OVERLOAD_FLOOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EricaParams {
    pub target_utilization: f64,
    pub link_rate: f64,
    pub interval: SimTime,
}

impl EricaParams {
    pub fn new(link_rate: f64) -> Self {
        EricaParams {
            target_utilization: DEFAULT_TARGET_UTILIZATION,
            link_rate,
            interval: DEFAULT_INTERVAL,
        }
    }
}

/// Quantities derived at the end of a measurement interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EricaSnapshot {
    pub target_rate: f64,
    pub input_rate: f64,
    pub hp_rate: f64,
    pub overload: f64,
    pub fair_share: f64,
    pub n_active: usize,
}

impl EricaSnapshot {
    pub fn from_rates(params: &EricaParams, input_rate: f64, hp_rate: f64, n_active: usize) -> Self {
        let target_rate = target_rate(params.target_utilization, params.link_rate, hp_rate);
        EricaSnapshot {
            target_rate,
            input_rate,
            hp_rate,
            overload: overload(input_rate, target_rate),
            fair_share: target_rate / n_active.max(1) as f64,
            n_active,
        }
    }
}

pub fn target_rate(target_utilization: f64, link_rate: f64, hp_rate: f64) -> f64 {
    (target_utilization * link_rate - hp_rate).max(TARGET_RATE_FLOOR)
}

pub fn overload(input_rate: f64, target_rate: f64) -> f64 {
    (input_rate / target_rate).max(OVERLOAD_FLOOR)
}

/// `max(vc_rate / overload, fair_share)` clamped to `[0, link_rate]`.
pub fn allocation(snapshot: &EricaSnapshot, vc_rate: f64, link_rate: f64) -> f64 {
    let efficiency = vc_rate / snapshot.overload;
    efficiency.max(snapshot.fair_share).clamp(0.0, link_rate)
}

/// Measurement and allocation state of one output port.
#[derive(Clone, Debug)]
pub struct EricaPortState {
    pub params: EricaParams,
    interval_start: SimTime,
    abr_input_cells: u64,
    hp_input_cells: u64,
    active: BTreeSet<VcId>,
    vc_rate: BTreeMap<VcId, f64>,
    snapshot: Option<EricaSnapshot>,
}

impl EricaPortState {
    pub fn new(params: EricaParams) -> Self {
        EricaPortState {
            params,
            interval_start: SimTime::ZERO,
            abr_input_cells: 0,
            hp_input_cells: 0,
            active: BTreeSet::new(),
            vc_rate: BTreeMap::new(),
            snapshot: None,
        }
    }

    pub fn link_rate(&self) -> f64 {
        self.params.link_rate
    }

    /// Counts a cell crossing this port's measurement point.
    pub fn record_arrival(&mut self, vc: VcId, class: ServiceClass) {
        match class {
            ServiceClass::Abr => {
                self.abr_input_cells += 1;
                self.active.insert(vc);
            }
            ServiceClass::Vbr => self.hp_input_cells += 1,
        }
    }

    pub fn n_active_so_far(&self) -> usize {
        self.active.len()
    }

    /// Closes the interval that started at the previous call (or time zero)
    /// and resets the counters.
    pub fn end_interval(&mut self, now: SimTime) -> EricaSnapshot {
        let span = now.saturating_sub(self.interval_start);
        let input_rate = cells_to_mbps(self.abr_input_cells, span);
        let hp_rate = cells_to_mbps(self.hp_input_cells, span);
        let snapshot = EricaSnapshot::from_rates(&self.params, input_rate, hp_rate, self.active.len());
        self.snapshot = Some(snapshot);
        self.abr_input_cells = 0;
        self.hp_input_cells = 0;
        self.active.clear();
        self.interval_start = now;
        snapshot
    }

    pub fn snapshot(&self) -> Option<&EricaSnapshot> {
        self.snapshot.as_ref()
    }

    pub fn set_vc_rate(&mut self, vc: VcId, rate: f64) {
        self.vc_rate.insert(vc, rate);
    }

    pub fn vc_rate(&self, vc: VcId) -> Option<f64> {
        self.vc_rate.get(&vc).copied()
    }

    /// Allocation for `vc` using the stored VC rate (0 if none was recorded).
    /// Before the first interval completes there is no constraint and the
    /// link rate is returned.
    pub fn allocate(&self, vc: VcId) -> f64 {
        self.allocate_with_rate(self.vc_rate(vc).unwrap_or(0.0))
    }

    pub fn allocate_with_rate(&self, vc_rate: f64) -> f64 {
        match &self.snapshot {
            Some(s) => allocation(s, vc_rate, self.params.link_rate),
            None => self.params.link_rate,
        }
    }
}
