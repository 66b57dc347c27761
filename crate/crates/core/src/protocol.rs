//! Cells, RM payloads, VC/link parameters and the two-level queue structure
//! shared by end systems and switches.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;
use crate::time::SimTime;

/// Bits in one 53-byte ATM cell.
pub const CELL_BITS: f64 = 424.0;

/// One FRM cell per `NRM` cells emitted (the other `NRM - 1` are data).
pub const NRM: u32 = 32;

/// Propagation delay per kilometre of fibre.
pub const NS_PER_KM: f64 = 5_000.0;

/// OC-3 payload rate, used for every link of the built-in topologies.
pub const OC3_MBPS: f64 = 155.52;

/// Time to send one cell at `rate_mbps`, rounded to the nearest nanosecond.
/// `None` for a non-positive rate (the sender idles).
pub fn cell_time(rate_mbps: f64) -> Option<SimTime> {
    if rate_mbps <= 0.0 || !rate_mbps.is_finite() {
        return None;
    }
    // 424 bits / (rate * 1e6 bit/s) = 424e3 / rate ns
    let ns = (CELL_BITS * 1e3 / rate_mbps).round() as u64;
    Some(SimTime::from_nanos(ns.max(1)))
}

/// Rate in Mbps corresponding to `cells` observed over `span`.
pub fn cells_to_mbps(cells: u64, span: SimTime) -> f64 {
    if span == SimTime::ZERO {
        return 0.0;
    }
    cells as f64 * CELL_BITS / (span.as_nanos() as f64 * 1e-3)
}

pub fn mbps_to_cells_per_sec(rate_mbps: f64) -> f64 {
    rate_mbps * 1e6 / CELL_BITS
}

pub fn prop_delay(length_km: f64) -> SimTime {
    SimTime::from_nanos((length_km * NS_PER_KM).round() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VcId(pub u32);

impl fmt::Display for VcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceClass {
    Abr,
    Vbr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Data,
    Frm,
    Brm,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Data => "data",
            CellKind::Frm => "FRM",
            CellKind::Brm => "BRM",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Rate feedback carried by RM cells. Only the explicit-rate mechanism is
/// modelled, so the payload is just ER, CCR and direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmPayload {
    pub er: f64,
    pub ccr: f64,
    pub dir: Direction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub vc: VcId,
    pub class: ServiceClass,
    pub kind: CellKind,
    pub rm: Option<RmPayload>,
    pub created_at: SimTime,
    /// Per-VC sequence number of data cells, used to check FIFO delivery.
    pub seq: u64,
}

impl Cell {
    pub fn data(vc: VcId, class: ServiceClass, seq: u64, now: SimTime) -> Self {
        Cell {
            vc,
            class,
            kind: CellKind::Data,
            rm: None,
            created_at: now,
            seq,
        }
    }

    /// Forward RM cell with the given ER and declared rate.
    pub fn frm(vc: VcId, er: f64, ccr: f64, now: SimTime) -> Self {
        Cell {
            vc,
            class: ServiceClass::Abr,
            kind: CellKind::Frm,
            rm: Some(RmPayload {
                er,
                ccr,
                dir: Direction::Forward,
            }),
            created_at: now,
            seq: 0,
        }
    }

    pub fn is_data(&self) -> bool {
        self.kind == CellKind::Data
    }

    pub fn er(&self) -> Option<f64> {
        self.rm.map(|rm| rm.er)
    }
}

/// Builds an in-rate forward RM cell declaring `acr_now` as the current rate.
pub fn make_frm(vc: &VcConfig, acr_now: f64, now: SimTime) -> Result<Cell, ProtocolError> {
    if vc.class != ServiceClass::Abr {
        return Err(ProtocolError::FrmOnNonAbr(vc.id.0));
    }
    Ok(Cell::frm(vc.id, vc.pcr, acr_now, now))
}

/// Turns an FRM into a BRM. ER and CCR are carried over unchanged; any ER
/// reduction is the caller's business.
pub fn turnaround(frm: Cell) -> Result<Cell, ProtocolError> {
    if frm.kind != CellKind::Frm {
        return Err(ProtocolError::TurnaroundNonFrm(frm.kind.name()));
    }
    let rm = frm.rm.expect("FRM always carries an RM payload");
    Ok(Cell {
        kind: CellKind::Brm,
        rm: Some(RmPayload {
            dir: Direction::Backward,
            ..rm
        }),
        ..frm
    })
}

/// ON/OFF square-wave pattern of a VBR source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VbrPattern {
    /// Fraction of the access link rate used while ON.
    pub on_fraction_of_link: f64,
    pub on: SimTime,
    pub off: SimTime,
}

impl VbrPattern {
    pub fn period(&self) -> SimTime {
        self.on + self.off
    }

    pub fn on_rate(&self, link_rate: f64) -> f64 {
        self.on_fraction_of_link * link_rate
    }

    /// Whether the pattern (started ON at `start`) is ON at `t`.
    pub fn is_on(&self, start: SimTime, t: SimTime) -> bool {
        if t < start {
            return false;
        }
        let period = self.period().as_nanos();
        if period == 0 {
            return self.on > SimTime::ZERO;
        }
        (t - start).as_nanos() % period < self.on.as_nanos()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VcConfig {
    pub id: VcId,
    pub class: ServiceClass,
    /// Node names: source, switches..., destination.
    pub path: Vec<String>,
    pub pcr: f64,
    pub mcr: f64,
    pub icr: f64,
    pub start_at: SimTime,
    pub stop_at: Option<SimTime>,
    pub vbr_pattern: Option<VbrPattern>,
}

impl VcConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.mcr <= self.icr && self.icr <= self.pcr) {
            return Err(ProtocolError::RateOrder {
                vc: self.id.0,
                mcr: self.mcr,
                icr: self.icr,
                pcr: self.pcr,
            });
        }
        if self.path.len() < 3 {
            return Err(ProtocolError::ShortPath { vc: self.id.0 });
        }
        Ok(())
    }

    pub fn source(&self) -> &str {
        &self.path[0]
    }

    pub fn destination(&self) -> &str {
        &self.path[self.path.len() - 1]
    }

    pub fn is_active_at(&self, t: SimTime) -> bool {
        t >= self.start_at && self.stop_at.is_none_or(|stop| t < stop)
    }

    pub fn clamp_rate(&self, rate: f64) -> f64 {
        rate.min(self.pcr).max(self.mcr)
    }
}

/// A bidirectional link between two nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkConfig {
    pub a: String,
    pub b: String,
    pub rate: f64,
    pub length_km: f64,
}

impl LinkConfig {
    pub fn new(a: &str, b: &str, rate: f64, length_km: f64) -> Self {
        LinkConfig {
            a: a.to_string(),
            b: b.to_string(),
            rate,
            length_km,
        }
    }

    pub fn prop_delay(&self) -> SimTime {
        prop_delay(self.length_km)
    }
}

/// Per-VC FIFO of a (virtual) source, shaped at `acr`.
#[derive(Clone, Debug)]
pub struct PerVcQueue {
    pub vc: VcId,
    pub acr: f64,
    cells: VecDeque<Cell>,
    arrivals: u64,
    departures: u64,
    high_water: usize,
}

impl PerVcQueue {
    pub fn new(vc: VcId, acr: f64) -> Self {
        PerVcQueue {
            vc,
            acr,
            cells: VecDeque::new(),
            arrivals: 0,
            departures: 0,
            high_water: 0,
        }
    }

    pub fn push(&mut self, cell: Cell) {
        self.cells.push_back(cell);
        self.arrivals += 1;
        self.high_water = self.high_water.max(self.cells.len());
    }

    pub fn pop(&mut self) -> Option<Cell> {
        let cell = self.cells.pop_front()?;
        self.departures += 1;
        Some(cell)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter()
    }

    /// Returns `(arrivals, departures)` accumulated since the last call.
    pub fn take_interval_counts(&mut self) -> (u64, u64) {
        let counts = (self.arrivals, self.departures);
        self.arrivals = 0;
        self.departures = 0;
        counts
    }
}

/// Per-class FIFO feeding a link.
#[derive(Clone, Debug)]
pub struct PerClassQueue {
    pub class: ServiceClass,
    cells: VecDeque<Cell>,
    arrivals: u64,
    high_water: usize,
}

impl PerClassQueue {
    pub fn new(class: ServiceClass) -> Self {
        PerClassQueue {
            class,
            cells: VecDeque::new(),
            arrivals: 0,
            high_water: 0,
        }
    }

    pub fn push(&mut self, cell: Cell) {
        self.cells.push_back(cell);
        self.arrivals += 1;
        self.high_water = self.high_water.max(self.cells.len());
    }

    pub fn pop(&mut self) -> Option<Cell> {
        self.cells.pop_front()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter()
    }

    pub fn take_arrivals(&mut self) -> u64 {
        std::mem::take(&mut self.arrivals)
    }
}
