//! ABR source and destination end-system behaviour and the ON/OFF VBR
//! background source.

use crate::engine::EventHandle;
use crate::error::ProtocolError;
use crate::protocol::{
    cell_time, make_frm, turnaround, Cell, CellKind, ServiceClass, VbrPattern, VcConfig, VcId,
    NRM,
};
use crate::time::SimTime;

/// Rate-paced emitter shared by ABR sources and virtual sources.
///
/// Tracks the allowed cell rate, the FRM cadence and the pending send slot
/// so a rate increase can pull the next slot forward.
#[derive(Clone, Debug)]
pub struct RatePacer {
    acr: f64,
    mcr: f64,
    pcr: f64,
    cells_since_frm: u32,
    last_emit: Option<SimTime>,
    pending: Option<(SimTime, EventHandle)>,
}

impl RatePacer {
    pub fn new(initial: f64, mcr: f64, pcr: f64) -> Self {
        RatePacer {
            acr: initial.clamp(mcr, pcr),
            mcr,
            pcr,
            cells_since_frm: 0,
            last_emit: None,
            pending: None,
        }
    }

    pub fn acr(&self) -> f64 {
        self.acr
    }

    pub fn mcr(&self) -> f64 {
        self.mcr
    }

    pub fn pcr(&self) -> f64 {
        self.pcr
    }

    pub fn cells_since_frm(&self) -> u32 {
        self.cells_since_frm
    }

    pub fn frm_due(&self) -> bool {
        self.cells_since_frm == 0
    }

    /// Applies explicit-rate feedback: `acr <- max(mcr, min(er, pcr))`.
    /// Returns the previous ACR.
    pub fn apply_er(&mut self, er: f64) -> f64 {
        let old = self.acr;
        self.acr = er.min(self.pcr).max(self.mcr);
        old
    }

    /// Consumes one send slot at `now`; returns true if the slot carries an FRM.
    pub fn take_slot(&mut self, now: SimTime) -> bool {
        let is_frm = self.cells_since_frm == 0;
        self.cells_since_frm = (self.cells_since_frm + 1) % NRM;
        self.last_emit = Some(now);
        self.pending = None;
        is_frm
    }

    /// Earliest time the next cell may leave without exceeding the ACR.
    /// `None` while the ACR is zero.
    pub fn earliest_slot(&self, now: SimTime) -> Option<SimTime> {
        let gap = cell_time(self.acr)?;
        Some(match self.last_emit {
            Some(last) => (last + gap).max(now),
            None => now,
        })
    }

    pub fn pending(&self) -> Option<(SimTime, EventHandle)> {
        self.pending
    }

    pub fn set_pending(&mut self, at: SimTime, handle: EventHandle) {
        self.pending = Some((at, handle));
    }

    pub fn clear_pending(&mut self) -> Option<(SimTime, EventHandle)> {
        self.pending.take()
    }

    /// After a rate change, the slot time the pending event should move to,
    /// if the new rate makes it earlier. Decreases leave the pending slot in
    /// place; the following gap uses the new rate.
    pub fn earlier_slot(&self, now: SimTime) -> Option<SimTime> {
        let (at, _) = self.pending?;
        let candidate = self.earliest_slot(now)?;
        (candidate < at).then_some(candidate)
    }
}

/// Per-VC state of an ABR source end system.
#[derive(Clone, Debug)]
pub struct SourceState {
    pub vc: VcId,
    pub pacer: RatePacer,
    pub active: bool,
    next_seq: u64,
}

/// One emission of [`SourceState::send_slot`].
#[derive(Debug)]
pub struct Emission {
    pub cell: Cell,
    /// When the next slot is due; `None` if the source idles at ACR 0.
    pub next: Option<SimTime>,
}

impl SourceState {
    pub fn new(cfg: &VcConfig) -> Self {
        SourceState {
            vc: cfg.id,
            pacer: RatePacer::new(cfg.icr, cfg.mcr, cfg.pcr),
            active: false,
            next_seq: 0,
        }
    }

    pub fn acr(&self) -> f64 {
        self.pacer.acr()
    }

    /// Cells handed to the network so far (data only).
    pub fn data_sent(&self) -> u64 {
        self.next_seq
    }

    /// Emits the cell for the slot at `now`: an FRM stamped with the current
    /// ACR once every `NRM` cells, otherwise a data cell.
    pub fn send_slot(&mut self, cfg: &VcConfig, now: SimTime) -> Result<Emission, ProtocolError> {
        let cell = if self.pacer.take_slot(now) {
            make_frm(cfg, self.pacer.acr(), now)?
        } else {
            let seq = self.next_seq;
            self.next_seq += 1;
            Cell::data(self.vc, ServiceClass::Abr, seq, now)
        };
        let next = cell_time(self.pacer.acr()).map(|gap| now + gap);
        Ok(Emission { cell, next })
    }

    /// `acr <- max(mcr, min(er, pcr))`. Returns `(old, new)`.
    pub fn on_brm(&mut self, brm: &Cell) -> (f64, f64) {
        debug_assert_eq!(brm.kind, CellKind::Brm);
        debug_assert_eq!(brm.vc, self.vc);
        let er = brm.er().unwrap_or(self.pacer.pcr());
        let old = self.pacer.apply_er(er);
        (old, self.pacer.acr())
    }
}

#[derive(Debug, PartialEq)]
pub enum DestOutcome {
    Delivered,
    TurnedAround(Cell),
    Absorbed,
}

/// Destination end-system handling: data is absorbed and counted, FRMs are
/// turned around immediately, stray BRMs terminate.
pub fn dest_on_cell(cell: Cell) -> Result<DestOutcome, ProtocolError> {
    match cell.kind {
        CellKind::Data => Ok(DestOutcome::Delivered),
        CellKind::Frm => Ok(DestOutcome::TurnedAround(turnaround(cell)?)),
        CellKind::Brm => Ok(DestOutcome::Absorbed),
    }
}

/// Square-wave VBR source: emits at `on_fraction * link_rate` while ON and
/// nothing while OFF, starting ON at `start_at`.
#[derive(Clone, Debug)]
pub struct VbrSource {
    pub vc: VcId,
    pub pattern: VbrPattern,
    pub on_rate: f64,
    pub start_at: SimTime,
    next_seq: u64,
}

impl VbrSource {
    pub fn new(vc: VcId, pattern: VbrPattern, link_rate: f64, start_at: SimTime) -> Self {
        VbrSource {
            vc,
            pattern,
            on_rate: pattern.on_rate(link_rate),
            start_at,
            next_seq: 0,
        }
    }

    /// First emission instant at or after `t`, or `None` for a silent source.
    pub fn next_emission(&self, t: SimTime) -> Option<SimTime> {
        cell_time(self.on_rate)?;
        if self.pattern.on == SimTime::ZERO {
            return None;
        }
        let t = t.max(self.start_at);
        if self.pattern.is_on(self.start_at, t) {
            return Some(t);
        }
        let period = self.pattern.period().as_nanos();
        let elapsed = (t - self.start_at).as_nanos();
        let cycles = elapsed.div_ceil(period);
        Some(self.start_at + SimTime::from_nanos(cycles * period))
    }

    /// Emits one cell at `now` and returns it with the next emission time.
    pub fn tick(&mut self, now: SimTime) -> (Cell, Option<SimTime>) {
        let cell = Cell::data(self.vc, ServiceClass::Vbr, self.next_seq, now);
        self.next_seq += 1;
        let next = cell_time(self.on_rate).and_then(|gap| self.next_emission(now + gap));
        (cell, next)
    }

    pub fn data_sent(&self) -> u64 {
        self.next_seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{make_frm, OC3_MBPS};

    fn cfg(icr: f64) -> VcConfig {
        VcConfig {
            id: VcId(1),
            class: ServiceClass::Abr,
            path: vec!["S1".into(), "Sw1".into(), "D1".into()],
            pcr: OC3_MBPS,
            mcr: 0.0,
            icr,
            start_at: SimTime::ZERO,
            stop_at: None,
            vbr_pattern: None,
        }
    }

    fn brm(er: f64) -> Cell {
        let frm = make_frm(&cfg(10.0), 10.0, SimTime::ZERO).unwrap();
        let mut b = turnaround(frm).unwrap();
        b.rm.as_mut().unwrap().er = er;
        b
    }

    #[test]
    fn line_rate_gap() {
        let c = cfg(OC3_MBPS);
        let mut s = SourceState::new(&c);
        let e = s.send_slot(&c, SimTime::ZERO).unwrap();
        // 424 bits / 155.52 Mbps = 2.7263 us
        assert_eq!(e.next, Some(SimTime::from_nanos(2726)));
    }

    #[test]
    fn one_frm_per_nrm_cells() {
        let c = cfg(10.0);
        let mut s = SourceState::new(&c);
        let mut t = SimTime::ZERO;
        let mut frms = 0;
        for _ in 0..(3 * NRM) {
            let e = s.send_slot(&c, t).unwrap();
            if e.cell.kind == CellKind::Frm {
                frms += 1;
            }
            t = e.next.unwrap();
        }
        assert_eq!(frms, 3);
        assert_eq!(s.data_sent(), 3 * (NRM as u64 - 1));
    }

    #[test]
    fn first_emission_is_frm_at_icr() {
        let c = cfg(10.0);
        let mut s = SourceState::new(&c);
        let e = s.send_slot(&c, SimTime::ZERO).unwrap();
        assert_eq!(e.cell.kind, CellKind::Frm);
        assert_eq!(e.cell.rm.unwrap().ccr, 10.0);
    }

    #[test]
    fn brm_sets_acr_with_clamps() {
        let c = cfg(10.0);
        let mut s = SourceState::new(&c);
        assert_eq!(s.on_brm(&brm(46.7)), (10.0, 46.7));
        assert_eq!(s.on_brm(&brm(1000.0)).1, OC3_MBPS);
        assert_eq!(s.on_brm(&brm(0.0)).1, 0.0);
        // idles at zero rate
        let e = s.send_slot(&c, SimTime::ZERO).unwrap();
        assert_eq!(e.next, None);
        assert_eq!(s.pacer.earliest_slot(SimTime::ZERO), None);
    }

    #[test]
    fn rate_increase_pulls_slot_forward() {
        let c = cfg(10.0);
        let mut s = SourceState::new(&c);
        s.pacer.take_slot(SimTime::ZERO);
        let next = cell_time(10.0).unwrap();
        s.pacer.set_pending(next, EventHandle::for_test(0));
        assert_eq!(s.pacer.earlier_slot(SimTime::from_nanos(100)), None);
        s.on_brm(&brm(100.0));
        assert_eq!(
            s.pacer.earlier_slot(SimTime::from_nanos(100)),
            Some(cell_time(100.0).unwrap())
        );
        s.on_brm(&brm(5.0));
        assert_eq!(s.pacer.earlier_slot(SimTime::from_nanos(100)), None);
    }

    #[test]
    fn destination_behaviour() {
        let data = Cell::data(VcId(1), ServiceClass::Abr, 0, SimTime::ZERO);
        assert_eq!(dest_on_cell(data).unwrap(), DestOutcome::Delivered);

        let mut frm = make_frm(&cfg(10.0), 10.0, SimTime::ZERO).unwrap();
        frm.rm.as_mut().unwrap().er = 100.0;
        match dest_on_cell(frm).unwrap() {
            DestOutcome::TurnedAround(b) => {
                assert_eq!(b.kind, CellKind::Brm);
                assert_eq!(b.er(), Some(100.0));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(dest_on_cell(brm(1.0)).unwrap(), DestOutcome::Absorbed);
    }

    #[test]
    fn vbr_on_off() {
        let pattern = VbrPattern {
            on_fraction_of_link: 0.8,
            on: SimTime::from_millis(20),
            off: SimTime::from_millis(20),
        };
        let mut v = VbrSource::new(VcId(9), pattern, OC3_MBPS, SimTime::ZERO);
        assert!((v.on_rate - 124.416).abs() < 1e-9);
        assert_eq!(v.next_emission(SimTime::from_millis(5)), Some(SimTime::from_millis(5)));
        assert_eq!(v.next_emission(SimTime::from_millis(25)), Some(SimTime::from_millis(40)));
        let (_, next) = v.tick(SimTime::from_millis(20) - SimTime::from_nanos(1));
        assert_eq!(next, Some(SimTime::from_millis(40)));

        let silent = VbrSource::new(
            VcId(9),
            VbrPattern { on_fraction_of_link: 0.0, ..pattern },
            OC3_MBPS,
            SimTime::ZERO,
        );
        assert_eq!(silent.next_emission(SimTime::ZERO), None);
    }
}
