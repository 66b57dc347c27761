//! Switch models.
//!
//! A non-VS/VD switch keeps one FIFO per service class at each output port
//! and stamps `ER <- min(ER, VAL)` into BRMs on their way back. A VS/VD switch
//! terminates the upstream control loop (virtual destination) and starts a
//! new one (virtual source) with a shaped per-VC queue. How the two loops are
//! coupled is selected by [`VsVdOptions`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::endsystems::RatePacer;
use crate::erica::EricaPortState;
use crate::error::{ProtocolError, ScenarioError};
use crate::protocol::{cells_to_mbps, turnaround, Cell, CellKind, PerVcQueue, ServiceClass, VcId};
use crate::time::SimTime;

/// Where a VC's current rate comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VcRateMethod {
    /// CCR declared in FRMs of the previous loop.
    Frm1Ccr,
    /// CCR this switch declares in its own FRMs, i.e. the next-loop ACR.
    Frm2Ccr,
    /// Arrival rate into the per-VC queue.
    MeasuredAtPerVcInput,
    /// Rate at which the per-VC queue feeds the per-class queue.
    MeasuredAtPerClassInput,
}

/// What counts as the ABR input rate of the port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputRateMethod {
    SumPerVc,
    PerClass,
}

/// Which loop(s) a congested link pushes its allocation into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CongestionEffect {
    PrevOnly,
    NextOnly,
    Both,
}

/// When the next-loop allocation is recomputed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocUpdate {
    BrmOnly,
    FrmOnly,
    FrmAndBrm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VsVdOptions {
    pub vc_rate: VcRateMethod,
    pub input_rate: InputRateMethod,
    pub congestion: CongestionEffect,
    pub alloc_update: AllocUpdate,
}

/// The six viable designs, in column order A..F, with their option codes.
pub const PRESETS: [(char, u32, VsVdOptions); 6] = [
    (
        'A',
        41,
        VsVdOptions {
            vc_rate: VcRateMethod::Frm1Ccr,
            input_rate: InputRateMethod::SumPerVc,
            congestion: CongestionEffect::PrevOnly,
            alloc_update: AllocUpdate::FrmOnly,
        },
    ),
    (
        'B',
        52,
        VsVdOptions {
            vc_rate: VcRateMethod::MeasuredAtPerClassInput,
            input_rate: InputRateMethod::PerClass,
            congestion: CongestionEffect::Both,
            alloc_update: AllocUpdate::FrmOnly,
        },
    ),
    (
        'C',
        329,
        VsVdOptions {
            vc_rate: VcRateMethod::Frm1Ccr,
            input_rate: InputRateMethod::SumPerVc,
            congestion: CongestionEffect::Both,
            alloc_update: AllocUpdate::FrmOnly,
        },
    ),
    (
        'D',
        340,
        VsVdOptions {
            vc_rate: VcRateMethod::MeasuredAtPerClassInput,
            input_rate: InputRateMethod::PerClass,
            congestion: CongestionEffect::Both,
            alloc_update: AllocUpdate::FrmAndBrm,
        },
    ),
    (
        'E',
        393,
        VsVdOptions {
            vc_rate: VcRateMethod::Frm1Ccr,
            input_rate: InputRateMethod::SumPerVc,
            congestion: CongestionEffect::Both,
            alloc_update: AllocUpdate::BrmOnly,
        },
    ),
    (
        'F',
        404,
        VsVdOptions {
            vc_rate: VcRateMethod::MeasuredAtPerClassInput,
            input_rate: InputRateMethod::PerClass,
            congestion: CongestionEffect::Both,
            alloc_update: AllocUpdate::BrmOnly,
        },
    ),
];

impl VsVdOptions {
    /// Declared next-loop rate against measured per-class input: consistent
    /// only while per-VC queues are backlogged, so it over-allocates.
    pub const OVERALLOCATING: VsVdOptions = VsVdOptions {
        vc_rate: VcRateMethod::Frm2Ccr,
        input_rate: InputRateMethod::PerClass,
        congestion: CongestionEffect::Both,
        alloc_update: AllocUpdate::FrmAndBrm,
    };

    pub fn preset(letter: &str) -> Result<VsVdOptions, ScenarioError> {
        let mut chars = letter.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => PRESETS
                .iter()
                .find(|(l, _, _)| *l == c.to_ascii_uppercase())
                .map(|(_, _, o)| *o)
                .ok_or_else(|| ScenarioError::UnknownPreset(letter.to_string())),
            _ => Err(ScenarioError::UnknownPreset(letter.to_string())),
        }
    }

    pub fn preset_letter(&self) -> Option<char> {
        PRESETS.iter().find(|(_, _, o)| o == self).map(|(l, _, _)| *l)
    }

    /// Every point of the 4 x 2 x 3 x 3 design space.
    pub fn all() -> Vec<VsVdOptions> {
        use AllocUpdate::*;
        use CongestionEffect::*;
        use InputRateMethod::*;
        use VcRateMethod::*;
        let mut out = Vec::with_capacity(72);
        for vc_rate in [Frm1Ccr, Frm2Ccr, MeasuredAtPerVcInput, MeasuredAtPerClassInput] {
            for input_rate in [SumPerVc, PerClass] {
                for congestion in [PrevOnly, NextOnly, Both] {
                    for alloc_update in [BrmOnly, FrmOnly, FrmAndBrm] {
                        out.push(VsVdOptions {
                            vc_rate,
                            input_rate,
                            congestion,
                            alloc_update,
                        });
                    }
                }
            }
        }
        out
    }

    fn reduces_prev_loop(&self) -> bool {
        matches!(self.congestion, CongestionEffect::PrevOnly | CongestionEffect::Both)
    }

    fn reduces_next_loop(&self) -> bool {
        matches!(self.congestion, CongestionEffect::NextOnly | CongestionEffect::Both)
    }

    fn updates_on_frm(&self) -> bool {
        matches!(self.alloc_update, AllocUpdate::FrmOnly | AllocUpdate::FrmAndBrm)
    }

    fn updates_on_brm(&self) -> bool {
        matches!(self.alloc_update, AllocUpdate::BrmOnly | AllocUpdate::FrmAndBrm)
    }
}

impl fmt::Display for VsVdOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}/{:?}/{:?}/{:?}",
            self.vc_rate, self.input_rate, self.congestion, self.alloc_update
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SwitchArch {
    NonVsVd,
    VsVd(VsVdOptions),
}

/// Stamps the forward port's allocation into a BRM passing a non-VS/VD
/// switch. Returns the allocation used.
pub fn nonvsvd_on_brm(erica: &EricaPortState, brm: &mut Cell) -> f64 {
    let val = erica.allocate(brm.vc);
    if let Some(rm) = brm.rm.as_mut() {
        rm.er = rm.er.min(val);
    }
    val
}

/// Per-VC state held by the virtual source at one output port.
#[derive(Clone, Debug)]
pub struct VsVcState {
    pub queue: PerVcQueue,
    pub pacer: RatePacer,
    /// Allocation table entry written whenever the allocation is recomputed.
    pub stored_val: Option<f64>,
    pub frm1_ccr: Option<f64>,
    /// Rates measured over the last completed interval.
    pub per_vc_in_rate: f64,
    pub per_class_in_rate: f64,
    frm1_arrivals: u64,
    frm2_sent: u64,
}

impl VsVcState {
    pub fn new(vc: VcId, initial_acr: f64, mcr: f64, pcr: f64) -> Self {
        let pacer = RatePacer::new(initial_acr, mcr, pcr);
        VsVcState {
            queue: PerVcQueue::new(vc, pacer.acr()),
            pacer,
            stored_val: None,
            frm1_ccr: None,
            per_vc_in_rate: 0.0,
            per_class_in_rate: 0.0,
            frm1_arrivals: 0,
            frm2_sent: 0,
        }
    }

    pub fn acr(&self) -> f64 {
        self.pacer.acr()
    }

    fn apply_er(&mut self, er: f64) -> (f64, f64) {
        let old = self.pacer.apply_er(er);
        self.queue.acr = self.pacer.acr();
        (old, self.pacer.acr())
    }
}

/// VS/VD state of one output port: a virtual source per VC leaving through
/// the port, plus the option set coupling it to the upstream loop.
#[derive(Clone, Debug)]
pub struct VsVdPortState {
    pub options: VsVdOptions,
    pub vcs: BTreeMap<VcId, VsVcState>,
    sum_per_vc_rate: f64,
    per_class_rate: f64,
    interval_start: SimTime,
}

impl VsVdPortState {
    pub fn new(options: VsVdOptions) -> Self {
        VsVdPortState {
            options,
            vcs: BTreeMap::new(),
            sum_per_vc_rate: 0.0,
            per_class_rate: 0.0,
            interval_start: SimTime::ZERO,
        }
    }

    pub fn add_vc(&mut self, vc: VcId, initial_acr: f64, mcr: f64, pcr: f64) {
        self.vcs
            .entry(vc)
            .or_insert_with(|| VsVcState::new(vc, initial_acr, mcr, pcr));
    }

    pub fn vc(&self, vc: VcId) -> Option<&VsVcState> {
        self.vcs.get(&vc)
    }

    pub fn vc_mut(&mut self, vc: VcId) -> Option<&mut VsVcState> {
        self.vcs.get_mut(&vc)
    }

    fn state(&mut self, vc: VcId) -> &mut VsVcState {
        self.vcs
            .get_mut(&vc)
            .unwrap_or_else(|| panic!("VC {vc} not registered at this virtual source"))
    }

    /// The VC rate fed to ERICA, per the configured method. 0 without data.
    pub fn select_vc_rate(&self, vc: VcId) -> f64 {
        let Some(st) = self.vcs.get(&vc) else {
            return 0.0;
        };
        match self.options.vc_rate {
            VcRateMethod::Frm1Ccr => st.frm1_ccr.unwrap_or(0.0),
            VcRateMethod::Frm2Ccr => st.acr(),
            VcRateMethod::MeasuredAtPerVcInput => st.per_vc_in_rate,
            VcRateMethod::MeasuredAtPerClassInput => st.per_class_in_rate,
        }
    }

    /// The port input rate over the last interval, per the configured method.
    pub fn select_input_rate(&self) -> f64 {
        match self.options.input_rate {
            InputRateMethod::SumPerVc => self.sum_per_vc_rate,
            InputRateMethod::PerClass => self.per_class_rate,
        }
    }

    fn val2(&self, erica: &EricaPortState, vc: VcId) -> f64 {
        erica.allocate_with_rate(self.select_vc_rate(vc))
    }

    /// A data cell of the upstream loop is handed to the VC's per-VC queue.
    /// Returns true if the queue was empty (the shaper may need a slot).
    pub fn vd_on_data(&mut self, erica: &mut EricaPortState, cell: Cell) -> bool {
        let vc = cell.vc;
        if self.options.input_rate == InputRateMethod::SumPerVc {
            erica.record_arrival(vc, ServiceClass::Abr);
        }
        let st = self.state(vc);
        let was_empty = st.queue.is_empty();
        st.queue.push(cell);
        was_empty
    }

    /// Turns an upstream FRM around as the BRM of the previous loop:
    /// `ER1 <- min(ER1, VAL2, ACR2)`, where the VAL2 term applies only when
    /// congestion is pushed into the previous loop.
    pub fn vd_turnaround_frm(&mut self, erica: &mut EricaPortState, frm1: Cell) -> Result<Cell, ProtocolError> {
        let vc = frm1.vc;
        if self.options.input_rate == InputRateMethod::SumPerVc {
            erica.record_arrival(vc, ServiceClass::Abr);
        }
        let val2 = if self.options.updates_on_frm() {
            let v = self.val2(erica, vc);
            self.state(vc).stored_val = Some(v);
            v
        } else {
            self.state(vc).stored_val.unwrap_or(erica.link_rate())
        };
        let reduce = self.options.reduces_prev_loop();
        let st = self.state(vc);
        st.frm1_arrivals += 1;
        let ccr = frm1.rm.map(|rm| rm.ccr);
        let mut brm1 = turnaround(frm1)?;
        if let Some(rm) = brm1.rm.as_mut() {
            let mut er = rm.er.min(st.acr());
            if reduce {
                er = er.min(val2);
            }
            rm.er = er;
        }
        st.frm1_ccr = ccr;
        Ok(brm1)
    }

    /// A BRM of the next loop reaches the virtual source and sets ACR2.
    /// Returns `(old, new)` ACR2.
    pub fn vs_on_brm(&mut self, erica: &EricaPortState, brm2: &Cell) -> (f64, f64) {
        debug_assert_eq!(brm2.kind, CellKind::Brm);
        let vc = brm2.vc;
        if self.options.updates_on_brm() {
            let v = self.val2(erica, vc);
            self.state(vc).stored_val = Some(v);
        }
        let reduce = self.options.reduces_next_loop();
        let st = self.state(vc);
        let mut er = brm2.er().unwrap_or(st.pacer.pcr());
        if reduce {
            if let Some(val2) = st.stored_val {
                er = er.min(val2);
            }
        }
        st.apply_er(er)
    }

    /// Shaper slot: emits the head cell, or an FRM declaring ACR2 when one is
    /// due. `None` when the per-VC queue is empty.
    pub fn vs_emit(&mut self, erica: &mut EricaPortState, vc: VcId, er: f64, now: SimTime) -> Option<Cell> {
        let st = self.state(vc);
        if st.queue.is_empty() {
            return None;
        }
        let cell = if st.pacer.take_slot(now) {
            st.frm2_sent += 1;
            Cell::frm(vc, er, st.acr(), now)
        } else {
            st.queue.pop()?
        };
        if self.options.input_rate == InputRateMethod::PerClass {
            erica.record_arrival(vc, ServiceClass::Abr);
        }
        Some(cell)
    }

    /// Closes the measurement interval for every VC and the port totals.
    pub fn end_interval(&mut self, now: SimTime) {
        let span = now.saturating_sub(self.interval_start);
        self.interval_start = now;
        let mut sum_in = 0.0;
        let mut sum_out = 0.0;
        for st in self.vcs.values_mut() {
            let (arrivals, departures) = st.queue.take_interval_counts();
            st.per_vc_in_rate = cells_to_mbps(arrivals + st.frm1_arrivals, span);
            st.per_class_in_rate = cells_to_mbps(departures + st.frm2_sent, span);
            st.frm1_arrivals = 0;
            st.frm2_sent = 0;
            sum_in += st.per_vc_in_rate;
            sum_out += st.per_class_in_rate;
        }
        self.sum_per_vc_rate = sum_in;
        self.per_class_rate = sum_out;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erica::{EricaParams, EricaSnapshot};
    use crate::protocol::{mbps_to_cells_per_sec, CELL_BITS, OC3_MBPS};

    const PARKING_SHARE: f64 = 139.968 / 3.0;

    fn port_with_snapshot(input: f64, n: usize) -> EricaPortState {
        let mut e = EricaPortState::new(EricaParams::new(OC3_MBPS));
        // Drive the real measurement path: `input` Mbps from `n` VCs over 1 ms.
        let cells = (mbps_to_cells_per_sec(input) * 1e-3).round() as u64;
        for i in 0..cells {
            e.record_arrival(VcId(1 + (i % n.max(1) as u64) as u32), ServiceClass::Abr);
        }
        e.end_interval(SimTime::from_millis(1));
        e
    }

    fn frm(vc: u32, er: f64, ccr: f64) -> Cell {
        Cell::frm(VcId(vc), er, ccr, SimTime::ZERO)
    }

    fn brm(vc: u32, er: f64) -> Cell {
        turnaround(frm(vc, er, 0.0)).unwrap()
    }

    fn data(vc: u32, seq: u64) -> Cell {
        Cell::data(VcId(vc), ServiceClass::Abr, seq, SimTime::ZERO)
    }

    #[test]
    fn seventy_two_distinct_combinations() {
        let all = VsVdOptions::all();
        assert_eq!(all.len(), 72);
        let set: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(set.len(), 72);
        for (_, _, p) in PRESETS {
            assert!(all.contains(&p));
        }
    }

    #[test]
    fn presets_match_table() {
        let d = VsVdOptions::preset("D").unwrap();
        assert_eq!(d.vc_rate, VcRateMethod::MeasuredAtPerClassInput);
        assert_eq!(d.input_rate, InputRateMethod::PerClass);
        assert_eq!(d.congestion, CongestionEffect::Both);
        assert_eq!(d.alloc_update, AllocUpdate::FrmAndBrm);

        let a = VsVdOptions::preset("a").unwrap();
        assert_eq!(a.congestion, CongestionEffect::PrevOnly);
        assert_eq!(a.alloc_update, AllocUpdate::FrmOnly);
        assert_eq!(a.preset_letter(), Some('A'));

        let codes: Vec<u32> = PRESETS.iter().map(|p| p.1).collect();
        assert_eq!(codes, [41, 52, 329, 340, 393, 404]);

        assert!(VsVdOptions::preset("Z").is_err());
        assert!(VsVdOptions::preset("AB").is_err());
        assert!(VsVdOptions::preset("").is_err());
        assert_eq!(VsVdOptions::OVERALLOCATING.preset_letter(), None);
    }

    #[test]
    fn nonvsvd_brm_stamping() {
        let e = port_with_snapshot(139.968, 3);
        let val = e.allocate(VcId(1));
        assert!((val - PARKING_SHARE).abs() < 0.2);

        let mut b = brm(1, OC3_MBPS);
        nonvsvd_on_brm(&e, &mut b);
        assert_eq!(b.er(), Some(val));

        let mut b = brm(1, 10.0);
        nonvsvd_on_brm(&e, &mut b);
        assert_eq!(b.er(), Some(10.0));

        let mut b = brm(1, val);
        nonvsvd_on_brm(&e, &mut b);
        assert_eq!(b.er(), Some(val));
    }

    #[test]
    fn vd_data_goes_to_vs_queue() {
        let mut e = EricaPortState::new(EricaParams::new(OC3_MBPS));
        let mut p = VsVdPortState::new(VsVdOptions::preset("A").unwrap());
        p.add_vc(VcId(1), OC3_MBPS, 0.0, OC3_MBPS);
        assert!(p.vd_on_data(&mut e, data(1, 0)));
        assert!(!p.vd_on_data(&mut e, data(1, 1)));
        assert_eq!(p.vc(VcId(1)).unwrap().queue.len(), 2);
        // SumPerVc counts at the per-VC input
        assert_eq!(e.n_active_so_far(), 1);
    }

    fn turnaround_er(options: VsVdOptions, frm_er: f64, acr2: f64) -> f64 {
        let mut e = port_with_snapshot(139.968, 3);
        // vc_rate = fair share -> VAL2 = fair share
        e.set_vc_rate(VcId(1), 0.0);
        let mut p = VsVdPortState::new(options);
        p.add_vc(VcId(1), acr2, 0.0, OC3_MBPS);
        p.vd_turnaround_frm(&mut e, frm(1, frm_er, 10.0)).unwrap().er().unwrap()
    }

    #[test]
    fn vd_turnaround_three_way_min() {
        let d = VsVdOptions::preset("D").unwrap();
        let e = port_with_snapshot(139.968, 3);
        let fair = e.snapshot().unwrap().fair_share;
        let er = turnaround_er(d, OC3_MBPS, 60.0);
        assert!((er - fair).abs() < 1e-9);
        assert!((er - 46.66).abs() < 0.2);
        assert_eq!(turnaround_er(d, 5.0, 60.0), 5.0);
        assert_eq!(turnaround_er(d, OC3_MBPS, 20.0), 20.0);
    }

    #[test]
    fn next_only_does_not_reduce_previous_loop() {
        let mut opts = VsVdOptions::preset("D").unwrap();
        opts.congestion = CongestionEffect::NextOnly;
        assert_eq!(turnaround_er(opts, OC3_MBPS, 60.0), 60.0);
    }

    #[test]
    fn brm_only_uses_stored_value_at_turnaround() {
        let f = VsVdOptions::preset("F").unwrap();
        let mut e = port_with_snapshot(139.968, 3);
        let mut p = VsVdPortState::new(f);
        p.add_vc(VcId(1), OC3_MBPS, 0.0, OC3_MBPS);
        // nothing stored yet: no constraint beyond ACR2
        let b = p.vd_turnaround_frm(&mut e, frm(1, OC3_MBPS, 10.0)).unwrap();
        assert_eq!(b.er(), Some(OC3_MBPS));
        p.vc_mut(VcId(1)).unwrap().stored_val = Some(33.0);
        let b = p.vd_turnaround_frm(&mut e, frm(1, OC3_MBPS, 10.0)).unwrap();
        assert_eq!(b.er(), Some(33.0));
        assert_eq!(p.vc(VcId(1)).unwrap().stored_val, Some(33.0));
    }

    #[test]
    fn frm1_ccr_recorded() {
        let c = VsVdOptions::preset("C").unwrap();
        let mut e = port_with_snapshot(50.0, 1);
        let mut p = VsVdPortState::new(c);
        p.add_vc(VcId(1), OC3_MBPS, 0.0, OC3_MBPS);
        p.vd_turnaround_frm(&mut e, frm(1, OC3_MBPS, 10.0)).unwrap();
        assert_eq!(p.select_vc_rate(VcId(1)), 10.0);
    }

    #[test]
    fn vs_brm_applies_congestion_effect() {
        let e = port_with_snapshot(139.968, 3);
        let fair = e.snapshot().unwrap().fair_share;

        let d = VsVdOptions::preset("D").unwrap();
        let mut p = VsVdPortState::new(d);
        p.add_vc(VcId(1), 10.0, 0.0, OC3_MBPS);
        let (_, acr2) = p.vs_on_brm(&e, &brm(1, 100.0));
        assert!((acr2 - fair).abs() < 1e-9);

        let a = VsVdOptions::preset("A").unwrap();
        let mut p = VsVdPortState::new(a);
        p.add_vc(VcId(1), 10.0, 0.0, OC3_MBPS);
        assert_eq!(p.vs_on_brm(&e, &brm(1, 100.0)), (10.0, 100.0));
        assert_eq!(p.vs_on_brm(&e, &brm(1, 1000.0)).1, OC3_MBPS);
    }

    #[test]
    fn frm_only_applies_value_stored_at_turnaround() {
        let b = VsVdOptions::preset("B").unwrap();
        let mut e = port_with_snapshot(139.968, 3);
        let mut p = VsVdPortState::new(b);
        p.add_vc(VcId(1), 10.0, 0.0, OC3_MBPS);
        // no stored value yet: ER2 alone
        assert_eq!(p.vs_on_brm(&e, &brm(1, 100.0)).1, 100.0);
        p.vd_turnaround_frm(&mut e, frm(1, OC3_MBPS, 10.0)).unwrap();
        let stored = p.vc(VcId(1)).unwrap().stored_val.unwrap();
        assert_eq!(p.vs_on_brm(&e, &brm(1, 100.0)).1, stored);
    }

    #[test]
    fn shaper_emits_frm_every_nrm_slots() {
        let mut e = EricaPortState::new(EricaParams::new(OC3_MBPS));
        let d = VsVdOptions::preset("D").unwrap();
        let mut p = VsVdPortState::new(d);
        p.add_vc(VcId(1), 46.66, 0.0, OC3_MBPS);
        for seq in 0..40 {
            p.vd_on_data(&mut e, data(1, seq));
        }
        let first = p.vs_emit(&mut e, VcId(1), OC3_MBPS, SimTime::ZERO).unwrap();
        assert_eq!(first.kind, CellKind::Frm);
        assert_eq!(first.rm.unwrap().ccr, 46.66);
        let kinds: Vec<CellKind> = (0..31)
            .map(|_| p.vs_emit(&mut e, VcId(1), OC3_MBPS, SimTime::ZERO).unwrap().kind)
            .collect();
        assert!(kinds.iter().all(|k| *k == CellKind::Data));
        assert_eq!(
            p.vs_emit(&mut e, VcId(1), OC3_MBPS, SimTime::ZERO).unwrap().kind,
            CellKind::Frm
        );
    }

    #[test]
    fn vc_and_input_rate_selection() {
        // upstream at 10 Mbps, shaper at 100 Mbps with a backlog
        let span = SimTime::from_millis(1);
        let in_cells = (mbps_to_cells_per_sec(10.0) * 1e-3).round() as u64;
        let out_cells = (mbps_to_cells_per_sec(100.0) * 1e-3).round() as u64;
        let quantum = CELL_BITS / 1e3;

        for (method, input, expect_vc, expect_in) in [
            (VcRateMethod::Frm1Ccr, InputRateMethod::SumPerVc, 10.0, 10.0),
            (VcRateMethod::Frm2Ccr, InputRateMethod::PerClass, 100.0, 100.0),
            (VcRateMethod::MeasuredAtPerClassInput, InputRateMethod::PerClass, 100.0, 100.0),
            (VcRateMethod::MeasuredAtPerVcInput, InputRateMethod::SumPerVc, 10.0, 10.0),
        ] {
            let opts = VsVdOptions {
                vc_rate: method,
                input_rate: input,
                congestion: CongestionEffect::Both,
                alloc_update: AllocUpdate::FrmAndBrm,
            };
            let mut e = EricaPortState::new(EricaParams::new(OC3_MBPS));
            let mut p = VsVdPortState::new(opts);
            p.add_vc(VcId(1), 100.0, 0.0, OC3_MBPS);
            for seq in 0..out_cells {
                p.vd_on_data(&mut e, data(1, seq));
            }
            // settle the first interval, then measure a clean one
            p.end_interval(SimTime::ZERO);
            e.end_interval(SimTime::ZERO);
            for seq in 0..in_cells.saturating_sub(1) {
                p.vd_on_data(&mut e, data(1, 1000 + seq));
            }
            p.vd_turnaround_frm(&mut e, frm(1, OC3_MBPS, 10.0)).unwrap();
            for _ in 0..out_cells {
                p.vs_emit(&mut e, VcId(1), OC3_MBPS, SimTime::ZERO).unwrap();
            }
            p.end_interval(span);
            let snap = e.end_interval(span);

            assert!((p.select_vc_rate(VcId(1)) - expect_vc).abs() <= quantum, "{method:?}");
            assert!((p.select_input_rate() - expect_in).abs() <= quantum, "{input:?}");
            // both routes to the input rate agree
            assert!((snap.input_rate - p.select_input_rate()).abs() < 1e-9);
        }

        let empty = VsVdPortState::new(VsVdOptions::preset("D").unwrap());
        assert_eq!(empty.select_input_rate(), 0.0);
        assert_eq!(empty.select_vc_rate(VcId(5)), 0.0);
    }

    #[test]
    fn snapshot_helper_consistent() {
        let e = port_with_snapshot(139.968, 3);
        let s = e.snapshot().unwrap();
        let direct = EricaSnapshot::from_rates(&e.params, s.input_rate, 0.0, 3);
        assert_eq!(*s, direct);
    }
}
