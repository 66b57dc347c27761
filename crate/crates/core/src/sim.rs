//! Event-driven run of a [`Scenario`]: end systems, switch ports and links
//! wired to one scheduler, with per-run property checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::endsystems::{dest_on_cell, DestOutcome, RatePacer, SourceState, VbrSource};
use crate::engine::Scheduler;
use crate::erica::{EricaParams, EricaPortState, DEFAULT_INTERVAL};
use crate::error::SimError;
use crate::protocol::{cell_time, Cell, CellKind, PerClassQueue, ServiceClass, VcConfig, VcId};
use crate::scenarios::metrics::{MetricsRecorder, RecorderConfig, Recording};
use crate::scenarios::{NodeKind, Scenario};
use crate::switch::{nonvsvd_on_brm, SwitchArch, VsVdPortState};
use crate::time::SimTime;

/// Rate a virtual source starts its segment at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VsInitialAcr {
    Icr,
    Pcr,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    pub interval: SimTime,
    pub vs_initial_acr: VsInitialAcr,
    pub recorder: RecorderConfig,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            interval: DEFAULT_INTERVAL,
            vs_initial_acr: VsInitialAcr::Pcr,
            recorder: RecorderConfig::default(),
        }
    }
}

/// Per-VC data-cell accounting at the end of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conservation {
    pub vc: VcId,
    pub injected: u64,
    pub delivered: u64,
    pub queued: u64,
    pub in_flight: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.injected == self.delivered + self.queued + self.in_flight
    }
}

/// Counts of protocol property violations observed during a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropertyReport {
    pub er_checks: u64,
    pub er_increases: u64,
    pub acr_checks: u64,
    pub acr_out_of_bounds: u64,
    pub fifo_violations: u64,
    pub conservation: Vec<Conservation>,
}

impl PropertyReport {
    pub fn is_clean(&self) -> bool {
        self.er_increases == 0
            && self.acr_out_of_bounds == 0
            && self.fifo_violations == 0
            && self.conservation.iter().all(Conservation::holds)
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub recording: Recording,
    pub report: PropertyReport,
    pub events: u64,
}

#[derive(Debug)]
enum Ev {
    /// `hop` is the index of the path link the cell just crossed.
    Deliver { port: usize, hop: usize, cell: Cell },
    TxDone { port: usize },
    SourceStart { vc: usize },
    SourceStop { vc: usize },
    SourceSlot { vc: usize },
    VbrSlot { vc: usize },
    VsSlot { port: usize, vc: VcId },
    IntervalEnd,
    Checkpoint,
}

#[derive(Clone, Copy)]
enum Lane {
    Vbr,
    Rm,
    Abr,
}

struct Port {
    from: usize,
    to: usize,
    tx: SimTime,
    prop: SimTime,
    vbr: PerClassQueue,
    rm: PerClassQueue,
    abr: PerClassQueue,
    busy: bool,
    erica: Option<EricaPortState>,
    vsvd: Option<VsVdPortState>,
    rec_abr: Option<usize>,
    rec_vbr: Option<usize>,
    rec_vc: BTreeMap<VcId, usize>,
}

enum Origin {
    Abr(SourceState),
    Vbr(VbrSource),
}

struct VcRt {
    cfg: VcConfig,
    fwd: Vec<usize>,
    rev: Vec<usize>,
    origin: Origin,
    delivered: u64,
    expect_seq: u64,
}

pub struct Simulation {
    sched: Scheduler<Ev>,
    kinds: Vec<NodeKind>,
    ports: Vec<Port>,
    vcs: Vec<VcRt>,
    vc_index: BTreeMap<VcId, usize>,
    rec: MetricsRecorder,
    report: PropertyReport,
    run_until: SimTime,
    interval: SimTime,
}

/// Re-paces a shaper after a rate change or new work: schedules a slot if
/// none is pending, or pulls the pending one earlier.
fn repace(sched: &mut Scheduler<Ev>, pacer: &mut RatePacer, now: SimTime, ev: Ev) -> Result<(), SimError> {
    let at = match pacer.pending() {
        Some((_, handle)) => match pacer.earlier_slot(now) {
            Some(at) => {
                sched.cancel(handle);
                at
            }
            None => return Ok(()),
        },
        None => match pacer.earliest_slot(now) {
            Some(at) => at,
            None => return Ok(()),
        },
    };
    let handle = sched.schedule(at, ev)?;
    pacer.set_pending(at, handle);
    Ok(())
}

pub fn run(scenario: &Scenario, params: &SimParams) -> Result<SimOutput, SimError> {
    Simulation::new(scenario, params)?.run()
}

impl Simulation {
    pub fn new(scenario: &Scenario, params: &SimParams) -> Result<Self, SimError> {
        scenario.validate().map_err(SimError::Topology)?;
        let names: Vec<&str> = scenario.nodes.iter().map(|n| n.name.as_str()).collect();
        let kinds: Vec<NodeKind> = scenario.nodes.iter().map(|n| n.kind).collect();
        let idx = |n: &str| names.iter().position(|x| *x == n).expect("validated node");

        let mut rec = MetricsRecorder::new(params.recorder);
        let mut ports: Vec<Port> = Vec::new();
        let mut port_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut forward: Vec<bool> = Vec::new();

        let mut get_port = |a: usize, b: usize, ports: &mut Vec<Port>, forward: &mut Vec<bool>| -> usize {
            *port_of.entry((a, b)).or_insert_with(|| {
                let link = scenario.link_between(names[a], names[b]).expect("validated link");
                ports.push(Port {
                    from: a,
                    to: b,
                    tx: cell_time(link.rate).expect("positive link rate"),
                    prop: link.prop_delay(),
                    vbr: PerClassQueue::new(ServiceClass::Vbr),
                    rm: PerClassQueue::new(ServiceClass::Abr),
                    abr: PerClassQueue::new(ServiceClass::Abr),
                    busy: false,
                    erica: None,
                    vsvd: None,
                    rec_abr: None,
                    rec_vbr: None,
                    rec_vc: BTreeMap::new(),
                });
                forward.push(false);
                ports.len() - 1
            })
        };

        let mut vcs = Vec::new();
        let mut vc_index = BTreeMap::new();
        for cfg in &scenario.vcs {
            let hops: Vec<usize> = cfg.path.iter().map(|n| idx(n)).collect();
            let mut fwd = Vec::new();
            let mut rev = Vec::new();
            for w in hops.windows(2) {
                let f = get_port(w[0], w[1], &mut ports, &mut forward);
                forward[f] = true;
                fwd.push(f);
                rev.push(get_port(w[1], w[0], &mut ports, &mut forward));
            }
            let origin = match cfg.class {
                ServiceClass::Abr => Origin::Abr(SourceState::new(cfg)),
                ServiceClass::Vbr => {
                    let pattern = cfg.vbr_pattern.ok_or_else(|| {
                        SimError::Topology(format!("VBR VC {} has no ON/OFF pattern", cfg.id))
                    })?;
                    let rate = scenario.link_between(&cfg.path[0], &cfg.path[1]).expect("validated").rate;
                    Origin::Vbr(VbrSource::new(cfg.id, pattern, rate, cfg.start_at))
                }
            };
            if vc_index.insert(cfg.id, vcs.len()).is_some() {
                return Err(SimError::Topology(format!("duplicate VC id {}", cfg.id)));
            }
            vcs.push(VcRt {
                cfg: cfg.clone(),
                fwd,
                rev,
                origin,
                delivered: 0,
                expect_seq: 0,
            });
        }

        for (p, port) in ports.iter_mut().enumerate() {
            let NodeKind::Switch(arch) = kinds[port.from] else {
                continue;
            };
            if !forward[p] {
                continue;
            }
            let link_rate = scenario
                .link_between(names[port.from], names[port.to])
                .expect("validated")
                .rate;
            port.erica = Some(EricaPortState::new(EricaParams {
                target_utilization: scenario.target_utilization,
                link_rate,
                interval: params.interval,
            }));
            let node = names[port.from];
            let to = names[port.to];
            port.rec_abr = Some(rec.add_queue(node, &format!("{to}.abr")));
            port.rec_vbr = Some(rec.add_queue(node, &format!("{to}.vbr")));
            if let SwitchArch::VsVd(options) = arch {
                port.vsvd = Some(VsVdPortState::new(options));
            }
        }

        for vc in &vcs {
            if vc.cfg.class != ServiceClass::Abr {
                continue;
            }
            rec.register_vc(vc.cfg.id);
            for &f in &vc.fwd {
                let port = &mut ports[f];
                if let Some(vsvd) = port.vsvd.as_mut() {
                    let initial = match params.vs_initial_acr {
                        VsInitialAcr::Icr => vc.cfg.icr,
                        VsInitialAcr::Pcr => vc.cfg.pcr,
                    };
                    vsvd.add_vc(vc.cfg.id, initial, vc.cfg.mcr, vc.cfg.pcr);
                    let id = rec.add_queue(names[port.from], &format!("{}.vc{}", names[port.to], vc.cfg.id));
                    port.rec_vc.insert(vc.cfg.id, id);
                }
            }
        }

        let mut sched = Scheduler::new();
        let mut checkpoints = scenario.checkpoints.clone();
        checkpoints.sort();
        checkpoints.dedup();
        for t in checkpoints.into_iter().filter(|t| *t <= scenario.run_until) {
            sched.schedule(t, Ev::Checkpoint)?;
        }
        if params.interval > SimTime::ZERO {
            sched.schedule(params.interval, Ev::IntervalEnd)?;
        }
        for (i, vc) in vcs.iter().enumerate() {
            match &vc.origin {
                Origin::Abr(_) => {
                    sched.schedule(vc.cfg.start_at, Ev::SourceStart { vc: i })?;
                    if let Some(stop) = vc.cfg.stop_at {
                        sched.schedule(stop, Ev::SourceStop { vc: i })?;
                    }
                }
                Origin::Vbr(v) => {
                    if let Some(at) = v.next_emission(vc.cfg.start_at) {
                        sched.schedule(at, Ev::VbrSlot { vc: i })?;
                    }
                }
            }
        }

        Ok(Simulation {
            sched,
            kinds,
            ports,
            vcs,
            vc_index,
            rec,
            report: PropertyReport::default(),
            run_until: scenario.run_until,
            interval: params.interval,
        })
    }

    pub fn run(mut self) -> Result<SimOutput, SimError> {
        let end = self.run_until;
        while let Some((now, ev)) = self.sched.pop_until(end) {
            self.handle(now, ev)?;
        }
        self.sched.advance_to(end);
        self.report.conservation = self.conservation();
        Ok(SimOutput {
            recording: self.rec.finish(end),
            report: self.report,
            events: self.sched.executed(),
        })
    }

    fn handle(&mut self, now: SimTime, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::Deliver { port, hop, cell } => self.on_deliver(now, port, hop, cell),
            Ev::TxDone { port } => {
                self.ports[port].busy = false;
                self.start_tx(now, port)
            }
            Ev::SourceStart { vc } => {
                let v = &mut self.vcs[vc];
                let Origin::Abr(src) = &mut v.origin else {
                    return Ok(());
                };
                src.active = true;
                self.rec.acr(now, v.cfg.id, src.acr());
                repace(&mut self.sched, &mut src.pacer, now, Ev::SourceSlot { vc })
            }
            Ev::SourceStop { vc } => {
                if let Origin::Abr(src) = &mut self.vcs[vc].origin {
                    src.active = false;
                    if let Some((_, h)) = src.pacer.clear_pending() {
                        self.sched.cancel(h);
                    }
                }
                Ok(())
            }
            Ev::SourceSlot { vc } => self.on_source_slot(now, vc),
            Ev::VbrSlot { vc } => {
                let v = &mut self.vcs[vc];
                let Origin::Vbr(src) = &mut v.origin else {
                    return Ok(());
                };
                let (cell, next) = src.tick(now);
                let out = v.fwd[0];
                if let Some(at) = next {
                    self.sched.schedule(at, Ev::VbrSlot { vc })?;
                }
                self.enqueue(now, out, cell, Lane::Vbr)
            }
            Ev::VsSlot { port, vc } => self.on_vs_slot(now, port, vc),
            Ev::IntervalEnd => {
                for port in &mut self.ports {
                    if let Some(v) = port.vsvd.as_mut() {
                        v.end_interval(now);
                    }
                    if let Some(e) = port.erica.as_mut() {
                        e.end_interval(now);
                    }
                }
                self.sched.schedule(now + self.interval, Ev::IntervalEnd)?;
                Ok(())
            }
            Ev::Checkpoint => {
                self.rec.checkpoint(now);
                Ok(())
            }
        }
    }

    fn record_port_queue(&mut self, now: SimTime, p: usize, lane: Lane) {
        let port = &self.ports[p];
        let (idx, len) = match lane {
            Lane::Vbr => (port.rec_vbr, port.vbr.len()),
            Lane::Abr => (port.rec_abr, port.abr.len()),
            Lane::Rm => (None, 0),
        };
        if let Some(idx) = idx {
            self.rec.queue(now, idx, len);
        }
    }

    fn record_vc_queue(&mut self, now: SimTime, p: usize, vc: VcId) {
        let port = &self.ports[p];
        if let (Some(idx), Some(st)) = (port.rec_vc.get(&vc), port.vsvd.as_ref().and_then(|v| v.vc(vc))) {
            self.rec.queue(now, *idx, st.queue.len());
        }
    }

    fn enqueue(&mut self, now: SimTime, p: usize, cell: Cell, lane: Lane) -> Result<(), SimError> {
        let port = &mut self.ports[p];
        match lane {
            Lane::Vbr => port.vbr.push(cell),
            Lane::Rm => port.rm.push(cell),
            Lane::Abr => port.abr.push(cell),
        }
        self.record_port_queue(now, p, lane);
        if !self.ports[p].busy {
            self.start_tx(now, p)?;
        }
        Ok(())
    }

    /// Serves the link: VBR first, then backward RM cells, then ABR.
    fn start_tx(&mut self, now: SimTime, p: usize) -> Result<(), SimError> {
        let port = &mut self.ports[p];
        let (cell, lane) = if let Some(c) = port.vbr.pop() {
            (c, Lane::Vbr)
        } else if let Some(c) = port.rm.pop() {
            (c, Lane::Rm)
        } else if let Some(c) = port.abr.pop() {
            (c, Lane::Abr)
        } else {
            return Ok(());
        };
        port.busy = true;
        let done = now + port.tx;
        let arrive = done + port.prop;
        self.record_port_queue(now, p, lane);
        let v = &self.vcs[self.vc_index[&cell.vc]];
        let hops = if cell.kind == CellKind::Brm { &v.rev } else { &v.fwd };
        let hop = hops
            .iter()
            .position(|&x| x == p)
            .ok_or_else(|| SimError::Topology(format!("VC {} routed onto a port off its path", cell.vc)))?;
        self.sched.schedule(done, Ev::TxDone { port: p })?;
        self.sched.schedule(arrive, Ev::Deliver { port: p, hop, cell })?;
        Ok(())
    }

    fn on_source_slot(&mut self, now: SimTime, vc: usize) -> Result<(), SimError> {
        let v = &mut self.vcs[vc];
        let Origin::Abr(src) = &mut v.origin else {
            return Ok(());
        };
        src.pacer.clear_pending();
        if !src.active {
            return Ok(());
        }
        let em = src.send_slot(&v.cfg, now)?;
        if let Some(next) = em.next {
            let h = self.sched.schedule(next, Ev::SourceSlot { vc })?;
            src.pacer.set_pending(next, h);
        }
        let out = v.fwd[0];
        self.enqueue(now, out, em.cell, Lane::Abr)
    }

    fn on_vs_slot(&mut self, now: SimTime, p: usize, vc: VcId) -> Result<(), SimError> {
        let port = &mut self.ports[p];
        let (Some(erica), Some(vsvd)) = (port.erica.as_mut(), port.vsvd.as_mut()) else {
            return Ok(());
        };
        let pcr = match vsvd.vc_mut(vc) {
            Some(st) => {
                st.pacer.clear_pending();
                st.pacer.pcr()
            }
            None => return Ok(()),
        };
        let Some(cell) = vsvd.vs_emit(erica, vc, pcr, now) else {
            return Ok(());
        };
        let st = vsvd.vc_mut(vc).expect("registered");
        if !st.queue.is_empty() {
            repace(&mut self.sched, &mut st.pacer, now, Ev::VsSlot { port: p, vc })?;
        }
        if cell.is_data() {
            self.record_vc_queue(now, p, vc);
        }
        self.enqueue(now, p, cell, Lane::Abr)
    }

    fn check_er(&mut self, before: f64, after: f64) {
        self.report.er_checks += 1;
        if after > before {
            self.report.er_increases += 1;
        }
    }

    fn check_acr(&mut self, acr: f64, mcr: f64, pcr: f64) {
        self.report.acr_checks += 1;
        if !(mcr..=pcr).contains(&acr) {
            self.report.acr_out_of_bounds += 1;
        }
    }

    fn on_deliver(&mut self, now: SimTime, _port: usize, hop: usize, cell: Cell) -> Result<(), SimError> {
        let vi = self.vc_index[&cell.vc];
        if cell.kind == CellKind::Brm {
            self.on_backward(now, vi, hop, cell)
        } else {
            self.on_forward(now, vi, hop, cell)
        }
    }

    /// A BRM has arrived at `path[hop]`.
    fn on_backward(&mut self, now: SimTime, vi: usize, hop: usize, cell: Cell) -> Result<(), SimError> {
        let er_in = cell.er().unwrap_or(0.0);
        if hop == 0 {
            let v = &mut self.vcs[vi];
            let Origin::Abr(src) = &mut v.origin else {
                return Ok(());
            };
            let (mcr, pcr, id) = (v.cfg.mcr, v.cfg.pcr, v.cfg.id);
            let (_, acr) = src.on_brm(&cell);
            if src.active {
                repace(&mut self.sched, &mut src.pacer, now, Ev::SourceSlot { vc: vi })?;
                self.rec.acr(now, id, acr);
            }
            self.check_er(pcr, er_in);
            self.check_acr(acr, mcr, pcr);
            return Ok(());
        }
        let fwd_port = self.vcs[vi].fwd[hop];
        let back_port = self.vcs[vi].rev[hop - 1];
        let node = self.ports[fwd_port].from;
        match self.kinds[node] {
            NodeKind::Switch(SwitchArch::NonVsVd) => {
                let mut cell = cell;
                if let Some(erica) = self.ports[fwd_port].erica.as_ref() {
                    nonvsvd_on_brm(erica, &mut cell);
                }
                let er_out = cell.er().unwrap_or(0.0);
                self.check_er(er_in, er_out);
                self.enqueue(now, back_port, cell, Lane::Rm)
            }
            NodeKind::Switch(SwitchArch::VsVd(_)) => {
                let vc = cell.vc;
                let port = &mut self.ports[fwd_port];
                let (Some(erica), Some(vsvd)) = (port.erica.as_ref(), port.vsvd.as_mut()) else {
                    return Ok(());
                };
                let (_, acr2) = vsvd.vs_on_brm(erica, &cell);
                let st = vsvd.vc_mut(vc).expect("registered");
                let (mcr, pcr) = (st.pacer.mcr(), st.pacer.pcr());
                if !st.queue.is_empty() {
                    repace(&mut self.sched, &mut st.pacer, now, Ev::VsSlot { port: fwd_port, vc })?;
                }
                self.check_er(pcr, er_in);
                self.check_acr(acr2, mcr, pcr);
                Ok(())
            }
            NodeKind::EndSystem => Err(SimError::Topology(format!(
                "VC {}: BRM reached end system at interior hop {hop}",
                cell.vc
            ))),
        }
    }

    /// A data cell or FRM has arrived at `path[hop + 1]`.
    fn on_forward(&mut self, now: SimTime, vi: usize, hop: usize, cell: Cell) -> Result<(), SimError> {
        let last = self.vcs[vi].cfg.path.len() - 1;
        if hop + 1 == last {
            let back = self.vcs[vi].rev[hop];
            let class = cell.class;
            let seq = cell.seq;
            let id = cell.vc;
            match dest_on_cell(cell)? {
                DestOutcome::Delivered => {
                    let v = &mut self.vcs[vi];
                    if seq != v.expect_seq {
                        self.report.fifo_violations += 1;
                    }
                    v.expect_seq = seq + 1;
                    v.delivered += 1;
                    if class == ServiceClass::Abr {
                        self.rec.delivered(now, id);
                    }
                    Ok(())
                }
                DestOutcome::TurnedAround(brm) => self.enqueue(now, back, brm, Lane::Rm),
                DestOutcome::Absorbed => Ok(()),
            }
        } else {
            let out = self.vcs[vi].fwd[hop + 1];
            let back = self.vcs[vi].rev[hop];
            let node = self.ports[out].from;
            let NodeKind::Switch(arch) = self.kinds[node] else {
                return Err(SimError::Topology(format!("VC {}: interior end system", cell.vc)));
            };
            if cell.class == ServiceClass::Vbr {
                if let Some(e) = self.ports[out].erica.as_mut() {
                    e.record_arrival(cell.vc, ServiceClass::Vbr);
                }
                return self.enqueue(now, out, cell, Lane::Vbr);
            }
            match arch {
                SwitchArch::NonVsVd => {
                    if let Some(e) = self.ports[out].erica.as_mut() {
                        e.record_arrival(cell.vc, ServiceClass::Abr);
                        if let Some(rm) = cell.rm {
                            e.set_vc_rate(cell.vc, rm.ccr);
                        }
                    }
                    self.enqueue(now, out, cell, Lane::Abr)
                }
                SwitchArch::VsVd(_) => {
                    let vc = cell.vc;
                    let port = &mut self.ports[out];
                    let (Some(erica), Some(vsvd)) = (port.erica.as_mut(), port.vsvd.as_mut()) else {
                        return Err(SimError::Topology(format!("VC {vc}: VS/VD port without state")));
                    };
                    match cell.kind {
                        CellKind::Frm => {
                            let er_in = cell.er().unwrap_or(0.0);
                            let brm = vsvd.vd_turnaround_frm(erica, cell)?;
                            let er_out = brm.er().unwrap_or(0.0);
                            self.check_er(er_in, er_out);
                            self.enqueue(now, back, brm, Lane::Rm)
                        }
                        _ => {
                            vsvd.vd_on_data(erica, cell);
                            let st = vsvd.vc_mut(vc).expect("registered");
                            repace(&mut self.sched, &mut st.pacer, now, Ev::VsSlot { port: out, vc })?;
                            self.record_vc_queue(now, out, vc);
                            Ok(())
                        }
                    }
                }
            }
        }
    }

    fn conservation(&self) -> Vec<Conservation> {
        let mut queued: BTreeMap<VcId, u64> = BTreeMap::new();
        let mut count = |c: &Cell| {
            if c.is_data() {
                *queued.entry(c.vc).or_default() += 1;
            }
        };
        for port in &self.ports {
            port.vbr.iter().for_each(&mut count);
            port.rm.iter().for_each(&mut count);
            port.abr.iter().for_each(&mut count);
            if let Some(v) = &port.vsvd {
                for st in v.vcs.values() {
                    st.queue.iter().for_each(&mut count);
                }
            }
        }
        let mut in_flight: BTreeMap<VcId, u64> = BTreeMap::new();
        for (_, ev) in self.sched.pending() {
            if let Ev::Deliver { cell, .. } = ev {
                if cell.is_data() {
                    *in_flight.entry(cell.vc).or_default() += 1;
                }
            }
        }
        self.vcs
            .iter()
            .map(|v| {
                let injected = match &v.origin {
                    Origin::Abr(s) => s.data_sent(),
                    Origin::Vbr(s) => s.data_sent(),
                };
                Conservation {
                    vc: v.cfg.id,
                    injected,
                    delivered: v.delivered,
                    queued: queued.get(&v.cfg.id).copied().unwrap_or(0),
                    in_flight: in_flight.get(&v.cfg.id).copied().unwrap_or(0),
                }
            })
            .collect()
    }
}
