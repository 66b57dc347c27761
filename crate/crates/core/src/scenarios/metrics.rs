//! Recorded time series and the four run metrics computed from them.
//!
//! The recorder keeps exactly the rows that end up in the CSV files, and
//! every metric is a function of those rows, so a summary can be recomputed
//! offline from a run directory.

use std::collections::BTreeMap;

use crate::protocol::VcId;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcrRow {
    pub time: SimTime,
    pub vc: VcId,
    pub acr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueueRow {
    pub time: SimTime,
    /// Index into [`Recording::queue_ids`].
    pub queue: usize,
    pub cells: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct QueueId {
    pub node: String,
    pub name: String,
}

impl QueueId {
    /// VBR class queues are recorded for plotting but are not ABR queues.
    pub fn is_abr(&self) -> bool {
        !self.name.ends_with(".vbr")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeliveredRow {
    pub time: SimTime,
    pub vc: VcId,
    pub cells: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Recording {
    pub acr: Vec<AcrRow>,
    pub queue_ids: Vec<QueueId>,
    pub queues: Vec<QueueRow>,
    pub delivered: Vec<DeliveredRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecorderConfig {
    /// Minimum spacing of plain (non high-water) queue samples.
    pub queue_sample_period: SimTime,
    /// A delivered.csv row is written every this many cells per VC.
    pub delivered_every: u64,
}

impl Default for RecorderConfig {
    fn default() -> Self {
        RecorderConfig {
            queue_sample_period: SimTime::from_micros(100),
            delivered_every: 1000,
        }
    }
}

pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Clone, Debug)]
struct QueueTrack {
    current: u64,
    segment_max: u64,
    last_value: Option<u64>,
    last_time: SimTime,
}

/// Collects ACR, queue-length and delivery series during a run.
///
/// Queue rows are thinned: a row is written whenever a queue reaches a new
/// maximum since the last checkpoint, when it drains to zero, and otherwise at
/// most once per sample period. Checkpoints write the current length of every
/// queue, so the maximum over any checkpoint-aligned window is exact.
#[derive(Clone, Debug)]
pub struct MetricsRecorder {
    cfg: RecorderConfig,
    rec: Recording,
    last_acr: BTreeMap<VcId, f64>,
    tracks: Vec<QueueTrack>,
    delivered: BTreeMap<VcId, (u64, Option<u64>)>,
}

impl MetricsRecorder {
    pub fn new(cfg: RecorderConfig) -> Self {
        MetricsRecorder {
            cfg,
            rec: Recording::default(),
            last_acr: BTreeMap::new(),
            tracks: Vec::new(),
            delivered: BTreeMap::new(),
        }
    }

    pub fn add_queue(&mut self, node: &str, name: &str) -> usize {
        self.rec.queue_ids.push(QueueId {
            node: node.to_string(),
            name: name.to_string(),
        });
        self.tracks.push(QueueTrack {
            current: 0,
            segment_max: 0,
            last_value: None,
            last_time: SimTime::ZERO,
        });
        self.tracks.len() - 1
    }

    pub fn register_vc(&mut self, vc: VcId) {
        self.delivered.entry(vc).or_insert((0, None));
    }

    /// Records an ACR value; only changes (at 6 decimals) produce rows.
    pub fn acr(&mut self, time: SimTime, vc: VcId, acr: f64) {
        let acr = round6(acr);
        if self.last_acr.get(&vc) == Some(&acr) {
            return;
        }
        self.last_acr.insert(vc, acr);
        self.rec.acr.push(AcrRow { time, vc, acr });
    }

    fn emit_queue(&mut self, time: SimTime, idx: usize) {
        let t = &mut self.tracks[idx];
        t.last_value = Some(t.current);
        t.last_time = time;
        self.rec.queues.push(QueueRow {
            time,
            queue: idx,
            cells: t.current,
        });
    }

    pub fn queue(&mut self, time: SimTime, idx: usize, len: usize) {
        let len = len as u64;
        let period = self.cfg.queue_sample_period;
        let t = &mut self.tracks[idx];
        t.current = len;
        let emit = if len > t.segment_max {
            t.segment_max = len;
            true
        } else if t.last_value == Some(len) {
            false
        } else {
            len == 0 || t.last_value.is_none() || time >= t.last_time + period
        };
        if emit {
            self.emit_queue(time, idx);
        }
    }

    pub fn delivered(&mut self, time: SimTime, vc: VcId) {
        let every = self.cfg.delivered_every.max(1);
        let entry = self.delivered.entry(vc).or_insert((0, None));
        entry.0 += 1;
        if entry.0.is_multiple_of(every) {
            entry.1 = Some(entry.0);
            let cells = entry.0;
            self.rec.delivered.push(DeliveredRow { time, vc, cells });
        }
    }

    pub fn delivered_count(&self, vc: VcId) -> u64 {
        self.delivered.get(&vc).map_or(0, |d| d.0)
    }

    /// Writes the current length of every queue and starts a new segment.
    pub fn checkpoint(&mut self, time: SimTime) {
        for idx in 0..self.tracks.len() {
            let t = &mut self.tracks[idx];
            t.segment_max = t.current;
            self.emit_queue(time, idx);
        }
    }

    /// Flushes final values and returns the recorded rows.
    pub fn finish(mut self, time: SimTime) -> Recording {
        for idx in 0..self.tracks.len() {
            let t = &self.tracks[idx];
            if t.last_value != Some(t.current) {
                self.emit_queue(time, idx);
            }
        }
        for (vc, (count, last)) in &self.delivered {
            if *last != Some(*count) {
                self.rec.delivered.push(DeliveredRow {
                    time,
                    vc: *vc,
                    cells: *count,
                });
            }
        }
        self.rec
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub convergence_tol: f64,
    pub convergence_window: SimTime,
    pub response_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            convergence_tol: 0.05,
            convergence_window: SimTime::from_millis(10),
            response_tol: 0.10,
        }
    }
}

/// Step-function view of the ACR rows, one series per VC.
pub type AcrSeries = BTreeMap<VcId, Vec<(SimTime, f64)>>;

pub fn acr_series(rec: &Recording) -> AcrSeries {
    let mut out: AcrSeries = BTreeMap::new();
    for row in &rec.acr {
        out.entry(row.vc).or_default().push((row.time, row.acr));
    }
    out
}

/// Value of a step series at `t` (last sample at or before `t`).
pub fn value_at(series: &[(SimTime, f64)], t: SimTime) -> Option<f64> {
    let n = series.partition_point(|(s, _)| *s <= t);
    (n > 0).then(|| series[n - 1].1)
}

fn in_band(value: Option<f64>, optimal: f64, tol: f64) -> bool {
    value.is_some_and(|v| (v - optimal).abs() <= tol * optimal)
}

/// Time after `start` at which every VC of `optimal` has first come within
/// `tol` of its optimum. `None` if some VC never does before `end`.
pub fn response_time(
    series: &AcrSeries,
    optimal: &BTreeMap<VcId, f64>,
    start: SimTime,
    end: SimTime,
    tol: f64,
) -> Option<SimTime> {
    let mut worst = SimTime::ZERO;
    for (vc, opt) in optimal {
        let s = series.get(vc).map(Vec::as_slice).unwrap_or(&[]);
        let first = if in_band(value_at(s, start), *opt, tol) {
            Some(start)
        } else {
            s.iter()
                .filter(|(t, _)| *t > start && *t < end)
                .find(|(_, v)| in_band(Some(*v), *opt, tol))
                .map(|(t, _)| *t)
        };
        worst = worst.max(first? - start);
    }
    Some(worst)
}

/// Earliest time after `start` from which every VC stays within `tol` of
/// its optimum for at least `window`, with the window ending by `end`.
pub fn convergence_time(
    series: &AcrSeries,
    optimal: &BTreeMap<VcId, f64>,
    start: SimTime,
    end: SimTime,
    tol: f64,
    window: SimTime,
) -> Option<SimTime> {
    let empty: Vec<(SimTime, f64)> = Vec::new();
    let vcs: Vec<(&[(SimTime, f64)], f64)> = optimal
        .iter()
        .map(|(vc, opt)| (series.get(vc).unwrap_or(&empty).as_slice(), *opt))
        .collect();
    let mut points = vec![start];
    for (s, _) in &vcs {
        points.extend(s.iter().map(|(t, _)| *t).filter(|t| *t > start && *t < end));
    }
    points.sort_unstable();
    points.dedup();
    let ok_at = |t: SimTime| vcs.iter().all(|(s, opt)| in_band(value_at(s, t), *opt, tol));

    let mut run_start: Option<SimTime> = None;
    for &p in &points {
        if ok_at(p) {
            run_start.get_or_insert(p);
        } else if let Some(rs) = run_start.take() {
            if p - rs >= window {
                return Some(rs - start);
            }
        }
    }
    run_start.filter(|rs| end.saturating_sub(*rs) >= window).map(|rs| rs - start)
}

pub fn delivered_cells(rec: &Recording, vc: VcId) -> u64 {
    rec.delivered
        .iter()
        .filter(|r| r.vc == vc)
        .map(|r| r.cells)
        .max()
        .unwrap_or(0)
}

pub fn throughput_kcells(rec: &Recording, vc: VcId) -> f64 {
    delivered_cells(rec, vc) as f64 / 1000.0
}

/// Largest ABR queue length (per-class or per-VC) seen before `before`.
pub fn max_queue_cells(rec: &Recording, before: SimTime) -> u64 {
    rec.queues
        .iter()
        .filter(|r| r.time < before && rec.queue_ids[r.queue].is_abr())
        .map(|r| r.cells)
        .max()
        .unwrap_or(0)
}

pub fn max_queue_kcells(rec: &Recording, before: SimTime) -> f64 {
    max_queue_cells(rec, before) as f64 / 1000.0
}

/// Largest ABR queue length within `[from, to)`, counting each queue's last
/// recorded value at `from`.
pub fn window_max_queue(rec: &Recording, from: SimTime, to: SimTime) -> u64 {
    let mut at_from: Vec<u64> = vec![0; rec.queue_ids.len()];
    let mut best = 0;
    for r in &rec.queues {
        if !rec.queue_ids[r.queue].is_abr() {
            continue;
        }
        if r.time <= from {
            at_from[r.queue] = r.cells;
        }
        if r.time >= from && r.time < to {
            best = best.max(r.cells);
        }
    }
    at_from.into_iter().fold(best, u64::max)
}

/// Per-cycle ABR queue maxima for consecutive cycles of length `period`
/// starting at `first`, up to `end`.
pub fn cycle_maxima(rec: &Recording, first: SimTime, period: SimTime, end: SimTime) -> Vec<u64> {
    let mut out = Vec::new();
    let mut from = first;
    while from + period <= end {
        out.push(window_max_queue(rec, from, from + period));
        from += period;
    }
    out
}

/// Length of the longest run of strictly increasing consecutive values,
/// counted in values (a single value is a run of 1).
pub fn longest_increasing_run(values: &[u64]) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut best = 1;
    let mut cur = 1;
    for w in values.windows(2) {
        if w[1] > w[0] {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 1;
        }
    }
    best
}
