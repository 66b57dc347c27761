//! Per-run CSV files, the summary table, the worker pool that produces them
//! and the offline check that recomputes the summary from the CSVs.
//!
//! Layout of an output directory:
//!
//! ```text
//! <out>/summary.csv                  scenario,column,metric,value
//! <out>/<scenario>__<column>/spec.toml
//! <out>/<scenario>__<column>/acr.csv        time_ns,vc_id,acr_mbps
//! <out>/<scenario>__<column>/queues.csv     time_ns,node_id,queue_id,cells
//! <out>/<scenario>__<column>/delivered.csv  time_ns,vc_id,cumulative_cells
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::RunSpec;
use crate::error::OutputError;
use crate::protocol::VcId;
use crate::scenarios::metrics::{
    acr_series, convergence_time, cycle_maxima, max_queue_kcells, response_time, throughput_kcells, AcrRow,
    DeliveredRow, QueueId, QueueRow, Recording, Tolerances,
};
use crate::scenarios::Scenario;
use crate::sim::{self, PropertyReport};
use crate::time::SimTime;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SPEC_TOML: &str = "spec.toml";
pub const ACR_CSV: &str = "acr.csv";
pub const QUEUES_CSV: &str = "queues.csv";
pub const DELIVERED_CSV: &str = "delivered.csv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub column: String,
    pub metric: String,
    pub value: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> OutputError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => OutputError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => OutputError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn fmt_ms(t: Option<SimTime>) -> String {
    t.map_or_else(|| "none".to_string(), |t| format!("{:.3}", t.as_millis_f64()))
}

/// Summary metrics of one run, computed only from its recording.
pub fn summarize(scenario: &Scenario, tol: &Tolerances, rec: &Recording) -> Vec<(String, String)> {
    let series = acr_series(rec);
    let optimal = scenario.optimal();
    let w = scenario.window;
    let resp = response_time(&series, &optimal, w.start, w.end, tol.response_tol);
    let conv = convergence_time(&series, &optimal, w.start, w.end, tol.convergence_tol, tol.convergence_window);
    let before = conv.map_or(scenario.run_until, |c| w.start + c);

    let mut out = vec![
        ("response_time_ms".to_string(), fmt_ms(resp)),
        ("convergence_time_ms".to_string(), fmt_ms(conv)),
        ("max_queue_kcells".to_string(), format!("{:.3}", max_queue_kcells(rec, before))),
    ];
    for vc in scenario.abr_vcs() {
        out.push((
            format!("throughput_kcells.vc{}", vc.id),
            format!("{:.3}", throughput_kcells(rec, vc.id)),
        ));
    }
    if let Some((first, period)) = scenario.cycle {
        for (k, m) in cycle_maxima(rec, first, period, scenario.run_until).iter().enumerate() {
            out.push((
                format!("cycle_max_queue_kcells.{}", k + 1),
                format!("{:.3}", *m as f64 / 1000.0),
            ));
        }
    }
    out
}

/// Writes the three CSVs and `spec.toml` of one run into `dir`.
pub fn write_run(dir: &Path, spec: &RunSpec, rec: &Recording) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(SPEC_TOML);
    fs::write(&p, spec.to_toml()).map_err(io_err(&p))?;

    let p = dir.join(ACR_CSV);
    let mut w = csv::Writer::from_path(&p).map_err(|e| csv_err(&p, e))?;
    w.write_record(["time_ns", "vc_id", "acr_mbps"]).map_err(|e| csv_err(&p, e))?;
    for r in &rec.acr {
        w.write_record([r.time.as_nanos().to_string(), r.vc.0.to_string(), format!("{:.6}", r.acr)])
            .map_err(|e| csv_err(&p, e))?;
    }
    w.flush().map_err(io_err(&p))?;

    let p = dir.join(QUEUES_CSV);
    let mut w = csv::Writer::from_path(&p).map_err(|e| csv_err(&p, e))?;
    w.write_record(["time_ns", "node_id", "queue_id", "cells"]).map_err(|e| csv_err(&p, e))?;
    for r in &rec.queues {
        let id = &rec.queue_ids[r.queue];
        w.write_record([r.time.as_nanos().to_string(), id.node.clone(), id.name.clone(), r.cells.to_string()])
            .map_err(|e| csv_err(&p, e))?;
    }
    w.flush().map_err(io_err(&p))?;

    let p = dir.join(DELIVERED_CSV);
    let mut w = csv::Writer::from_path(&p).map_err(|e| csv_err(&p, e))?;
    w.write_record(["time_ns", "vc_id", "cumulative_cells"]).map_err(|e| csv_err(&p, e))?;
    for r in &rec.delivered {
        w.write_record([r.time.as_nanos().to_string(), r.vc.0.to_string(), r.cells.to_string()])
            .map_err(|e| csv_err(&p, e))?;
    }
    w.flush().map_err(io_err(&p))?;
    Ok(())
}

#[derive(Deserialize)]
struct AcrCsv {
    time_ns: u64,
    vc_id: u32,
    acr_mbps: f64,
}

#[derive(Deserialize)]
struct QueueCsv {
    time_ns: u64,
    node_id: String,
    queue_id: String,
    cells: u64,
}

#[derive(Deserialize)]
struct DeliveredCsv {
    time_ns: u64,
    vc_id: u32,
    cumulative_cells: u64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Reads a run directory back into a [`Recording`].
pub fn read_recording(dir: &Path) -> Result<Recording, OutputError> {
    let mut rec = Recording::default();
    for r in read_rows::<AcrCsv>(&dir.join(ACR_CSV))? {
        rec.acr.push(AcrRow {
            time: SimTime::from_nanos(r.time_ns),
            vc: VcId(r.vc_id),
            acr: r.acr_mbps,
        });
    }
    let mut index: BTreeMap<QueueId, usize> = BTreeMap::new();
    for r in read_rows::<QueueCsv>(&dir.join(QUEUES_CSV))? {
        let id = QueueId {
            node: r.node_id,
            name: r.queue_id,
        };
        let q = *index.entry(id.clone()).or_insert_with(|| {
            rec.queue_ids.push(id);
            rec.queue_ids.len() - 1
        });
        rec.queues.push(QueueRow {
            time: SimTime::from_nanos(r.time_ns),
            queue: q,
            cells: r.cells,
        });
    }
    for r in read_rows::<DeliveredCsv>(&dir.join(DELIVERED_CSV))? {
        rec.delivered.push(DeliveredRow {
            time: SimTime::from_nanos(r.time_ns),
            vc: VcId(r.vc_id),
            cells: r.cumulative_cells,
        });
    }
    Ok(rec)
}

pub fn read_spec(dir: &Path) -> Result<RunSpec, OutputError> {
    let p = dir.join(SPEC_TOML);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    Ok(RunSpec::from_toml(&text, &p)?)
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub metrics: Vec<(String, String)>,
    pub report: PropertyReport,
    pub events: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub result: Result<RunRecord, String>,
}

impl RunOutcome {
    /// Error text if the run failed or broke a protocol property.
    pub fn failure(&self) -> Option<String> {
        match &self.result {
            Err(e) => Some(e.clone()),
            Ok(r) if !r.report.is_clean() => Some(format!("property violations: {:?}", r.report)),
            Ok(_) => None,
        }
    }
}

/// Simulates one spec and writes its directory under `root`.
pub fn run_one(spec: &RunSpec, root: &Path) -> Result<RunRecord, OutputError> {
    let scenario = spec.scenario()?;
    let out = sim::run(&scenario, &spec.params())?;
    write_run(&root.join(spec.dir_name()), spec, &out.recording)?;
    Ok(RunRecord {
        metrics: summarize(&scenario, &spec.tolerances(), &out.recording),
        report: out.report,
        events: out.events,
    })
}

pub fn summary_rows(outcomes: &[RunOutcome]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for o in outcomes {
        if let Ok(r) = &o.result {
            for (metric, value) in &r.metrics {
                rows.push(SummaryRow {
                    scenario: o.spec.scenario.clone(),
                    column: o.spec.column.clone(),
                    metric: metric.clone(),
                    value: value.clone(),
                });
            }
        }
    }
    rows
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, OutputError> {
    read_rows(path)
}

/// Runs every spec on up to `workers` threads, then writes `summary.csv`
/// with the rows of the runs that completed. Outcomes keep spec order.
pub fn run_matrix(specs: &[RunSpec], root: &Path, workers: usize) -> Result<Vec<RunOutcome>, OutputError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; specs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, specs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = specs.get(i) else { break };
                let result = run_one(spec, root).map_err(|e| e.to_string());
                slots.lock().expect("no worker panicked")[i] = Some(RunOutcome {
                    spec: spec.clone(),
                    result,
                });
            });
        }
    });
    let outcomes: Vec<RunOutcome> = slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|o| o.expect("every spec ran"))
        .collect();
    write_summary(&root.join(SUMMARY_CSV), &summary_rows(&outcomes))?;
    Ok(outcomes)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub runs: usize,
    pub values: usize,
    pub mismatches: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes every summary value of `root` from the run CSVs.
pub fn verify(root: &Path) -> Result<VerifyReport, OutputError> {
    let rows = read_summary(&root.join(SUMMARY_CSV))?;
    let mut groups: BTreeMap<(String, String), BTreeMap<String, String>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scenario, r.column))
            .or_default()
            .insert(r.metric, r.value);
    }
    let mut report = VerifyReport::default();
    for ((scenario, column), stored) in groups {
        report.runs += 1;
        let dir: PathBuf = root.join(format!("{scenario}__{column}"));
        let spec = read_spec(&dir)?;
        if spec.scenario != scenario || spec.column != column {
            report
                .mismatches
                .push(format!("{}: spec.toml names {} / {}", dir.display(), spec.scenario, spec.column));
            continue;
        }
        let scen = spec.scenario()?;
        let rec = read_recording(&dir)?;
        let fresh: BTreeMap<String, String> = summarize(&scen, &spec.tolerances(), &rec).into_iter().collect();
        for (metric, value) in &stored {
            report.values += 1;
            match fresh.get(metric) {
                Some(v) if v == value => {}
                Some(v) => report
                    .mismatches
                    .push(format!("{scenario}/{column} {metric}: summary {value}, recomputed {v}")),
                None => report
                    .mismatches
                    .push(format!("{scenario}/{column} {metric}: not derivable from the run files")),
            }
        }
        for metric in fresh.keys().filter(|m| !stored.contains_key(*m)) {
            report
                .mismatches
                .push(format!("{scenario}/{column} {metric}: missing from summary"));
        }
    }
    Ok(report)
}

fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in it {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// One text table per metric: scenarios down, columns across.
pub fn format_tables(rows: &[SummaryRow]) -> String {
    let mut cells: BTreeMap<(&str, &str, &str), &str> = BTreeMap::new();
    for r in rows {
        cells.insert((&r.metric, &r.scenario, &r.column), &r.value);
    }
    let metrics = first_seen(rows.iter().map(|r| r.metric.as_str()));
    let columns = first_seen(rows.iter().map(|r| r.column.as_str()));
    let mut out = String::new();
    for m in metrics {
        let scenarios = first_seen(rows.iter().filter(|r| r.metric == m).map(|r| r.scenario.as_str()));
        let cols: Vec<&str> = columns
            .iter()
            .copied()
            .filter(|c| scenarios.iter().any(|s| cells.contains_key(&(m, s, c))))
            .collect();
        let first_w = scenarios.iter().map(|s| s.len()).max().unwrap_or(0).max(m.len());
        let widths: Vec<usize> = cols
            .iter()
            .map(|c| {
                scenarios
                    .iter()
                    .filter_map(|s| cells.get(&(m, s, c)).map(|v| v.len()))
                    .max()
                    .unwrap_or(0)
                    .max(c.len())
            })
            .collect();
        let _ = write!(out, "{m:<first_w$}");
        for (c, w) in cols.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        for s in &scenarios {
            let _ = write!(out, "{s:<first_w$}");
            for (c, w) in cols.iter().zip(&widths) {
                let v = cells.get(&(m, s, c)).copied().unwrap_or("-");
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
