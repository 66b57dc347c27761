use std::path::PathBuf;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {at} but clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("protocol violation: {0}")]
    Protocol(#[from] ProtocolError),

    #[error("invalid topology: {0}")]
    Topology(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("FRM requested for non-ABR VC {0}")]
    FrmOnNonAbr(u32),

    #[error("turnaround of a {0} cell; only FRM cells can be turned around")]
    TurnaroundNonFrm(&'static str),

    #[error("VC {vc}: rate parameters must satisfy mcr <= icr <= pcr (mcr={mcr}, icr={icr}, pcr={pcr})")]
    RateOrder { vc: u32, mcr: f64, icr: f64, pcr: f64 },

    #[error("VC {vc}: path must list source, at least one switch, and destination")]
    ShortPath { vc: u32 },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected one of two_src_vbr, parking_lot, upstream_bottleneck, transient)")]
    UnknownScenario(String),

    #[error("unknown preset `{0}` (expected A..F)")]
    UnknownPreset(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: parse error at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: invalid value for `{field}`: {message}")]
    Invalid {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed row: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Scenario(#[from] ScenarioError),

    #[error("{0}")]
    Config(#[from] ConfigError),

    #[error("{0}")]
    Sim(#[from] SimError),
}
