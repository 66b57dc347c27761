//! Run configuration files.
//!
//! A config is TOML with an optional global `[overrides]` table, an optional
//! `[matrix]` cross-product and any number of explicit `[[run]]` entries:
//!
//! ```toml
//! [overrides]
//! icr = 10.0
//! interval_us = 1000
//!
//! [matrix]
//! scenarios = ["parking_lot", "transient"]
//! presets = ["A", "B", "C", "D", "E", "F"]
//! nonvsvd = true
//!
//! [[run]]
//! scenario = "two_src_vbr"
//! arch = "vsvd"
//! label = "overalloc"
//! options = { vc_rate = "frm2_ccr", input_rate = "per_class", congestion = "both", alloc_update = "frm_and_brm" }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::erica::DEFAULT_INTERVAL;
use crate::error::ConfigError;
use crate::protocol::OC3_MBPS;
use crate::scenarios::metrics::{RecorderConfig, Tolerances};
use crate::scenarios::{build_with, Scenario, ScenarioOverrides, SCENARIO_NAMES};
use crate::sim::{SimParams, VsInitialAcr};
use crate::switch::{SwitchArch, VsVdOptions, PRESETS};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_window_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_tol: Option<f64>,
}

/// Optional knobs; unset fields fall back to the scenario defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_utilization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_access_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vs_initial_acr: Option<VsInitialAcr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceOverrides>,
}

impl Overrides {
    /// `self` with unset fields taken from `base`.
    pub fn over(&self, base: &Overrides) -> Overrides {
        let tol = match (self.tolerances, base.tolerances) {
            (Some(a), Some(b)) => Some(ToleranceOverrides {
                convergence_tol: a.convergence_tol.or(b.convergence_tol),
                convergence_window_ms: a.convergence_window_ms.or(b.convergence_window_ms),
                response_tol: a.response_tol.or(b.response_tol),
            }),
            (a, b) => a.or(b),
        };
        Overrides {
            target_utilization: self.target_utilization.or(base.target_utilization),
            interval_us: self.interval_us.or(base.interval_us),
            icr: self.icr.or(base.icr),
            source_access_km: self.source_access_km.or(base.source_access_km),
            vs_initial_acr: self.vs_initial_acr.or(base.vs_initial_acr),
            tolerances: tol,
        }
    }

    fn validate(&self, prefix: &str) -> Result<(), (String, String)> {
        let field = |name: &str| format!("{prefix}{name}");
        if let Some(u) = self.target_utilization {
            if !(u > 0.0 && u <= 1.0) {
                return Err((field("target_utilization"), format!("{u} is outside (0, 1]")));
            }
        }
        if let Some(i) = self.interval_us {
            if i == 0 {
                return Err((field("interval_us"), "must be positive".into()));
            }
        }
        if let Some(icr) = self.icr {
            if !(icr > 0.0 && icr <= OC3_MBPS) {
                return Err((field("icr"), format!("{icr} is outside (0, {OC3_MBPS}]")));
            }
        }
        if let Some(km) = self.source_access_km {
            if !(km >= 0.0 && km.is_finite()) {
                return Err((field("source_access_km"), format!("{km} is not a length")));
            }
        }
        if let Some(t) = self.tolerances {
            for (name, v) in [
                ("convergence_tol", t.convergence_tol),
                ("convergence_window_ms", t.convergence_window_ms),
                ("response_tol", t.response_tol),
            ] {
                if let Some(v) = v {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err((field(&format!("tolerances.{name}")), format!("{v} must be positive")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchName {
    Nonvsvd,
    Vsvd,
}

/// One fully resolved simulation to perform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub scenario: String,
    /// Column label: `nonvsvd`, a preset letter, or a user label.
    pub column: String,
    pub arch: ArchName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<VsVdOptions>,
    #[serde(default)]
    pub overrides: Overrides,
}

impl RunSpec {
    pub fn switch_arch(&self) -> SwitchArch {
        match (self.arch, self.options) {
            (ArchName::Vsvd, Some(o)) => SwitchArch::VsVd(o),
            _ => SwitchArch::NonVsVd,
        }
    }

    pub fn scenario(&self) -> Result<Scenario, crate::error::ScenarioError> {
        let ov = ScenarioOverrides {
            icr: self.overrides.icr,
            target_utilization: self.overrides.target_utilization,
            source_access_km: self.overrides.source_access_km,
        };
        build_with(&self.scenario, self.switch_arch(), &ov)
    }

    pub fn params(&self) -> SimParams {
        SimParams {
            interval: self.overrides.interval_us.map_or(DEFAULT_INTERVAL, SimTime::from_micros),
            vs_initial_acr: self.overrides.vs_initial_acr.unwrap_or(VsInitialAcr::Pcr),
            recorder: RecorderConfig::default(),
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        let t = self.overrides.tolerances.unwrap_or_default();
        Tolerances {
            convergence_tol: t.convergence_tol.unwrap_or(d.convergence_tol),
            convergence_window: t
                .convergence_window_ms
                .map_or(d.convergence_window, |ms| SimTime::from_nanos((ms * 1e6).round() as u64)),
            response_tol: t.response_tol.unwrap_or(d.response_tol),
        }
    }

    /// Directory name of this run under the output root.
    pub fn dir_name(&self) -> String {
        format!("{}__{}", self.scenario, self.column)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run spec serializes")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<RunSpec, ConfigError> {
        toml::from_str(text).map_err(|e| parse_error(path, text, &e))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    scenarios: Vec<String>,
    #[serde(default = "all_presets")]
    presets: Vec<String>,
    #[serde(default = "yes")]
    nonvsvd: bool,
}

fn all_presets() -> Vec<String> {
    PRESETS.iter().map(|(l, _, _)| l.to_string()).collect()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    scenario: String,
    arch: ArchName,
    preset: Option<String>,
    options: Option<VsVdOptions>,
    label: Option<String>,
    overrides: Option<Overrides>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    overrides: Option<Overrides>,
    matrix: Option<RawMatrix>,
    #[serde(default)]
    run: Vec<RawRun>,
}

fn parse_error(path: &Path, text: &str, e: &toml::de::Error) -> ConfigError {
    let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    ConfigError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.message().to_string(),
    }
}

fn check_scenario(name: &str) -> Result<(), String> {
    if SCENARIO_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(format!("unknown scenario `{name}`; expected one of {}", SCENARIO_NAMES.join(", ")))
    }
}

fn check_label(label: &str) -> Result<(), String> {
    if !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
        Ok(())
    } else {
        Err(format!("label `{label}` must be non-empty and use only letters, digits, `_`, `-`, `.`"))
    }
}

fn options_column(o: &VsVdOptions) -> String {
    match o.preset_letter() {
        Some(l) => l.to_string(),
        None => {
            let v = toml::Value::try_from(o).expect("options serialize");
            let t = v.as_table().expect("options are a table");
            ["vc_rate", "input_rate", "congestion", "alloc_update"]
                .iter()
                .map(|k| t[*k].as_str().unwrap_or_default().to_string())
                .collect::<Vec<_>>()
                .join(".")
        }
    }
}

/// Parses config text; `path` is only used in error messages.
pub fn parse_config_str(text: &str, path: &Path) -> Result<Vec<RunSpec>, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error(path, text, &e))?;
    let invalid = |field: String, message: String| ConfigError::Invalid {
        path: path.to_path_buf(),
        field,
        message,
    };

    let global = raw.overrides.unwrap_or_default();
    global.validate("overrides.").map_err(|(f, m)| invalid(f, m))?;

    let mut specs = Vec::new();
    if let Some(m) = &raw.matrix {
        if m.scenarios.is_empty() {
            return Err(invalid("matrix.scenarios".into(), "must list at least one scenario".into()));
        }
        let mut presets = Vec::new();
        for (i, p) in m.presets.iter().enumerate() {
            let o = VsVdOptions::preset(p).map_err(|e| invalid(format!("matrix.presets[{i}]"), e.to_string()))?;
            presets.push(o);
        }
        for (i, s) in m.scenarios.iter().enumerate() {
            check_scenario(s).map_err(|msg| invalid(format!("matrix.scenarios[{i}]"), msg))?;
            for o in &presets {
                specs.push(RunSpec {
                    scenario: s.clone(),
                    column: options_column(o),
                    arch: ArchName::Vsvd,
                    options: Some(*o),
                    overrides: global,
                });
            }
            if m.nonvsvd {
                specs.push(RunSpec {
                    scenario: s.clone(),
                    column: "nonvsvd".into(),
                    arch: ArchName::Nonvsvd,
                    options: None,
                    overrides: global,
                });
            }
        }
    }

    for (i, r) in raw.run.iter().enumerate() {
        let field = |name: &str| format!("run[{i}].{name}");
        check_scenario(&r.scenario).map_err(|m| invalid(field("scenario"), m))?;
        let options = match (r.arch, &r.preset, &r.options) {
            (ArchName::Nonvsvd, None, None) => None,
            (ArchName::Nonvsvd, Some(_), _) => {
                return Err(invalid(field("preset"), "only valid with arch = \"vsvd\"".into()))
            }
            (ArchName::Nonvsvd, None, Some(_)) => {
                return Err(invalid(field("options"), "only valid with arch = \"vsvd\"".into()))
            }
            (ArchName::Vsvd, Some(p), None) => {
                Some(VsVdOptions::preset(p).map_err(|e| invalid(field("preset"), e.to_string()))?)
            }
            (ArchName::Vsvd, None, Some(o)) => Some(*o),
            (ArchName::Vsvd, Some(_), Some(_)) => {
                return Err(invalid(field("options"), "give either `preset` or `options`, not both".into()))
            }
            (ArchName::Vsvd, None, None) => {
                return Err(invalid(field("preset"), "vsvd runs need `preset` or `options`".into()))
            }
        };
        let column = match (&r.label, options) {
            (Some(l), _) => {
                check_label(l).map_err(|m| invalid(field("label"), m))?;
                l.clone()
            }
            (None, Some(o)) => options_column(&o),
            (None, None) => "nonvsvd".into(),
        };
        let own = r.overrides.unwrap_or_default();
        own.validate(&field("overrides.")).map_err(|(f, m)| invalid(f, m))?;
        specs.push(RunSpec {
            scenario: r.scenario.clone(),
            column,
            arch: r.arch,
            options,
            overrides: own.over(&global),
        });
    }

    if specs.is_empty() {
        return Err(invalid("run".into(), "no runs configured (add [[run]] entries or a [matrix])".into()));
    }
    let mut seen = BTreeSet::new();
    for s in &specs {
        if !seen.insert(s.dir_name()) {
            return Err(invalid(
                "label".into(),
                format!("two runs of `{}` share the column `{}`", s.scenario, s.column),
            ));
        }
    }
    Ok(specs)
}

pub fn parse_config(path: &Path) -> Result<Vec<RunSpec>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: PathBuf::from(path),
        source,
    })?;
    parse_config_str(&text, path)
}
