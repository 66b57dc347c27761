//! The four reference topologies and their max-min reference allocations.

pub mod maxmin;
pub mod metrics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::erica::DEFAULT_TARGET_UTILIZATION;
use crate::error::ScenarioError;
use crate::protocol::{LinkConfig, ServiceClass, VbrPattern, VcConfig, VcId, OC3_MBPS};
use crate::switch::SwitchArch;
use crate::time::SimTime;

pub const SCENARIO_NAMES: [&str; 4] = ["two_src_vbr", "parking_lot", "upstream_bottleneck", "transient"];

pub const DEFAULT_ICR: f64 = 10.0;
pub const CORE_LINK_KM: f64 = 1000.0;

/// One-line description of each scenario, for listings.
pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "two_src_vbr" => "S1,S2 -> Sw1 -> Sw2 -> D1,D2 with an 80% ON/OFF VBR VC (20/20 ms) on Sw1-Sw2; 400 ms",
        "parking_lot" => "S1,S2 join at Sw1, S3 at Sw2, all exit after Sw3; bottleneck Sw2-Sw3; 200 ms",
        "upstream_bottleneck" => "15 VCs share Sw1-Sw2; S15 continues to Sw3 where S16,S17 join; 400 ms",
        "transient" => "two VCs on one bottleneck; the second is active during [150, 210) ms; 400 ms",
        _ => return None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeKind {
    EndSystem,
    Switch(SwitchArch),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

/// Span over which response and convergence are measured, with times
/// reported relative to `start`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricWindow {
    pub start: SimTime,
    pub end: SimTime,
}

/// Knobs a run configuration may change on a built scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub icr: Option<f64>,
    pub target_utilization: Option<f64>,
    /// Length of the links from source end systems to their first switch.
    pub source_access_km: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkConfig>,
    pub vcs: Vec<VcConfig>,
    pub run_until: SimTime,
    pub target_utilization: f64,
    pub window: MetricWindow,
    /// First cycle start and period for per-cycle queue maxima.
    pub cycle: Option<(SimTime, SimTime)>,
    pub checkpoints: Vec<SimTime>,
}

struct Builder {
    arch: SwitchArch,
    nodes: Vec<NodeSpec>,
    links: Vec<LinkConfig>,
    vcs: Vec<VcConfig>,
    icr: f64,
    access_km: f64,
}

impl Builder {
    fn new(arch: SwitchArch, icr: f64, access_km: f64) -> Self {
        Builder {
            arch,
            nodes: Vec::new(),
            links: Vec::new(),
            vcs: Vec::new(),
            icr,
            access_km,
        }
    }

    fn ends(&mut self, names: &[&str]) {
        for n in names {
            self.nodes.push(NodeSpec {
                name: n.to_string(),
                kind: NodeKind::EndSystem,
            });
        }
    }

    fn switches(&mut self, names: &[&str]) {
        for n in names {
            self.nodes.push(NodeSpec {
                name: n.to_string(),
                kind: NodeKind::Switch(self.arch),
            });
        }
    }

    fn access(&mut self, src: &str, sw: &str) {
        self.links.push(LinkConfig::new(src, sw, OC3_MBPS, self.access_km));
    }

    fn core(&mut self, a: &str, b: &str) {
        self.links.push(LinkConfig::new(a, b, OC3_MBPS, CORE_LINK_KM));
    }

    fn abr(&mut self, id: u32, path: &[&str], start_at: SimTime, stop_at: Option<SimTime>) {
        self.vcs.push(VcConfig {
            id: VcId(id),
            class: ServiceClass::Abr,
            path: path.iter().map(|s| s.to_string()).collect(),
            pcr: OC3_MBPS,
            mcr: 0.0,
            icr: self.icr,
            start_at,
            stop_at,
            vbr_pattern: None,
        });
    }

    fn vbr(&mut self, id: u32, path: &[&str], pattern: VbrPattern) {
        self.vcs.push(VcConfig {
            id: VcId(id),
            class: ServiceClass::Vbr,
            path: path.iter().map(|s| s.to_string()).collect(),
            pcr: OC3_MBPS,
            mcr: 0.0,
            icr: 0.0,
            start_at: SimTime::ZERO,
            stop_at: None,
            vbr_pattern: Some(pattern),
        });
    }
}

/// Builds a named scenario with every switch using `arch`.
pub fn build(name: &str, arch: SwitchArch) -> Result<Scenario, ScenarioError> {
    build_with(name, arch, &ScenarioOverrides::default())
}

/// Source access length used when not overridden. The parking lot keeps
/// sources next to their first switch so that the longest path has three
/// 1000 km hops (30 ms round trip); elsewhere every link is 1000 km.
pub fn default_access_km(name: &str) -> f64 {
    match name {
        "parking_lot" => 0.0,
        _ => CORE_LINK_KM,
    }
}

pub fn build_with(name: &str, arch: SwitchArch, ov: &ScenarioOverrides) -> Result<Scenario, ScenarioError> {
    let icr = ov.icr.unwrap_or(DEFAULT_ICR);
    let access_km = ov.source_access_km.unwrap_or_else(|| default_access_km(name));
    let mut b = Builder::new(arch, icr, access_km);
    let ms = SimTime::from_millis;
    let (run_until, window, cycle, checkpoints) = match name {
        "two_src_vbr" => {
            b.ends(&["S1", "S2", "V", "D1", "D2", "VD"]);
            b.switches(&["Sw1", "Sw2"]);
            b.access("S1", "Sw1");
            b.access("S2", "Sw1");
            b.access("V", "Sw1");
            b.core("Sw1", "Sw2");
            b.core("Sw2", "D1");
            b.core("Sw2", "D2");
            b.core("Sw2", "VD");
            b.abr(1, &["S1", "Sw1", "Sw2", "D1"], SimTime::ZERO, None);
            b.abr(2, &["S2", "Sw1", "Sw2", "D2"], SimTime::ZERO, None);
            b.vbr(
                3,
                &["V", "Sw1", "Sw2", "VD"],
                VbrPattern {
                    on_fraction_of_link: 0.8,
                    on: ms(20),
                    off: ms(20),
                },
            );
            let checkpoints = (0..20).map(|k| ms(20 * k)).collect();
            (
                ms(400),
                MetricWindow { start: ms(20), end: ms(40) },
                Some((SimTime::ZERO, ms(40))),
                checkpoints,
            )
        }
        "parking_lot" => {
            b.ends(&["S1", "S2", "S3", "D1", "D2", "D3"]);
            b.switches(&["Sw1", "Sw2", "Sw3"]);
            b.access("S1", "Sw1");
            b.access("S2", "Sw1");
            b.access("S3", "Sw2");
            b.core("Sw1", "Sw2");
            b.core("Sw2", "Sw3");
            for d in ["D1", "D2", "D3"] {
                b.core("Sw3", d);
            }
            b.abr(1, &["S1", "Sw1", "Sw2", "Sw3", "D1"], SimTime::ZERO, None);
            b.abr(2, &["S2", "Sw1", "Sw2", "Sw3", "D2"], SimTime::ZERO, None);
            b.abr(3, &["S3", "Sw2", "Sw3", "D3"], SimTime::ZERO, None);
            (ms(200), MetricWindow { start: ms(0), end: ms(200) }, None, vec![SimTime::ZERO])
        }
        "upstream_bottleneck" => {
            let srcs: Vec<String> = (1..=17).map(|i| format!("S{i}")).collect();
            let dsts: Vec<String> = (1..=17).map(|i| format!("D{i}")).collect();
            b.ends(&srcs.iter().map(String::as_str).collect::<Vec<_>>());
            b.ends(&dsts.iter().map(String::as_str).collect::<Vec<_>>());
            b.switches(&["Sw1", "Sw2", "Sw3"]);
            for src in &srcs[..15] {
                b.access(src, "Sw1");
            }
            b.access(&srcs[15], "Sw2");
            b.access(&srcs[16], "Sw2");
            b.core("Sw1", "Sw2");
            b.core("Sw2", "Sw3");
            for d in &dsts[..14] {
                b.core("Sw2", d);
            }
            for d in &dsts[14..] {
                b.core("Sw3", d);
            }
            for i in 0..14 {
                b.abr(i as u32 + 1, &[&srcs[i], "Sw1", "Sw2", &dsts[i]], SimTime::ZERO, None);
            }
            b.abr(15, &["S15", "Sw1", "Sw2", "Sw3", "D15"], SimTime::ZERO, None);
            b.abr(16, &["S16", "Sw2", "Sw3", "D16"], SimTime::ZERO, None);
            b.abr(17, &["S17", "Sw2", "Sw3", "D17"], SimTime::ZERO, None);
            (ms(400), MetricWindow { start: ms(0), end: ms(400) }, None, vec![SimTime::ZERO])
        }
        "transient" => {
            b.ends(&["S1", "S2", "D1", "D2"]);
            b.switches(&["Sw1", "Sw2"]);
            b.access("S1", "Sw1");
            b.access("S2", "Sw1");
            b.core("Sw1", "Sw2");
            b.core("Sw2", "D1");
            b.core("Sw2", "D2");
            b.abr(1, &["S1", "Sw1", "Sw2", "D1"], SimTime::ZERO, None);
            b.abr(2, &["S2", "Sw1", "Sw2", "D2"], ms(150), Some(ms(210)));
            (
                ms(400),
                MetricWindow { start: ms(150), end: ms(210) },
                None,
                vec![SimTime::ZERO, ms(150), ms(210)],
            )
        }
        other => return Err(ScenarioError::UnknownScenario(other.to_string())),
    };
    Ok(Scenario {
        name: name.to_string(),
        nodes: b.nodes,
        links: b.links,
        vcs: b.vcs,
        run_until,
        target_utilization: ov.target_utilization.unwrap_or(DEFAULT_TARGET_UTILIZATION),
        window,
        cycle,
        checkpoints,
    })
}

impl Scenario {
    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn is_switch(&self, name: &str) -> bool {
        matches!(self.node(name).map(|n| n.kind), Some(NodeKind::Switch(_)))
    }

    pub fn abr_vcs(&self) -> impl Iterator<Item = &VcConfig> {
        self.vcs.iter().filter(|v| v.class == ServiceClass::Abr)
    }

    pub fn link_between(&self, a: &str, b: &str) -> Option<&LinkConfig> {
        self.links
            .iter()
            .find(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }

    /// Directed links `(from, to)` crossed by some VC, in first-use order.
    pub fn directed_links(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for vc in &self.vcs {
            for w in vc.path.windows(2) {
                let key = (w[0].clone(), w[1].clone());
                if !out.contains(&key) {
                    out.push(key);
                }
            }
        }
        out
    }

    /// Capacity available to ABR on the directed link `from -> to` at `t`:
    /// the target utilization of the link at switch ports (full rate at end
    /// systems) minus VBR traffic that is ON at `t`.
    pub fn abr_capacity(&self, from: &str, to: &str, t: SimTime) -> f64 {
        let Some(link) = self.link_between(from, to) else {
            return 0.0;
        };
        let share = if self.is_switch(from) { self.target_utilization } else { 1.0 };
        let vbr: f64 = self
            .vcs
            .iter()
            .filter(|v| v.class == ServiceClass::Vbr && v.is_active_at(t))
            .filter(|v| v.path.windows(2).any(|w| w[0] == from && w[1] == to))
            .filter_map(|v| {
                let p = v.vbr_pattern?;
                let src_rate = self.link_between(&v.path[0], &v.path[1]).map_or(link.rate, |l| l.rate);
                p.is_on(v.start_at, t).then(|| p.on_rate(src_rate))
            })
            .sum();
        (share * link.rate - vbr).max(0.0)
    }

    /// Max-min fair rates of the ABR VCs active at `t`.
    pub fn optimal_at(&self, t: SimTime) -> BTreeMap<VcId, f64> {
        let links = self.directed_links();
        let active: Vec<&VcConfig> = self.abr_vcs().filter(|v| v.is_active_at(t)).collect();
        let capacities: Vec<f64> = links.iter().map(|(a, b)| self.abr_capacity(a, b, t)).collect();
        let routes: Vec<Vec<usize>> = active
            .iter()
            .map(|v| {
                v.path
                    .windows(2)
                    .map(|w| links.iter().position(|(a, b)| *a == w[0] && *b == w[1]).expect("link listed"))
                    .collect()
            })
            .collect();
        let caps: Vec<f64> = active.iter().map(|v| v.pcr).collect();
        let rates = maxmin::water_fill(&capacities, &routes, &caps);
        active.iter().map(|v| v.id).zip(rates).collect()
    }

    /// Reference allocation for the metric window.
    pub fn optimal(&self) -> BTreeMap<VcId, f64> {
        self.optimal_at(self.window.start)
    }

    /// Checks every VC and that each path follows existing links.
    pub fn validate(&self) -> Result<(), String> {
        for vc in &self.vcs {
            vc.validate().map_err(|e| e.to_string())?;
            for n in &vc.path {
                if self.node(n).is_none() {
                    return Err(format!("VC {}: unknown node {n}", vc.id));
                }
            }
            for w in vc.path.windows(2) {
                if self.link_between(&w[0], &w[1]).is_none() {
                    return Err(format!("VC {}: no link {} - {}", vc.id, w[0], w[1]));
                }
            }
            for n in &vc.path[1..vc.path.len() - 1] {
                if !self.is_switch(n) {
                    return Err(format!("VC {}: interior node {n} is not a switch", vc.id));
                }
            }
        }
        Ok(())
    }
}
