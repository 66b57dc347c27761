#![allow(dead_code)]

use abrsim_core::protocol::ServiceClass;
use abrsim_core::{Scenario, SimTime};

/// Max-min problem of the ABR VCs active at `t`, rebuilt from the scenario
/// fields: (link capacities, per-flow link indices, per-flow caps, VC ids).
pub fn problem_at(s: &Scenario, t: SimTime) -> (Vec<f64>, Vec<Vec<usize>>, Vec<f64>, Vec<u32>) {
    let mut links: Vec<(String, String)> = Vec::new();
    let mut routes = Vec::new();
    let mut caps = Vec::new();
    let mut ids = Vec::new();
    for vc in s.vcs.iter().filter(|v| v.class == ServiceClass::Abr && v.is_active_at(t)) {
        let mut route = Vec::new();
        for w in vc.path.windows(2) {
            let key = (w[0].clone(), w[1].clone());
            let i = match links.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    links.push(key);
                    links.len() - 1
                }
            };
            route.push(i);
        }
        routes.push(route);
        caps.push(vc.pcr);
        ids.push(vc.id.0);
    }
    let capacities = links.iter().map(|(a, b)| s.abr_capacity(a, b, t)).collect();
    (capacities, routes, caps, ids)
}

/// Naive progressive filling: every unfrozen flow grows by `step` per round.
pub fn progressive_fill(capacities: &[f64], routes: &[Vec<usize>], caps: &[f64], step: f64) -> Vec<f64> {
    let n = routes.len();
    let mut rate = vec![0.0; n];
    let mut frozen = vec![false; n];
    let mut load = vec![0.0; capacities.len()];
    while frozen.iter().any(|f| !f) {
        for f in 0..n {
            if frozen[f] {
                continue;
            }
            let fits = rate[f] + step <= caps[f] && routes[f].iter().all(|&l| load[l] + step <= capacities[l]);
            if fits {
                rate[f] += step;
                for &l in &routes[f] {
                    load[l] += step;
                }
            } else {
                frozen[f] = true;
            }
        }
    }
    rate
}

/// Checks the max-min characterization: feasible, and every flow is either
/// at its cap or crosses a saturated link on which no flow gets more.
pub fn is_maxmin(rates: &[f64], capacities: &[f64], routes: &[Vec<usize>], caps: &[f64]) -> Result<(), String> {
    let eps = 1e-6;
    let mut load = vec![0.0; capacities.len()];
    for (f, r) in routes.iter().enumerate() {
        for &l in r {
            load[l] += rates[f];
        }
    }
    for (l, (&ld, &c)) in load.iter().zip(capacities).enumerate() {
        if ld > c + eps {
            return Err(format!("link {l} overloaded: {ld} > {c}"));
        }
    }
    for (f, r) in routes.iter().enumerate() {
        if rates[f] > caps[f] + eps {
            return Err(format!("flow {f} above cap"));
        }
        if rates[f] >= caps[f] - eps {
            continue;
        }
        let bottleneck = r.iter().any(|&l| {
            load[l] >= capacities[l] - eps
                && routes
                    .iter()
                    .enumerate()
                    .filter(|(_, rr)| rr.contains(&l))
                    .all(|(g, _)| rates[g] <= rates[f] + eps)
        });
        if !bottleneck {
            return Err(format!("flow {f} at {} has no bottleneck link", rates[f]));
        }
    }
    Ok(())
}

/// Instants at which a scenario's reference allocation is evaluated.
pub fn probe_times(s: &Scenario) -> Vec<SimTime> {
    let mut t = vec![s.window.start];
    if let Some((first, period)) = s.cycle {
        t.push(first);
        t.push(first + SimTime::from_nanos(period.as_nanos() / 4));
        t.push(first + SimTime::from_nanos(3 * period.as_nanos() / 4));
    }
    t.push(SimTime::ZERO);
    t.push(s.run_until.saturating_sub(SimTime::from_millis(1)));
    t
}

/// Oracle of the scenario against both references; `Err` names the mismatch.
pub fn check_oracle(s: &Scenario) -> Result<(), String> {
    for t in probe_times(s) {
        let (cap, routes, caps, ids) = problem_at(s, t);
        let oracle = s.optimal_at(t);
        let rates: Vec<f64> = ids
            .iter()
            .map(|id| *oracle.get(&abrsim_core::protocol::VcId(*id)).expect("oracle covers active VC"))
            .collect();
        if oracle.len() != ids.len() {
            return Err(format!("{} at {t}: oracle has {} VCs, {} active", s.name, oracle.len(), ids.len()));
        }
        is_maxmin(&rates, &cap, &routes, &caps).map_err(|e| format!("{} at {t}: {e}", s.name))?;
        let step = 1e-3;
        let brute = progressive_fill(&cap, &routes, &caps, step);
        for (i, (a, b)) in rates.iter().zip(&brute).enumerate() {
            if (a - b).abs() > step * routes.len() as f64 + 1e-9 {
                return Err(format!("{} at {t}: VC {} oracle {a} vs brute force {b}", s.name, ids[i]));
            }
        }
    }
    Ok(())
}
