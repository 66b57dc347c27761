//! Max-min fair allocation by water-filling.

const EPS: f64 = 1e-9;

/// Water-filling max-min allocation.
///
/// `capacities[l]` is the usable capacity of link `l`, `routes[f]` the links
/// crossed by flow `f` and `caps[f]` an upper bound on the flow's own rate
/// (its PCR). All flows grow together; a flow freezes when a link on its
/// route saturates or it reaches its cap.
pub fn water_fill(capacities: &[f64], routes: &[Vec<usize>], caps: &[f64]) -> Vec<f64> {
    assert_eq!(routes.len(), caps.len());
    let n = routes.len();
    let mut rate = vec![0.0; n];
    let mut frozen = vec![false; n];
    let mut remaining: Vec<f64> = capacities.iter().map(|c| c.max(0.0)).collect();

    loop {
        let live: Vec<usize> = (0..n).filter(|&f| !frozen[f]).collect();
        if live.is_empty() {
            break;
        }
        let mut users = vec![0usize; remaining.len()];
        for &f in &live {
            for &l in &routes[f] {
                users[l] += 1;
            }
        }
        let mut inc = f64::INFINITY;
        for (l, &u) in users.iter().enumerate() {
            if u > 0 {
                inc = inc.min(remaining[l] / u as f64);
            }
        }
        for &f in &live {
            inc = inc.min(caps[f] - rate[f]);
        }
        if !inc.is_finite() {
            // unconstrained flows: nothing bounds them
            for &f in &live {
                rate[f] = f64::INFINITY;
                frozen[f] = true;
            }
            break;
        }
        let inc = inc.max(0.0);
        for &f in &live {
            rate[f] += inc;
            for &l in &routes[f] {
                remaining[l] -= inc;
            }
        }
        for &f in &live {
            let saturated = routes[f].iter().any(|&l| remaining[l] <= EPS * capacities[l].abs().max(1.0));
            if saturated || caps[f] - rate[f] <= EPS * caps[f].abs().max(1.0) {
                frozen[f] = true;
            }
        }
    }
    rate
}
