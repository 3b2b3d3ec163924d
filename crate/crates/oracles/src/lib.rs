//! Slow, obviously-correct reference computations for tests. Nothing here
//! reuses the solver's cached or incremental code paths: distances come
//! straight from coordinates and schedules are re-simulated from scratch.

use vrpagent_core::{Instance, ProblemKind};

pub fn distance(instance: &Instance, a: usize, b: usize) -> f64 {
    let (p, q) = (instance.node(a), instance.node(b));
    (p.x - q.x).hypot(p.y - q.y)
}

/// Depot-to-depot travel cost recomputed from coordinates.
pub fn route_cost(instance: &Instance, route: &[usize]) -> f64 {
    if route.is_empty() {
        return 0.0;
    }
    let mut stops = vec![0];
    stops.extend_from_slice(route);
    stops.push(0);
    stops.windows(2).map(|w| distance(instance, w[0], w[1])).sum()
}

/// Objective of a set of routes: travel cost plus prizes of customers not
/// on any route (PCVRP only).
pub fn objective(instance: &Instance, routes: &[Vec<usize>]) -> f64 {
    let travel: f64 = routes.iter().map(|r| route_cost(instance, r)).sum();
    if instance.kind() != ProblemKind::Pcvrp {
        return travel;
    }
    let mut served = vec![false; instance.num_nodes()];
    for &c in routes.iter().flatten() {
        served[c] = true;
    }
    travel
        + (1..instance.num_nodes())
            .filter(|&c| !served[c])
            .map(|c| instance.node(c).prize)
            .sum::<f64>()
}

/// Forward simulation with waiting; `None` when a window is missed.
pub fn service_starts(instance: &Instance, route: &[usize]) -> Option<Vec<f64>> {
    let mut now = 0.0;
    let mut at = 0;
    let mut starts = Vec::with_capacity(route.len());
    for &c in route {
        let node = instance.node(c);
        let begin = (now + distance(instance, at, c)).max(node.tw_start);
        if begin > node.tw_end {
            return None;
        }
        starts.push(begin);
        now = begin + node.service;
        at = c;
    }
    Some(starts)
}

pub fn route_feasible(instance: &Instance, route: &[usize]) -> bool {
    let load: u64 = route.iter().map(|&c| u64::from(instance.node(c).demand)).sum();
    if load > u64::from(instance.capacity()) {
        return false;
    }
    instance.kind() != ProblemKind::Vrptw || service_starts(instance, route).is_some()
}

/// Cheapest feasible insertion found by rebuilding every candidate route.
/// Scans tours then positions in order, the new-tour option last, and only
/// moves on for an improvement larger than `1e-9`.
pub fn exhaustive_insertion(instance: &Instance, routes: &[Vec<usize>], customer: usize) -> Option<(usize, usize, f64)> {
    let prize = if instance.kind() == ProblemKind::Pcvrp {
        instance.node(customer).prize
    } else {
        0.0
    };
    let mut options = Vec::new();
    for (t, route) in routes.iter().enumerate() {
        for pos in 0..=route.len() {
            let mut r = route.clone();
            r.insert(pos, customer);
            if route_feasible(instance, &r) {
                options.push((t, pos, route_cost(instance, &r) - route_cost(instance, route) - prize));
            }
        }
    }
    let single = vec![customer];
    if route_feasible(instance, &single) {
        options.push((routes.len(), 0, route_cost(instance, &single) - prize));
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for o in options {
        if best.is_none_or(|b| o.2 < b.2 - 1e-9) {
            best = Some(o);
        }
    }
    best
}

fn permutations(items: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Exact optimum by enumerating every set partition of the customers and
/// every visiting order of each part. Only for tiny instances (n <= 9).
/// For PCVRP the served subset is enumerated too.
pub fn brute_force_optimum(instance: &Instance) -> f64 {
    let n = instance.num_customers();
    assert!(n <= 9, "brute force is exponential; n = {n}");
    let full = 1usize << n;
    let ids = |mask: usize| -> Vec<usize> { (0..n).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect() };

    let mut best_route = vec![f64::INFINITY; full];
    best_route[0] = 0.0;
    for (mask, slot) in best_route.iter_mut().enumerate().skip(1) {
        let mut members = ids(mask);
        let mut best = f64::INFINITY;
        permutations(&mut members, 0, &mut |perm| {
            if route_feasible(instance, perm) {
                best = best.min(route_cost(instance, perm));
            }
        });
        *slot = best;
    }

    // cover[mask]: cheapest way to serve exactly `mask` with any number of routes
    let mut cover = vec![f64::INFINITY; full];
    cover[0] = 0.0;
    for mask in 1..full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let part = sub | low;
            let value = best_route[part] + cover[mask ^ part];
            if value < cover[mask] {
                cover[mask] = value;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }

    if instance.kind() != ProblemKind::Pcvrp {
        return cover[full - 1];
    }
    (0..full)
        .map(|mask| {
            let forfeited: f64 = (0..n)
                .filter(|b| mask >> b & 1 == 0)
                .map(|b| instance.node(b + 1).prize)
                .sum();
            cover[mask] + forfeited
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vrpagent_core::{Instance, Node, ProblemKind};

    #[test]
    fn two_far_customers_need_two_routes_when_capacity_binds() {
        let nodes = vec![
            Node::depot(0.0, 0.0),
            Node::customer(1.0, 0.0, 2),
            Node::customer(0.0, 1.0, 2),
        ];
        let inst = Instance::new(ProblemKind::Cvrp, 3, nodes.clone()).unwrap();
        assert!((brute_force_optimum(&inst) - 4.0).abs() < 1e-12);
        let inst = Instance::new(ProblemKind::Cvrp, 4, nodes).unwrap();
        assert!((brute_force_optimum(&inst) - (2.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn pcvrp_skips_worthless_customer() {
        let nodes = vec![
            Node::depot(0.0, 0.0),
            Node { prize: 0.1, ..Node::customer(1.0, 0.0, 1) },
            Node { prize: 5.0, ..Node::customer(0.5, 0.0, 1) },
        ];
        let inst = Instance::new(ProblemKind::Pcvrp, 3, nodes).unwrap();
        assert!((brute_force_optimum(&inst) - 1.1).abs() < 1e-12);
    }
}
