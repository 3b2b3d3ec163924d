//! Exact feasibility checking, independent of the incremental caches.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::instance::{Instance, ProblemKind};
use crate::solution::{route_cost, Solution, UNASSIGNED};

/// Slack allowed when comparing a simulated service start with a window end.
pub const TIME_EPS: f64 = 1e-9;

/// Drift allowed between cached and recomputed objective values.
pub const OBJECTIVE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Capacity,
    TimeWindow,
    Duplicate,
    Missing,
    InvalidId,
    MapMismatch,
    ObjectiveDrift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Offending tour, when the violation is local to one.
    pub tour: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tour {
            Some(t) => write!(f, "{:?} in tour {t}: {}", self.kind, self.detail),
            None => write!(f, "{:?}: {}", self.kind, self.detail),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, tour: Option<usize>, detail: String) {
        self.violations.push(Violation { kind, tour, detail });
    }
}

/// Checks `solution` against every constraint of its variant. CVRP and
/// VRPTW require every customer routed exactly once; PCVRP permits
/// unassigned customers. Violations are reported, never raised.
pub fn validate(solution: &Solution, instance: &Instance) -> FeasibilityReport {
    let routes = solution.routes();
    let mut report = check_routes(instance, &routes, solution.unassigned());

    let map = solution.tour_map();
    if map.len() != instance.num_nodes() {
        report.push(
            ViolationKind::MapMismatch,
            None,
            format!("map has {} entries for {} nodes", map.len(), instance.num_nodes()),
        );
    } else {
        for (t, route) in routes.iter().enumerate() {
            for &c in route.iter().filter(|&&c| instance.is_customer(c)) {
                if map[c] != t {
                    report.push(
                        ViolationKind::MapMismatch,
                        Some(t),
                        format!("customer {c} mapped to {}", map[c]),
                    );
                }
            }
        }
        for &c in solution.unassigned().iter().filter(|&&c| instance.is_customer(c)) {
            if map[c] != UNASSIGNED {
                report.push(
                    ViolationKind::MapMismatch,
                    None,
                    format!("unassigned customer {c} mapped to {}", map[c]),
                );
            }
        }
    }

    for (t, tour) in solution.tours().iter().enumerate() {
        let cost = route_cost(instance, tour.customers());
        if (cost - tour.cost()).abs() > OBJECTIVE_EPS {
            report.push(
                ViolationKind::ObjectiveDrift,
                Some(t),
                format!("cached tour cost {} vs recomputed {cost}", tour.cost()),
            );
        }
    }
    let travel: f64 = routes.iter().map(|r| route_cost(instance, r)).sum();
    let forfeited: f64 = solution.unassigned().iter().filter(|&&c| instance.is_customer(c)).map(|&c| instance.prize(c)).sum();
    let recomputed = travel + forfeited;
    if (recomputed - solution.objective()).abs() > OBJECTIVE_EPS {
        report.push(
            ViolationKind::ObjectiveDrift,
            None,
            format!("cached objective {} vs recomputed {recomputed}", solution.objective()),
        );
    }
    report
}

/// Validates plain tour lists (for example, a solution read back from a
/// worker process). Customers absent from every tour are treated as
/// unassigned.
pub fn validate_routes(instance: &Instance, routes: &[Vec<usize>]) -> FeasibilityReport {
    let mut routed = vec![false; instance.num_nodes()];
    for &c in routes.iter().flatten() {
        if instance.is_customer(c) {
            routed[c] = true;
        }
    }
    let unassigned: Vec<usize> = instance.customers().filter(|&c| !routed[c]).collect();
    check_routes(instance, routes, &unassigned)
}

fn check_routes(instance: &Instance, routes: &[Vec<usize>], unassigned: &[usize]) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    let mut seen = vec![0u32; instance.num_nodes()];

    for (t, route) in routes.iter().enumerate() {
        let mut load = 0u64;
        for &c in route {
            if !instance.is_customer(c) {
                report.push(ViolationKind::InvalidId, Some(t), format!("node id {c}"));
                continue;
            }
            seen[c] += 1;
            load += u64::from(instance.demand(c));
        }
        if load > u64::from(instance.capacity()) {
            report.push(
                ViolationKind::Capacity,
                Some(t),
                format!("load {load} exceeds capacity {}", instance.capacity()),
            );
        }
        if instance.kind() == ProblemKind::Vrptw {
            check_schedule(instance, t, route, &mut report);
        }
    }

    for &c in unassigned {
        if instance.is_customer(c) {
            seen[c] += 1;
        } else {
            report.push(ViolationKind::InvalidId, None, format!("unassigned node id {c}"));
        }
    }

    for c in instance.customers() {
        match seen[c] {
            1 => {}
            0 => report.push(ViolationKind::Missing, None, format!("customer {c}")),
            k => report.push(ViolationKind::Duplicate, None, format!("customer {c} appears {k} times")),
        }
    }

    if instance.kind() != ProblemKind::Pcvrp {
        for &c in unassigned.iter().filter(|&&c| instance.is_customer(c)) {
            report.push(ViolationKind::Missing, None, format!("customer {c} is not served"));
        }
    }
    report
}

fn check_schedule(instance: &Instance, t: usize, route: &[usize], report: &mut FeasibilityReport) {
    let mut time = 0.0;
    let mut prev = 0;
    for &c in route.iter().filter(|&&c| instance.is_customer(c)) {
        let node = instance.node(c);
        let arrival = time + instance.dist(prev, c);
        let begin = arrival.max(node.tw_start);
        if begin > node.tw_end + TIME_EPS {
            report.push(
                ViolationKind::TimeWindow,
                Some(t),
                format!("customer {c} served at {begin}, window closes {}", node.tw_end),
            );
        }
        time = begin + node.service;
        prev = c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Node;

    fn cvrp() -> Instance {
        let nodes = vec![
            Node::depot(0.5, 0.5),
            Node::customer(0.1, 0.1, 3),
            Node::customer(0.9, 0.1, 2),
            Node::customer(0.9, 0.9, 4),
        ];
        Instance::new(ProblemKind::Cvrp, 5, nodes).unwrap()
    }

    #[test]
    fn load_equal_to_capacity_is_feasible() {
        let inst = cvrp();
        let sol = Solution::from_tours(&inst, vec![vec![1, 2], vec![3]]).unwrap();
        assert!(validate(&sol, &inst).feasible());
        let sol = Solution::from_tours(&inst, vec![vec![1, 3], vec![2]]).unwrap();
        let report = validate(&sol, &inst);
        assert_eq!(report.count(ViolationKind::Capacity), 1);
    }

    #[test]
    fn early_arrival_waits() {
        let mut c = Node::customer(0.3, 0.0, 1);
        c.tw_start = 2.0;
        c.tw_end = 2.5;
        c.service = 0.1;
        let mut d = Node::customer(0.6, 0.0, 1);
        d.tw_start = 0.0;
        d.tw_end = 2.45;
        let inst = Instance::new(ProblemKind::Vrptw, 5, vec![Node::depot(0.0, 0.0), c, d]).unwrap();
        let sol = Solution::from_tours(&inst, vec![vec![1, 2]]).unwrap();
        // arrives at 0.3, waits until 2.0, leaves 2.1 and reaches 2 at 2.4
        assert!(validate(&sol, &inst).feasible());
        let late = validate_routes(&inst, &[vec![2, 1], vec![]]);
        assert!(late.feasible());
        let mut e = d;
        e.tw_end = 2.35;
        let inst = Instance::new(ProblemKind::Vrptw, 5, vec![Node::depot(0.0, 0.0), c, e]).unwrap();
        let report = validate_routes(&inst, &[vec![1, 2]]);
        assert_eq!(report.count(ViolationKind::TimeWindow), 1);
    }

    #[test]
    fn duplicate_across_tours() {
        let inst = cvrp();
        let report = validate_routes(&inst, &[vec![1, 2], vec![2, 3]]);
        assert_eq!(report.count(ViolationKind::Duplicate), 1);
        assert!(!report.feasible());
    }

    #[test]
    fn missing_customer_in_cvrp_but_not_pcvrp() {
        let inst = cvrp();
        let report = validate_routes(&inst, &[vec![1, 2]]);
        assert_eq!(report.count(ViolationKind::Missing), 1);

        let nodes = inst.nodes().to_vec();
        let pc = Instance::new(ProblemKind::Pcvrp, 5, nodes).unwrap();
        assert!(validate_routes(&pc, &[vec![1, 2]]).feasible());
    }

    #[test]
    fn depot_and_out_of_range_ids_flagged() {
        let inst = cvrp();
        let report = validate_routes(&inst, &[vec![1, 0, 2], vec![3, 9]]);
        assert_eq!(report.count(ViolationKind::InvalidId), 2);
    }

    #[test]
    fn invariant_under_tour_permutation() {
        let inst = cvrp();
        let a = validate_routes(&inst, &[vec![1, 3], vec![2]]);
        let b = validate_routes(&inst, &[vec![2], vec![1, 3]]);
        assert_eq!(a.feasible(), b.feasible());
        assert_eq!(a.count(ViolationKind::Capacity), b.count(ViolationKind::Capacity));
    }
}
