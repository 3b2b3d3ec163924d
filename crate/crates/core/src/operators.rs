//! Removal and ordering operators: the two pluggable slots of the LNS.
//!
//! Operators only ever see shared references to the instance and the
//! solution. Anything they return is sanitized by the engine before use, so
//! an operator can be arbitrary (even adversarial) code without breaking
//! feasibility.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::instance::Instance;
use crate::solution::Solution;

/// Failure raised by an operator implementation (typically an external
/// candidate behind a process or FFI boundary).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum OperatorError {
    #[error("operator crashed: {0}")]
    Crash(String),
    #[error("operator timed out")]
    Timeout,
    #[error("operator protocol violation: {0}")]
    Protocol(String),
}

pub trait RemovalOperator {
    /// Customers to detach from `solution`.
    fn select(
        &self,
        instance: &Instance,
        solution: &Solution,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>, OperatorError>;
}

pub trait OrderingOperator {
    /// Reinsertion sequence for `removed`. `partial` is the solution with
    /// those customers already detached.
    fn order(
        &self,
        instance: &Instance,
        removed: &[usize],
        partial: &Solution,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>, OperatorError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Builtin,
    ExternalCandidate,
}

pub struct OperatorPair {
    pub remove: Box<dyn RemovalOperator>,
    pub order: Box<dyn OrderingOperator>,
    pub label: String,
    pub origin: Origin,
}

impl fmt::Debug for OperatorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorPair")
            .field("label", &self.label)
            .field("origin", &self.origin)
            .finish()
    }
}

impl OperatorPair {
    pub fn new(
        remove: impl RemovalOperator + 'static,
        order: impl OrderingOperator + 'static,
        label: impl Into<String>,
        origin: Origin,
    ) -> Self {
        OperatorPair {
            remove: Box::new(remove),
            order: Box::new(order),
            label: label.into(),
            origin,
        }
    }

    /// Resolves built-in operators by CLI label, e.g. `("seed_random", "random")`.
    pub fn builtin(remove: &str, order: &str) -> Result<Self, Error> {
        let removal: Box<dyn RemovalOperator> = match remove {
            "seed_random" | "random" => Box::new(SeedRandomRemove),
            "string" | "sisrs" => Box::new(StringRemove::default()),
            "none" => Box::new(NoRemoval),
            other => return Err(Error::Config(format!("unknown removal operator `{other}`"))),
        };
        let ordering: Box<dyn OrderingOperator> = match order {
            "sisrs" => Box::new(SisrsOrder),
            key => Box::new(SortByKey(key.parse()?)),
        };
        Ok(OperatorPair {
            remove: removal,
            order: ordering,
            label: format!("{remove}+{order}"),
            origin: Origin::Builtin,
        })
    }

    /// The trivial random pair given to the LLM as example implementation.
    pub fn seed() -> Self {
        OperatorPair::new(SeedRandomRemove, SortByKey(SortKey::Random), "seed_random+random", Origin::Builtin)
    }

    /// Spatially correlated string removal with the SISRs ordering mix.
    pub fn sisrs() -> Self {
        OperatorPair::new(StringRemove::default(), SisrsOrder, "string+sisrs", Origin::Builtin)
    }
}

fn assigned_customers(instance: &Instance, solution: &Solution) -> Vec<usize> {
    instance.customers().filter(|&c| solution.is_assigned(c)).collect()
}

/// Removes nothing. Useful as a control: every iteration repairs nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRemoval;

impl RemovalOperator for NoRemoval {
    fn select(&self, _: &Instance, _: &Solution, _: &mut dyn RngCore) -> Result<Vec<usize>, OperatorError> {
        Ok(Vec::new())
    }
}

/// Uniformly random removal of 10 to 20 assigned customers.
#[derive(Debug, Clone, Copy, Default)]
pub struct SeedRandomRemove;

impl SeedRandomRemove {
    pub const MIN: usize = 10;
    pub const MAX: usize = 20;
}

impl RemovalOperator for SeedRandomRemove {
    fn select(
        &self,
        instance: &Instance,
        solution: &Solution,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>, OperatorError> {
        let assigned = assigned_customers(instance, solution);
        let k = rng.gen_range(Self::MIN..=Self::MAX).min(assigned.len());
        Ok(sample(rng, assigned.len(), k).into_iter().map(|i| assigned[i]).collect())
    }
}

/// SISRs-style removal: starting from a random seed customer, walk its
/// neighbor list and cut one contiguous string out of each tour met, until
/// the drawn number of strings has been removed.
#[derive(Debug, Clone, Copy)]
pub struct StringRemove {
    /// Longest string cut from a single tour.
    pub max_string_len: usize,
    /// Target average number of removed customers.
    pub avg_removed: usize,
    /// Upper bound on the number of tours touched.
    pub max_strings: usize,
}

impl Default for StringRemove {
    fn default() -> Self {
        StringRemove {
            max_string_len: 10,
            avg_removed: 10,
            max_strings: 4,
        }
    }
}

impl RemovalOperator for StringRemove {
    fn select(
        &self,
        instance: &Instance,
        solution: &Solution,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>, OperatorError> {
        let tours = solution.tours();
        if tours.is_empty() {
            return Ok(Vec::new());
        }
        let mean_len = solution.num_assigned() as f64 / tours.len() as f64;
        let len_cap = (self.max_string_len as f64).min(mean_len).max(1.0);
        let strings_cap = (4.0 * self.avg_removed as f64 / (1.0 + len_cap) - 1.0).max(1.0);
        let strings = (rng.gen_range(1.0..strings_cap + 1.0).floor() as usize)
            .clamp(1, self.max_strings.max(1));

        let assigned = assigned_customers(instance, solution);
        let seed = assigned[rng.gen_range(0..assigned.len())];

        let mut removed = Vec::new();
        let mut ruined: Vec<usize> = Vec::with_capacity(strings);
        let candidates = std::iter::once(seed).chain(instance.adjacency(seed).iter().map(|&c| c as usize));
        for c in candidates {
            if ruined.len() >= strings {
                break;
            }
            let Some(t) = solution.tour_of(c) else { continue };
            if ruined.contains(&t) {
                continue;
            }
            let route = tours[t].customers();
            let cap = (len_cap.floor() as usize).min(route.len()).max(1);
            let len = rng.gen_range(1..=cap);
            let at = route.iter().position(|&x| x == c).expect("customer map is consistent");
            // first index of a window of `len` customers containing `at`
            let lo = at.saturating_sub(len - 1);
            let hi = at.min(route.len() - len);
            let first = rng.gen_range(lo..=hi);
            removed.extend_from_slice(&route[first..first + len]);
            ruined.push(t);
        }
        Ok(removed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    DemandDesc,
    DepotDistanceDesc,
    DepotDistanceAsc,
    Random,
}

impl FromStr for SortKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "demand_desc" => Ok(SortKey::DemandDesc),
            "depot_distance_desc" | "far_first" => Ok(SortKey::DepotDistanceDesc),
            "depot_distance_asc" | "close_first" => Ok(SortKey::DepotDistanceAsc),
            "random" | "seed_random" => Ok(SortKey::Random),
            other => Err(Error::Config(format!("unknown ordering key `{other}`"))),
        }
    }
}

/// Sorts removed customers by a fixed key; ties go to the lower id.
#[derive(Debug, Clone, Copy)]
pub struct SortByKey(pub SortKey);

pub fn sort_by_key(instance: &Instance, ids: &[usize], key: SortKey, rng: &mut dyn RngCore) -> Vec<usize> {
    let mut out = ids.to_vec();
    match key {
        SortKey::Random => out.shuffle(rng),
        SortKey::DemandDesc => {
            out.sort_by(|&a, &b| instance.demand(b).cmp(&instance.demand(a)).then(a.cmp(&b)))
        }
        SortKey::DepotDistanceDesc => out.sort_by(|&a, &b| {
            instance.dist(0, b).total_cmp(&instance.dist(0, a)).then(a.cmp(&b))
        }),
        SortKey::DepotDistanceAsc => out.sort_by(|&a, &b| {
            instance.dist(0, a).total_cmp(&instance.dist(0, b)).then(a.cmp(&b))
        }),
    }
    out
}

impl OrderingOperator for SortByKey {
    fn order(
        &self,
        instance: &Instance,
        removed: &[usize],
        _: &Solution,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>, OperatorError> {
        Ok(sort_by_key(instance, removed, self.0, rng))
    }
}

/// Picks one ordering per call: random, demand, far-first or close-first
/// with weights 4:4:2:1.
#[derive(Debug, Clone, Copy, Default)]
pub struct SisrsOrder;

impl OrderingOperator for SisrsOrder {
    fn order(
        &self,
        instance: &Instance,
        removed: &[usize],
        _: &Solution,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<usize>, OperatorError> {
        let key = match rng.gen_range(0..11) {
            0..=3 => SortKey::Random,
            4..=7 => SortKey::DemandDesc,
            8..=9 => SortKey::DepotDistanceDesc,
            _ => SortKey::DepotDistanceAsc,
        };
        Ok(sort_by_key(instance, removed, key, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Node, ProblemKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Instance {
        let mut nodes = vec![Node::depot(0.5, 0.5)];
        for i in 0..n {
            let x = (i % 10) as f64 / 10.0;
            let y = (i / 10) as f64 / 10.0;
            nodes.push(Node::customer(x, y, 1 + (i % 3) as u32));
        }
        Instance::new(ProblemKind::Cvrp, 30, nodes).unwrap()
    }

    fn singletons(inst: &Instance) -> Solution {
        Solution::from_tours(inst, inst.customers().map(|c| vec![c]).collect()).unwrap()
    }

    #[test]
    fn seed_removal_clamps_to_assigned() {
        let inst = grid(5);
        let sol = singletons(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ids = SeedRandomRemove.select(&inst, &sol, &mut rng).unwrap();
        ids.sort();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn seed_removal_bounds() {
        let inst = grid(100);
        let sol = singletons(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut ids = SeedRandomRemove.select(&inst, &sol, &mut rng).unwrap();
            assert!((10..=20).contains(&ids.len()));
            ids.sort();
            ids.dedup();
            assert!((10..=20).contains(&ids.len()));
        }
    }

    #[test]
    fn single_id_order_is_identity() {
        let inst = grid(5);
        let sol = singletons(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = SortByKey(SortKey::Random).order(&inst, &[4], &sol, &mut rng).unwrap();
        assert_eq!(out, vec![4]);
    }

    #[test]
    fn demand_desc_with_stable_ties() {
        let nodes = vec![
            Node::depot(0.0, 0.0),
            Node::customer(0.1, 0.0, 3),
            Node::customer(0.2, 0.0, 9),
            Node::customer(0.3, 0.0, 1),
            Node::customer(0.4, 0.0, 3),
        ];
        let inst = Instance::new(ProblemKind::Cvrp, 10, nodes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(sort_by_key(&inst, &[1, 2, 3], SortKey::DemandDesc, &mut rng), vec![2, 1, 3]);
        assert_eq!(sort_by_key(&inst, &[4, 3, 1, 2], SortKey::DemandDesc, &mut rng), vec![2, 1, 4, 3]);
        assert_eq!(
            sort_by_key(&inst, &[1, 3, 4, 2], SortKey::DepotDistanceDesc, &mut rng),
            vec![4, 3, 2, 1]
        );
    }

    #[test]
    fn unknown_labels_are_config_errors() {
        assert!(matches!(OperatorPair::builtin("seed_random", "by_vibes"), Err(Error::Config(_))));
        assert!(matches!(OperatorPair::builtin("nope", "random"), Err(Error::Config(_))));
        assert_eq!(OperatorPair::builtin("string", "sisrs").unwrap().label, "string+sisrs");
    }

    #[test]
    fn string_removal_stays_within_tour_budget() {
        let inst = grid(60);
        let routes: Vec<Vec<usize>> = (0..6).map(|r| (1..=10).map(|k| r * 10 + k).collect()).collect();
        let sol = Solution::from_tours(&inst, routes).unwrap();
        let op = StringRemove::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let ids = op.select(&inst, &sol, &mut rng).unwrap();
            assert!(!ids.is_empty());
            let mut tours: Vec<usize> = ids.iter().map(|&c| sol.tour_of(c).unwrap()).collect();
            tours.sort();
            tours.dedup();
            assert!(tours.len() <= op.max_strings);
            let mut uniq = ids.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), ids.len());
        }
    }
}
