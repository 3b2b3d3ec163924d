//! The destroy / order / repair / accept loop.
//!
//! Every iteration clones the current solution, lets the removal operator
//! pick customers, detaches them, lets the ordering operator sequence them,
//! reinserts them greedily at their cheapest feasible position and finally
//! runs a simulated annealing acceptance test. Operator output is sanitized
//! before it touches the solution, which is what keeps arbitrary operator
//! code from ever producing an infeasible accepted solution.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::instance::Instance;
use crate::operators::{OperatorError, OperatorPair};
use crate::solution::{Solution, TIE_EPS};
use crate::validate::validate;

/// Default initial temperature, relative to the initial objective.
pub const DEFAULT_INITIAL_TEMP_FACTOR: f64 = 0.05;
/// Default final temperature, relative to the initial objective.
pub const DEFAULT_FINAL_TEMP_FACTOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LnsConfig {
    /// Wall-clock budget in seconds. Ignored when `iteration_limit` is set.
    pub time_limit: f64,
    /// Fixed iteration budget; makes runs reproducible.
    pub iteration_limit: Option<u64>,
    pub seed: u64,
    /// Absolute SA start temperature; `None` = 5% of the initial objective.
    pub sa_initial_temp: Option<f64>,
    /// Absolute SA end temperature; `None` = 0.01% of the initial objective.
    pub sa_final_temp: Option<f64>,
    pub record_trace: bool,
    /// Full validation of every n-th accepted solution (1 = all).
    pub validate_every: u64,
}

impl Default for LnsConfig {
    fn default() -> Self {
        LnsConfig {
            time_limit: 20.0,
            iteration_limit: None,
            seed: 0,
            sa_initial_temp: None,
            sa_final_temp: None,
            record_trace: true,
            validate_every: if cfg!(debug_assertions) { 1 } else { 64 },
        }
    }
}

impl LnsConfig {
    pub fn with_time(time_limit: f64, seed: u64) -> Self {
        LnsConfig {
            time_limit,
            seed,
            ..LnsConfig::default()
        }
    }

    pub fn with_iterations(iterations: u64, seed: u64) -> Self {
        LnsConfig {
            iteration_limit: Some(iterations),
            seed,
            ..LnsConfig::default()
        }
    }

    pub fn check(&self) -> Result<(), Error> {
        if self.iteration_limit.is_none() && !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(Error::Config(format!("time_limit must be positive, got {}", self.time_limit)));
        }
        if let (Some(hot), Some(cold)) = (self.sa_initial_temp, self.sa_final_temp) {
            if !(cold > 0.0 && hot >= cold) {
                return Err(Error::Config(format!(
                    "need sa_initial_temp >= sa_final_temp > 0, got {hot} and {cold}"
                )));
            }
        }
        for t in [self.sa_initial_temp, self.sa_final_temp].into_iter().flatten() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("temperature must be positive, got {t}")));
            }
        }
        if self.validate_every == 0 {
            return Err(Error::Config("validate_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub iterations: u64,
    pub best_objective: f64,
    pub initial_objective: f64,
    /// `(elapsed seconds, best objective)` at start and at each improvement.
    pub best_objective_trace: Vec<(f64, f64)>,
    pub accepted_count: u64,
    pub improved_count: u64,
    /// Candidates discarded because validation failed.
    pub rejected_invalid: u64,
    pub elapsed: f64,
}

impl RunStats {
    pub fn iterations_per_second(&self) -> f64 {
        if self.elapsed > 0.0 {
            self.iterations as f64 / self.elapsed
        } else {
            0.0
        }
    }

    /// Writes the trace as one JSON object per line.
    pub fn write_trace<W: Write>(&self, mut out: W) -> io::Result<()> {
        for &(elapsed_s, best_objective) in &self.best_objective_trace {
            let line = serde_json::json!({ "elapsed_s": elapsed_s, "best_objective": best_objective });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LnsError {
    #[error(transparent)]
    Instance(#[from] Error),
    #[error("operator `{label}` failed after {} iterations: {source}", stats.iterations)]
    Operator {
        label: String,
        #[source]
        source: OperatorError,
        best: Box<Solution>,
        stats: RunStats,
    },
}

/// One singleton tour per customer.
pub fn initial_solution(instance: &Instance) -> Result<Solution, Error> {
    if instance.kind().has_time_windows() {
        for c in instance.customers() {
            let node = instance.node(c);
            if instance.dist(0, c).max(node.tw_start) > node.tw_end {
                return Err(Error::UnreachableCustomer { customer: c });
            }
        }
    }
    Solution::from_tours(instance, instance.customers().map(|c| vec![c]).collect())
}

/// Geometric cooling from `initial` to `last` over the budget fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annealing {
    pub initial: f64,
    pub last: f64,
}

impl Annealing {
    pub fn temperature(&self, fraction: f64) -> f64 {
        let f = fraction.clamp(0.0, 1.0);
        self.initial * (self.last / self.initial).powf(f)
    }

    /// Accepts improvements and ties; otherwise accepts with probability
    /// `exp(-delta / T)`.
    pub fn accept(&self, current: f64, candidate: f64, fraction: f64, rng: &mut dyn RngCore) -> bool {
        accept_at(current, candidate, self.temperature(fraction), rng)
    }
}

pub fn accept_at(current: f64, candidate: f64, temperature: f64, rng: &mut dyn RngCore) -> bool {
    let delta = candidate - current;
    if delta <= 0.0 {
        return true;
    }
    if temperature <= 0.0 {
        return false;
    }
    rng.gen::<f64>() < (-delta / temperature).exp()
}

/// Dedupes, drops ids that are not currently assigned customers and caps the
/// list at half the customers (rounded up).
pub fn sanitize_removal(instance: &Instance, solution: &Solution, raw: &[usize]) -> Vec<usize> {
    let cap = instance.num_customers().div_ceil(2);
    let mut taken = vec![false; instance.num_nodes()];
    let mut out = Vec::with_capacity(raw.len().min(cap));
    for &c in raw {
        if out.len() == cap {
            break;
        }
        if instance.is_customer(c) && solution.is_assigned(c) && !std::mem::replace(&mut taken[c], true) {
            out.push(c);
        }
    }
    out
}

/// Forces `raw` into a permutation of `removed`: unknown and repeated ids
/// are dropped, missing ones appended in ascending id order.
pub fn sanitize_order(removed: &[usize], raw: &[usize]) -> Vec<usize> {
    let mut sorted = removed.to_vec();
    sorted.sort_unstable();
    let mut used = vec![false; sorted.len()];
    let mut out = Vec::with_capacity(sorted.len());
    for &c in raw {
        if let Ok(i) = sorted.binary_search(&c) {
            if !std::mem::replace(&mut used[i], true) {
                out.push(c);
            }
        }
    }
    out.extend(sorted.iter().zip(&used).filter(|(_, &u)| !u).map(|(&c, _)| c));
    out
}

/// Best insertion point for `customer`: `(tour, position, delta)`. The
/// new-tour option is `tour == tours().len()`. Ties within [`TIE_EPS`] keep
/// the lexicographically first `(tour, position)`.
pub fn best_insertion(instance: &Instance, solution: &Solution, customer: usize) -> Option<(usize, usize, f64)> {
    let demand = u64::from(instance.demand(customer));
    let capacity = u64::from(instance.capacity());
    let mut best: Option<(usize, usize, f64)> = None;
    for (t, tour) in solution.tours().iter().enumerate() {
        if tour.demand() + demand > capacity {
            continue;
        }
        for pos in 0..=tour.len() {
            if let Some(delta) = solution.insertion_delta(instance, customer, t, pos) {
                if best.is_none_or(|(_, _, b)| delta < b - TIE_EPS) {
                    best = Some((t, pos, delta));
                }
            }
        }
    }
    let fresh = solution.tours().len();
    if let Some(delta) = solution.insertion_delta(instance, customer, fresh, 0) {
        if best.is_none_or(|(_, _, b)| delta < b - TIE_EPS) {
            best = Some((fresh, 0, delta));
        }
    }
    best
}

/// Reinserts `order` one customer at a time at the cheapest feasible
/// position. PCVRP customers are only inserted when serving them lowers the
/// objective.
pub fn greedy_reinsert(instance: &Instance, solution: &mut Solution, order: &[usize]) -> Result<(), Error> {
    let optional = instance.kind().has_prizes();
    for &c in order {
        if solution.is_assigned(c) {
            continue;
        }
        match best_insertion(instance, solution, c) {
            Some((_, _, delta)) if optional && delta >= 0.0 => {}
            Some((t, pos, _)) => solution.insert(instance, c, t, pos)?,
            None if optional => {}
            None => return Err(Error::UnreachableCustomer { customer: c }),
        }
    }
    Ok(())
}

/// Runs the LNS from the one-tour-per-customer start and returns the best
/// solution seen together with run statistics.
pub fn run(instance: &Instance, ops: &OperatorPair, config: &LnsConfig) -> Result<(Solution, RunStats), LnsError> {
    config.check()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut current = initial_solution(instance)?;
    let mut best = current.clone();
    let initial = current.objective();
    let scale = initial.abs().max(1e-9);
    let hot = config.sa_initial_temp.unwrap_or(DEFAULT_INITIAL_TEMP_FACTOR * scale);
    let cold = config.sa_final_temp.unwrap_or(DEFAULT_FINAL_TEMP_FACTOR * scale).min(hot);
    let annealing = Annealing { initial: hot, last: cold };

    let mut stats = RunStats {
        best_objective: initial,
        initial_objective: initial,
        ..RunStats::default()
    };
    if config.record_trace {
        stats.best_objective_trace.push((0.0, initial));
    }
    let budget = Duration::from_secs_f64(if config.iteration_limit.is_some() { 0.0 } else { config.time_limit });

    loop {
        let fraction = match config.iteration_limit {
            Some(limit) => {
                if stats.iterations >= limit {
                    break;
                }
                stats.iterations as f64 / limit.max(1) as f64
            }
            None => {
                let elapsed = started.elapsed();
                if elapsed >= budget {
                    break;
                }
                elapsed.as_secs_f64() / budget.as_secs_f64()
            }
        };
        if instance.num_customers() == 0 {
            break;
        }
        stats.iterations += 1;

        let fail = |source, best: &Solution, stats: &RunStats| LnsError::Operator {
            label: ops.label.clone(),
            source,
            best: Box::new(best.clone()),
            stats: stats.clone(),
        };

        let mut candidate = current.clone();
        let raw = ops
            .remove
            .select(instance, &candidate, &mut rng)
            .map_err(|e| fail(e, &best, &stats))?;
        let removed = sanitize_removal(instance, &candidate, &raw);
        candidate.remove_customers(instance, &removed)?;
        let raw_order = ops
            .order
            .order(instance, &removed, &candidate, &mut rng)
            .map_err(|e| fail(e, &best, &stats))?;
        let order = sanitize_order(&removed, &raw_order);
        greedy_reinsert(instance, &mut candidate, &order)?;

        if !annealing.accept(current.objective(), candidate.objective(), fraction, &mut rng) {
            continue;
        }
        if (stats.accepted_count + 1).is_multiple_of(config.validate_every) && !validate(&candidate, instance).feasible() {
            stats.rejected_invalid += 1;
            continue;
        }
        stats.accepted_count += 1;
        current = candidate;
        if current.objective() < best.objective() - TIE_EPS {
            best = current.clone();
            stats.improved_count += 1;
            stats.best_objective = best.objective();
            if config.record_trace {
                stats.best_objective_trace.push((started.elapsed().as_secs_f64(), stats.best_objective));
            }
        }
    }

    stats.elapsed = started.elapsed().as_secs_f64();
    Ok((best, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Node, ProblemKind};
    use crate::operators::{NoRemoval, SortByKey, SortKey};

    fn small() -> Instance {
        let nodes = vec![
            Node::depot(0.5, 0.5),
            Node::customer(0.1, 0.2, 1),
            Node::customer(0.8, 0.3, 1),
            Node::customer(0.4, 0.9, 1),
        ];
        Instance::new(ProblemKind::Cvrp, 10, nodes).unwrap()
    }

    #[test]
    fn initial_is_singletons() {
        let inst = small();
        let sol = initial_solution(&inst).unwrap();
        assert_eq!(sol.tours().len(), 3);
        let expected: f64 = inst.customers().map(|c| 2.0 * inst.dist(0, c)).sum();
        assert!((sol.objective() - expected).abs() < 1e-12);
    }

    #[test]
    fn unreachable_window_is_instance_error() {
        let mut c = Node::customer(0.9, 0.9, 1);
        c.tw_end = 0.1;
        let inst = Instance::new(ProblemKind::Vrptw, 5, vec![Node::depot(0.0, 0.0), c]).unwrap();
        assert!(matches!(initial_solution(&inst), Err(Error::UnreachableCustomer { customer: 1 })));
    }

    #[test]
    fn sanitize_order_repairs_to_permutation() {
        assert_eq!(sanitize_order(&[5, 2, 9], &[9, 9, 0, 7]), vec![9, 2, 5]);
        assert_eq!(sanitize_order(&[3, 1], &[]), vec![1, 3]);
        let once = sanitize_order(&[4, 6, 8], &[8, 1, 8]);
        assert_eq!(sanitize_order(&[4, 6, 8], &once), once);
    }

    #[test]
    fn sanitize_removal_caps_and_filters() {
        let inst = small();
        let sol = initial_solution(&inst).unwrap();
        assert_eq!(sanitize_removal(&inst, &sol, &[0, 3, 3, 7, 1, 2]), vec![3, 1]);
    }

    #[test]
    fn zero_removal_accepts_every_iteration() {
        let inst = small();
        let ops = OperatorPair::new(NoRemoval, SortByKey(SortKey::Random), "none", crate::operators::Origin::Builtin);
        let (best, stats) = run(&inst, &ops, &LnsConfig::with_iterations(50, 1)).unwrap();
        assert_eq!(stats.iterations, 50);
        assert_eq!(stats.accepted_count, 50);
        assert_eq!(best.objective(), stats.initial_objective);
    }

    #[test]
    fn strict_improvement_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(accept_at(10.0, 9.0, 1e-12, &mut rng));
        assert!(accept_at(10.0, 10.0, 1e-12, &mut rng));
        assert!(!accept_at(10.0, 1e6, 1e-3, &mut rng));
    }

    #[test]
    fn temperature_schedule_endpoints() {
        let a = Annealing { initial: 1.0, last: 1e-3 };
        assert_eq!(a.temperature(0.0), 1.0);
        assert!((a.temperature(1.0) - 1e-3).abs() < 1e-15);
        assert!((a.temperature(0.5) - 1e-3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_checks() {
        assert!(LnsConfig::with_time(0.0, 1).check().is_err());
        let mut c = LnsConfig::with_time(1.0, 1);
        c.sa_initial_temp = Some(0.1);
        c.sa_final_temp = Some(0.2);
        assert!(c.check().is_err());
        c.sa_final_temp = Some(0.05);
        assert!(c.check().is_ok());
    }
}
