//! Seeded random instances for all three variants.
//!
//! Randomness comes from ChaCha8 seeded with `GenParams::seed`, and values
//! are drawn in a fixed order (depot, then per customer: x, y, demand,
//! service, window width, window start, prize), so a given parameter set
//! produces the same instance on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{euclidean, Instance, Node, ProblemKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub kind: ProblemKind,
    pub n: usize,
    pub seed: u64,
    pub capacity: u32,
    /// Inclusive integer demand range.
    pub demand_range: (u32, u32),
    /// Latest time a vehicle should be back at the depot (VRPTW).
    pub horizon: f64,
    pub tw_width_range: (f64, f64),
    pub service_time_range: (f64, f64),
    /// Prizes are drawn from the half-open interval `(lo, hi]` (PCVRP).
    pub prize_range: (f64, f64),
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            kind: ProblemKind::Cvrp,
            n: 500,
            seed: 0,
            capacity: 50,
            demand_range: (1, 9),
            horizon: 4.6,
            tw_width_range: (0.1, 0.3),
            service_time_range: (0.15, 0.18),
            prize_range: (0.0, 0.1),
        }
    }
}

impl GenParams {
    pub fn new(kind: ProblemKind, n: usize, seed: u64) -> Self {
        GenParams {
            kind,
            n,
            seed,
            ..GenParams::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.demand_range;
        if lo < 1 || lo > hi {
            return Err(Error::Config(format!("demand range [{lo}, {hi}] must satisfy 1 <= lo <= hi")));
        }
        if hi > self.capacity {
            return Err(Error::Config(format!("max demand {hi} exceeds capacity {}", self.capacity)));
        }
        if self.kind.has_time_windows() {
            let (w_lo, w_hi) = self.tw_width_range;
            let (s_lo, s_hi) = self.service_time_range;
            if !(self.horizon > 0.0) {
                return Err(Error::Config("horizon must be positive".into()));
            }
            if !(w_lo > 0.0 && w_lo <= w_hi) || !(s_lo >= 0.0 && s_lo <= s_hi) {
                return Err(Error::Config("window width and service ranges must be ordered and non-negative".into()));
            }
        }
        if self.kind.has_prizes() {
            let (p_lo, p_hi) = self.prize_range;
            if !(p_lo >= 0.0 && p_lo < p_hi) {
                return Err(Error::Config(format!("prize range ({p_lo}, {p_hi}] is empty")));
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Generates an instance: depot and customers uniform in the unit square,
/// integer demands, and for VRPTW windows that a direct trip from the depot
/// can always meet.
pub fn generate(params: &GenParams) -> Result<Instance> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let depot = Node::depot(rng.gen(), rng.gen());
    let mut nodes = Vec::with_capacity(params.n + 1);
    nodes.push(depot);
    for i in 1..=params.n {
        let x: f64 = rng.gen();
        let y: f64 = rng.gen();
        let demand = rng.gen_range(params.demand_range.0..=params.demand_range.1);
        let mut node = Node::customer(x, y, demand);
        if params.kind.has_time_windows() {
            let service = uniform(&mut rng, params.service_time_range.0, params.service_time_range.1);
            let width = uniform(&mut rng, params.tw_width_range.0, params.tw_width_range.1);
            let direct = euclidean((depot.x, depot.y), (x, y));
            let earliest = (direct - width).max(0.0);
            let latest = params.horizon - direct - service - width;
            if latest < earliest {
                return Err(Error::Generation(format!(
                    "customer {i}: no window of width {width:.3} fits a horizon of {}",
                    params.horizon
                )));
            }
            let start = uniform(&mut rng, earliest, latest);
            node.service = service;
            node.tw_start = start;
            node.tw_end = start + width;
        }
        if params.kind.has_prizes() {
            let (lo, hi) = params.prize_range;
            node.prize = hi - (hi - lo) * rng.gen::<f64>();
        }
        nodes.push(node);
    }
    if params.kind.has_time_windows() {
        nodes[0].tw_end = params.horizon;
    }
    Instance::new(params.kind, params.capacity, nodes)
}
