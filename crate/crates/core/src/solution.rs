//! Mutable routing state with incrementally maintained caches.

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Marker stored in the customer-to-tour map for unserved customers.
pub const UNASSIGNED: usize = usize::MAX;

/// Absolute tolerance used when two objective values are compared for ties.
pub const TIE_EPS: f64 = 1e-9;

/// A single vehicle route. The depot is implicit at both ends.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tour {
    customers: Vec<usize>,
    demand: u64,
    cost: f64,
    // Time-window schedule, only populated for VRPTW: service start at each
    // position and the latest start that keeps the remainder of the tour
    // feasible.
    start: Vec<f64>,
    latest: Vec<f64>,
}

impl Tour {
    fn build(instance: &Instance, customers: Vec<usize>) -> Self {
        let mut tour = Tour {
            customers,
            ..Tour::default()
        };
        tour.refresh(instance);
        tour
    }

    pub fn customers(&self) -> &[usize] {
        &self.customers
    }

    /// Cached total demand.
    pub fn demand(&self) -> u64 {
        self.demand
    }

    /// Cached travel cost including both depot legs.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    fn refresh(&mut self, instance: &Instance) {
        self.demand = self
            .customers
            .iter()
            .map(|&c| u64::from(instance.demand(c)))
            .sum();
        self.cost = route_cost(instance, &self.customers);
        if instance.kind().has_time_windows() {
            self.refresh_schedule(instance);
        }
    }

    fn refresh_schedule(&mut self, instance: &Instance) {
        let len = self.customers.len();
        self.start.clear();
        self.latest.clear();
        self.start.reserve(len);
        let mut prev = 0;
        let mut departure = 0.0;
        for &c in &self.customers {
            let node = instance.node(c);
            let begin = (departure + instance.dist(prev, c)).max(node.tw_start);
            self.start.push(begin);
            departure = begin + node.service;
            prev = c;
        }
        self.latest.resize(len, 0.0);
        let mut bound = f64::INFINITY;
        for k in (0..len).rev() {
            let c = self.customers[k];
            let node = instance.node(c);
            let limit = if k + 1 < len {
                bound - node.service - instance.dist(c, self.customers[k + 1])
            } else {
                f64::INFINITY
            };
            bound = node.tw_end.min(limit);
            self.latest[k] = bound;
        }
    }
}

/// Travel cost of a depot-to-depot route, summed in visiting order.
pub fn route_cost(instance: &Instance, customers: &[usize]) -> f64 {
    let mut cost = 0.0;
    let mut prev = 0;
    for &c in customers {
        cost += instance.dist(prev, c);
        prev = c;
    }
    if !customers.is_empty() {
        cost += instance.dist(prev, 0);
    }
    cost
}

/// A (possibly partial) solution: tours plus the set of unserved customers.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    tours: Vec<Tour>,
    tour_of: Vec<usize>,
    unassigned: Vec<usize>,
    travel_cost: f64,
    unserved_prize: f64,
}

impl Solution {
    /// Every customer unassigned, no tours.
    pub fn empty(instance: &Instance) -> Self {
        Solution {
            tours: Vec::new(),
            tour_of: vec![UNASSIGNED; instance.num_nodes()],
            unassigned: instance.customers().collect(),
            travel_cost: 0.0,
            unserved_prize: instance.total_prize(),
        }
    }

    /// Builds a solution from explicit tours; customers absent from every
    /// tour become unassigned. Empty tours are dropped.
    pub fn from_tours(instance: &Instance, tours: Vec<Vec<usize>>) -> Result<Self> {
        let mut tour_of = vec![UNASSIGNED; instance.num_nodes()];
        let mut built = Vec::with_capacity(tours.len());
        for customers in tours.into_iter().filter(|t| !t.is_empty()) {
            let index = built.len();
            for &c in &customers {
                if !instance.is_customer(c) {
                    return Err(Error::InvalidCustomer(c));
                }
                if tour_of[c] != UNASSIGNED {
                    return Err(Error::Structural(format!(
                        "customer {c} appears in more than one tour position"
                    )));
                }
                tour_of[c] = index;
            }
            built.push(Tour::build(instance, customers));
        }
        let unassigned: Vec<usize> = instance
            .customers()
            .filter(|&c| tour_of[c] == UNASSIGNED)
            .collect();
        let travel_cost = built.iter().map(Tour::cost).sum();
        let unserved_prize = unassigned.iter().map(|&c| instance.prize(c)).sum();
        Ok(Solution {
            tours: built,
            tour_of,
            unassigned,
            travel_cost,
            unserved_prize,
        })
    }

    pub fn tours(&self) -> &[Tour] {
        &self.tours
    }

    /// Tours as plain customer lists.
    pub fn routes(&self) -> Vec<Vec<usize>> {
        self.tours.iter().map(|t| t.customers.clone()).collect()
    }

    /// Unserved customers in ascending id order.
    pub fn unassigned(&self) -> &[usize] {
        &self.unassigned
    }

    /// Index of the tour serving `customer`, if any.
    pub fn tour_of(&self, customer: usize) -> Option<usize> {
        match self.tour_of.get(customer) {
            Some(&t) if t != UNASSIGNED => Some(t),
            _ => None,
        }
    }

    /// Raw customer-to-tour map indexed by node id (`UNASSIGNED` for
    /// unserved customers and the depot).
    pub fn tour_map(&self) -> &[usize] {
        &self.tour_of
    }

    pub fn is_assigned(&self, customer: usize) -> bool {
        self.tour_of(customer).is_some()
    }

    pub fn num_assigned(&self) -> usize {
        self.tour_of.len().saturating_sub(1) - self.unassigned.len()
    }

    /// True when nothing is unassigned.
    pub fn is_complete(&self) -> bool {
        self.unassigned.is_empty()
    }

    pub fn travel_cost(&self) -> f64 {
        self.travel_cost
    }

    /// Cached minimization objective: travel cost plus the prizes of unserved
    /// customers (the latter is zero outside PCVRP).
    pub fn objective(&self) -> f64 {
        self.travel_cost + self.unserved_prize
    }

    /// Recomputes the objective from scratch, ignoring every cache, after
    /// checking that the tours and the customer-to-tour map agree.
    pub fn evaluate(&self, instance: &Instance) -> Result<f64> {
        self.check_structure(instance)?;
        let travel: f64 = self
            .tours
            .iter()
            .map(|t| route_cost(instance, &t.customers))
            .sum();
        let forfeited: f64 = self.unassigned.iter().map(|&c| instance.prize(c)).sum();
        Ok(travel + forfeited)
    }

    /// Verifies that tours, the customer map and the unassigned set describe
    /// the same partition of the customers.
    pub fn check_structure(&self, instance: &Instance) -> Result<()> {
        if self.tour_of.len() != instance.num_nodes() {
            return Err(Error::Structural(format!(
                "customer map has {} entries, instance has {} nodes",
                self.tour_of.len(),
                instance.num_nodes()
            )));
        }
        let mut seen = vec![false; instance.num_nodes()];
        for (t, tour) in self.tours.iter().enumerate() {
            for &c in &tour.customers {
                if !instance.is_customer(c) {
                    return Err(Error::InvalidCustomer(c));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(Error::Structural(format!("customer {c} visited twice")));
                }
                if self.tour_of[c] != t {
                    return Err(Error::Structural(format!(
                        "customer {c} is in tour {t} but mapped to {}",
                        self.tour_of[c]
                    )));
                }
            }
        }
        for &c in &self.unassigned {
            if !instance.is_customer(c) {
                return Err(Error::InvalidCustomer(c));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::Structural(format!(
                    "customer {c} both routed and unassigned"
                )));
            }
            if self.tour_of[c] != UNASSIGNED {
                return Err(Error::Structural(format!(
                    "unassigned customer {c} mapped to tour {}",
                    self.tour_of[c]
                )));
            }
        }
        if let Some(c) = instance.customers().find(|&c| !seen[c]) {
            return Err(Error::Structural(format!(
                "customer {c} neither routed nor unassigned"
            )));
        }
        Ok(())
    }

    /// Detaches `ids` from their tours. Duplicates and already-unassigned ids
    /// are ignored; empty tours are deleted. Returns the ids actually removed,
    /// in first-occurrence order.
    pub fn remove_customers(&mut self, instance: &Instance, ids: &[usize]) -> Result<Vec<usize>> {
        if let Some(&bad) = ids.iter().find(|&&c| !instance.is_customer(c)) {
            return Err(Error::InvalidCustomer(bad));
        }
        let mut removed = Vec::with_capacity(ids.len());
        let mut touched = Vec::new();
        for &c in ids {
            let t = self.tour_of[c];
            if t == UNASSIGNED {
                continue;
            }
            self.tour_of[c] = UNASSIGNED;
            removed.push(c);
            if !touched.contains(&t) {
                touched.push(t);
            }
        }
        if removed.is_empty() {
            return Ok(removed);
        }

        for &t in &touched {
            let tour = &mut self.tours[t];
            let before = tour.cost;
            let tour_of = &self.tour_of;
            tour.customers.retain(|&c| tour_of[c] != UNASSIGNED);
            tour.refresh(instance);
            self.travel_cost += tour.cost - before;
        }

        touched.sort_unstable_by(|a, b| b.cmp(a));
        for &t in &touched {
            if self.tours[t].is_empty() {
                self.tours.swap_remove(t);
                if t < self.tours.len() {
                    for &c in &self.tours[t].customers {
                        self.tour_of[c] = t;
                    }
                }
            }
        }

        for &c in &removed {
            let slot = self.unassigned.binary_search(&c).unwrap_err();
            self.unassigned.insert(slot, c);
            self.unserved_prize += instance.prize(c);
        }
        Ok(removed)
    }

    /// Objective change from splicing unassigned `customer` into `tour` at
    /// `position` (`tour == tours().len()` opens a new tour). `None` when the
    /// insertion would break capacity or a time window.
    pub fn insertion_delta(
        &self,
        instance: &Instance,
        customer: usize,
        tour: usize,
        position: usize,
    ) -> Option<f64> {
        let prize = instance.prize(customer);
        if tour == self.tours.len() {
            if position != 0 {
                return None;
            }
            if instance.kind().has_time_windows() {
                let node = instance.node(customer);
                if instance.dist(0, customer).max(node.tw_start) > node.tw_end {
                    return None;
                }
            }
            return Some(2.0 * instance.dist(0, customer) - prize);
        }
        let route = self.tours.get(tour)?;
        if position > route.len() {
            return None;
        }
        if route.demand + u64::from(instance.demand(customer)) > u64::from(instance.capacity()) {
            return None;
        }
        let prev = if position == 0 { 0 } else { route.customers[position - 1] };
        let next = route.customers.get(position).copied().unwrap_or(0);
        if instance.kind().has_time_windows() && !self.fits_schedule(instance, route, customer, position) {
            return None;
        }
        Some(
            instance.dist(prev, customer) + instance.dist(customer, next)
                - instance.dist(prev, next)
                - prize,
        )
    }

    fn fits_schedule(&self, instance: &Instance, route: &Tour, customer: usize, position: usize) -> bool {
        let (prev, departure) = if position == 0 {
            (0, 0.0)
        } else {
            let p = route.customers[position - 1];
            (p, route.start[position - 1] + instance.node(p).service)
        };
        let node = instance.node(customer);
        let begin = (departure + instance.dist(prev, customer)).max(node.tw_start);
        if begin > node.tw_end {
            return false;
        }
        match route.customers.get(position) {
            Some(&next) => {
                begin + node.service + instance.dist(customer, next) <= route.latest[position]
            }
            None => true,
        }
    }

    /// Commits an insertion previously checked with [`Self::insertion_delta`].
    pub fn insert(&mut self, instance: &Instance, customer: usize, tour: usize, position: usize) -> Result<()> {
        if !instance.is_customer(customer) {
            return Err(Error::InvalidCustomer(customer));
        }
        let slot = self.unassigned.binary_search(&customer).map_err(|_| {
            Error::Structural(format!("customer {customer} is not unassigned"))
        })?;
        if tour > self.tours.len() || (tour < self.tours.len() && position > self.tours[tour].len()) {
            return Err(Error::Structural(format!(
                "insertion point ({tour}, {position}) out of range"
            )));
        }
        self.unassigned.remove(slot);
        self.unserved_prize -= instance.prize(customer);
        if self.unassigned.is_empty() {
            self.unserved_prize = 0.0;
        }
        if tour == self.tours.len() {
            let route = Tour::build(instance, vec![customer]);
            self.travel_cost += route.cost;
            self.tours.push(route);
        } else {
            let route = &mut self.tours[tour];
            let before = route.cost;
            route.customers.insert(position, customer);
            route.refresh(instance);
            self.travel_cost += route.cost - before;
        }
        self.tour_of[customer] = tour;
        Ok(())
    }

    /// Reorders tours by `order` (a permutation of tour indices).
    pub fn permute_tours(&mut self, order: &[usize]) {
        let mut taken: Vec<Option<Tour>> = self.tours.drain(..).map(Some).collect();
        for (new_index, &old) in order.iter().enumerate() {
            let tour = taken[old].take().expect("order must be a permutation");
            for &c in &tour.customers {
                self.tour_of[c] = new_index;
            }
            self.tours.push(tour);
        }
    }
}
