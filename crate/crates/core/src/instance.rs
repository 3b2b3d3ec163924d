//! Immutable problem data shared by every solver component.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Routing variant an [`Instance`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Cvrp,
    Vrptw,
    Pcvrp,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::Cvrp, ProblemKind::Vrptw, ProblemKind::Pcvrp];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Cvrp => "cvrp",
            ProblemKind::Vrptw => "vrptw",
            ProblemKind::Pcvrp => "pcvrp",
        }
    }

    pub fn has_time_windows(self) -> bool {
        self == ProblemKind::Vrptw
    }

    pub fn has_prizes(self) -> bool {
        self == ProblemKind::Pcvrp
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cvrp" => Ok(ProblemKind::Cvrp),
            "vrptw" => Ok(ProblemKind::Vrptw),
            "pcvrp" => Ok(ProblemKind::Pcvrp),
            other => Err(Error::Config(format!("unknown problem kind `{other}`"))),
        }
    }
}

/// One row of the node table. Node 0 is the depot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    pub demand: u32,
    pub tw_start: f64,
    pub tw_end: f64,
    pub service: f64,
    pub prize: f64,
}

impl Node {
    pub fn depot(x: f64, y: f64) -> Self {
        Node {
            x,
            y,
            demand: 0,
            tw_start: 0.0,
            tw_end: f64::INFINITY,
            service: 0.0,
            prize: 0.0,
        }
    }

    pub fn customer(x: f64, y: f64, demand: u32) -> Self {
        Node {
            demand,
            ..Node::depot(x, y)
        }
    }
}

/// Euclidean distance with a fixed evaluation order so that a matrix
/// rebuilt from the same coordinates is bit-identical.
#[inline]
pub fn euclidean(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

/// Problem data: node table, dense distance matrix and distance-sorted
/// neighbor lists. Never mutated after construction.
#[derive(Debug, Clone)]
pub struct Instance {
    kind: ProblemKind,
    capacity: u32,
    nodes: Vec<Node>,
    dist: Vec<f64>,
    adjacency: Vec<Vec<u32>>,
}

impl Instance {
    /// Builds an instance from its node table (`nodes[0]` is the depot) and
    /// checks the structural invariants.
    pub fn new(kind: ProblemKind, capacity: u32, nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInstance("node table must contain the depot".into()));
        }
        if capacity == 0 {
            return Err(Error::InvalidInstance("capacity must be positive".into()));
        }
        if nodes[0].demand != 0 {
            return Err(Error::InvalidInstance("depot demand must be 0".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if !(node.x.is_finite() && node.y.is_finite()) {
                return Err(Error::InvalidInstance(format!("node {i}: non-finite coordinate")));
            }
            if node.demand > capacity {
                return Err(Error::InvalidInstance(format!(
                    "node {i}: demand {} exceeds capacity {capacity}",
                    node.demand
                )));
            }
            if i > 0 && node.tw_start > node.tw_end {
                return Err(Error::InvalidInstance(format!(
                    "node {i}: time window start {} after end {}",
                    node.tw_start, node.tw_end
                )));
            }
            if node.service < 0.0 || node.prize < 0.0 || node.prize.is_nan() {
                return Err(Error::InvalidInstance(format!(
                    "node {i}: negative service time or prize"
                )));
            }
        }

        let n = nodes.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclidean((nodes[i].x, nodes[i].y), (nodes[j].x, nodes[j].y));
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }

        let adjacency = (0..n)
            .map(|i| {
                let mut others: Vec<u32> = (0..n as u32).filter(|&j| j as usize != i).collect();
                let row = &dist[i * n..(i + 1) * n];
                others.sort_by(|&a, &b| {
                    row[a as usize]
                        .total_cmp(&row[b as usize])
                        .then(a.cmp(&b))
                });
                others
            })
            .collect();

        Ok(Instance {
            kind,
            capacity,
            nodes,
            dist,
            adjacency,
        })
    }

    #[inline]
    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    #[inline]
    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    /// Number of customers, excluding the depot.
    #[inline]
    pub fn num_customers(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of nodes, including the depot.
    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    #[inline]
    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.nodes.len() + j]
    }

    /// Row `i` of the distance matrix.
    pub fn dist_row(&self, i: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.dist[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn demand(&self, i: usize) -> u32 {
        self.nodes[i].demand
    }

    /// Prize forfeited when customer `i` stays unserved. Zero outside PCVRP.
    #[inline]
    pub fn prize(&self, i: usize) -> f64 {
        if self.kind.has_prizes() {
            self.nodes[i].prize
        } else {
            0.0
        }
    }

    /// Every other node, nearest first (ties by id).
    pub fn adjacency(&self, i: usize) -> &[u32] {
        &self.adjacency[i]
    }

    /// Customer ids `1..=n`.
    pub fn customers(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.num_customers()
    }

    pub fn is_customer(&self, id: usize) -> bool {
        id >= 1 && id < self.nodes.len()
    }

    /// Sum of all prizes; the PCVRP objective of the empty solution.
    pub fn total_prize(&self) -> f64 {
        self.customers().map(|c| self.prize(c)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Instance {
        let nodes = vec![
            Node::depot(0.0, 0.0),
            Node::customer(1.0, 0.0, 1),
            Node::customer(1.0, 1.0, 1),
            Node::customer(0.0, 1.0, 1),
        ];
        Instance::new(ProblemKind::Cvrp, 3, nodes).unwrap()
    }

    #[test]
    fn distance_matrix_is_symmetric_with_zero_diagonal() {
        let inst = square();
        for i in 0..inst.num_nodes() {
            assert_eq!(inst.dist(i, i), 0.0);
            for j in 0..inst.num_nodes() {
                assert_eq!(inst.dist(i, j), inst.dist(j, i));
                for k in 0..inst.num_nodes() {
                    assert!(inst.dist(i, k) <= inst.dist(i, j) + inst.dist(j, k) + 1e-12);
                }
            }
        }
        assert!((inst.dist(0, 2) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adjacency_sorted_by_distance_then_id() {
        let inst = square();
        assert_eq!(inst.adjacency(0), &[1, 3, 2]);
        assert_eq!(inst.adjacency(2), &[1, 3, 0]);
    }

    #[test]
    fn rejects_oversized_demand() {
        let nodes = vec![Node::depot(0.0, 0.0), Node::customer(0.5, 0.5, 9)];
        assert!(matches!(
            Instance::new(ProblemKind::Cvrp, 5, nodes),
            Err(Error::InvalidInstance(_))
        ));
    }

    #[test]
    fn rejects_inverted_window() {
        let mut c = Node::customer(0.5, 0.5, 1);
        c.tw_start = 2.0;
        c.tw_end = 1.0;
        let nodes = vec![Node::depot(0.0, 0.0), c];
        assert!(Instance::new(ProblemKind::Vrptw, 5, nodes).is_err());
    }

    #[test]
    fn prize_is_zero_outside_pcvrp() {
        let mut c = Node::customer(0.5, 0.5, 1);
        c.prize = 3.0;
        let nodes = vec![Node::depot(0.0, 0.0), c];
        let cvrp = Instance::new(ProblemKind::Cvrp, 5, nodes.clone()).unwrap();
        let pcvrp = Instance::new(ProblemKind::Pcvrp, 5, nodes).unwrap();
        assert_eq!(cvrp.prize(1), 0.0);
        assert_eq!(pcvrp.prize(1), 3.0);
    }

    #[test]
    fn kind_parses_case_insensitively() {
        assert_eq!("VRPTW".parse::<ProblemKind>().unwrap(), ProblemKind::Vrptw);
        assert!("tsp".parse::<ProblemKind>().is_err());
    }
}
