use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitness {
    Unevaluated,
    /// Failed to build, crashed, timed out or produced an infeasible
    /// solution. Sorts after every finite value.
    Disqualified,
    Value(f64),
}

impl Fitness {
    /// Sort key: lower is better, failures are +inf.
    pub fn key(&self) -> f64 {
        match self {
            Fitness::Value(v) => *v,
            Fitness::Disqualified | Fitness::Unevaluated => f64::INFINITY,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Fitness::Value(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value().is_some_and(f64::is_finite)
    }

    pub fn is_evaluated(&self) -> bool {
        !matches!(self, Fitness::Unevaluated)
    }

    pub fn cmp_key(&self, other: &Fitness) -> Ordering {
        self.key().total_cmp(&other.key())
    }
}

/// Eq. 1: mean objective over the training instances plus `lambda` per line.
pub fn eq1(objectives: &[f64], line_count: usize, lambda: f64) -> f64 {
    mean(objectives) + lambda * line_count as f64
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eq1_examples() {
        assert!((eq1(&[10.0], 100, 2e-4) - 10.02).abs() < 1e-12);
        assert_eq!(eq1(&[1.0, 2.0, 3.0], 500, 0.0), 2.0);
        assert!(eq1(&[5.0], 300, 2e-4) > eq1(&[5.0], 100, 2e-4));
    }

    #[test]
    fn failures_sort_last() {
        let mut v = [Fitness::Disqualified, Fitness::Value(3.0), Fitness::Value(1.0)];
        v.sort_by(Fitness::cmp_key);
        assert_eq!(v[0], Fitness::Value(1.0));
        assert_eq!(v[2], Fitness::Disqualified);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"[{"value":1.0},{"value":3.0},"disqualified"]"#);
    }
}
