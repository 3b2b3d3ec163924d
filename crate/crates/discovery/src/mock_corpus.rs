//! Operator variants served by the mock provider. Replies depend only on
//! the prompt and a 64-bit key, so mock runs are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gateway::first_embedded_code;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Uniform random selection, random order.
    Random,
    /// Random seeds grown through their nearest neighbors, demand order.
    Neighborhood,
    /// Strings cut from the tours around a seed, far-first or random order.
    Strings,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Random, Family::Neighborhood, Family::Strings];

    /// Recognizes a corpus family from source text.
    pub fn detect(source: &str) -> Family {
        if source.contains("usedTours") {
            Family::Strings
        } else if source.contains("adj[seed][i]") {
            Family::Neighborhood
        } else {
            Family::Random
        }
    }
}

const RANDOM: &str = r#"#include "AgentDesigned.h"
#include <random>
#include <unordered_set>
#include "Utils.h"

std::vector<int> select_by_llm_1(const Solution& sol) {
    const int n = sol.instance.numCustomers;
    int k = std::min(n, getRandomNumber(@KMIN@, @KMAX@));
    std::unordered_set<int> chosen;
    while ((int)chosen.size() < k) {
        chosen.insert(getRandomNumber(1, n));
    }
    return std::vector<int>(chosen.begin(), chosen.end());
}

void sort_by_llm_1(std::vector<int>& customers, const Instance& instance) {
    static thread_local std::mt19937 gen(std::random_device{}());
    std::shuffle(customers.begin(), customers.end(), gen);
}
"#;

const NEIGHBORHOOD: &str = r#"#include "AgentDesigned.h"
#include <unordered_set>
#include "Utils.h"

std::vector<int> select_by_llm_1(const Solution& sol) {
    const Instance& inst = sol.instance;
    const int n = inst.numCustomers;
    const int k = std::min(n, getRandomNumber(@KMIN@, @KMAX@));
    const int neighbors = @NEIGH@;
    const float keep = @PKEEP@f;
    std::vector<int> out;
    std::unordered_set<int> seen;
    while ((int)out.size() < k) {
        int seed = getRandomNumber(1, n);
        if (seen.insert(seed).second) out.push_back(seed);
        int span = std::min((int)inst.adj[seed].size(), neighbors);
        for (int i = 0; i < span && (int)out.size() < k; ++i) {
            int c = inst.adj[seed][i];
            if (c != 0 && getRandomFraction() < keep && seen.insert(c).second) out.push_back(c);
        }
    }
    return out;
}

void sort_by_llm_1(std::vector<int>& customers, const Instance& instance) {
    std::sort(customers.begin(), customers.end(), [&](int a, int b) {
        if (instance.demand[a] != instance.demand[b]) return instance.demand[a] > instance.demand[b];
        return a < b;
    });
}
"#;

const STRINGS: &str = r#"#include "AgentDesigned.h"
#include <random>
#include <unordered_set>
#include "Utils.h"

std::vector<int> select_by_llm_1(const Solution& sol) {
    const Instance& inst = sol.instance;
    const int n = inst.numCustomers;
    const int maxStrings = @STRINGS@;
    const int maxLen = @LEN@;
    std::vector<int> out;
    std::unordered_set<int> seen;
    std::unordered_set<int> usedTours;
    int seed = getRandomNumber(1, n);
    for (int i = -1; i < (int)inst.adj[seed].size() && (int)usedTours.size() < maxStrings; ++i) {
        int c = i < 0 ? seed : inst.adj[seed][i];
        if (c == 0) continue;
        int t = sol.customerToTourMap[c];
        if (t < 0 || usedTours.count(t)) continue;
        usedTours.insert(t);
        const std::vector<int>& route = sol.tours[t].customers;
        int pos = std::find(route.begin(), route.end(), c) - route.begin();
        int len = getRandomNumber(1, std::min<int>(maxLen, route.size()));
        int start = std::max(0, std::min<int>(pos - getRandomNumber(0, len - 1), route.size() - len));
        for (int j = start; j < start + len; ++j) {
            if (seen.insert(route[j]).second) out.push_back(route[j]);
        }
    }
    return out;
}

void sort_by_llm_1(std::vector<int>& customers, const Instance& instance) {
    if (getRandomFraction() < @PRANDOM@f) {
        static thread_local std::mt19937 gen(std::random_device{}());
        std::shuffle(customers.begin(), customers.end(), gen);
        return;
    }
    std::vector<float> key;
    for (int c : customers) key.push_back(-instance.distanceMatrix[0][c]);
    std::vector<int> order = argsort(key);
    std::vector<int> sorted;
    for (int i : order) sorted.push_back(customers[i]);
    customers = sorted;
}
"#;

/// Renders a family with parameters drawn from `rng`.
pub fn variant(family: Family, rng: &mut impl Rng) -> String {
    let kmin = rng.gen_range(5..=15);
    let kmax = kmin + rng.gen_range(3..=12);
    let template = match family {
        Family::Random => RANDOM,
        Family::Neighborhood => NEIGHBORHOOD,
        Family::Strings => STRINGS,
    };
    template
        .replace("@KMIN@", &kmin.to_string())
        .replace("@KMAX@", &kmax.to_string())
        .replace("@NEIGH@", &rng.gen_range(3..=12).to_string())
        .replace("@PKEEP@", &format!("{:.2}", rng.gen_range(0.5..=1.0)))
        .replace("@STRINGS@", &rng.gen_range(2..=5).to_string())
        .replace("@LEN@", &rng.gen_range(3..=12).to_string())
        .replace("@PRANDOM@", &format!("{:.2}", rng.gen_range(0.1..=0.6)))
}

/// A reply for `prompt`. Crossover keeps the better parent's family most of
/// the time, mutation keeps or switches the family depending on the kind.
/// A small share of replies is broken in the ways real models break code.
pub fn respond(prompt: &str, key: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let pick = |rng: &mut ChaCha8Rng| Family::ALL[rng.gen_range(0..Family::ALL.len())];
    let family = if let Some(better) = prompt.find("[Better Code]").and(first_embedded_code(prompt)) {
        let worse = prompt
            .split_once("[Worse Code]\n")
            .map(|(_, rest)| Family::detect(rest.split("\n\n[Task]").next().unwrap_or("")))
            .unwrap_or(Family::Random);
        if rng.gen_bool(0.8) {
            Family::detect(better)
        } else {
            worse
        }
    } else if let Some(code) = prompt.find("[Code]").and(first_embedded_code(prompt)) {
        if prompt.contains("Add a new mechanic") {
            pick(&mut rng)
        } else {
            Family::detect(code)
        }
    } else {
        pick(&mut rng)
    };
    let mut source = variant(family, &mut rng);
    let roll: f64 = rng.gen();
    if roll < 0.04 {
        // missing semicolon
        source = source.replacen("return out;", "return out", 1).replacen("return std::vector<int>(chosen.begin(), chosen.end());", "return std::vector<int>(chosen.begin(), chosen.end())", 1);
    } else if roll < 0.06 {
        source = source.replacen(
            "void sort_by_llm_1(std::vector<int>& customers, const Instance& instance) {",
            "void sort_by_llm_1(std::vector<int>& customers, const Instance& instance) {\n    if (customers.size() > 1) customers.push_back(0);",
            1,
        );
    }
    source
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detect_recognizes_each_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for f in Family::ALL {
            assert_eq!(Family::detect(&variant(f, &mut rng)), f);
        }
    }

    #[test]
    fn replies_are_pure_in_key() {
        assert_eq!(respond("seed prompt", 7), respond("seed prompt", 7));
        assert!(!variant(Family::Strings, &mut ChaCha8Rng::seed_from_u64(3)).contains('@'));
    }
}
