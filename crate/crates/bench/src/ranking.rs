//! Next-location baselines for the ranking task.

use std::collections::{BTreeMap, HashSet};

use stkit_core::tensorize::Trajectory;

/// Ranks candidate next locations given a user's visit history.
pub trait LocationRanker: Send + Sync {
    fn rank(&self, user: &str, history: &[&str], k: usize) -> Vec<String>;
}

fn by_count(counts: &BTreeMap<String, usize>) -> Vec<String> {
    let mut items: Vec<(&String, &usize)> = counts.iter().collect();
    // BTreeMap order breaks count ties by id
    items.sort_by(|a, b| b.1.cmp(a.1));
    items.into_iter().map(|(id, _)| id.clone()).collect()
}

/// Most visited locations overall.
#[derive(Debug, Clone, Default)]
pub struct Popularity {
    ranked: Vec<String>,
}

impl Popularity {
    pub fn fit(trajs: &[Trajectory]) -> Self {
        let mut counts = BTreeMap::new();
        for loc in trajs
            .iter()
            .flat_map(|t| &t.points)
            .filter_map(|p| p.location.as_ref())
        {
            *counts.entry(loc.clone()).or_insert(0) += 1;
        }
        Popularity {
            ranked: by_count(&counts),
        }
    }
}

impl LocationRanker for Popularity {
    fn rank(&self, _user: &str, _history: &[&str], k: usize) -> Vec<String> {
        self.ranked.iter().take(k).cloned().collect()
    }
}

/// First-order transition counts from the last visited location, padded
/// with the popularity ranking.
#[derive(Debug, Clone, Default)]
pub struct Markov {
    next: BTreeMap<String, Vec<String>>,
    fallback: Popularity,
}

impl Markov {
    pub fn fit(trajs: &[Trajectory]) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for t in trajs {
            let locs: Vec<&String> = t
                .points
                .iter()
                .filter_map(|p| p.location.as_ref())
                .collect();
            for w in locs.windows(2) {
                *counts
                    .entry(w[0].clone())
                    .or_default()
                    .entry(w[1].clone())
                    .or_insert(0) += 1;
            }
        }
        Markov {
            next: counts
                .iter()
                .map(|(from, c)| (from.clone(), by_count(c)))
                .collect(),
            fallback: Popularity::fit(trajs),
        }
    }
}

impl LocationRanker for Markov {
    fn rank(&self, user: &str, history: &[&str], k: usize) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(k);
        let mut seen = HashSet::new();
        let direct = history.last().and_then(|l| self.next.get(*l));
        for loc in direct
            .into_iter()
            .flatten()
            .chain(self.fallback.rank(user, history, usize::MAX).iter())
        {
            if out.len() == k {
                break;
            }
            if seen.insert(loc.clone()) {
                out.push(loc.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stkit_core::atomic::parse_time;
    use stkit_core::tensorize::TrajPoint;

    fn traj(locs: &[&str]) -> Trajectory {
        let t = parse_time("2020-01-01T00:00:00Z").unwrap();
        Trajectory {
            user_id: "u".into(),
            points: locs.iter().map(|l| TrajPoint::at(*l, t)).collect(),
        }
    }

    #[test]
    fn popularity_ties_by_id() {
        let p = Popularity::fit(&[traj(&["b", "a", "c", "c"])]);
        assert_eq!(p.rank("u", &[], 3), vec!["c", "a", "b"]);
    }

    #[test]
    fn markov_then_fallback() {
        let m = Markov::fit(&[traj(&["a", "b", "a", "b", "a", "c", "d", "d", "d"])]);
        assert_eq!(m.rank("u", &["x", "a"], 3), vec!["b", "c", "a"]);
        assert_eq!(m.rank("u", &["zzz"], 2), vec!["a", "d"]);
    }
}
