//! Per-cluster marginal likelihood cache keyed by member set.
//!
//! Keys are sorted region-index vectors, so relabeling clusters never
//! invalidates an entry. The cache is unbounded by default; with a cap,
//! eviction removes the stalest entries but never one belonging to a
//! current cluster.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// A cached marginal likelihood with its evaluation diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachedMarginal {
    pub log_marginal: f64,
    /// Hyperparameter mode on the internal scale, in slot order.
    pub theta_mode: Vec<f64>,
    /// Whether the outer integration fell back to the mode plug-in.
    pub fallback: bool,
    pub newton_iters_max: usize,
}

#[derive(Debug, Clone)]
pub struct MarginalCache {
    entries: HashMap<Vec<u32>, CachedMarginal>,
    stamps: HashMap<Vec<u32>, u64>,
    counter: u64,
    max_entries: Option<usize>,
}

impl MarginalCache {
    pub fn new(max_entries: Option<usize>) -> Self {
        Self {
            entries: HashMap::new(),
            stamps: HashMap::new(),
            counter: 0,
            max_entries,
        }
    }

    fn canonical(members: &[u32]) -> Vec<u32> {
        let mut key = members.to_vec();
        key.sort_unstable();
        key
    }

    pub fn peek(&self, members: &[u32]) -> Option<&CachedMarginal> {
        self.entries.get(&Self::canonical(members))
    }

    pub fn insert(&mut self, members: &[u32], value: CachedMarginal) {
        let key = Self::canonical(members);
        self.counter += 1;
        self.stamps.insert(key.clone(), self.counter);
        self.entries.insert(key, value);
    }

    /// Marks an entry as freshly used so eviction prefers others.
    pub fn touch(&mut self, members: &[u32]) {
        let key = Self::canonical(members);
        if self.entries.contains_key(&key) {
            self.counter += 1;
            self.stamps.insert(key, self.counter);
        }
    }

    /// Evicts stalest entries above the cap; entries for `protected`
    /// member sets are never removed.
    pub fn evict_to_cap(&mut self, protected: &HashSet<Vec<u32>>) {
        let Some(cap) = self.max_entries else {
            return;
        };
        if self.entries.len() <= cap {
            return;
        }
        let mut candidates: Vec<(u64, Vec<u32>)> = self
            .entries
            .keys()
            .filter(|k| !protected.contains(*k))
            .map(|k| (self.stamps.get(k).copied().unwrap_or(0), k.clone()))
            .collect();
        candidates.sort();
        let excess = self.entries.len().saturating_sub(cap);
        for (_, key) in candidates.into_iter().take(excess) {
            self.entries.remove(&key);
            self.stamps.remove(&key);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by key, for deterministic serialization.
    pub fn sorted_entries(&self) -> Vec<(Vec<u32>, CachedMarginal)> {
        let mut out: Vec<(Vec<u32>, CachedMarginal)> = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(v: f64) -> CachedMarginal {
        CachedMarginal {
            log_marginal: v,
            theta_mode: vec![],
            fallback: false,
            newton_iters_max: 0,
        }
    }

    #[test]
    fn keys_are_order_independent() {
        let mut cache = MarginalCache::new(None);
        cache.insert(&[3, 1, 2], value(1.0));
        assert!(cache.peek(&[1, 2, 3]).is_some());
        assert!(cache.peek(&[2, 1]).is_none());
    }

    #[test]
    fn eviction_spares_protected_entries() {
        let mut cache = MarginalCache::new(Some(2));
        cache.insert(&[0], value(0.0));
        cache.insert(&[1], value(1.0));
        cache.insert(&[2], value(2.0));
        let protected: HashSet<Vec<u32>> = [vec![0u32], vec![2u32]].into_iter().collect();
        cache.evict_to_cap(&protected);
        assert_eq!(cache.len(), 2);
        assert!(cache.peek(&[0]).is_some());
        assert!(cache.peek(&[2]).is_some());
        assert!(cache.peek(&[1]).is_none());
    }

    #[test]
    fn touch_changes_eviction_order() {
        let mut cache = MarginalCache::new(Some(2));
        cache.insert(&[0], value(0.0));
        cache.insert(&[1], value(1.0));
        cache.touch(&[0]);
        cache.insert(&[2], value(2.0));
        cache.evict_to_cap(&HashSet::new());
        // [1] is now the stalest.
        assert!(cache.peek(&[1]).is_none());
        assert!(cache.peek(&[0]).is_some());
    }
}
