//! Ordered multiset of fitness values.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Total-order key for non-negative finite fitness values.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Species present at one instant, identified with their fitness.
///
/// An extinction with threshold `y` is one prefix cut: everything strictly
/// below `y` goes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Configuration {
    counts: BTreeMap<Key, usize>,
    len: usize,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Result<Self> {
        let mut c = Self::new();
        for v in values {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("fitness values must be finite and >= 0, got {v}")));
            }
            c.insert(v);
        }
        Ok(c)
    }

    pub fn insert(&mut self, fitness: f64) {
        debug_assert!(fitness.is_finite() && fitness >= 0.0);
        *self.counts.entry(Key(fitness)).or_insert(0) += 1;
        self.len += 1;
    }

    /// Removes every species with fitness strictly below `threshold`; returns how many.
    pub fn cut_below(&mut self, threshold: f64) -> usize {
        let kept = self.counts.split_off(&Key(threshold));
        let removed: usize = self.counts.values().sum();
        self.counts = kept;
        self.len -= removed;
        removed
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn min(&self) -> Option<f64> {
        self.counts.keys().next().map(|k| k.0)
    }

    pub fn max(&self) -> Option<f64> {
        self.counts.keys().next_back().map(|k| k.0)
    }

    /// Ascending values, repeated by multiplicity.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.counts.iter().flat_map(|(k, &n)| std::iter::repeat_n(k.0, n))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn multiplicity(&self, fitness: f64) -> usize {
        self.counts.get(&Key(fitness)).copied().unwrap_or(0)
    }

    /// Multiset containment: every value occurs here at most as often as in `other`.
    pub fn is_subset_of(&self, other: &Configuration) -> bool {
        self.counts.iter().all(|(k, &n)| other.counts.get(k).is_some_and(|&m| m >= n))
    }
}

impl Serialize for Configuration {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}
