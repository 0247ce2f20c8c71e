//! Prioritized replay over arbitrary items (the trainer stores sequences).
//!
//! Leaves hold `p^α`; sampling is stratified proportional; importance weights
//! are `(N·P(i))^-β` divided by the batch maximum. Slots are recycled in ring
//! order and carry a generation counter so that priority updates addressed to
//! an evicted item are dropped.

mod sum_tree;

pub use sum_tree::SumTree;

use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_PRIORITY_EPS: f64 = 1e-6;
pub const DEFAULT_CAPACITY: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub alpha: f64,
    pub priority_eps: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig { capacity: DEFAULT_CAPACITY, alpha: DEFAULT_ALPHA, priority_eps: DEFAULT_PRIORITY_EPS }
    }
}

/// Linear importance-sampling exponent anneal from `start` to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaSchedule {
    pub start: f64,
    pub steps: u64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule { start: 0.4, steps: 500_000 }
    }
}

impl BetaSchedule {
    pub fn beta(&self, step: u64) -> f64 {
        let frac = if self.steps == 0 { 1.0 } else { (step as f64 / self.steps as f64).min(1.0) };
        self.start + (1.0 - self.start) * frac
    }
}

/// Raw sequence priority from per-step absolute TD errors: `0.9·max + 0.1·mean`.
pub fn sequence_priority(abs_td: &[f64]) -> f64 {
    if abs_td.is_empty() {
        return 0.0;
    }
    let max = abs_td.iter().copied().fold(0.0, f64::max);
    let mean = abs_td.iter().sum::<f64>() / abs_td.len() as f64;
    0.9 * max + 0.1 * mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotId {
    pub slot: usize,
    pub generation: u64,
}

#[derive(Debug, Clone)]
pub struct Sampled<S> {
    pub id: SlotId,
    pub item: S,
    pub probability: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Slot<S> {
    generation: u64,
    item: Option<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ReplayState<S>", into = "ReplayState<S>")]
#[serde(bound(serialize = "S: Serialize + Clone", deserialize = "S: Deserialize<'de>"))]
pub struct PrioritizedReplay<S> {
    config: ReplayConfig,
    tree: SumTree,
    slots: Vec<Slot<S>>,
    next: usize,
    len: usize,
    inserted: u64,
}

/// Serialized form: the tree is rebuilt from the leaves.
#[derive(Serialize, Deserialize)]
struct ReplayState<S> {
    config: ReplayConfig,
    leaves: Vec<f64>,
    slots: Vec<Slot<S>>,
    next: usize,
    len: usize,
    inserted: u64,
}

impl<S> From<ReplayState<S>> for PrioritizedReplay<S> {
    fn from(s: ReplayState<S>) -> Self {
        let mut tree = SumTree::new(s.config.capacity);
        for (i, &v) in s.leaves.iter().enumerate() {
            if v != 0.0 {
                tree.set(i, v);
            }
        }
        PrioritizedReplay { config: s.config, tree, slots: s.slots, next: s.next, len: s.len, inserted: s.inserted }
    }
}

impl<S> From<PrioritizedReplay<S>> for ReplayState<S> {
    fn from(r: PrioritizedReplay<S>) -> Self {
        let leaves = r.tree.leaves()[..r.config.capacity].to_vec();
        ReplayState { config: r.config, leaves, slots: r.slots, next: r.next, len: r.len, inserted: r.inserted }
    }
}

impl<S: Clone> PrioritizedReplay<S> {
    pub fn new(config: ReplayConfig) -> Self {
        assert!(config.capacity > 0, "replay capacity must be positive");
        let slots = (0..config.capacity).map(|_| Slot { generation: 0, item: None }).collect();
        PrioritizedReplay { tree: SumTree::new(config.capacity), config, slots, next: 0, len: 0, inserted: 0 }
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    /// Total of stored `p^α`.
    pub fn total_priority(&self) -> f64 {
        self.tree.total()
    }

    /// Number of insertions since creation.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Leaf value for a raw priority: `p^α`.
    pub fn leaf_value(&self, priority: f64) -> f64 {
        priority.powf(self.config.alpha)
    }

    /// Leaf value for a TD error: `(|δ| + ε)^α`.
    pub fn td_leaf_value(&self, td: f64) -> f64 {
        (td.abs() + self.config.priority_eps).powf(self.config.alpha)
    }

    /// Stores `item` with raw priority `priority > 0`, evicting the oldest
    /// item when full.
    pub fn insert(&mut self, item: S, priority: f64) -> SlotId {
        assert!(priority > 0.0 && priority.is_finite(), "priority must be positive and finite, got {priority}");
        let slot = self.next;
        let s = &mut self.slots[slot];
        if s.item.is_some() {
            s.generation += 1;
        } else {
            self.len += 1;
        }
        s.item = Some(item);
        let generation = s.generation;
        let leaf = self.leaf_value(priority);
        self.tree.set(slot, leaf);
        self.next = (self.next + 1) % self.config.capacity;
        self.inserted += 1;
        SlotId { slot, generation }
    }

    pub fn get(&self, id: SlotId) -> Option<&S> {
        let s = self.slots.get(id.slot)?;
        if s.generation == id.generation {
            s.item.as_ref()
        } else {
            None
        }
    }

    /// Sampling probability of a live slot.
    pub fn probability(&self, slot: usize) -> f64 {
        self.tree.get(slot) / self.tree.total()
    }

    /// Sets priorities from TD errors; ids whose slot has since been reused are ignored.
    pub fn update_priorities(&mut self, ids: &[SlotId], td: &[f64]) {
        assert_eq!(ids.len(), td.len());
        for (id, &d) in ids.iter().zip(td) {
            if self.get(*id).is_none() || !d.is_finite() {
                continue;
            }
            let leaf = self.td_leaf_value(d);
            self.tree.set(id.slot, leaf);
        }
    }

    /// Same buffer (priorities, generations, ring cursor) with items mapped through `f`.
    pub fn map_items<U: Clone>(&self, mut f: impl FnMut(&S) -> U) -> PrioritizedReplay<U> {
        PrioritizedReplay {
            config: self.config.clone(),
            tree: self.tree.clone(),
            slots: self.slots.iter().map(|s| Slot { generation: s.generation, item: s.item.as_ref().map(&mut f) }).collect(),
            next: self.next,
            len: self.len,
            inserted: self.inserted,
        }
    }

    /// Live items in slot order.
    pub fn items(&self) -> impl Iterator<Item = &S> {
        self.slots.iter().filter_map(|s| s.item.as_ref())
    }

    /// Stratified proportional sample of `batch` items.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Vec<Sampled<S>> {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        let total = self.tree.total();
        let segment = total / batch as f64;
        let n = self.len as f64;
        let mut out: Vec<Sampled<S>> = (0..batch)
            .map(|i| {
                let u = (i as f64 + rng.gen::<f64>()) * segment;
                let slot = self.tree.find(u.min(total));
                let s = &self.slots[slot];
                let probability = self.tree.get(slot) / total;
                Sampled {
                    id: SlotId { slot, generation: s.generation },
                    item: s.item.clone().expect("positive leaf holds an item"),
                    probability,
                    weight: (n * probability).powf(-beta),
                }
            })
            .collect();
        let max = out.iter().map(|s| s.weight).fold(0.0, f64::max);
        for s in &mut out {
            s.weight /= max;
        }
        out
    }
}

pub type SharedReplay<S> = Arc<Mutex<PrioritizedReplay<S>>>;

pub fn shared<S: Clone>(config: ReplayConfig) -> SharedReplay<S> {
    Arc::new(Mutex::new(PrioritizedReplay::new(config)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn buffer(capacity: usize, alpha: f64) -> PrioritizedReplay<u32> {
        PrioritizedReplay::new(ReplayConfig { capacity, alpha, priority_eps: DEFAULT_PRIORITY_EPS })
    }

    #[test]
    fn first_insert_sets_root() {
        let mut b = buffer(8, 0.6);
        b.insert(1, 2.0);
        assert_eq!(b.total_priority(), 2f64.powf(0.6));
    }

    #[test]
    fn ring_eviction_keeps_size() {
        let mut b = buffer(4, 1.0);
        let ids: Vec<_> = (0..4).map(|i| b.insert(i, 1.0)).collect();
        let new = b.insert(99, 1.0);
        assert_eq!(b.len(), 4);
        assert_eq!(new.slot, ids[0].slot);
        assert!(b.get(ids[0]).is_none());
        assert_eq!(b.get(new), Some(&99));
        b.update_priorities(&[ids[0]], &[100.0]);
        assert_eq!(b.tree().get(0), 1.0);
        assert!(b.tree().is_consistent());
    }

    #[test]
    fn zero_td_keeps_positive_priority() {
        let mut b = buffer(2, 0.6);
        let id = b.insert(0, 1.0);
        b.update_priorities(&[id], &[0.0]);
        assert_eq!(b.tree().get(0), DEFAULT_PRIORITY_EPS.powf(0.6));
        assert!(b.total_priority() > 0.0);
    }

    #[test]
    fn equal_priorities_give_unit_weights() {
        let mut b = buffer(16, 0.6);
        for i in 0..10 {
            b.insert(i, 0.5);
        }
        let s = b.sample_batch(32, 0.4, &mut rng::stream(0, "s"));
        assert!(s.iter().all(|x| (x.weight - 1.0).abs() < 1e-12));
        assert!(s.iter().all(|x| (x.probability - 0.1).abs() < 1e-12));
    }

    #[test]
    fn sequence_priority_mix() {
        assert_eq!(sequence_priority(&[0.0, 0.0, 0.0]), 0.0);
        let p = sequence_priority(&[0.0, 0.0, 0.0, 10.0]);
        assert!((p - (9.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn beta_anneals_linearly() {
        let s = BetaSchedule { start: 0.4, steps: 100 };
        assert_eq!(s.beta(0), 0.4);
        assert!((s.beta(50) - 0.7).abs() < 1e-12);
        assert_eq!(s.beta(1000), 1.0);
    }

    #[test]
    fn serde_round_trip_preserves_tree() {
        let mut b = buffer(5, 0.6);
        for i in 0..7 {
            b.insert(i, 0.1 + i as f64 * 0.37);
        }
        let json = serde_json::to_string(&b).unwrap();
        let back: PrioritizedReplay<u32> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
    }
}
