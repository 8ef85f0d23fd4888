//! Fixed-capacity FIFO store with uniform sampling.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    /// Slot the next push overwrites once full.
    next: usize,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring buffer capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    /// Evicts the oldest item when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Storage slot access; slot order is not insertion order once wrapped.
    pub fn get(&self, slot: usize) -> Option<&T> {
        self.items.get(slot)
    }

    /// Items from oldest to newest.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &T> {
        let split = if self.is_full() { self.next } else { 0 };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Distinct slots drawn uniformly; `n` is clipped to the fill level.
    pub fn sample_slots<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        index::sample(rng, self.items.len(), n.min(self.items.len())).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        self.sample_slots(n, rng).into_iter().map(|i| &self.items[i]).collect()
    }

    /// Raw parts for persistence: `(capacity, items in slot order, next)`.
    pub fn as_parts(&self) -> (usize, &[T], usize) {
        (self.capacity, &self.items, self.next)
    }

    pub fn from_parts(capacity: usize, items: Vec<T>, next: usize) -> Option<Self> {
        let ok = capacity > 0 && items.len() <= capacity && next < capacity && (items.len() == capacity || next == items.len() % capacity);
        ok.then_some(Self { capacity, items, next })
    }
}
