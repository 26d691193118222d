//! Bounded least-recently-used cache keyed by 64-bit data-unit ids.
//!
//! Entries live in a slab and are threaded on a doubly linked list with the
//! most recently used entry at the head and the eviction victim at the tail.
//! All operations are O(1) expected.

use std::collections::HashMap;
use std::num::NonZeroUsize;

/// Result of [`LruCache::put`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PutOutcome<V> {
    Inserted,
    /// The key was present; its value was replaced and it moved to the head.
    Updated,
    /// The cache was full: the tail entry was evicted to make room.
    InsertedWithEviction {
        evicted_key: u64,
        evicted: V,
    },
}

#[derive(Debug, Clone)]
struct Slot<V> {
    key: u64,
    value: V,
    prev: Option<usize>,
    next: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LruCache<V> {
    capacity: NonZeroUsize,
    index: HashMap<u64, usize>,
    slots: Vec<Slot<V>>,
    head: Option<usize>,
    tail: Option<usize>,
}

impl<V> LruCache<V> {
    pub fn new(capacity: NonZeroUsize) -> Self {
        LruCache {
            capacity,
            index: HashMap::with_capacity(capacity.get().min(4096)),
            slots: Vec::new(),
            head: None,
            tail: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity.get()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Pure membership query; does not touch recency.
    pub fn contains(&self, key: u64) -> bool {
        self.index.contains_key(&key)
    }

    /// Non-promoting lookup.
    pub fn peek(&self, key: u64) -> Option<&V> {
        self.index.get(&key).map(|&i| &self.slots[i].value)
    }

    /// Lookup that promotes a hit to the head. `None` is a miss.
    pub fn get(&mut self, key: u64) -> Option<&V> {
        let i = *self.index.get(&key)?;
        self.move_to_head(i);
        Some(&self.slots[i].value)
    }

    pub fn put(&mut self, key: u64, value: V) -> PutOutcome<V> {
        if let Some(&i) = self.index.get(&key) {
            self.slots[i].value = value;
            self.move_to_head(i);
            return PutOutcome::Updated;
        }
        if self.len() < self.capacity() {
            let i = self.slots.len();
            self.slots.push(Slot {
                key,
                value,
                prev: None,
                next: None,
            });
            self.index.insert(key, i);
            self.link_head(i);
            return PutOutcome::Inserted;
        }
        // full: recycle the tail slot for the new entry
        let i = self.tail.expect("full cache has a tail");
        self.unlink(i);
        let slot = &mut self.slots[i];
        let evicted_key = std::mem::replace(&mut slot.key, key);
        let evicted = std::mem::replace(&mut slot.value, value);
        self.index.remove(&evicted_key);
        self.index.insert(key, i);
        self.link_head(i);
        PutOutcome::InsertedWithEviction {
            evicted_key,
            evicted,
        }
    }

    /// Key of the entry that the next new-key insertion would evict when full.
    pub fn lru_key(&self) -> Option<u64> {
        self.tail.map(|i| self.slots[i].key)
    }

    pub fn mru_key(&self) -> Option<u64> {
        self.head.map(|i| self.slots[i].key)
    }

    /// Entries from most to least recently used, without promoting.
    pub fn iter(&self) -> Iter<'_, V> {
        Iter {
            cache: self,
            cursor: self.head,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.iter().map(|(k, _)| k)
    }

    fn unlink(&mut self, i: usize) {
        let (prev, next) = (self.slots[i].prev, self.slots[i].next);
        match prev {
            Some(p) => self.slots[p].next = next,
            None => self.head = next,
        }
        match next {
            Some(n) => self.slots[n].prev = prev,
            None => self.tail = prev,
        }
        self.slots[i].prev = None;
        self.slots[i].next = None;
    }

    fn link_head(&mut self, i: usize) {
        self.slots[i].prev = None;
        self.slots[i].next = self.head;
        if let Some(h) = self.head {
            self.slots[h].prev = Some(i);
        }
        self.head = Some(i);
        if self.tail.is_none() {
            self.tail = Some(i);
        }
    }

    fn move_to_head(&mut self, i: usize) {
        if self.head != Some(i) {
            self.unlink(i);
            self.link_head(i);
        }
    }
}

pub struct Iter<'a, V> {
    cache: &'a LruCache<V>,
    cursor: Option<usize>,
}

impl<'a, V> Iterator for Iter<'a, V> {
    type Item = (u64, &'a V);

    fn next(&mut self) -> Option<Self::Item> {
        let slot = &self.cache.slots[self.cursor?];
        self.cursor = slot.next;
        Some((slot.key, &slot.value))
    }
}
