//! Weighted Space-Saving summaries.
//!
//! A summary keeps at most `capacity` counters `(item, count, overestimation)`.
//! For every item, `count - overestimation <= true weight <= count` when the
//! item is recorded, and `true weight <= min count` when it is not. Every
//! overestimation is at most `total_weight / capacity`.
//!
//! Counters live in fixed slots; an indexed binary min-heap over
//! `(count, last update)` finds the eviction victim, so among equal minimum
//! counts the least recently updated counter goes first.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{CropError, Result};
use crate::sparse::Entry;

/// Capacities up to this size find items by scanning the slots.
const LINEAR_LOOKUP_MAX: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counter {
    pub item: Entry,
    pub count: f64,
    pub overestimation: f64,
    last_update: u64,
}

impl Counter {
    pub fn lower(&self) -> f64 {
        self.count - self.overestimation
    }

    pub fn upper(&self) -> f64 {
        self.count
    }

    fn key_cmp(&self, other: &Counter) -> Ordering {
        self.count
            .total_cmp(&other.count)
            .then(self.last_update.cmp(&other.last_update))
    }
}

/// Lower and upper bounds on an item's weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct SpaceSavingSummary {
    capacity: usize,
    slots: Vec<Counter>,
    heap: Vec<u32>,
    heap_pos: Vec<u32>,
    index: Option<HashMap<Entry, u32>>,
    total_weight: f64,
    clock: u64,
}

impl PartialEq for SpaceSavingSummary {
    fn eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity
            && self.total_weight.to_bits() == other.total_weight.to_bits()
            && self.clock == other.clock
            && self.slots.len() == other.slots.len()
            && self.slots.iter().zip(&other.slots).all(|(a, b)| {
                a.item == b.item
                    && a.count.to_bits() == b.count.to_bits()
                    && a.overestimation.to_bits() == b.overestimation.to_bits()
                    && a.last_update == b.last_update
            })
    }
}

impl SpaceSavingSummary {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(CropError::Config(
                "Space-Saving capacity must be at least 1".into(),
            ));
        }
        if capacity > u32::MAX as usize {
            return Err(CropError::Config(format!(
                "Space-Saving capacity {capacity} is too large"
            )));
        }
        Ok(SpaceSavingSummary {
            capacity,
            slots: Vec::new(),
            heap: Vec::new(),
            heap_pos: Vec::new(),
            index: (capacity > LINEAR_LOOKUP_MAX).then(HashMap::new),
            total_weight: 0.0,
            clock: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.capacity
    }

    /// Sum of all weight ever inserted.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Counters in slot order.
    pub fn counters(&self) -> &[Counter] {
        &self.slots
    }

    /// Smallest recorded count, or zero for an empty summary.
    pub fn min_count(&self) -> f64 {
        self.heap
            .first()
            .map_or(0.0, |&s| self.slots[s as usize].count)
    }

    fn find(&self, item: Entry) -> Option<usize> {
        match &self.index {
            Some(map) => map.get(&item).map(|&s| s as usize),
            None => self.slots.iter().position(|c| c.item == item),
        }
    }

    /// Adds `weight` to `item`.
    pub fn update(&mut self, item: Entry, weight: f64) -> Result<()> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(CropError::Weight(format!(
                "Space-Saving only accepts positive weights, got {weight} for {item}"
            )));
        }
        self.clock += 1;
        self.total_weight += weight;
        if let Some(slot) = self.find(item) {
            let c = &mut self.slots[slot];
            c.count += weight;
            c.last_update = self.clock;
            self.sift_down(self.heap_pos[slot] as usize);
        } else if !self.is_full() {
            let slot = self.slots.len();
            self.slots.push(Counter {
                item,
                count: weight,
                overestimation: 0.0,
                last_update: self.clock,
            });
            if let Some(map) = &mut self.index {
                map.insert(item, slot as u32);
            }
            self.heap.push(slot as u32);
            self.heap_pos.push((self.heap.len() - 1) as u32);
            self.sift_up(self.heap.len() - 1);
        } else {
            let slot = self.heap[0] as usize;
            let victim = self.slots[slot];
            if let Some(map) = &mut self.index {
                map.remove(&victim.item);
                map.insert(item, slot as u32);
            }
            self.slots[slot] = Counter {
                item,
                count: victim.count + weight,
                overestimation: victim.count,
                last_update: self.clock,
            };
            self.sift_down(0);
        }
        Ok(())
    }

    /// Bounds on the weight of `item` in the stream seen so far.
    pub fn query(&self, item: Entry) -> Bounds {
        match self.find(item) {
            Some(slot) => {
                let c = &self.slots[slot];
                Bounds {
                    lower: c.lower(),
                    upper: c.upper(),
                }
            }
            None if self.is_full() => Bounds {
                lower: 0.0,
                upper: self.min_count(),
            },
            None => Bounds {
                lower: 0.0,
                upper: 0.0,
            },
        }
    }

    pub fn contains(&self, item: Entry) -> bool {
        self.find(item).is_some()
    }

    /// Up to `k` recorded items as `(item, lower, upper)`, by count
    /// descending, then row and column ascending.
    pub fn top(&self, k: usize) -> Vec<(Entry, Bounds)> {
        let mut v: Vec<&Counter> = self.slots.iter().collect();
        v.sort_by(|a, b| b.count.total_cmp(&a.count).then(a.item.cmp(&b.item)));
        v.into_iter()
            .take(k)
            .map(|c| {
                (
                    c.item,
                    Bounds {
                        lower: c.lower(),
                        upper: c.upper(),
                    },
                )
            })
            .collect()
    }

    fn less(&self, i: usize, j: usize) -> bool {
        let a = &self.slots[self.heap[i] as usize];
        let b = &self.slots[self.heap[j] as usize];
        a.key_cmp(b) == Ordering::Less
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.heap_pos[self.heap[i] as usize] = i as u32;
        self.heap_pos[self.heap[j] as usize] = j as u32;
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.less(i, parent) {
                self.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            let r = l + 1;
            let mut smallest = i;
            if l < n && self.less(l, smallest) {
                smallest = l;
            }
            if r < n && self.less(r, smallest) {
                smallest = r;
            }
            if smallest == i {
                return;
            }
            self.swap(i, smallest);
            i = smallest;
        }
    }

    /// Writes the summary as text: a header line, then one counter per line
    /// as `row col count overestimation last_update`, in slot order.
    pub fn write_text(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "summary {} {} {} {}",
            self.capacity,
            self.total_weight,
            self.clock,
            self.slots.len()
        );
        for c in &self.slots {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                c.item.row, c.item.col, c.count, c.overestimation, c.last_update
            );
        }
    }

    /// Reads a summary written by [`write_text`](Self::write_text).
    /// `lines` yields `(line number, text)`.
    pub fn read_text<'a>(
        lines: &mut impl Iterator<Item = (usize, &'a str)>,
        source: &str,
    ) -> Result<Self> {
        let (n, header) = lines
            .next()
            .ok_or_else(|| CropError::parse(source, 0, "missing summary header"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 5 || f[0] != "summary" {
            return Err(CropError::parse(
                source,
                n,
                "expected `summary capacity total clock len`",
            ));
        }
        let num = |s: &str, line: usize| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| CropError::parse(source, line, format!("bad number `{s}`")))
        };
        let int = |s: &str, line: usize| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| CropError::parse(source, line, format!("bad integer `{s}`")))
        };
        let mut summary = SpaceSavingSummary::new(int(f[1], n)? as usize)?;
        let total = num(f[2], n)?;
        let clock = int(f[3], n)?;
        let len = int(f[4], n)? as usize;
        if len > summary.capacity {
            return Err(CropError::parse(source, n, "more counters than capacity"));
        }
        for _ in 0..len {
            let (n, line) = lines
                .next()
                .ok_or_else(|| CropError::parse(source, 0, "truncated summary"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(CropError::parse(
                    source,
                    n,
                    "expected `row col count over last_update`",
                ));
            }
            let item = Entry::new(int(f[0], n)? as u32, int(f[1], n)? as u32);
            let counter = Counter {
                item,
                count: num(f[2], n)?,
                overestimation: num(f[3], n)?,
                last_update: int(f[4], n)?,
            };
            if summary.find(item).is_some() {
                return Err(CropError::parse(
                    source,
                    n,
                    format!("duplicate item {item}"),
                ));
            }
            let slot = summary.slots.len();
            summary.slots.push(counter);
            if let Some(map) = &mut summary.index {
                map.insert(item, slot as u32);
            }
            summary.heap.push(slot as u32);
            summary.heap_pos.push(slot as u32);
            summary.sift_up(slot);
        }
        summary.total_weight = total;
        summary.clock = clock;
        Ok(summary)
    }
}
