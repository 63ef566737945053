//! Enumerating the entries of one outer product that hash into a bucket range.
//!
//! Both input vectors are sorted by the hash of their indices into arrays
//! `H_a` and `H_b`. An entry `(i, j)` hashes into `[q, r)` exactly when
//! `h_a(i) + h_b(j)` lies in `[q, r)` or in `[kappa + q, kappa + r)`, since
//! the sum of two bucket numbers is below `2 * kappa`. Walking `H_a` in
//! ascending order, the matching part of `H_b` for each target range is a
//! window that only ever slides left, so two cursors per range suffice and
//! the whole scan costs `O(|a| + |b| + output)` on top of sorting.

use crate::error::{CropError, Result};
use crate::hashing::IndexHash;
use crate::sparse::{Entry, Index, SparseVector};

/// A half-open bucket range `[q, r)` owned by one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WorkerAssignment {
    q: usize,
    r: usize,
    kappa: usize,
}

impl WorkerAssignment {
    pub fn new(q: usize, r: usize, kappa: usize) -> Result<Self> {
        if q > r || r > kappa {
            return Err(CropError::Config(format!(
                "bucket interval [{q}, {r}) is not inside [0, {kappa})"
            )));
        }
        Ok(WorkerAssignment { q, r, kappa })
    }

    pub fn full(kappa: usize) -> Self {
        WorkerAssignment {
            q: 0,
            r: kappa,
            kappa,
        }
    }

    /// Splits `[0, kappa)` into `workers` contiguous ranges
    /// `[floor(c * kappa / K), floor((c + 1) * kappa / K))`.
    pub fn partition(kappa: usize, workers: usize) -> Result<Vec<Self>> {
        if workers == 0 {
            return Err(CropError::Config("at least one worker is required".into()));
        }
        if workers > kappa {
            return Err(CropError::Config(format!(
                "{workers} workers cannot share {kappa} buckets"
            )));
        }
        let bound = |c: usize| ((c as u128 * kappa as u128) / workers as u128) as usize;
        Ok((0..workers)
            .map(|c| WorkerAssignment {
                q: bound(c),
                r: bound(c + 1),
                kappa,
            })
            .collect())
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.r - self.q
    }

    pub fn is_empty(&self) -> bool {
        self.q == self.r
    }

    pub fn contains(&self, bucket: usize) -> bool {
        self.q <= bucket && bucket < self.r
    }
}

/// Which entries of an outer product take part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntryFilter {
    #[default]
    All,
    /// Only entries with `row < col`, as for item pairs of a transaction.
    AboveDiagonal,
}

impl EntryFilter {
    #[inline]
    pub fn keeps(self, e: Entry) -> bool {
        match self {
            EntryFilter::All => true,
            EntryFilter::AboveDiagonal => e.row < e.col,
        }
    }
}

/// One element of a hash-sorted index array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashedIndex {
    pub hash: usize,
    pub index: Index,
    pub value: f64,
}

/// Sort `v`'s nonzero indices by `h`, ties in ascending index order.
pub fn bucket_sort_indices(v: &SparseVector, h: &IndexHash) -> Vec<HashedIndex> {
    let mut out = Vec::with_capacity(v.nnz());
    let mut counts = Vec::new();
    let mut unsorted = Vec::new();
    fill_hashed(v, h, &mut unsorted);
    sort_by_hash(&unsorted, h.kappa(), 8 * v.nnz(), &mut counts, &mut out);
    out
}

fn fill_hashed(v: &SparseVector, h: &IndexHash, out: &mut Vec<HashedIndex>) {
    out.clear();
    out.extend(v.iter().map(|(index, value)| HashedIndex {
        hash: h.hash(index),
        index,
        value,
    }));
}

/// Stable sort of `input` by hash. Counting sort when `kappa` is within
/// `bucket_limit`, a comparison sort otherwise.
fn sort_by_hash(
    input: &[HashedIndex],
    kappa: usize,
    bucket_limit: usize,
    counts: &mut Vec<u32>,
    out: &mut Vec<HashedIndex>,
) {
    out.clear();
    if kappa <= bucket_limit {
        counts.clear();
        counts.resize(kappa + 1, 0);
        for x in input {
            counts[x.hash + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        out.resize(
            input.len(),
            HashedIndex {
                hash: 0,
                index: 0,
                value: 0.0,
            },
        );
        for x in input {
            let slot = &mut counts[x.hash];
            out[*slot as usize] = *x;
            *slot += 1;
        }
    } else {
        out.extend_from_slice(input);
        out.sort_by_key(|x| x.hash);
    }
}

/// Work counters of an [`Enumerator`], accumulated across calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnumStats {
    /// Elements of `H_a` visited.
    pub outer_steps: u64,
    /// Cursor moves over `H_b`.
    pub cursor_moves: u64,
    /// Candidate entries inside the target ranges, before any filter.
    pub candidates: u64,
}

impl EnumStats {
    pub fn total(&self) -> u64 {
        self.outer_steps + self.cursor_moves + self.candidates
    }
}

/// Reusable scratch space for interval enumeration.
#[derive(Debug, Default)]
pub struct Enumerator {
    unsorted: Vec<HashedIndex>,
    counts: Vec<u32>,
    ha: Vec<HashedIndex>,
    hb: Vec<HashedIndex>,
    stats: EnumStats,
}

impl Enumerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> EnumStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = EnumStats::default();
    }

    fn prepare(
        &mut self,
        a: &SparseVector,
        b: &SparseVector,
        h_a: &IndexHash,
        h_b: &IndexHash,
        kappa: usize,
    ) {
        let limit = 8 * (a.nnz() + b.nnz());
        if std::ptr::eq(a, b) {
            // Self-join: one pass over the items evaluates both hashes.
            self.unsorted.clear();
            self.hb.clear();
            for (index, value) in a.iter() {
                self.unsorted.push(HashedIndex {
                    hash: h_a.hash(index),
                    index,
                    value,
                });
                self.hb.push(HashedIndex {
                    hash: h_b.hash(index),
                    index,
                    value,
                });
            }
            sort_by_hash(&self.unsorted, kappa, limit, &mut self.counts, &mut self.ha);
            std::mem::swap(&mut self.unsorted, &mut self.hb);
            sort_by_hash(&self.unsorted, kappa, limit, &mut self.counts, &mut self.hb);
        } else {
            fill_hashed(a, h_a, &mut self.unsorted);
            sort_by_hash(&self.unsorted, kappa, limit, &mut self.counts, &mut self.ha);
            fill_hashed(b, h_b, &mut self.unsorted);
            sort_by_hash(&self.unsorted, kappa, limit, &mut self.counts, &mut self.hb);
        }
    }

    /// Calls `f(entry, value, bucket)` for every nonzero entry of `ab` kept by
    /// `filter` whose bucket lies in `w`, each exactly once.
    ///
    /// For a fixed bucket the visiting order depends only on the inputs and
    /// the hash functions, never on `w`.
    pub fn for_each<F>(
        &mut self,
        a: &SparseVector,
        b: &SparseVector,
        h_a: &IndexHash,
        h_b: &IndexHash,
        w: WorkerAssignment,
        filter: EntryFilter,
        mut f: F,
    ) where
        F: FnMut(Entry, f64, usize),
    {
        let kappa = w.kappa();
        assert!(
            h_a.kappa() == kappa && h_b.kappa() == kappa,
            "hash functions and interval disagree on kappa"
        );
        if w.is_empty() || a.is_empty() || b.is_empty() {
            return;
        }
        self.prepare(a, b, h_a, h_b, kappa);
        let ranges = [(w.q(), w.r(), 0), (kappa + w.q(), kappa + w.r(), kappa)];
        let hb = &self.hb;
        let n_b = hb.len();
        let mut cursors = [(n_b, n_b); 2];
        let mut stats = self.stats;
        for ea in &self.ha {
            stats.outer_steps += 1;
            let x = ea.hash;
            for (t, &(lo_t, hi_t, shift)) in ranges.iter().enumerate() {
                let (lo, hi) = &mut cursors[t];
                while *lo > 0 && x + hb[*lo - 1].hash >= lo_t {
                    *lo -= 1;
                    stats.cursor_moves += 1;
                }
                while *hi > 0 && x + hb[*hi - 1].hash >= hi_t {
                    *hi -= 1;
                    stats.cursor_moves += 1;
                }
                // The `hi` cursor never passes `lo` since hi_t >= lo_t.
                for eb in &hb[*lo..*hi] {
                    stats.candidates += 1;
                    let e = Entry::new(ea.index, eb.index);
                    if filter.keeps(e) {
                        f(e, ea.value * eb.value, x + eb.hash - shift);
                    }
                }
            }
        }
        self.stats = stats;
    }

    /// Number of entries [`for_each`](Self::for_each) would visit.
    pub fn count(
        &mut self,
        a: &SparseVector,
        b: &SparseVector,
        h_a: &IndexHash,
        h_b: &IndexHash,
        w: WorkerAssignment,
        filter: EntryFilter,
    ) -> u64 {
        if filter != EntryFilter::All {
            let mut n = 0;
            self.for_each(a, b, h_a, h_b, w, filter, |_, _, _| n += 1);
            return n;
        }
        let kappa = w.kappa();
        assert!(
            h_a.kappa() == kappa && h_b.kappa() == kappa,
            "hash functions and interval disagree on kappa"
        );
        if w.is_empty() || a.is_empty() || b.is_empty() {
            return 0;
        }
        self.prepare(a, b, h_a, h_b, kappa);
        let ranges = [(w.q(), w.r()), (kappa + w.q(), kappa + w.r())];
        let hb = &self.hb;
        let n_b = hb.len();
        let mut cursors = [(n_b, n_b); 2];
        let mut total = 0u64;
        for ea in &self.ha {
            self.stats.outer_steps += 1;
            let x = ea.hash;
            for (t, &(lo_t, hi_t)) in ranges.iter().enumerate() {
                let (lo, hi) = &mut cursors[t];
                while *lo > 0 && x + hb[*lo - 1].hash >= lo_t {
                    *lo -= 1;
                    self.stats.cursor_moves += 1;
                }
                while *hi > 0 && x + hb[*hi - 1].hash >= hi_t {
                    *hi -= 1;
                    self.stats.cursor_moves += 1;
                }
                total += (*hi - *lo) as u64;
            }
        }
        total
    }
}

/// The entries of `ab` with bucket in `w`, with their values.
pub fn enumerate_interval(
    a: &SparseVector,
    b: &SparseVector,
    h_a: &IndexHash,
    h_b: &IndexHash,
    w: WorkerAssignment,
) -> Vec<(Entry, f64)> {
    let mut out = Vec::new();
    Enumerator::new().for_each(a, b, h_a, h_b, w, EntryFilter::All, |e, v, _| {
        out.push((e, v))
    });
    out
}

/// Length of [`enumerate_interval`]'s output, without materialising it.
pub fn count_interval(
    a: &SparseVector,
    b: &SparseVector,
    h_a: &IndexHash,
    h_b: &IndexHash,
    w: WorkerAssignment,
) -> u64 {
    Enumerator::new().count(a, b, h_a, h_b, w, EntryFilter::All)
}
