//! Brute-force ground truth and synthetic workloads.
//!
//! Nothing here touches the hashing or sketch modules.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{CropError, Result};
use crate::pairs::Transaction;
use crate::sparse::{Dims, Entry, Index, OuterProductSource, OuterProducts, SparseVector};

/// Refuse exact products with more terms than this unless told otherwise.
pub const DEFAULT_TERM_CAP: u64 = 100_000_000;

/// Rank-`i` weight `c / i^z` for `i` in `1..=d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfModel {
    pub c: f64,
    pub z: f64,
    pub d: usize,
}

impl ZipfModel {
    pub fn new(c: f64, z: f64, d: usize) -> Result<Self> {
        let m = ZipfModel { c, z, d };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(CropError::Config(format!(
                "Zipf scale must be positive, got {}",
                self.c
            )));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(CropError::Config(format!(
                "Zipf exponent must be positive, got {}",
                self.z
            )));
        }
        if self.d == 0 {
            return Err(CropError::Config(
                "Zipf model needs at least one entry".into(),
            ));
        }
        Ok(())
    }

    /// Weight of rank `i`, counted from 1.
    pub fn weight(&self, i: usize) -> f64 {
        self.c / (i as f64).powf(self.z)
    }
}

/// Exact entry weights of a finished stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactProduct {
    weights: HashMap<Entry, f64>,
}

impl ExactProduct {
    pub fn from_map(mut weights: HashMap<Entry, f64>) -> Self {
        weights.retain(|_, w| *w != 0.0);
        ExactProduct { weights }
    }

    pub fn get(&self, e: Entry) -> f64 {
        self.weights.get(&e).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Entry, f64)> + '_ {
        self.weights.iter().map(|(&e, &w)| (e, w))
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Sums every outer product of `source` into a map, refusing streams with
/// more than `cap` terms.
pub fn exact_product(source: &dyn OuterProductSource, cap: u64) -> Result<ExactProduct> {
    let mut weights: HashMap<Entry, f64> = HashMap::new();
    let mut terms = 0u64;
    source.scan(&mut |a, b| {
        terms += a.nnz() as u64 * b.nnz() as u64;
        if terms > cap {
            return Err(CropError::Resource(format!(
                "exact product exceeds {cap} terms"
            )));
        }
        for (i, x) in a.iter() {
            for (j, y) in b.iter() {
                *weights.entry(Entry::new(i, j)).or_insert(0.0) += x * y;
            }
        }
        Ok(())
    })?;
    Ok(ExactProduct::from_map(weights))
}

/// Pair supports `sup({i, j})`, `i < j`, by counting.
pub fn exact_pair_supports(transactions: &[Transaction]) -> ExactProduct {
    let mut weights: HashMap<Entry, f64> = HashMap::new();
    for t in transactions {
        let items = t.items();
        for (x, &i) in items.iter().enumerate() {
            for &j in &items[x + 1..] {
                *weights.entry(Entry::new(i, j)).or_insert(0.0) += 1.0;
            }
        }
    }
    ExactProduct::from_map(weights)
}

/// The `k` heaviest entries, by weight descending, then row and column.
pub fn exact_top(prod: &ExactProduct, k: usize) -> Vec<(Entry, f64)> {
    let mut all: Vec<(Entry, f64)> = prod.iter().collect();
    all.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    all.truncate(k);
    all
}

/// Generated stream plus the planted weights, heaviest first.
#[derive(Debug, Clone)]
pub struct ZipfStream {
    pub stream: OuterProducts,
    pub truth: Vec<(Entry, f64)>,
}

/// Plants the `d` Zipf weights on distinct uniform entries of `dims`.
///
/// With `outer_count = None` every entry gets its own outer product
/// `e_i (w e_j)`. With `Some(m)` the rows are spread round-robin over `m`
/// products; each product is `e_r` times a row vector holding its share of
/// every planted entry of row `r`, so a row split over `s` products
/// contributes `w/s` per product.
pub fn gen_zipf_stream(
    model: ZipfModel,
    dims: Dims,
    outer_count: Option<usize>,
    seed: u64,
) -> Result<ZipfStream> {
    model.validate()?;
    let cells = (dims.rows as u128) * (dims.cols as u128);
    if model.d as u128 > cells {
        return Err(CropError::Config(format!(
            "{} distinct entries do not fit in {}x{}",
            model.d, dims.rows, dims.cols
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = sample_entries(&mut rng, dims, model.d);
    let truth: Vec<(Entry, f64)> = entries
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, model.weight(i + 1)))
        .collect();

    let mut stream = OuterProducts::new(dims);
    match outer_count {
        None => {
            let mut order: Vec<usize> = (0..truth.len()).collect();
            order.shuffle(&mut rng);
            for i in order {
                let (e, w) = truth[i];
                stream.push(
                    SparseVector::new(dims.rows, vec![(e.row, 1.0)])?,
                    SparseVector::new(dims.cols, vec![(e.col, w)])?,
                )?;
            }
        }
        Some(m) => {
            let mut by_row: HashMap<Index, Vec<(Index, f64)>> = HashMap::new();
            for &(e, w) in &truth {
                by_row.entry(e.row).or_default().push((e.col, w));
            }
            let mut rows: Vec<Index> = by_row.keys().copied().collect();
            rows.sort_unstable();
            rows.shuffle(&mut rng);
            if m < rows.len() {
                return Err(CropError::Config(format!(
                    "{m} outer products cannot express entries spread over {} rows",
                    rows.len()
                )));
            }
            let mut products = Vec::with_capacity(m);
            for p in 0..m {
                let r = rows[p % rows.len()];
                let share = (m - 1 - p % rows.len()) / rows.len() + 1;
                let mut cols: Vec<(Index, f64)> = by_row[&r]
                    .iter()
                    .map(|&(j, w)| (j, w / share as f64))
                    .collect();
                cols.sort_unstable_by_key(|&(j, _)| j);
                products.push((r, cols));
            }
            products.shuffle(&mut rng);
            for (r, cols) in products {
                stream.push(
                    SparseVector::new(dims.rows, vec![(r, 1.0)])?,
                    SparseVector::new(dims.cols, cols)?,
                )?;
            }
        }
    }
    Ok(ZipfStream { stream, truth })
}

fn sample_entries(rng: &mut ChaCha8Rng, dims: Dims, d: usize) -> Vec<Entry> {
    let cells = (dims.rows as u128) * (dims.cols as u128);
    let mut out = Vec::with_capacity(d);
    if (d as u128) * 2 <= cells {
        let mut seen = HashSet::with_capacity(d);
        while out.len() < d {
            let e = Entry::new(
                rng.random_range(0..dims.rows as u64) as Index,
                rng.random_range(0..dims.cols as u64) as Index,
            );
            if seen.insert(e) {
                out.push(e);
            }
        }
    } else {
        // dense request: the grid is at most 2d cells
        let mut all: Vec<Entry> = (0..dims.rows as u64)
            .flat_map(|i| (0..dims.cols as u64).map(move |j| Entry::new(i as Index, j as Index)))
            .collect();
        all.shuffle(rng);
        all.truncate(d);
        out = all;
    }
    out
}

/// `count` products of 0/1 vectors with exactly `a_nnz` and `b_nnz`
/// uniformly placed nonzeros.
pub fn gen_uniform_stream(
    dims: Dims,
    count: usize,
    a_nnz: usize,
    b_nnz: usize,
    seed: u64,
) -> Result<OuterProducts> {
    if a_nnz > dims.rows || b_nnz > dims.cols {
        return Err(CropError::Config(format!(
            "cannot place {a_nnz}x{b_nnz} nonzeros in {}x{}",
            dims.rows, dims.cols
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = OuterProducts::new(dims);
    for _ in 0..count {
        let a = rand::seq::index::sample(&mut rng, dims.rows, a_nnz);
        let b = rand::seq::index::sample(&mut rng, dims.cols, b_nnz);
        let a: Vec<Index> = a.into_iter().map(|x| x as Index).collect();
        let b: Vec<Index> = b.into_iter().map(|x| x as Index).collect();
        stream.push(
            SparseVector::from_unsorted(dims.rows, a.into_iter().map(|i| (i, 1.0)).collect())?.0,
            SparseVector::from_unsorted(dims.cols, b.into_iter().map(|i| (i, 1.0)).collect())?.0,
        )?;
    }
    Ok(stream)
}

/// Transaction lengths uniform in `2..=max_len` (clamped to the universe),
/// items drawn from a Zipf law with exponent `z` over `items` ids.
pub fn gen_zipf_transactions(
    items: usize,
    tx_count: usize,
    z: f64,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Transaction>> {
    if tx_count == 0 {
        return Ok(Vec::new());
    }
    if items == 0 || max_len == 0 {
        return Err(CropError::Config(
            "transactions need at least one item".into(),
        ));
    }
    let dist = Zipf::new(items as f64, z)
        .map_err(|e| CropError::Config(format!("item distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_len = max_len.min(items);
    let min_len = 2.min(max_len);
    let mut out = Vec::with_capacity(tx_count);
    for _ in 0..tx_count {
        let len = rng.random_range(min_len..=max_len);
        let mut set = HashSet::with_capacity(len);
        // Rejection of repeats; bounded so very skewed laws cannot stall.
        let mut attempts = 0;
        while set.len() < len && attempts < 64 * len {
            set.insert(dist.sample(&mut rng) as Index - 1);
            attempts += 1;
        }
        let (t, _) = Transaction::new(set.into_iter().collect());
        out.push(t);
    }
    Ok(out)
}

/// Least-squares slope of `ln w` against `ln rank` for weights listed by rank.
pub fn rank_weight_slope(weights: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (((i + 1) as f64).ln(), w.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
