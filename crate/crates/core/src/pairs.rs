//! Frequent pairs as heavy above-diagonal entries of `sum_T v_T v_T^T`.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::engine::{run, EngineConfig, LoadReport, RankedEntry, SketchState};
use crate::error::{CropError, Result};
use crate::interval::EntryFilter;
use crate::oracle::{exact_top, ExactProduct};
use crate::sparse::{Dims, Entry, Index, OuterProductSource, SparseVector};

/// A set of item ids, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transaction {
    items: Vec<Index>,
}

impl Transaction {
    /// Sorts and deduplicates; also returns how many duplicates were removed.
    pub fn new(mut items: Vec<Index>) -> (Self, usize) {
        let before = items.len();
        items.sort_unstable();
        items.dedup();
        let dups = before - items.len();
        (Transaction { items }, dups)
    }

    pub fn items(&self) -> &[Index] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of unordered pairs, `s(s-1)/2`.
    pub fn pair_count(&self) -> u64 {
        let s = self.items.len() as u64;
        s * s.saturating_sub(1) / 2
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FimiStats {
    pub transactions: usize,
    pub duplicates_removed: usize,
    pub max_item: Option<Index>,
}

/// Parses FIMI text: one transaction per line, whitespace-separated ids.
/// Items at or above `universe` are rejected.
pub fn parse_fimi<R: BufRead>(
    reader: R,
    source: &str,
    universe: Option<usize>,
) -> Result<(Vec<Transaction>, FimiStats)> {
    let mut out = Vec::new();
    let mut stats = FimiStats::default();
    for (n, line) in reader.lines().enumerate() {
        let n = n + 1;
        let line = line.map_err(|e| CropError::parse(source, n, e.to_string()))?;
        let mut items = Vec::new();
        for tok in line.split_whitespace() {
            let item: Index = tok
                .parse()
                .map_err(|_| CropError::parse(source, n, format!("bad item id `{tok}`")))?;
            if let Some(u) = universe {
                if item as usize >= u {
                    return Err(CropError::parse(
                        source,
                        n,
                        format!("item {item} outside universe of {u} items"),
                    ));
                }
            }
            items.push(item);
        }
        let (t, dups) = Transaction::new(items);
        if dups > 0 {
            log::warn!("{source}:{n}: removed {dups} duplicate item(s)");
            stats.duplicates_removed += dups;
        }
        if let Some(&last) = t.items.last() {
            stats.max_item = Some(stats.max_item.map_or(last, |m| m.max(last)));
        }
        out.push(t);
    }
    stats.transactions = out.len();
    Ok((out, stats))
}

pub fn read_fimi(path: &Path, universe: Option<usize>) -> Result<(Vec<Transaction>, FimiStats)> {
    let file = std::fs::File::open(path).map_err(|e| CropError::io(path, e))?;
    parse_fimi(BufReader::new(file), &path.display().to_string(), universe)
}

pub fn write_fimi<W: Write>(mut w: W, transactions: &[Transaction]) -> std::io::Result<()> {
    for t in transactions {
        let mut first = true;
        for i in &t.items {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{i}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// The 0/1 vector of `t` on both sides.
pub fn transaction_to_outer(
    t: &Transaction,
    universe: usize,
) -> Result<(SparseVector, SparseVector)> {
    let v = SparseVector::indicator(universe, &t.items)?;
    Ok((v.clone(), v))
}

/// In-memory transaction stream. Each scan hands out the same vector as both
/// factors, so enumeration takes its self-join path.
#[derive(Debug, Clone)]
pub struct TransactionStream {
    universe: usize,
    vectors: Vec<SparseVector>,
}

impl TransactionStream {
    /// `universe` defaults to the largest item plus one.
    pub fn new(transactions: &[Transaction], universe: Option<usize>) -> Result<Self> {
        let max = transactions
            .iter()
            .filter_map(|t| t.items.last())
            .max()
            .map_or(0, |&m| m as usize + 1);
        let universe = universe.unwrap_or(max).max(1);
        if max > universe {
            return Err(CropError::Dimension(format!(
                "item {} outside universe of {universe} items",
                max - 1
            )));
        }
        let vectors = transactions
            .iter()
            .map(|t| SparseVector::indicator(universe, &t.items))
            .collect::<Result<_>>()?;
        Ok(TransactionStream { universe, vectors })
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl OuterProductSource for TransactionStream {
    fn dims(&self) -> Dims {
        Dims::square(self.universe)
    }

    fn scan(
        &self,
        visit: &mut dyn FnMut(&SparseVector, &SparseVector) -> Result<()>,
    ) -> Result<()> {
        for v in &self.vectors {
            visit(v, v)?;
        }
        Ok(())
    }
}

/// Engine run over transactions with the above-diagonal filter forced on.
pub fn mine_transactions(
    stream: &TransactionStream,
    config: &EngineConfig,
) -> Result<(SketchState, LoadReport)> {
    let mut config = config.clone();
    config.filter = EntryFilter::AboveDiagonal;
    run(stream, &config)
}

/// Reads a FIMI file and mines it.
pub fn mine(
    path: &Path,
    config: &EngineConfig,
    universe: Option<usize>,
) -> Result<(SketchState, LoadReport)> {
    let (txs, _) = read_fimi(path, universe)?;
    let stream = TransactionStream::new(&txs, universe)?;
    mine_transactions(&stream, config)
}

/// Share of `oracle_topk[..k]` found among the sketch's reported top `k`.
pub fn recall_at_k(state: &SketchState, oracle_topk: &[Entry], k: usize) -> Result<f64> {
    if oracle_topk.len() < k {
        return Err(CropError::Config(format!(
            "oracle lists {} entries, recall at {k} needs {k}",
            oracle_topk.len()
        )));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let reported: HashSet<Entry> = state.top_entries(k).into_iter().map(|r| r.entry).collect();
    let hits = oracle_topk[..k]
        .iter()
        .filter(|e| reported.contains(e))
        .count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBounds {
    pub entry: Entry,
    pub truth: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PairBounds {
    pub fn lower_over_true(&self) -> f64 {
        self.lower / self.truth
    }

    pub fn upper_over_true(&self) -> f64 {
        self.upper / self.truth
    }

    /// Zero when the upper bound is zero.
    pub fn lower_over_upper(&self) -> f64 {
        if self.upper > 0.0 {
            self.lower / self.upper
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRatioReport {
    pub rows: Vec<PairBounds>,
    /// Share of rows with `lower/upper >= 0.9`.
    pub fraction_tight: f64,
}

/// Bounds of the true top `k` entries and how tight they are.
pub fn bound_ratio_report(
    state: &SketchState,
    oracle: &ExactProduct,
    k: usize,
) -> BoundRatioReport {
    let rows: Vec<PairBounds> = exact_top(oracle, k)
        .into_iter()
        .map(|(entry, truth)| {
            let q = state.query(entry);
            PairBounds {
                entry,
                truth,
                lower: q.lower,
                upper: q.upper,
            }
        })
        .collect();
    let tight = rows.iter().filter(|r| r.lower_over_upper() >= 0.9).count();
    let fraction_tight = if rows.is_empty() {
        0.0
    } else {
        tight as f64 / rows.len() as f64
    };
    BoundRatioReport {
        rows,
        fraction_tight,
    }
}

/// `rank,item_i,item_j,lower,upper,cs_estimate[,true]`, ranks from 1.
pub fn write_report_csv<W: Write>(
    mut w: W,
    ranked: &[RankedEntry],
    truth: Option<&ExactProduct>,
) -> std::io::Result<()> {
    w.write_all(b"rank,item_i,item_j,lower,upper,cs_estimate")?;
    if truth.is_some() {
        w.write_all(b",true")?;
    }
    w.write_all(b"\n")?;
    for (rank, r) in ranked.iter().enumerate() {
        write!(
            w,
            "{},{},{},{},{},",
            rank + 1,
            r.entry.row,
            r.entry.col,
            r.lower,
            r.upper
        )?;
        if let Some(cs) = r.cs_estimate {
            write!(w, "{cs}")?;
        }
        if let Some(t) = truth {
            write!(w, ",{}", t.get(r.entry))?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}
