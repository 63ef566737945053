//! Sparse vectors, output-entry identities and outer-product streams.
//!
//! A product `AB` is consumed as the sequence of outer products
//! `a_k b_k`, where `a_k` is column `k` of `A` and `b_k` is row `k` of `B`.
//! Streams are single forward passes: a consumer calls
//! [`OuterProductSource::scan`] once per pass and sees every pair in order.
//!
//! On disk, each factor is a *triple file*:
//!
//! ```text
//! rows cols kcount
//! k idx value
//! ...
//! ```
//!
//! The header is the stored matrix's own shape plus the length of the shared
//! inner dimension. For the left factor (column side) `cols == kcount` and
//! `idx` is a row index; for the right factor (row side) `rows == kcount` and
//! `idx` is a column index. Lines are sorted by `k`; blank lines and lines
//! starting with `#` are ignored.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{CropError, Result};

/// Row or column coordinate. Universes are limited to `u32` indices.
pub type Index = u32;

/// Largest vector dimension representable with [`Index`].
pub const MAX_DIM: usize = 1 << 32;

/// An output coordinate `(row, col)` of a matrix product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Entry {
    pub row: Index,
    pub col: Index,
}

impl Entry {
    pub const fn new(row: Index, col: Index) -> Self {
        Entry { row, col }
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// A sparse real vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<Index>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from `(index, value)` pairs that are already sorted.
    ///
    /// Rejects unsorted or duplicate indices, indices outside `[0, dim)`,
    /// zeros and non-finite values.
    pub fn new(dim: usize, entries: Vec<(Index, f64)>) -> Result<Self> {
        check_dim(dim)?;
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            if (i as usize) >= dim {
                return Err(CropError::Dimension(format!(
                    "index {i} outside vector dimension {dim}"
                )));
            }
            if let Some(&last) = indices.last() {
                if i <= last {
                    return Err(CropError::Dimension(format!(
                        "indices must be strictly increasing ({last} then {i})"
                    )));
                }
            }
            if v == 0.0 || !v.is_finite() {
                return Err(CropError::Dimension(format!(
                    "index {i} has value {v}; stored values must be finite and nonzero"
                )));
            }
            indices.push(i);
            values.push(v);
        }
        Ok(SparseVector {
            dim,
            indices,
            values,
        })
    }

    /// Builds a vector from pairs in any order, dropping explicit zeros.
    ///
    /// Duplicate indices are an error. Returns the vector and the number of
    /// zeros dropped.
    pub fn from_unsorted(dim: usize, mut entries: Vec<(Index, f64)>) -> Result<(Self, usize)> {
        let before = entries.len();
        entries.retain(|&(_, v)| v != 0.0);
        let dropped = before - entries.len();
        entries.sort_by_key(|&(i, _)| i);
        Ok((SparseVector::new(dim, entries)?, dropped))
    }

    /// The 0/1 indicator vector of a sorted, duplicate-free index set.
    pub fn indicator(dim: usize, items: &[Index]) -> Result<Self> {
        SparseVector::new(dim, items.iter().map(|&i| (i, 1.0)).collect())
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Index] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: Index) -> f64 {
        match self.indices.binary_search(&i) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (Index, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim > MAX_DIM {
        return Err(CropError::Dimension(format!(
            "dimension {dim} exceeds the supported maximum {MAX_DIM}"
        )));
    }
    Ok(())
}

/// Number of nonzero entries in the outer product `ab`.
pub fn outer_product_nnz(a: &SparseVector, b: &SparseVector) -> u64 {
    a.nnz() as u64 * b.nnz() as u64
}

/// Shape of the product: entries live in `[0, rows) x [0, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
}

impl Dims {
    pub fn new(rows: usize, cols: usize) -> Self {
        Dims { rows, cols }
    }

    pub fn square(n: usize) -> Self {
        Dims { rows: n, cols: n }
    }
}

/// One column of `A` paired with the matching row of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterProduct {
    pub a: SparseVector,
    pub b: SparseVector,
}

/// Anything that can replay a sequence of outer products, one forward pass
/// per [`scan`](OuterProductSource::scan) call.
///
/// Every pass must deliver the same pairs in the same order; workers rely on
/// that to stay consistent without talking to each other.
pub trait OuterProductSource: Sync {
    fn dims(&self) -> Dims;

    /// Visits every pair in order. A visitor error aborts the pass.
    ///
    /// Sources whose left and right vectors coincide (self-joins) pass the
    /// same reference twice.
    fn scan(&self, visit: &mut dyn FnMut(&SparseVector, &SparseVector) -> Result<()>)
        -> Result<()>;
}

/// A fully materialised stream of outer products.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterProducts {
    dims: Dims,
    pairs: Vec<OuterProduct>,
}

impl OuterProducts {
    pub fn new(dims: Dims) -> Self {
        OuterProducts {
            dims,
            pairs: Vec::new(),
        }
    }

    pub fn from_pairs(dims: Dims, pairs: Vec<OuterProduct>) -> Result<Self> {
        let mut s = OuterProducts::new(dims);
        for p in pairs {
            s.push(p.a, p.b)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, a: SparseVector, b: SparseVector) -> Result<()> {
        if a.dim() != self.dims.rows || b.dim() != self.dims.cols {
            return Err(CropError::Dimension(format!(
                "outer product {} has shape {}x{}, stream expects {}x{}",
                self.pairs.len(),
                a.dim(),
                b.dim(),
                self.dims.rows,
                self.dims.cols
            )));
        }
        self.pairs.push(OuterProduct { a, b });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[OuterProduct] {
        &self.pairs
    }

    /// Total number of nonzero terms over all outer products.
    pub fn total_terms(&self) -> u64 {
        self.pairs
            .iter()
            .map(|p| outer_product_nnz(&p.a, &p.b))
            .sum()
    }

    /// Concatenation of two streams with equal shape.
    pub fn concat(&self, other: &OuterProducts) -> Result<OuterProducts> {
        if self.dims != other.dims {
            return Err(CropError::Dimension(
                "cannot concatenate streams of different shape".into(),
            ));
        }
        let mut pairs = self.pairs.clone();
        pairs.extend(other.pairs.iter().cloned());
        Ok(OuterProducts {
            dims: self.dims,
            pairs,
        })
    }

    /// Writes the stream as a pair of triple files.
    pub fn write_triple_files(&self, a_path: &Path, b_path: &Path) -> Result<()> {
        let kcount = self.pairs.len();
        let write = |path: &Path, side: Side, pick: &dyn Fn(&OuterProduct) -> &SparseVector| {
            let file = File::create(path).map_err(|e| CropError::io(path, e))?;
            let mut w = std::io::BufWriter::new(file);
            let vectors = self.pairs.iter().map(pick);
            let dim = match side {
                Side::Columns => self.dims.rows,
                Side::Rows => self.dims.cols,
            };
            write_triples(&mut w, side, dim, kcount, vectors)
                .map_err(|e| CropError::io(path, e))?;
            w.flush().map_err(|e| CropError::io(path, e))
        };
        write(a_path, Side::Columns, &|p| &p.a)?;
        write(b_path, Side::Rows, &|p| &p.b)
    }
}

impl OuterProductSource for OuterProducts {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn scan(
        &self,
        visit: &mut dyn FnMut(&SparseVector, &SparseVector) -> Result<()>,
    ) -> Result<()> {
        for p in &self.pairs {
            visit(&p.a, &p.b)?;
        }
        Ok(())
    }
}

/// Which factor a triple file stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Left factor `A`, stored column-major as `k i v`.
    Columns,
    /// Right factor `B`, stored row-major as `k j v`.
    Rows,
}

/// Parsed header of a triple file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleHeader {
    pub rows: usize,
    pub cols: usize,
    pub kcount: usize,
}

impl TripleHeader {
    /// Dimension of the vectors this file yields.
    pub fn vector_dim(&self, side: Side) -> usize {
        match side {
            Side::Columns => self.rows,
            Side::Rows => self.cols,
        }
    }
}

/// Streaming reader for one triple file: yields the `kcount` vectors in
/// order of `k`, with empty vectors for `k` values that have no lines.
pub struct TripleReader<R> {
    name: String,
    side: Side,
    header: TripleHeader,
    lines: std::io::Lines<R>,
    line_no: usize,
    next_k: usize,
    pending: Option<(usize, Index, f64, usize)>,
    zeros_dropped: u64,
    done: bool,
}

impl<R: BufRead> TripleReader<R> {
    pub fn new(reader: R, side: Side, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let mut lines = reader.lines();
        let mut line_no = 0;
        let header = loop {
            line_no += 1;
            let line = match lines.next() {
                None => {
                    return Err(CropError::parse(
                        &name,
                        line_no,
                        "missing header `rows cols kcount`",
                    ))
                }
                Some(l) => l.map_err(|e| CropError::parse(&name, line_no, e.to_string()))?,
            };
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            break parse_header(&name, line_no, t)?;
        };
        let (shared, what) = match side {
            Side::Columns => (header.cols, "cols"),
            Side::Rows => (header.rows, "rows"),
        };
        if shared != header.kcount {
            return Err(CropError::Dimension(format!(
                "{name}: header {what}={shared} disagrees with kcount={}",
                header.kcount
            )));
        }
        check_dim(header.vector_dim(side))?;
        Ok(TripleReader {
            name,
            side,
            header,
            lines,
            line_no,
            next_k: 0,
            pending: None,
            zeros_dropped: 0,
            done: false,
        })
    }

    pub fn header(&self) -> TripleHeader {
        self.header
    }

    /// Explicit zero values skipped so far.
    pub fn zeros_dropped(&self) -> u64 {
        self.zeros_dropped
    }

    fn next_triple(&mut self) -> Result<Option<(usize, Index, f64, usize)>> {
        if let Some(p) = self.pending.take() {
            return Ok(Some(p));
        }
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            self.line_no += 1;
            let line =
                line.map_err(|e| CropError::parse(&self.name, self.line_no, e.to_string()))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut fields = t.split_whitespace();
            let (Some(k), Some(i), Some(v), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(CropError::parse(
                    &self.name,
                    self.line_no,
                    "expected `k index value`",
                ));
            };
            let ln = self.line_no;
            let k: usize = k
                .parse()
                .map_err(|_| CropError::parse(&self.name, ln, format!("bad k `{k}`")))?;
            let i: Index = i
                .parse()
                .map_err(|_| CropError::parse(&self.name, ln, format!("bad index `{i}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| CropError::parse(&self.name, ln, format!("bad value `{v}`")))?;
            if k >= self.header.kcount {
                return Err(CropError::parse(
                    &self.name,
                    ln,
                    format!("k={k} outside kcount={}", self.header.kcount),
                ));
            }
            let dim = self.header.vector_dim(self.side);
            if (i as usize) >= dim {
                return Err(CropError::parse(
                    &self.name,
                    ln,
                    format!("index {i} outside dimension {dim}"),
                ));
            }
            if !v.is_finite() {
                return Err(CropError::parse(
                    &self.name,
                    ln,
                    format!("non-finite value {v}"),
                ));
            }
            if v == 0.0 {
                self.zeros_dropped += 1;
                log::warn!("{}:{}: dropping explicit zero", self.name, ln);
                if k < self.next_k {
                    return Err(CropError::parse(
                        &self.name,
                        ln,
                        "lines are not sorted by k",
                    ));
                }
                continue;
            }
            return Ok(Some((k, i, v, ln)));
        }
    }

    fn read_vector(&mut self) -> Result<SparseVector> {
        let k = self.next_k;
        let mut entries: Vec<(Index, f64, usize)> = Vec::new();
        while let Some(t) = self.next_triple()? {
            match t.0.cmp(&k) {
                std::cmp::Ordering::Less => {
                    return Err(CropError::parse(
                        &self.name,
                        t.3,
                        "lines are not sorted by k",
                    ));
                }
                std::cmp::Ordering::Greater => {
                    self.pending = Some(t);
                    break;
                }
                std::cmp::Ordering::Equal => entries.push((t.1, t.2, t.3)),
            }
        }
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                let line = w[0].2.max(w[1].2);
                return Err(CropError::parse(
                    &self.name,
                    line,
                    format!("duplicate index {} for k={k}", w[0].0),
                ));
            }
        }
        self.next_k += 1;
        SparseVector::new(
            self.header.vector_dim(self.side),
            entries.into_iter().map(|(i, v, _)| (i, v)).collect(),
        )
    }
}

impl<R: BufRead> Iterator for TripleReader<R> {
    type Item = Result<SparseVector>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || self.next_k >= self.header.kcount {
            if !self.done {
                self.done = true;
                // Any line left over belongs to an already finished k.
                match self.next_triple() {
                    Err(e) => return Some(Err(e)),
                    Ok(Some(t)) => {
                        return Some(Err(CropError::parse(
                            &self.name,
                            t.3,
                            "lines are not sorted by k",
                        )))
                    }
                    Ok(None) => {}
                }
            }
            return None;
        }
        let r = self.read_vector();
        if r.is_err() {
            self.done = true;
        }
        Some(r)
    }
}

fn parse_header(name: &str, line_no: usize, t: &str) -> Result<TripleHeader> {
    let nums: Vec<&str> = t.split_whitespace().collect();
    if nums.len() != 3 {
        return Err(CropError::parse(
            name,
            line_no,
            "header must be `rows cols kcount`",
        ));
    }
    let p = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| CropError::parse(name, line_no, format!("bad header field `{s}`")))
    };
    Ok(TripleHeader {
        rows: p(nums[0])?,
        cols: p(nums[1])?,
        kcount: p(nums[2])?,
    })
}

/// Writes `vectors` as a triple file for `side`.
pub fn write_triples<'a, W: Write>(
    w: &mut W,
    side: Side,
    dim: usize,
    kcount: usize,
    vectors: impl IntoIterator<Item = &'a SparseVector>,
) -> std::io::Result<()> {
    match side {
        Side::Columns => writeln!(w, "{dim} {kcount} {kcount}")?,
        Side::Rows => writeln!(w, "{kcount} {dim} {kcount}")?,
    }
    for (k, v) in vectors.into_iter().enumerate() {
        for (i, x) in v.iter() {
            writeln!(w, "{k} {i} {x}")?;
        }
    }
    Ok(())
}

fn open_reader(path: &Path, side: Side) -> Result<TripleReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| CropError::io(path, e))?;
    TripleReader::new(BufReader::new(file), side, path.display().to_string())
}

/// Counters collected while loading triple files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub zeros_dropped: u64,
}

/// Pairs up a column-side and a row-side reader into one stream.
fn zip_readers<RA: BufRead, RB: BufRead>(
    mut ra: TripleReader<RA>,
    mut rb: TripleReader<RB>,
    visit: &mut dyn FnMut(&SparseVector, &SparseVector) -> Result<()>,
) -> Result<LoadStats> {
    if ra.header().kcount != rb.header().kcount {
        return Err(CropError::Dimension(format!(
            "left factor has kcount {}, right factor has {}",
            ra.header().kcount,
            rb.header().kcount
        )));
    }
    loop {
        match (ra.next(), rb.next()) {
            (None, None) => break,
            (Some(a), Some(b)) => visit(&a?, &b?)?,
            (Some(Err(e)), None) | (None, Some(Err(e))) => return Err(e),
            _ => unreachable!("readers share kcount"),
        }
    }
    Ok(LoadStats {
        zeros_dropped: ra.zeros_dropped() + rb.zeros_dropped(),
    })
}

/// Loads a column-major left factor and a row-major right factor into memory.
pub fn load_column_row_streams(a_path: &Path, b_path: &Path) -> Result<(OuterProducts, LoadStats)> {
    let ra = open_reader(a_path, Side::Columns)?;
    let rb = open_reader(b_path, Side::Rows)?;
    let dims = Dims::new(ra.header().rows, rb.header().cols);
    let mut out = OuterProducts::new(dims);
    let stats = zip_readers(ra, rb, &mut |a, b| out.push(a.clone(), b.clone()))?;
    Ok((out, stats))
}

/// A pair of triple files re-read from disk on every pass.
///
/// Each scan opens its own file handles, so independent workers never share
/// a reader.
#[derive(Debug, Clone)]
pub struct TripleFiles {
    a_path: PathBuf,
    b_path: PathBuf,
    dims: Dims,
}

impl TripleFiles {
    pub fn open(a_path: impl Into<PathBuf>, b_path: impl Into<PathBuf>) -> Result<Self> {
        let a_path = a_path.into();
        let b_path = b_path.into();
        let ha = open_reader(&a_path, Side::Columns)?.header();
        let hb = open_reader(&b_path, Side::Rows)?.header();
        if ha.kcount != hb.kcount {
            return Err(CropError::Dimension(format!(
                "left factor has kcount {}, right factor has {}",
                ha.kcount, hb.kcount
            )));
        }
        Ok(TripleFiles {
            a_path,
            b_path,
            dims: Dims::new(ha.rows, hb.cols),
        })
    }
}

impl OuterProductSource for TripleFiles {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn scan(
        &self,
        visit: &mut dyn FnMut(&SparseVector, &SparseVector) -> Result<()>,
    ) -> Result<()> {
        let ra = open_reader(&self.a_path, Side::Columns)?;
        let rb = open_reader(&self.b_path, Side::Rows)?;
        zip_readers(ra, rb, visit).map(|_| ())
    }
}
