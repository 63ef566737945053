//! Count-Sketch accumulators indexed by bucket.
//!
//! Each bucket holds one signed accumulator. An entry `e` with value `v`
//! adds `v * s(e)` to the cell of its bucket; the estimate for `e` is the
//! cell times `s(e)`. A worker owns the cells of its bucket range only, so an
//! array covers a contiguous window `[offset, offset + len)` of `[0, kappa)`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{CropError, Result};
use crate::hashing::EntryHasher;
use crate::sparse::Entry;

#[derive(Debug, Clone, PartialEq)]
pub struct CountSketchArray {
    kappa: usize,
    offset: usize,
    cells: Vec<f64>,
}

impl CountSketchArray {
    /// All `kappa` cells, zeroed.
    pub fn new(kappa: usize) -> Self {
        Self::for_range(kappa, 0, kappa)
    }

    /// Cells for buckets `[q, r)` only.
    pub fn for_range(kappa: usize, q: usize, r: usize) -> Self {
        assert!(
            q <= r && r <= kappa,
            "range [{q}, {r}) outside [0, {kappa})"
        );
        CountSketchArray {
            kappa,
            offset: q,
            cells: vec![0.0; r - q],
        }
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn is_complete(&self) -> bool {
        self.offset == 0 && self.cells.len() == self.kappa
    }

    /// Adds `value * s(e)` to the cell of `bucket`, which must be `e`'s bucket.
    #[inline]
    pub fn update(&mut self, hasher: &EntryHasher, e: Entry, value: f64, bucket: usize) {
        debug_assert_eq!(bucket, hasher.bucket(e));
        self.cells[bucket - self.offset] += value * hasher.sign(e);
    }

    /// `cell[h(e)] * s(e)`.
    pub fn query(&self, hasher: &EntryHasher, e: Entry) -> f64 {
        let bucket = hasher.bucket(e);
        assert!(
            bucket >= self.offset && bucket < self.offset + self.cells.len(),
            "bucket {bucket} not held by this array"
        );
        self.cells[bucket - self.offset] * hasher.sign(e)
    }

    /// Cellwise sum with an array over the same window.
    pub fn add_assign(&mut self, other: &CountSketchArray) -> Result<()> {
        if self.kappa != other.kappa
            || self.offset != other.offset
            || self.cells.len() != other.cells.len()
        {
            return Err(CropError::Dimension(
                "Count-Sketch arrays cover different buckets".into(),
            ));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
        Ok(())
    }

    /// Appends the adjacent window `other`, which must start where `self` ends.
    pub fn extend(&mut self, other: &CountSketchArray) -> Result<()> {
        if self.kappa != other.kappa || other.offset != self.offset + self.cells.len() {
            return Err(CropError::Dimension(format!(
                "cannot append buckets starting at {} to buckets ending at {}",
                other.offset,
                self.offset + self.cells.len()
            )));
        }
        self.cells.extend_from_slice(&other.cells);
        Ok(())
    }

    /// One cell per line after a `cs kappa offset len` header.
    pub fn write_text(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "cs {} {} {}",
            self.kappa,
            self.offset,
            self.cells.len()
        );
        for c in &self.cells {
            let _ = writeln!(out, "{c}");
        }
    }

    pub fn read_text<'a>(
        lines: &mut impl Iterator<Item = (usize, &'a str)>,
        source: &str,
    ) -> Result<Self> {
        let (n, header) = lines
            .next()
            .ok_or_else(|| CropError::parse(source, 0, "missing Count-Sketch header"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| CropError::parse(source, n, format!("bad integer `{s}`")))
        };
        if f.len() != 4 || f[0] != "cs" {
            return Err(CropError::parse(
                source,
                n,
                "expected `cs kappa offset len`",
            ));
        }
        let (kappa, offset, len) = (int(f[1])?, int(f[2])?, int(f[3])?);
        if offset + len > kappa {
            return Err(CropError::parse(source, n, "cell window exceeds kappa"));
        }
        let mut cells = Vec::with_capacity(len);
        for _ in 0..len {
            let (n, line) = lines
                .next()
                .ok_or_else(|| CropError::parse(source, 0, "truncated Count-Sketch cells"))?;
            cells.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| CropError::parse(source, n, format!("bad cell `{line}`")))?,
            );
        }
        Ok(CountSketchArray {
            kappa,
            offset,
            cells,
        })
    }

    /// Little-endian binary: `kappa`, `offset`, `len` as u64, then the cells as f64.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for x in [
            self.kappa as u64,
            self.offset as u64,
            self.cells.len() as u64,
        ] {
            w.write_all(&x.to_le_bytes())?;
        }
        for c in &self.cells {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut buf)
                .map_err(|e| CropError::parse("count-sketch binary", 0, e.to_string()))?;
            Ok(buf)
        };
        let kappa = u64::from_le_bytes(next(r)?) as usize;
        let offset = u64::from_le_bytes(next(r)?) as usize;
        let len = u64::from_le_bytes(next(r)?) as usize;
        if offset.checked_add(len).is_none_or(|end| end > kappa) {
            return Err(CropError::parse(
                "count-sketch binary",
                0,
                "cell window exceeds kappa",
            ));
        }
        let mut cells = Vec::with_capacity(len);
        for _ in 0..len {
            cells.push(f64::from_le_bytes(next(r)?));
        }
        Ok(CountSketchArray {
            kappa,
            offset,
            cells,
        })
    }
}

/// Median of an odd number of estimates.
pub fn median(estimates: &mut [f64]) -> f64 {
    assert!(
        estimates.len() % 2 == 1,
        "median needs an odd number of estimates"
    );
    let mid = estimates.len() / 2;
    let (_, m, _) = estimates.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Independent Count-Sketch instances queried by their median.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianEstimator {
    instances: Vec<(EntryHasher, CountSketchArray)>,
}

impl MedianEstimator {
    pub fn new(instances: Vec<(EntryHasher, CountSketchArray)>) -> Result<Self> {
        if instances.len().is_multiple_of(2) {
            return Err(CropError::Config(format!(
                "median estimation needs an odd number of instances, got {}",
                instances.len()
            )));
        }
        Ok(MedianEstimator { instances })
    }

    pub fn query(&self, e: Entry) -> f64 {
        let mut est: Vec<f64> = self
            .instances
            .iter()
            .map(|(h, cs)| cs.query(h, e))
            .collect();
        median(&mut est)
    }
}
