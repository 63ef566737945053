//! The parallel driver: per-worker bucket intervals over one shared stream,
//! per-bucket sketches, load accounting, merging and queries.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::countsketch::{median, CountSketchArray};
use crate::error::{CropError, Result};
use crate::hashing::{make_hashes, EntryHasher, HashConfig};
use crate::interval::{EntryFilter, Enumerator, WorkerAssignment};
use crate::seed::derive_seed;
use crate::spacesaving::SpaceSavingSummary;
use crate::sparse::{Entry, OuterProductSource};

/// How workers consume the stream inside one process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Every worker scans the source on its own.
    #[default]
    Independent,
    /// One scan feeds every worker in turn.
    FanOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub kappa: usize,
    pub workers: usize,
    /// Counters per bucket summary. Zero turns Space-Saving off.
    pub ss_capacity: usize,
    pub cs_enabled: bool,
    /// Independent sketch instances; odd.
    pub instances: usize,
    pub seed: u64,
    pub d_hint: Option<u64>,
    pub filter: EntryFilter,
    /// Thread pool size; `None` uses the global pool.
    pub threads: Option<usize>,
    pub execution: Execution,
    /// Keep per-product worker loads of instance 0 in the load report.
    pub track_products: bool,
}

impl EngineConfig {
    pub fn new(kappa: usize, workers: usize, ss_capacity: usize) -> Self {
        EngineConfig {
            kappa,
            workers,
            ss_capacity,
            cs_enabled: true,
            instances: 1,
            seed: 0,
            d_hint: None,
            filter: EntryFilter::All,
            threads: None,
            execution: Execution::Independent,
            track_products: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CropError::Config(m));
        if self.kappa == 0 {
            return bad("kappa must be at least 1".into());
        }
        if self.workers == 0 || self.workers > self.kappa {
            return bad(format!(
                "workers must be in 1..={} (kappa), got {}",
                self.kappa, self.workers
            ));
        }
        if self.instances == 0 || self.instances.is_multiple_of(2) {
            return bad(format!("instances must be odd, got {}", self.instances));
        }
        if self.ss_capacity == 0 && !self.cs_enabled {
            return bad("both Space-Saving and Count-Sketch are disabled".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    /// Seed of the hash functions of instance `i`.
    pub fn instance_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, "instance", i as u64)
    }

    pub fn hashers(&self) -> Result<Vec<EntryHasher>> {
        (0..self.instances)
            .map(|i| make_hashes(HashConfig::new(self.kappa, self.instance_seed(i))))
            .collect()
    }

    pub fn assignments(&self) -> Result<Vec<WorkerAssignment>> {
        WorkerAssignment::partition(self.kappa, self.workers)
    }

    pub fn header(&self) -> StateHeader {
        StateHeader {
            kappa: self.kappa,
            ss_capacity: self.ss_capacity,
            cs_enabled: self.cs_enabled,
            filter: self.filter,
            instances: self.instances,
        }
    }
}

/// Parameters every part of one sketch must agree on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateHeader {
    pub kappa: usize,
    pub ss_capacity: usize,
    pub cs_enabled: bool,
    pub filter: EntryFilter,
    pub instances: usize,
}

/// Everything one worker of one instance produced.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub instance: usize,
    pub worker: usize,
    pub hasher: EntryHasher,
    pub assignment: WorkerAssignment,
    /// One summary per bucket of the interval, empty when Space-Saving is off.
    pub summaries: Vec<SpaceSavingSummary>,
    pub cs: Option<CountSketchArray>,
    /// Entries processed.
    pub load: u64,
    /// Entries processed per outer product, if tracked.
    pub product_loads: Vec<u64>,
    /// `(|a|, |b|)` per outer product, if tracked.
    pub product_sizes: Vec<(u32, u32)>,
}

impl WorkerState {
    fn new(
        instance: usize,
        worker: usize,
        hasher: EntryHasher,
        assignment: WorkerAssignment,
        header: &StateHeader,
    ) -> Result<Self> {
        let summaries = if header.ss_capacity > 0 {
            (0..assignment.len())
                .map(|_| SpaceSavingSummary::new(header.ss_capacity))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let cs = header
            .cs_enabled
            .then(|| CountSketchArray::for_range(header.kappa, assignment.q(), assignment.r()));
        Ok(WorkerState {
            instance,
            worker,
            hasher,
            assignment,
            summaries,
            cs,
            load: 0,
            product_loads: Vec::new(),
            product_sizes: Vec::new(),
        })
    }

    fn process(
        &mut self,
        en: &mut Enumerator,
        a: &crate::sparse::SparseVector,
        b: &crate::sparse::SparseVector,
        filter: EntryFilter,
        track: bool,
    ) -> Result<()> {
        let q = self.assignment.q();
        let hasher = &self.hasher;
        let summaries = &mut self.summaries;
        let cs = &mut self.cs;
        let mut n = 0u64;
        let mut failure = None;
        en.for_each(
            a,
            b,
            hasher.row_hash(),
            hasher.col_hash(),
            self.assignment,
            filter,
            |e, v, bucket| {
                n += 1;
                if let Some(s) = summaries.get_mut(bucket - q) {
                    if let Err(err) = s.update(e, v) {
                        failure.get_or_insert(err);
                    }
                }
                if let Some(cs) = cs.as_mut() {
                    cs.update(hasher, e, v, bucket);
                }
            },
        );
        if let Some(err) = failure {
            return Err(err);
        }
        self.load += n;
        if track {
            self.product_loads.push(n);
            self.product_sizes.push((a.nnz() as u32, b.nnz() as u32));
        }
        Ok(())
    }

    fn write_text(&self, out: &mut String) {
        let w = self.assignment;
        let _ = writeln!(
            out,
            "worker {} {} q {} r {} load {}",
            self.instance,
            self.worker,
            w.q(),
            w.r(),
            self.load
        );
        out.push_str(&self.hasher.to_text());
        let _ = writeln!(out, "buckets {}", self.summaries.len());
        for s in &self.summaries {
            s.write_text(out);
        }
        match &self.cs {
            Some(cs) => cs.write_text(out),
            None => out.push_str("cs none\n"),
        }
    }

    fn read_text<'a>(
        lines: &mut std::iter::Peekable<impl Iterator<Item = (usize, &'a str)>>,
        header: &StateHeader,
        source: &str,
    ) -> Result<Self> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| CropError::parse(source, 0, "missing worker block"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 9 || f[0] != "worker" || f[3] != "q" || f[5] != "r" || f[7] != "load" {
            return Err(CropError::parse(
                source,
                n,
                "expected `worker instance index q Q r R load L`",
            ));
        }
        let int = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| CropError::parse(source, n, format!("bad integer `{s}`")))
        };
        let instance = int(f[1])? as usize;
        let worker = int(f[2])? as usize;
        let assignment =
            WorkerAssignment::new(int(f[4])? as usize, int(f[6])? as usize, header.kappa)
                .map_err(|e| CropError::parse(source, n, e.to_string()))?;
        let load = int(f[8])?;
        if instance >= header.instances {
            return Err(CropError::parse(source, n, "instance index out of range"));
        }

        let mut hash_text = String::new();
        for _ in 0..6 {
            let (_, l) = lines
                .next()
                .ok_or_else(|| CropError::parse(source, n, "truncated hash description"))?;
            hash_text.push_str(l);
            hash_text.push('\n');
        }
        let hasher = EntryHasher::from_text(&hash_text)
            .map_err(|e| CropError::parse(source, n, e.to_string()))?;
        if hasher.kappa() != header.kappa {
            return Err(CropError::parse(
                source,
                n,
                "hash kappa disagrees with state header",
            ));
        }

        let (bn, bl) = lines
            .next()
            .ok_or_else(|| CropError::parse(source, n, "missing `buckets` line"))?;
        let count = bl
            .strip_prefix("buckets ")
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| CropError::parse(source, bn, "expected `buckets N`"))?;
        let expected = if header.ss_capacity > 0 {
            assignment.len()
        } else {
            0
        };
        if count != expected {
            return Err(CropError::parse(
                source,
                bn,
                format!("expected {expected} bucket summaries, found {count}"),
            ));
        }
        let mut summaries = Vec::with_capacity(count);
        for _ in 0..count {
            let s = SpaceSavingSummary::read_text(lines, source)?;
            if s.capacity() != header.ss_capacity {
                return Err(CropError::parse(
                    source,
                    bn,
                    "summary capacity disagrees with state header",
                ));
            }
            summaries.push(s);
        }

        let cs = match lines.peek() {
            Some((_, l)) if l.trim() == "cs none" => {
                lines.next();
                None
            }
            _ => Some(CountSketchArray::read_text(lines, source)?),
        };
        if cs.is_some() != header.cs_enabled {
            return Err(CropError::parse(
                source,
                n,
                "Count-Sketch presence disagrees with state header",
            ));
        }
        if let Some(c) = &cs {
            if c.offset() != assignment.q() || c.cells().len() != assignment.len() {
                return Err(CropError::parse(
                    source,
                    n,
                    "Count-Sketch window disagrees with interval",
                ));
            }
        }
        Ok(WorkerState {
            instance,
            worker,
            hasher,
            assignment,
            summaries,
            cs,
            load,
            product_loads: Vec::new(),
            product_sizes: Vec::new(),
        })
    }
}

const STATE_MAGIC: &str = "crop-state v1";

fn filter_name(f: EntryFilter) -> &'static str {
    match f {
        EntryFilter::All => "all",
        EntryFilter::AboveDiagonal => "above-diagonal",
    }
}

fn write_state_header(h: &StateHeader, blocks: usize, out: &mut String) {
    out.push_str(STATE_MAGIC);
    out.push('\n');
    let _ = writeln!(
        out,
        "kappa {} ss_capacity {} cs {} filter {} instances {} blocks {}",
        h.kappa,
        h.ss_capacity,
        h.cs_enabled as u8,
        filter_name(h.filter),
        h.instances,
        blocks
    );
}

/// Serialises worker states that share `header`.
pub fn workers_to_text(header: &StateHeader, workers: &[WorkerState]) -> String {
    let mut out = String::new();
    write_state_header(header, workers.len(), &mut out);
    for w in workers {
        w.write_text(&mut out);
    }
    out
}

/// Parses text written by [`workers_to_text`] or [`SketchState::to_text`].
pub fn workers_from_text(text: &str, source: &str) -> Result<(StateHeader, Vec<WorkerState>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    match lines.next() {
        Some((_, l)) if l.trim() == STATE_MAGIC => {}
        Some((n, _)) => {
            return Err(CropError::parse(
                source,
                n,
                format!("expected `{STATE_MAGIC}`"),
            ))
        }
        None => return Err(CropError::parse(source, 1, "empty state file")),
    }
    let (n, line) = lines
        .next()
        .ok_or_else(|| CropError::parse(source, 2, "missing state header"))?;
    let f: Vec<&str> = line.split_whitespace().collect();
    let keys = [
        "kappa",
        "ss_capacity",
        "cs",
        "filter",
        "instances",
        "blocks",
    ];
    if f.len() != 12 || (0..6).any(|i| f[2 * i] != keys[i]) {
        return Err(CropError::parse(
            source,
            n,
            "expected `kappa K ss_capacity L cs 0|1 filter F instances T blocks B`",
        ));
    }
    let int = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| CropError::parse(source, n, format!("bad integer `{s}`")))
    };
    let filter = match f[7] {
        "all" => EntryFilter::All,
        "above-diagonal" => EntryFilter::AboveDiagonal,
        other => {
            return Err(CropError::parse(
                source,
                n,
                format!("unknown filter `{other}`"),
            ))
        }
    };
    let header = StateHeader {
        kappa: int(f[1])?,
        ss_capacity: int(f[3])?,
        cs_enabled: match f[5] {
            "0" => false,
            "1" => true,
            other => {
                return Err(CropError::parse(
                    source,
                    n,
                    format!("bad cs flag `{other}`"),
                ))
            }
        },
        filter,
        instances: int(f[9])?,
    };
    if header.kappa == 0 || header.instances == 0 {
        return Err(CropError::parse(
            source,
            n,
            "kappa and instances must be positive",
        ));
    }
    let blocks = int(f[11])?;
    let mut workers = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        workers.push(WorkerState::read_text(&mut lines, &header, source)?);
    }
    if let Some((n, _)) = lines.next() {
        return Err(CropError::parse(
            source,
            n,
            "trailing content after last block",
        ));
    }
    Ok((header, workers))
}

/// One instance after all its workers are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceState {
    pub hasher: EntryHasher,
    /// `kappa` summaries, or none when Space-Saving is off.
    pub summaries: Vec<SpaceSavingSummary>,
    pub cs: Option<CountSketchArray>,
    pub load: u64,
}

/// A complete, frozen sketch: every instance covers all buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchState {
    pub header: StateHeader,
    pub instances: Vec<InstanceState>,
}

/// Bounds and estimate for one entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryResult {
    pub lower: f64,
    pub upper: f64,
    pub cs_estimate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEntry {
    pub entry: Entry,
    pub lower: f64,
    pub upper: f64,
    pub cs_estimate: Option<f64>,
}

impl SketchState {
    /// Joins worker states whose intervals tile `[0, kappa)` for every instance.
    pub fn merge(header: StateHeader, mut workers: Vec<WorkerState>) -> Result<Self> {
        workers.sort_by_key(|w| (w.instance, w.assignment.q(), w.assignment.r()));
        let mut instances: Vec<InstanceState> = Vec::with_capacity(header.instances);
        let mut covered: Vec<usize> = Vec::with_capacity(header.instances);
        for w in workers {
            if w.instance >= header.instances {
                return Err(CropError::Config(format!(
                    "worker state for unknown instance {}",
                    w.instance
                )));
            }
            if w.assignment.kappa() != header.kappa {
                return Err(CropError::Config("worker state kappa disagrees".into()));
            }
            if w.instance == instances.len() {
                if w.assignment.q() != 0 {
                    return Err(CropError::Config(format!(
                        "instance {} has no worker covering bucket 0",
                        w.instance
                    )));
                }
                instances.push(InstanceState {
                    hasher: w.hasher,
                    summaries: w.summaries,
                    cs: w.cs,
                    load: w.load,
                });
                covered.push(w.assignment.r());
                continue;
            }
            if w.instance + 1 != instances.len() {
                return Err(CropError::Config(format!(
                    "instance {} is missing",
                    instances.len()
                )));
            }
            let inst = instances.last_mut().expect("nonempty");
            let end = covered.last_mut().expect("nonempty");
            if w.assignment.q() != *end {
                return Err(CropError::Config(format!(
                    "instance {}: buckets [{}, {}) overlap or leave a gap after {}",
                    w.instance,
                    w.assignment.q(),
                    w.assignment.r(),
                    end
                )));
            }
            if w.hasher != inst.hasher {
                return Err(CropError::Config(format!(
                    "instance {}: workers used different hash functions",
                    w.instance
                )));
            }
            inst.summaries.extend(w.summaries);
            if let (Some(a), Some(b)) = (inst.cs.as_mut(), w.cs.as_ref()) {
                a.extend(b)?;
            }
            inst.load += w.load;
            *end = w.assignment.r();
        }
        if instances.len() != header.instances {
            return Err(CropError::Config(format!(
                "expected {} instances, found {}",
                header.instances,
                instances.len()
            )));
        }
        for (i, end) in covered.iter().enumerate() {
            if *end != header.kappa {
                return Err(CropError::Config(format!(
                    "instance {i}: buckets [{end}, {}) are not covered",
                    header.kappa
                )));
            }
        }
        Ok(SketchState { header, instances })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_state_header(&self.header, self.instances.len(), &mut out);
        for (i, inst) in self.instances.iter().enumerate() {
            WorkerState {
                instance: i,
                worker: 0,
                hasher: inst.hasher,
                assignment: WorkerAssignment::full(self.header.kappa),
                summaries: inst.summaries.clone(),
                cs: inst.cs.clone(),
                load: inst.load,
                product_loads: Vec::new(),
                product_sizes: Vec::new(),
            }
            .write_text(&mut out);
        }
        out
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let (header, workers) = workers_from_text(text, source)?;
        Self::merge(header, workers)
    }

    /// Space-Saving bounds combined over instances (tightest of each side)
    /// and the median Count-Sketch estimate.
    pub fn query(&self, e: Entry) -> QueryResult {
        let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
        let mut estimates = Vec::with_capacity(self.instances.len());
        for inst in &self.instances {
            let bucket = inst.hasher.bucket(e);
            if let Some(s) = inst.summaries.get(bucket) {
                let b = s.query(e);
                lower = lower.max(b.lower);
                upper = upper.min(b.upper);
            }
            if let Some(cs) = &inst.cs {
                estimates.push(cs.query(&inst.hasher, e));
            }
        }
        if self.header.ss_capacity == 0 {
            upper = 0.0;
        }
        QueryResult {
            lower,
            upper,
            cs_estimate: (!estimates.is_empty()).then(|| median(&mut estimates)),
        }
    }

    /// Entries recorded by at least `ceil(t/2)` instances, by upper bound.
    pub fn top_entries(&self, k: usize) -> Vec<RankedEntry> {
        if k == 0 {
            return Vec::new();
        }
        let need = self.instances.len().div_ceil(2);
        let mut seen: HashMap<Entry, usize> = HashMap::new();
        for inst in &self.instances {
            for s in &inst.summaries {
                for c in s.counters() {
                    *seen.entry(c.item).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<RankedEntry> = seen
            .into_iter()
            .filter(|&(_, n)| n >= need)
            .map(|(entry, _)| {
                let q = self.query(entry);
                RankedEntry {
                    entry,
                    lower: q.lower,
                    upper: q.upper,
                    cs_estimate: q.cs_estimate,
                }
            })
            .collect();
        ranked.sort_by(|x, y| {
            y.upper
                .total_cmp(&x.upper)
                .then(y.lower.total_cmp(&x.lower))
                .then(x.entry.cmp(&y.entry))
        });
        ranked.truncate(k);
        ranked
    }

    /// Median Count-Sketch estimate, if enabled.
    pub fn median_query(&self, e: Entry) -> Option<f64> {
        self.query(e).cs_estimate
    }

    /// Sum of `total_weight` over every bucket summary of instance `i`.
    pub fn summary_mass(&self, i: usize) -> f64 {
        self.instances[i]
            .summaries
            .iter()
            .map(|s| s.total_weight())
            .sum()
    }
}

/// Worker loads of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub kappa: usize,
    pub workers: usize,
    pub interval_sizes: Vec<usize>,
    /// `[instance][worker]` processed entries.
    pub per_instance: Vec<Vec<u64>>,
    /// Per outer product of instance 0, when tracked.
    pub products: Vec<ProductLoad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductLoad {
    pub a_nnz: u32,
    pub b_nnz: u32,
    pub per_worker: Vec<u64>,
}

impl ProductLoad {
    pub fn total(&self) -> u64 {
        self.per_worker.iter().sum()
    }
}

/// Which loads [`load_balance_check`] compares against the expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadScope {
    PerProduct,
    WholeRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadCheck {
    /// `(unit, worker)` pairs whose load left `[(1-λ)W, (1+λ)W]`.
    pub violations: u64,
    pub checked: u64,
    /// Units skipped because `W < (|a|+|b|)/λ²`.
    pub skipped: u64,
    pub frequency: f64,
    /// Mean of `1/(|a|+|b|)` over checked pairs; absent for whole-run checks.
    pub bound: Option<f64>,
}

impl LoadReport {
    /// Entries processed by each worker, summed over instances.
    pub fn per_worker(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.workers];
        for inst in &self.per_instance {
            for (o, x) in out.iter_mut().zip(inst) {
                *o += x;
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.per_instance.iter().flatten().sum()
    }

    /// `total / K`.
    pub fn expected_load(&self) -> f64 {
        self.total() as f64 / self.workers as f64
    }

    /// Loads rescaled to the mean interval length `kappa/K`.
    pub fn normalized_loads(&self) -> Vec<f64> {
        let mean_len = self.kappa as f64 / self.workers as f64;
        self.per_worker()
            .iter()
            .zip(&self.interval_sizes)
            .map(|(&x, &len)| x as f64 * mean_len / len as f64)
            .collect()
    }

    /// Largest normalised load over the mean; 1 for an empty run.
    pub fn max_over_avg(&self) -> f64 {
        let avg = self.expected_load();
        if avg == 0.0 {
            return 1.0;
        }
        self.normalized_loads().into_iter().fold(0.0, f64::max) / avg
    }

    /// `|X_c - W| / W` per worker on normalised loads.
    pub fn deviations(&self) -> Vec<f64> {
        let w = self.expected_load();
        self.normalized_loads()
            .into_iter()
            .map(|x| if w == 0.0 { 0.0 } else { (x - w).abs() / w })
            .collect()
    }
}

pub fn load_balance_check(report: &LoadReport, lambda: f64, scope: LoadScope) -> Result<LoadCheck> {
    if lambda.is_nan() || lambda <= 0.0 || lambda.is_infinite() {
        return Err(CropError::Config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let k = report.workers as f64;
    let mean_len = report.kappa as f64 / k;
    let scale: Vec<f64> = report
        .interval_sizes
        .iter()
        .map(|&l| mean_len / l as f64)
        .collect();
    let mut check = LoadCheck {
        violations: 0,
        checked: 0,
        skipped: 0,
        frequency: 0.0,
        bound: None,
    };
    let mut bound_sum = 0.0;
    let tally = |loads: &[u64], w: f64, check: &mut LoadCheck| {
        for (x, s) in loads.iter().zip(&scale) {
            check.checked += 1;
            if (*x as f64 * s - w).abs() > lambda * w {
                check.violations += 1;
            }
        }
    };
    match scope {
        LoadScope::PerProduct => {
            for p in &report.products {
                let size = p.a_nnz as f64 + p.b_nnz as f64;
                let w = p.a_nnz as f64 * p.b_nnz as f64 / k;
                if w < size / (lambda * lambda) {
                    check.skipped += 1;
                    continue;
                }
                tally(&p.per_worker, w, &mut check);
                bound_sum += report.workers as f64 / size;
            }
            if check.checked > 0 {
                check.bound = Some(bound_sum / check.checked as f64);
            }
        }
        LoadScope::WholeRun => {
            for inst in &report.per_instance {
                let w = inst.iter().sum::<u64>() as f64 / k;
                if w == 0.0 {
                    check.skipped += 1;
                    continue;
                }
                tally(inst, w, &mut check);
            }
        }
    }
    if check.checked > 0 {
        check.frequency = check.violations as f64 / check.checked as f64;
    }
    Ok(check)
}

/// Runs the workers named in `workers` (indices into the partition) for every
/// instance.
pub fn run_workers(
    source: &dyn OuterProductSource,
    config: &EngineConfig,
    workers: &[usize],
) -> Result<Vec<WorkerState>> {
    config.validate()?;
    let header = config.header();
    let hashers = config.hashers()?;
    let parts = config.assignments()?;
    for &c in workers {
        if c >= parts.len() {
            return Err(CropError::Config(format!(
                "worker {c} out of range 0..{}",
                parts.len()
            )));
        }
    }
    let dims = source.dims();
    if dims.rows > crate::sparse::MAX_DIM || dims.cols > crate::sparse::MAX_DIM {
        return Err(CropError::Dimension(format!(
            "{}x{} exceeds the index range",
            dims.rows, dims.cols
        )));
    }
    let mut states = Vec::with_capacity(hashers.len() * workers.len());
    for (i, h) in hashers.iter().enumerate() {
        for &c in workers {
            states.push(WorkerState::new(i, c, *h, parts[c], &header)?);
        }
    }
    let filter = config.filter;
    let track = |s: &WorkerState| config.track_products && s.instance == 0;
    let mut drive = || -> Result<()> {
        match config.execution {
            Execution::Independent => states.par_iter_mut().try_for_each(|s| {
                let mut en = Enumerator::new();
                let t = track(s);
                source.scan(&mut |a, b| {
                    check_dims(a, b, dims).and_then(|_| s.process(&mut en, a, b, filter, t))
                })
            }),
            Execution::FanOut => {
                let mut ens: Vec<Enumerator> = states.iter().map(|_| Enumerator::new()).collect();
                source.scan(&mut |a, b| {
                    check_dims(a, b, dims)?;
                    states
                        .iter_mut()
                        .zip(ens.iter_mut())
                        .try_for_each(|(s, en)| {
                            let t = track(s);
                            s.process(en, a, b, filter, t)
                        })
                })
            }
        }
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CropError::Resource(format!("thread pool: {e}")))?
            .install(drive)?,
        None => drive()?,
    }
    Ok(states)
}

fn check_dims(
    a: &crate::sparse::SparseVector,
    b: &crate::sparse::SparseVector,
    dims: crate::sparse::Dims,
) -> Result<()> {
    if a.dim() != dims.rows || b.dim() != dims.cols {
        return Err(CropError::Dimension(format!(
            "outer product of dims {}x{} in a {}x{} stream",
            a.dim(),
            b.dim(),
            dims.rows,
            dims.cols
        )));
    }
    Ok(())
}

/// Builds the load report from the worker states of a run.
pub fn load_report(config: &EngineConfig, states: &[WorkerState]) -> Result<LoadReport> {
    let parts = config.assignments()?;
    let mut per_instance = vec![vec![0u64; config.workers]; config.instances];
    let mut products: Vec<ProductLoad> = Vec::new();
    for s in states {
        per_instance[s.instance][s.worker] += s.load;
        if s.instance == 0 && !s.product_sizes.is_empty() {
            if products.is_empty() {
                products = s
                    .product_sizes
                    .iter()
                    .map(|&(a_nnz, b_nnz)| ProductLoad {
                        a_nnz,
                        b_nnz,
                        per_worker: vec![0; config.workers],
                    })
                    .collect();
            }
            for (p, &x) in products.iter_mut().zip(&s.product_loads) {
                p.per_worker[s.worker] = x;
            }
        }
    }
    Ok(LoadReport {
        kappa: config.kappa,
        workers: config.workers,
        interval_sizes: parts.iter().map(|w| w.len()).collect(),
        per_instance,
        products,
    })
}

/// Runs all `K` workers of all instances and merges them.
pub fn run(
    source: &dyn OuterProductSource,
    config: &EngineConfig,
) -> Result<(SketchState, LoadReport)> {
    let all: Vec<usize> = (0..config.workers).collect();
    let states = run_workers(source, config, &all)?;
    let report = load_report(config, &states)?;
    log::debug!(
        "run: kappa {} workers {} instances {} entries {} max/avg {:.4}",
        config.kappa,
        config.workers,
        config.instances,
        report.total(),
        report.max_over_avg()
    );
    let state = SketchState::merge(config.header(), states)?;
    Ok((state, report))
}
