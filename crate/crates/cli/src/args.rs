use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crop_core::{EngineConfig, EntryFilter, Execution};

#[derive(Debug, Parser)]
#[command(
    name = "crop",
    version,
    about = "Heavy entries of sparse matrix products by consistent column-row sketching"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sketch the product of two triple files.
    Multiply(MultiplyArgs),
    /// Sketch frequent item pairs of a FIMI transaction file.
    Mine(MineArgs),
    /// Load balance and wall time across worker counts.
    Bench(BenchArgs),
    /// Write synthetic inputs with their ground truth.
    #[command(subcommand)]
    Generate(GenerateCommand),
    /// Top entries and point queries from a saved sketch state.
    Report(ReportArgs),
    /// Run a subset of the workers and save their partial states.
    Worker(WorkerArgs),
    /// Join partial worker states into one state.
    Merge(MergeArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SketchArgs {
    /// Number of hash buckets.
    #[arg(long, default_value_t = 1024)]
    pub kappa: usize,
    /// Logical workers; each owns a contiguous bucket interval.
    #[arg(long, env = "CROP_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Space-Saving counters per bucket; 0 disables Space-Saving.
    #[arg(long, default_value_t = 2)]
    pub ss_capacity: usize,
    /// Independent sketch instances (odd).
    #[arg(long, default_value_t = 11)]
    pub instances: usize,
    /// Master seed; every other seed derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disable the Count-Sketch estimator.
    #[arg(long)]
    pub no_cs: bool,
    /// Threads used to run the workers.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Feed all workers from a single pass over the input.
    #[arg(long)]
    pub fan_out: bool,
    /// Expected number of distinct output entries, recorded only.
    #[arg(long)]
    pub d_hint: Option<u64>,
}

impl SketchArgs {
    pub fn config(&self, filter: EntryFilter) -> EngineConfig {
        let mut c = EngineConfig::new(self.kappa, self.workers, self.ss_capacity);
        c.cs_enabled = !self.no_cs;
        c.instances = self.instances;
        c.seed = self.seed;
        c.threads = self.threads;
        c.d_hint = self.d_hint;
        c.filter = filter;
        c.execution = if self.fan_out {
            Execution::FanOut
        } else {
            Execution::Independent
        };
        c
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OracleArgs {
    /// Also compute exact weights and report recall and bound ratios.
    #[arg(long)]
    pub exact_oracle: bool,
    /// Largest number of product terms the exact oracle may materialise.
    #[arg(long, default_value_t = crop_core::oracle::DEFAULT_TERM_CAP)]
    pub oracle_cap: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MultiplyArgs {
    /// Column-major triples of the left factor.
    #[arg(long)]
    pub a: PathBuf,
    /// Row-major triples of the right factor.
    #[arg(long)]
    pub b: PathBuf,
    #[command(flatten)]
    pub sketch: SketchArgs,
    /// Entries in the reported list.
    #[arg(long, default_value_t = 100)]
    pub top: usize,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MineArgs {
    /// FIMI transaction file.
    #[arg(long)]
    pub fimi: PathBuf,
    /// Number of item ids; larger ids are rejected. Defaults to the largest id plus one.
    #[arg(long)]
    pub universe: Option<usize>,
    #[command(flatten)]
    pub sketch: SketchArgs,
    #[arg(long, default_value_t = 100)]
    pub top: usize,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Either a pair of triple files or a FIMI file.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    #[arg(
        long,
        required_unless_present = "fimi",
        conflicts_with = "fimi",
        requires = "b"
    )]
    pub a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub fimi: Option<PathBuf>,
    /// Item universe for FIMI input.
    #[arg(long, requires = "fimi")]
    pub universe: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Worker counts to compare.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub worker_counts: Vec<usize>,
    #[arg(long, default_value_t = 1024)]
    pub kappa: usize,
    #[arg(long, default_value_t = 2)]
    pub ss_capacity: usize,
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `bench.csv` and `loads.csv`; printed only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Zipf-weighted entries factored into outer products.
    Zipf(ZipfArgs),
    /// Transactions with Zipf-distributed items.
    Transactions(TransactionArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ZipfArgs {
    /// Weight of the heaviest entry.
    #[arg(long, default_value_t = 1e6)]
    pub c: f64,
    /// Skew exponent.
    #[arg(long, default_value_t = 1.2)]
    pub z: f64,
    /// Distinct entries.
    #[arg(long)]
    pub d: usize,
    /// Rows of the product.
    #[arg(long)]
    pub rows: usize,
    /// Columns of the product; defaults to `rows`.
    #[arg(long)]
    pub cols: Option<usize>,
    /// Outer products; omitted means one per entry.
    #[arg(long)]
    pub outer_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TransactionArgs {
    #[arg(long)]
    pub items: usize,
    #[arg(long)]
    pub transactions: usize,
    /// Skew of the item distribution.
    #[arg(long, default_value_t = 1.1)]
    pub z: f64,
    /// Longest transaction.
    #[arg(long, default_value_t = 10)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// State file written by `multiply`, `mine` or `merge`.
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub top: usize,
    /// Entries to query, as `row,col`; replaces the top list.
    #[arg(long = "query", value_name = "ROW,COL")]
    pub queries: Vec<String>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct WorkerArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub sketch: SketchArgs,
    /// Worker indices to run, in `0..workers`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub worker_index: Vec<usize>,
    /// Partial state file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MergeArgs {
    /// Partial state files.
    #[arg(required = true)]
    pub states: Vec<PathBuf>,
    /// Merged state file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the re-run.
    #[arg(long)]
    pub out: PathBuf,
}
