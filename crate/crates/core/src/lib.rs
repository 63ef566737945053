//! Consistent column-row sketching of sparse matrix products.
//!
//! Output entries `(i, j)` hash to one of `kappa` buckets through
//! `h(i, j) = (h_a(i) + h_b(j)) mod kappa`. Each worker owns a contiguous
//! bucket interval, enumerates only the entries of every outer product that
//! land there, and keeps a Space-Saving summary and a Count-Sketch cell per
//! bucket. Workers never communicate until their states are merged.

pub mod countsketch;
pub mod engine;
pub mod error;
pub mod hashing;
pub mod interval;
pub mod oracle;
pub mod pairs;
pub mod seed;
pub mod spacesaving;
pub mod sparse;

pub use countsketch::{median, CountSketchArray, MedianEstimator};
pub use engine::{
    load_balance_check, load_report, run, run_workers, workers_from_text, workers_to_text,
    EngineConfig, Execution, InstanceState, LoadCheck, LoadReport, LoadScope, ProductLoad,
    QueryResult, RankedEntry, SketchState, StateHeader, WorkerState,
};
pub use error::{CropError, Result};
pub use hashing::{entry_hash, make_hashes, EntryHasher, HashConfig, IndexHash, SignHash};
pub use interval::{
    bucket_sort_indices, count_interval, enumerate_interval, EntryFilter, Enumerator,
    WorkerAssignment,
};
pub use oracle::{exact_pair_supports, exact_product, exact_top, ExactProduct, ZipfModel};
pub use pairs::{Transaction, TransactionStream};
pub use seed::derive_seed;
pub use spacesaving::{Bounds, SpaceSavingSummary};
pub use sparse::{
    load_column_row_streams, outer_product_nnz, Dims, Entry, Index, OuterProductSource,
    OuterProducts, SparseVector, TripleFiles,
};
