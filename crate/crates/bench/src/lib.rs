//! Fixed workloads shared by the benchmarks.

use crop_core::oracle::{gen_uniform_stream, gen_zipf_stream, gen_zipf_transactions};
use crop_core::{derive_seed, Dims, OuterProducts, SparseVector, TransactionStream, ZipfModel};

/// Two 0/1 vectors of the given sizes over `0..n`, spread evenly.
pub fn spread_pair(n: usize, a_nnz: usize, b_nnz: usize) -> (SparseVector, SparseVector) {
    let pick = |k: usize, offset: usize| -> Vec<u32> {
        let step = (n / k.max(1)).max(1);
        let mut v: Vec<u32> = (0..k).map(|i| ((i * step + offset) % n) as u32).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    (
        SparseVector::indicator(n, &pick(a_nnz, 0)).expect("indices in range"),
        SparseVector::indicator(n, &pick(b_nnz, 1)).expect("indices in range"),
    )
}

pub fn zipf_products(d: usize, n: usize, products: usize, seed: u64) -> OuterProducts {
    let model = ZipfModel::new(1e6, 1.1, d).expect("valid model");
    gen_zipf_stream(
        model,
        Dims::square(n),
        Some(products),
        derive_seed(seed, "generate", 0),
    )
    .expect("feasible workload")
    .stream
}

pub fn uniform_products(n: usize, products: usize, nnz: usize, seed: u64) -> OuterProducts {
    gen_uniform_stream(
        Dims::square(n),
        products,
        nnz,
        nnz,
        derive_seed(seed, "generate", 0),
    )
    .expect("feasible workload")
}

pub fn transactions(items: usize, count: usize, seed: u64) -> TransactionStream {
    let txs = gen_zipf_transactions(items, count, 1.1, 10, derive_seed(seed, "generate", 0))
        .expect("feasible workload");
    TransactionStream::new(&txs, Some(items)).expect("items in range")
}
