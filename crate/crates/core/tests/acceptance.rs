//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all: `cargo test -p crop-core --test acceptance`
//! Run some: `cargo test -p crop-core --test acceptance -- 2 6`

mod common;

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use crop_core::countsketch::CountSketchArray;
use crop_core::oracle::{gen_uniform_stream, gen_zipf_stream, gen_zipf_transactions, ZipfModel};
use crop_core::pairs::{bound_ratio_report, mine_transactions, recall_at_k};
use crop_core::{
    count_interval, enumerate_interval, exact_pair_supports, exact_product, exact_top,
    load_balance_check, make_hashes, run, Dims, EngineConfig, Entry, EntryHasher, HashConfig,
    IndexHash, LoadReport, LoadScope, OuterProducts, ProductLoad, SignHash, SpaceSavingSummary,
    SparseVector, TransactionStream, WorkerAssignment,
};

/// Heaviest unreported entry over the pilot seeds was 29.7 C/(l kappa)^z;
/// frozen with headroom.
const RECOVERY_C: f64 = 40.0;
/// Pilot median of |error| was at most 1.6 C/kappa^z for z in {0.8, 1.2}.
const SKETCH_C: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize, nnz: usize, signed: bool) -> SparseVector {
    let mut idx: Vec<u32> = sample(rng, dim, nnz)
        .into_iter()
        .map(|x| x as u32)
        .collect();
    idx.sort_unstable();
    let entries = idx
        .into_iter()
        .map(|i| {
            let mag = rng.random_range(1..=9) as f64;
            let v = if signed && rng.random_bool(0.5) {
                -mag
            } else {
                mag
            };
            (i, v)
        })
        .collect();
    SparseVector::new(dim, entries).unwrap()
}

fn random_01_stream(
    rng: &mut ChaCha8Rng,
    n: usize,
    products: usize,
    max_nnz: usize,
) -> OuterProducts {
    let mut s = OuterProducts::new(Dims::square(n));
    for _ in 0..products {
        let ka = rng.random_range(1..=max_nnz);
        let kb = rng.random_range(1..=max_nnz);
        let a = sample(rng, n, ka)
            .into_iter()
            .map(|x| x as u32)
            .collect::<Vec<_>>();
        let b = sample(rng, n, kb)
            .into_iter()
            .map(|x| x as u32)
            .collect::<Vec<_>>();
        let mut a = a;
        let mut b = b;
        a.sort_unstable();
        b.sort_unstable();
        s.push(
            SparseVector::indicator(n, &a).unwrap(),
            SparseVector::indicator(n, &b).unwrap(),
        )
        .unwrap();
    }
    s
}

/// All `(entry, value)` of `ab` whose bucket lies in `w`, by double loop.
fn brute_force(
    a: &SparseVector,
    b: &SparseVector,
    h: &EntryHasher,
    w: WorkerAssignment,
) -> Vec<(Entry, f64)> {
    let kappa = w.kappa();
    let mut out = Vec::new();
    for (i, x) in a.iter() {
        for (j, y) in b.iter() {
            let bucket = (h.row_hash().hash(i) + h.col_hash().hash(j)) % kappa;
            if bucket >= w.q() && bucket < w.r() {
                out.push((Entry::new(i, j), x * y));
            }
        }
    }
    out
}

fn c1_enumeration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let trials = 10_000;
    let mut mismatches = 0;
    let mut produced = 0usize;
    for _ in 0..trials {
        let n = rng.random_range(1..=200);
        let (ka, kb) = (
            rng.random_range(0..=50.min(n)),
            rng.random_range(0..=50.min(n)),
        );
        let a = random_vector(&mut rng, n, ka, true);
        let b = random_vector(&mut rng, n, kb, true);
        let kappa = rng.random_range(1..=64);
        let q = rng.random_range(0..=kappa);
        let r = rng.random_range(q..=kappa);
        let w = WorkerAssignment::new(q, r, kappa).unwrap();
        let h = make_hashes(HashConfig::new(kappa, rng.random())).unwrap();
        let mut got = enumerate_interval(&a, &b, h.row_hash(), h.col_hash(), w);
        let mut want = brute_force(&a, &b, &h, w);
        got.sort_by_key(|x| x.0);
        want.sort_by_key(|x| x.0);
        let counted = count_interval(&a, &b, h.row_hash(), h.col_hash(), w) as usize;
        produced += got.len();
        if got != want || counted != want.len() {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{trials} trials, {produced} entries, {mismatches} mismatches"),
    )
}

fn c2_k_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let kappa = 64;
    let mut differing = 0;
    let mut coverage_errors = 0;
    for s in 0..100u64 {
        let stream = random_01_stream(&mut rng, 60, 30, 15);
        let mut texts = Vec::new();
        for k in [1, 2, 4, 8] {
            let mut c = EngineConfig::new(kappa, k, 2);
            c.instances = 3;
            c.seed = 2000 + s;
            texts.push(run(&stream, &c).unwrap().0.to_text());
        }
        if texts.iter().any(|t| *t != texts[0]) {
            differing += 1;
        }
        let h = make_hashes(HashConfig::new(kappa, 2000 + s)).unwrap();
        for p in stream.pairs() {
            let full: HashSet<Entry> =
                p.a.indices()
                    .iter()
                    .flat_map(|&i| p.b.indices().iter().map(move |&j| Entry::new(i, j)))
                    .collect();
            for k in [1, 2, 4, 8] {
                let mut seen = HashMap::new();
                for w in WorkerAssignment::partition(kappa, k).unwrap() {
                    for (e, _) in enumerate_interval(&p.a, &p.b, h.row_hash(), h.col_hash(), w) {
                        *seen.entry(e).or_insert(0) += 1;
                    }
                }
                let once = seen.values().all(|&c| c == 1);
                let keys: HashSet<Entry> = seen.keys().copied().collect();
                if !once || keys != full {
                    coverage_errors += 1;
                }
            }
        }
    }
    outcome(
        differing == 0 && coverage_errors == 0,
        format!("100 streams, K in {{1,2,4,8}}: {differing} differing states, {coverage_errors} coverage errors"),
    )
}

fn c3_exact_regime() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut wrong = 0;
    let mut checked = 0;
    for s in 0..100u64 {
        let stream = random_01_stream(&mut rng, 40, 25, 8);
        let truth = exact_product(&stream, u64::MAX).unwrap();
        let d = truth.len();
        let mut c = EngineConfig::new(d.max(1), 4.min(d.max(1)), 1);
        c.instances = 3;
        c.seed = 3000 + s;
        let mut occupancy = 1;
        for h in c.hashers().unwrap() {
            let mut per_bucket = vec![0usize; c.kappa];
            for (e, _) in truth.iter() {
                per_bucket[h.bucket(e)] += 1;
            }
            occupancy = occupancy.max(per_bucket.into_iter().max().unwrap_or(0));
        }
        c.ss_capacity = occupancy;
        let (state, _) = run(&stream, &c).unwrap();
        for (e, w) in truth.iter() {
            checked += 1;
            let q = state.query(e);
            if q.lower != w || q.upper != w {
                wrong += 1;
            }
        }
        let top: Vec<(Entry, f64)> = state
            .top_entries(d)
            .into_iter()
            .map(|r| (r.entry, r.upper))
            .collect();
        if top != exact_top(&truth, d) {
            wrong += 1;
        }
    }
    outcome(
        wrong == 0,
        format!("100 instances, {checked} entries, {wrong} inexact"),
    )
}

fn c4_space_saving() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut sandwich, mut over, mut capture) = (0, 0, 0);
    let mut items_checked = 0;
    for _ in 0..1000 {
        let cap = rng.random_range(1..=12);
        let universe = rng.random_range(1..=40u32);
        let len = rng.random_range(1..=400);
        let mut s = SpaceSavingSummary::new(cap).unwrap();
        let mut truth: HashMap<Entry, f64> = HashMap::new();
        for _ in 0..len {
            // squared uniform skews towards low ids
            let u: f64 = rng.random();
            let item = Entry::new((u * u * universe as f64) as u32, 0);
            let w = rng.random_range(1..=50) as f64;
            s.update(item, w).unwrap();
            *truth.entry(item).or_insert(0.0) += w;
        }
        let m = s.total_weight();
        for c in s.counters() {
            if c.overestimation > m / cap as f64 {
                over += 1;
            }
        }
        for i in 0..universe {
            items_checked += 1;
            let e = Entry::new(i, 0);
            let t = truth.get(&e).copied().unwrap_or(0.0);
            let b = s.query(e);
            if !(b.lower <= t && t <= b.upper) {
                sandwich += 1;
            }
            if t > m / cap as f64 && !s.contains(e) {
                capture += 1;
            }
        }
    }
    outcome(
        sandwich + over + capture == 0,
        format!(
            "1000 streams, {items_checked} items: {sandwich} sandwich, {over} overestimation, {capture} capture violations"
        ),
    )
}

fn c5_load_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (n, nnz, k, kappa, lambda) = (1_000_000usize, 400usize, 8usize, 1024usize, 0.5);
    let parts = WorkerAssignment::partition(kappa, k).unwrap();
    let mut products = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let a = random_vector(&mut rng, n, nnz, false);
        let b = random_vector(&mut rng, n, nnz, false);
        let h = make_hashes(HashConfig::new(kappa, rng.random())).unwrap();
        let per_worker = parts
            .iter()
            .map(|&w| count_interval(&a, &b, h.row_hash(), h.col_hash(), w))
            .collect();
        products.push(ProductLoad {
            a_nnz: nnz as u32,
            b_nnz: nnz as u32,
            per_worker,
        });
    }
    let report = LoadReport {
        kappa,
        workers: k,
        interval_sizes: parts.iter().map(|w| w.len()).collect(),
        per_instance: vec![vec![0; k]],
        products,
    };
    let check = load_balance_check(&report, lambda, LoadScope::PerProduct).unwrap();
    let p = 1.0 / (2 * nnz) as f64;
    let limit = p + 3.0 * (p * (1.0 - p) / check.checked as f64).sqrt();
    outcome(
        check.skipped == 0 && check.checked == 80_000 && check.frequency <= limit,
        format!(
            "10^4 seeds x {k} workers: violation frequency {:.2e} (limit {:.2e}, analytic bound {:.2e})",
            check.frequency,
            limit,
            check.bound.unwrap_or(f64::NAN)
        ),
    )
}

fn c6_recovery() -> Outcome {
    let z = 1.2;
    let threshold = RECOVERY_C * recovery_scale(z);
    let rank100 = ZIPF_C / 100f64.powf(z);
    let mut recalls = Vec::new();
    let mut missed_top = 0;
    let mut missed_heavy = 0;
    let mut heaviest_miss = 0.0f64;
    for master in 6000..6020u64 {
        let work = zipf_workload(z, master);
        let (state, _) = run(&work.stream, &recovery_config(master)).unwrap();
        let reported: HashSet<Entry> = state
            .top_entries(usize::MAX)
            .into_iter()
            .map(|r| r.entry)
            .collect();
        missed_top += work.truth[..100]
            .iter()
            .filter(|(e, _)| !reported.contains(e))
            .count();
        missed_heavy += work
            .truth
            .iter()
            .take_while(|(_, w)| *w >= threshold)
            .filter(|(e, _)| !reported.contains(e))
            .count();
        if let Some((_, w)) = work.truth.iter().find(|(e, _)| !reported.contains(e)) {
            heaviest_miss = heaviest_miss.max(w / recovery_scale(z));
        }
        let top: Vec<Entry> = work.truth[..100].iter().map(|x| x.0).collect();
        recalls.push(recall_at_k(&state, &top, 100).unwrap());
    }
    let mean = recalls.iter().sum::<f64>() / recalls.len() as f64;
    // The gate is the top-100 condition; entries between the calibrated
    // threshold and rank 100 are reported for information only.
    outcome(
        rank100 >= threshold && missed_top == 0 && mean >= 0.95,
        format!(
            "20 seeds: mean recall@100 {mean:.4}, rank<=100 missed {missed_top}, rank-100 weight {:.1}x and heaviest miss {heaviest_miss:.1}x C/(l kappa)^z (calibrated {RECOVERY_C}x, {missed_heavy} above it missed)",
            rank100 / recovery_scale(z)
        ),
    )
}

fn c7_unbiased() -> Outcome {
    let model = ZipfModel::new(1000.0, 1.0, 1000).unwrap();
    let work = gen_zipf_stream(model, Dims::square(100), None, 707).unwrap();
    let (target, w) = work.truth[4];
    let runs = 500;
    let mut est = Vec::with_capacity(runs);
    for seed in 0..runs as u64 {
        let mut c = EngineConfig::new(64, 1, 0);
        c.seed = 7000 + seed;
        let (state, _) = run(&work.stream, &c).unwrap();
        est.push(state.median_query(target).unwrap());
    }
    let mean = est.iter().sum::<f64>() / runs as f64;
    let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    let se = (var / runs as f64).sqrt();
    let unbiased = (mean - w).abs() <= 4.0 * se;

    // isolation: a lone entry is recovered exactly
    let mut lone = OuterProducts::new(Dims::square(10));
    lone.push(
        SparseVector::indicator(10, &[3]).unwrap(),
        SparseVector::new(10, vec![(4, 7.0)]).unwrap(),
    )
    .unwrap();
    let mut c = EngineConfig::new(16, 4, 0);
    c.seed = 77;
    let isolated = run(&lone, &c).unwrap().0.median_query(Entry::new(3, 4)) == Some(7.0);

    // cancellation: two entries forced into one cell with opposite signs
    let h = EntryHasher::from_parts(
        0,
        IndexHash::from_coefficients(1, 0, 4).unwrap(),
        IndexHash::from_coefficients(1, 0, 4).unwrap(),
        SignHash::from_coefficients(1, 0, 0).unwrap(),
    )
    .unwrap();
    let (e1, e2) = (Entry::new(1, 1), Entry::new(2, 0));
    let mut cs = CountSketchArray::new(4);
    assert_eq!(h.bucket(e1), h.bucket(e2));
    assert_eq!(h.sign(e1), -h.sign(e2));
    cs.update(&h, e1, 5.0, h.bucket(e1));
    cs.update(&h, e2, 5.0, h.bucket(e2));
    let cancelled = cs.cells().iter().all(|&x| x == 0.0) && cs.query(&h, e1) == 0.0;

    outcome(
        unbiased && isolated && cancelled,
        format!(
            "500 seeds: mean {mean:.3} vs true {w:.3} ({:.2} SE); isolation exact {isolated}, cancellation exact {cancelled}",
            (mean - w).abs() / se
        ),
    )
}

fn c8_sketch_error() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for z in [0.8, 1.2] {
        let limit = SKETCH_C * sketch_scale(z);
        let mut worst = 0.0f64;
        for master in 8000..8005u64 {
            let work = zipf_workload(z, master);
            let truth = exact_product(&work.stream, u64::MAX).unwrap();
            let (state, _) = run(&work.stream, &sketch_config(master)).unwrap();
            let bad = truth
                .iter()
                .filter(|&(e, w)| (state.median_query(e).unwrap() - w).abs() > limit)
                .count();
            let frac = bad as f64 / truth.len() as f64;
            worst = worst.max(frac);
            pass &= frac < 0.5;
        }
        parts.push(format!(
            "z={z}: worst fraction over {SKETCH_C}*C/kappa^z is {worst:.3}"
        ));
    }
    outcome(pass, format!("5 seeds each, {}", parts.join("; ")))
}

fn heavy_workload(seed: u64) -> OuterProducts {
    gen_uniform_stream(Dims::square(100_000), 250, 200, 200, seed).unwrap()
}

fn heavy_config(workers: usize, master: u64) -> EngineConfig {
    let mut c = EngineConfig::new(4096, workers, 2);
    c.seed = master;
    c
}

fn c9_load_balance() -> Outcome {
    let mut worst = 0.0f64;
    let mut terms = u64::MAX;
    for master in 9000..9020u64 {
        let stream = heavy_workload(master);
        terms = terms.min(stream.total_terms());
        let (_, report) = run(&stream, &heavy_config(8, master)).unwrap();
        worst = worst.max(report.max_over_avg());
    }
    outcome(
        terms >= 10_000_000 && worst <= 1.10,
        format!("20 seeds, {terms} terms each, K=8: worst max/avg {worst:.4}"),
    )
}

fn c10_quality_sweep() -> Outcome {
    let txs = gen_zipf_transactions(2000, 20_000, 1.1, 10, 1010).unwrap();
    let truth = exact_pair_supports(&txs);
    let stream = TransactionStream::new(&txs, None).unwrap();
    let mut means = Vec::new();
    for e in 6..=16 {
        let kappa = 1usize << e;
        let mut sum = 0.0;
        for master in 0..5u64 {
            let mut c = EngineConfig::new(kappa, 8, 2);
            c.cs_enabled = false;
            c.seed = 10_000 + master;
            let (state, _) = mine_transactions(&stream, &c).unwrap();
            sum += bound_ratio_report(&state, &truth, 100).fraction_tight;
        }
        means.push(sum / 5.0);
    }
    let inversions = means.windows(2).filter(|w| w[1] < w[0]).count();
    let last = *means.last().unwrap();
    let curve: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
    outcome(
        inversions <= 1 && last >= 0.99,
        format!(
            "kappa 2^6..2^16 tight fractions [{}], {inversions} inversions",
            curve.join(" ")
        ),
    )
}

fn c11_throughput() -> Outcome {
    let stream = heavy_workload(9000);
    let time = |k: usize| {
        let mut c = heavy_config(k, 9000);
        c.threads = Some(k);
        let t = Instant::now();
        run(&stream, &c).unwrap();
        t.elapsed().as_secs_f64()
    };
    let t1 = time(1);
    let t4 = time(4);
    let units = std::thread::available_parallelism().map_or(1, |n| n.get());
    let speedup = t1 / t4;
    outcome(
        speedup >= 1.5,
        format!("K=1 {t1:.2} s, K=4 {t4:.2} s, speedup {speedup:.2} on {units} parallel unit(s)"),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    soft: bool,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "enumeration oracle equivalence",
            budget: Duration::from_secs(30),
            soft: false,
            run: c1_enumeration,
        },
        Criterion {
            id: 2,
            name: "partition and K-invariance",
            budget: Duration::from_secs(60),
            soft: false,
            run: c2_k_invariance,
        },
        Criterion {
            id: 3,
            name: "exact-regime recovery",
            budget: Duration::from_secs(30),
            soft: false,
            run: c3_exact_regime,
        },
        Criterion {
            id: 4,
            name: "Space-Saving guarantees",
            budget: Duration::from_secs(60),
            soft: false,
            run: c4_space_saving,
        },
        Criterion {
            id: 5,
            name: "load deviation frequency",
            budget: Duration::from_secs(120),
            soft: false,
            run: c5_load_balance,
        },
        Criterion {
            id: 6,
            name: "heavy-entry recovery, z=1.2",
            budget: Duration::from_secs(300),
            soft: false,
            run: c6_recovery,
        },
        Criterion {
            id: 7,
            name: "Count-Sketch unbiasedness",
            budget: Duration::from_secs(60),
            soft: false,
            run: c7_unbiased,
        },
        Criterion {
            id: 8,
            name: "Count-Sketch additive error",
            budget: Duration::from_secs(120),
            soft: false,
            run: c8_sketch_error,
        },
        Criterion {
            id: 9,
            name: "load balance at run scale",
            budget: Duration::from_secs(120),
            soft: false,
            run: c9_load_balance,
        },
        Criterion {
            id: 10,
            name: "quality-transition sweep",
            budget: Duration::from_secs(300),
            soft: false,
            run: c10_quality_sweep,
        },
        Criterion {
            id: 11,
            name: "throughput K=4 vs K=1",
            budget: Duration::from_secs(600),
            soft: true,
            run: c11_throughput,
        },
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let out = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let pass = out.pass && in_time;
        let tag = match (pass, c.soft) {
            (true, _) => "PASS",
            (false, true) => "SOFT",
            (false, false) => "FAIL",
        };
        println!(
            "[{tag}] {:>2} {}: {} ({:.1} s of {} s)",
            c.id,
            c.name,
            out.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        if !pass && !c.soft {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
