use std::collections::HashMap;

use crop_core::oracle::{gen_zipf_stream, gen_zipf_transactions, ZipfModel};
use crop_core::pairs::{bound_ratio_report, mine_transactions, recall_at_k};
use crop_core::{
    exact_pair_supports, exact_product, exact_top, make_hashes, run, Dims, EngineConfig, Entry,
    HashConfig, SpaceSavingSummary, Transaction, TransactionStream,
};

fn percentile(mut v: Vec<f64>, p: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * p) as usize]
}

#[test]
fn median_of_eleven_beats_single_instance_at_p75() {
    let model = ZipfModel::new(1e4, 1.0, 5000).unwrap();
    let work = gen_zipf_stream(model, Dims::square(300), Some(600), 21).unwrap();
    let truth = exact_product(&work.stream, u64::MAX).unwrap();
    for seed in 0..5u64 {
        let mut one = EngineConfig::new(256, 4, 0);
        one.seed = seed;
        let mut eleven = one.clone();
        eleven.instances = 11;
        let (s1, _) = run(&work.stream, &one).unwrap();
        let (s11, _) = run(&work.stream, &eleven).unwrap();
        let err = |s: &crop_core::SketchState| -> Vec<f64> {
            truth
                .iter()
                .map(|(e, w)| (s.median_query(e).unwrap() - w).abs())
                .collect()
        };
        let (p1, p11) = (percentile(err(&s1), 0.75), percentile(err(&s11), 0.75));
        assert!(p11 <= p1, "seed {seed}: t=11 p75 {p11} > t=1 p75 {p1}");
    }
}

#[test]
fn sketch_error_equals_signed_colliding_mass() {
    let model = ZipfModel::new(64.0, 1.0, 64).unwrap();
    let work = gen_zipf_stream(model, Dims::square(50), None, 3).unwrap();
    // integer weights keep every sum exact
    let mut stream = crop_core::OuterProducts::new(Dims::square(50));
    for (e, w) in &work.truth {
        stream
            .push(
                crop_core::SparseVector::indicator(50, &[e.row]).unwrap(),
                crop_core::SparseVector::new(50, vec![(e.col, w.round())]).unwrap(),
            )
            .unwrap();
    }
    let truth = exact_product(&stream, u64::MAX).unwrap();
    let mut c = EngineConfig::new(16, 2, 0);
    c.seed = 4;
    let (state, _) = run(&stream, &c).unwrap();
    let h = make_hashes(HashConfig::new(16, c.instance_seed(0))).unwrap();
    for (e, w) in truth.iter() {
        let residual: f64 = truth
            .iter()
            .filter(|&(f, _)| f != e && h.bucket(f) == h.bucket(e))
            .map(|(f, v)| h.sign(f) * h.sign(e) * v)
            .sum();
        assert_eq!(state.median_query(e).unwrap(), w + residual, "{e}");
    }
}

#[test]
fn space_saving_top_agrees_where_bounds_separate() {
    let mut s = SpaceSavingSummary::new(6).unwrap();
    let mut truth: HashMap<Entry, f64> = HashMap::new();
    let mut x: u64 = 12345;
    for _ in 0..5000 {
        x = x
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let u = (x >> 33) as f64 / (1u64 << 31) as f64;
        let item = Entry::new((u * u * u * 60.0) as u32, 0);
        s.update(item, 1.0).unwrap();
        *truth.entry(item).or_insert(0.0) += 1.0;
    }
    let top = s.top(6);
    for (i, (a, ba)) in top.iter().enumerate() {
        for (b, bb) in &top[i + 1..] {
            if ba.lower > bb.upper {
                assert!(truth[a] > truth[b]);
            }
        }
    }
}

#[test]
fn above_diagonal_load_is_pair_count() {
    let txs = gen_zipf_transactions(300, 500, 1.0, 12, 2).unwrap();
    let stream = TransactionStream::new(&txs, None).unwrap();
    let (_, report) = mine_transactions(&stream, &EngineConfig::new(64, 8, 2)).unwrap();
    assert_eq!(
        report.total(),
        txs.iter().map(Transaction::pair_count).sum::<u64>()
    );
}

#[test]
fn recall_grows_with_kappa() {
    let txs = gen_zipf_transactions(1000, 5000, 1.1, 8, 77).unwrap();
    let truth = exact_pair_supports(&txs);
    let top: Vec<Entry> = exact_top(&truth, 50).into_iter().map(|x| x.0).collect();
    let stream = TransactionStream::new(&txs, None).unwrap();
    let mut means = Vec::new();
    for e in 4..=11 {
        let mut sum = 0.0;
        for seed in 0..20u64 {
            let mut c = EngineConfig::new(1 << e, 4, 2);
            c.cs_enabled = false;
            c.seed = seed;
            let (state, _) = mine_transactions(&stream, &c).unwrap();
            sum += recall_at_k(&state, &top, 50).unwrap();
        }
        means.push(sum / 20.0);
    }
    let inversions = means.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(inversions <= 1, "{means:?}");
}

#[test]
fn one_bucket_two_counters_gives_loose_bounds() {
    let txs = gen_zipf_transactions(500, 3000, 1.0, 8, 12).unwrap();
    let truth = exact_pair_supports(&txs);
    let stream = TransactionStream::new(&txs, None).unwrap();
    let (state, _) = mine_transactions(&stream, &EngineConfig::new(1, 1, 2)).unwrap();
    let r = bound_ratio_report(&state, &truth, 100);
    let poor = r.rows.iter().filter(|p| p.lower_over_upper() < 0.1).count();
    assert!(poor >= 95, "only {poor} of 100 pairs have ratio < 0.1");
}
