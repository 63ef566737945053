//! Pilot runs that produced the frozen constants of the acceptance suite.
//! Seeds here never overlap the acceptance seeds.
//!
//! `cargo test -p crop-core --test calibration -- --ignored --nocapture`

mod common;

use std::collections::HashSet;

use common::*;
use crop_core::{exact_product, Entry};

#[test]
#[ignore]
fn pilot_recovery_threshold() {
    let z = 1.2;
    let mut worst = 0.0f64;
    for master in 90_000..90_010u64 {
        let work = zipf_workload(z, master);
        let (state, _) = crop_core::run(&work.stream, &recovery_config(master)).unwrap();
        let reported: HashSet<Entry> = state
            .top_entries(usize::MAX)
            .into_iter()
            .map(|r| r.entry)
            .collect();
        let missed = work.truth.iter().find(|(e, _)| !reported.contains(e));
        if let Some(&(e, w)) = missed {
            let rank = work.truth.iter().position(|x| x.0 == e).unwrap() + 1;
            println!(
                "seed {master}: heaviest miss rank {rank} weight/scale {:.2}",
                w / recovery_scale(z)
            );
            worst = worst.max(w / recovery_scale(z));
        }
    }
    println!("max heaviest-miss weight / (C/(l kappa)^z) = {worst:.3}");
}

#[test]
#[ignore]
fn pilot_sketch_error_scale() {
    for z in [0.8, 1.2] {
        for master in 91_000..91_005u64 {
            let work = zipf_workload(z, master);
            let truth = exact_product(&work.stream, u64::MAX).unwrap();
            let (state, _) = crop_core::run(&work.stream, &sketch_config(master)).unwrap();
            let mut errs: Vec<f64> = truth
                .iter()
                .map(|(e, w)| (state.median_query(e).unwrap() - w).abs() / sketch_scale(z))
                .collect();
            errs.sort_by(f64::total_cmp);
            println!(
                "z {z} seed {master}: |err|/(C/kappa^z) median {:.3} p75 {:.3}",
                errs[errs.len() / 2],
                errs[errs.len() * 3 / 4]
            );
        }
    }
}
