//! Workloads shared by the acceptance suite and the calibration pilot.
#![allow(dead_code)]

use crop_core::oracle::{gen_zipf_stream, ZipfModel, ZipfStream};
use crop_core::{derive_seed, Dims, EngineConfig};

pub const ZIPF_C: f64 = 1e6;
pub const ZIPF_D: usize = 100_000;
pub const ZIPF_N: usize = 10_000;
pub const ZIPF_PRODUCTS: usize = 20_000;
pub const KAPPA: usize = 2000;

/// `d = 10^5` Zipf entries on a `10^4 x 10^4` grid, two products per row.
pub fn zipf_workload(z: f64, master: u64) -> ZipfStream {
    let model = ZipfModel::new(ZIPF_C, z, ZIPF_D).expect("valid model");
    gen_zipf_stream(
        model,
        Dims::square(ZIPF_N),
        Some(ZIPF_PRODUCTS),
        derive_seed(master, "generate", 0),
    )
    .expect("feasible workload")
}

/// Space-Saving run used for heavy-entry recovery: `l = 2`, `t = 9`.
pub fn recovery_config(master: u64) -> EngineConfig {
    let mut c = EngineConfig::new(KAPPA, 8, 2);
    c.instances = 9;
    c.cs_enabled = false;
    c.seed = master;
    c
}

/// Single Count-Sketch instance.
pub fn sketch_config(master: u64) -> EngineConfig {
    let mut c = EngineConfig::new(KAPPA, 8, 0);
    c.cs_enabled = true;
    c.seed = master;
    c
}

/// `C / (l kappa)^z`.
pub fn recovery_scale(z: f64) -> f64 {
    ZIPF_C / ((2 * KAPPA) as f64).powf(z)
}

/// `C / kappa^z`.
pub fn sketch_scale(z: f64) -> f64 {
    ZIPF_C / (KAPPA as f64).powf(z)
}
