//! The run manifest: enough to reproduce a run and audit what it did.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crop_core::{CropError, EngineConfig, EntryFilter, Execution, LoadReport};

use crate::CliError;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The command's arguments, enough to replay it.
    pub args: serde_json::Value,
    pub config: Option<ConfigEcho>,
    pub sub_seeds: Vec<SubSeed>,
    pub inputs: Vec<InputDigest>,
    pub timings_seconds: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    pub loads: Option<LoadsEcho>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub kappa: usize,
    pub workers: usize,
    pub ss_capacity: usize,
    pub cs_enabled: bool,
    pub instances: usize,
    pub seed: u64,
    pub d_hint: Option<u64>,
    pub filter: String,
    pub execution: String,
    pub threads: Option<usize>,
    pub intervals: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubSeed {
    pub label: String,
    pub index: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct InputDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadsEcho {
    pub total: u64,
    pub expected_per_worker: f64,
    pub per_worker: Vec<u64>,
    pub per_instance: Vec<Vec<u64>>,
    pub max_over_avg: f64,
}

impl RunManifest {
    pub fn new(command: &str, args: serde_json::Value) -> Self {
        RunManifest {
            tool: "crop".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            config: None,
            sub_seeds: Vec::new(),
            inputs: Vec::new(),
            timings_seconds: BTreeMap::new(),
            counts: BTreeMap::new(),
            loads: None,
            outputs: Vec::new(),
        }
    }

    pub fn set_config(&mut self, c: &EngineConfig) -> Result<(), CliError> {
        self.config = Some(ConfigEcho {
            kappa: c.kappa,
            workers: c.workers,
            ss_capacity: c.ss_capacity,
            cs_enabled: c.cs_enabled,
            instances: c.instances,
            seed: c.seed,
            d_hint: c.d_hint,
            filter: match c.filter {
                EntryFilter::All => "all",
                EntryFilter::AboveDiagonal => "above-diagonal",
            }
            .into(),
            execution: match c.execution {
                Execution::Independent => "independent",
                Execution::FanOut => "fan-out",
            }
            .into(),
            threads: c.threads,
            intervals: c.assignments()?.iter().map(|w| [w.q(), w.r()]).collect(),
        });
        for i in 0..c.instances {
            self.sub_seeds.push(SubSeed {
                label: "instance".into(),
                index: i as u64,
                seed: c.instance_seed(i),
            });
        }
        Ok(())
    }

    pub fn set_loads(&mut self, r: &LoadReport) {
        self.loads = Some(LoadsEcho {
            total: r.total(),
            expected_per_worker: r.expected_load(),
            per_worker: r.per_worker(),
            per_instance: r.per_instance.clone(),
            max_over_avg: r.max_over_avg(),
        });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CropError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            CropError::parse(path.display().to_string(), e.line(), e.to_string()).into()
        })
    }
}

pub fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let file = File::open(path).map_err(|e| CropError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = reader.read(&mut buf).map_err(|e| CropError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(InputDigest {
        path: path.to_path_buf(),
        bytes,
        sha256: hex::encode(hasher.finalize()),
    })
}
