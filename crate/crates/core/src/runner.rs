//! The `evolve`, `bench` and `replay` commands and their run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{self, BenchOptions, Benchmark};
use crate::config::ExperimentConfig;
use crate::cpu::Backend;
use crate::error::{Error, Result};
use crate::evolution::run_evolution;
use crate::tag::Tag;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: &str = "replicate,solved,generations";

pub fn history_file(replicate: usize) -> String {
    format!("replicate_{replicate}_history.csv")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifest {
    Evolve(EvolveManifest),
    Bench(BenchManifest),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveManifest {
    pub version: String,
    /// The experiment config with every signal tag pinned.
    pub config: String,
    pub signal_tags: Vec<Tag>,
    pub replicate_seeds: Vec<u64>,
    pub solved_at: Vec<Option<u64>>,
    /// sha256 of every CSV written, keyed by file name.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    pub version: String,
    pub benchmarks: Vec<Benchmark>,
    pub backends: Vec<Backend>,
    pub agents: Vec<usize>,
    pub replicates: usize,
    pub min_time_ms: u64,
    pub seed: u64,
    pub timing_csv: String,
    pub speedup_csv: String,
    pub workload_csv: String,
    /// sha256 of the deterministic workload CSV. Timing CSVs depend on the
    /// machine and are not checksummed.
    pub checksums: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Replay(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    fn version(&self) -> &str {
        match self {
            Manifest::Evolve(m) => &m.version,
            Manifest::Bench(m) => &m.version,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveReport {
    pub out_dir: PathBuf,
    pub manifest: EvolveManifest,
    pub summary_csv: String,
}

/// Runs every replicate of `config` and writes history CSVs, the summary
/// and the manifest into `out_dir`.
pub fn cmd_evolve(config: &ExperimentConfig, out_dir: &Path) -> Result<EvolveReport> {
    config.validate()?;
    let pinned = config.pinned()?;
    let signal_tags = pinned.problem()?.signal_tags();
    fs::create_dir_all(out_dir)?;

    let mut checksums = BTreeMap::new();
    let mut seeds = Vec::with_capacity(config.replicates);
    let mut solved_at = Vec::with_capacity(config.replicates);
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for i in 0..config.replicates {
        let seed = pinned.replicate_seed(i);
        let (csv, outcome) = replicate_history(&pinned, seed)?;
        let name = history_file(i);
        fs::write(out_dir.join(&name), &csv)?;
        checksums.insert(name, sha256_hex(csv.as_bytes()));
        let last = outcome.history.records.last().map_or(0, |r| r.generation);
        summary.push_str(&format!(
            "{i},{},{}\n",
            outcome.solved_at.is_some(),
            outcome.solved_at.unwrap_or(last)
        ));
        seeds.push(seed);
        solved_at.push(outcome.solved_at);
    }
    fs::write(out_dir.join(SUMMARY_FILE), &summary)?;
    checksums.insert(SUMMARY_FILE.to_string(), sha256_hex(summary.as_bytes()));

    let manifest = EvolveManifest {
        version: ARTIFACT_VERSION.to_string(),
        config: pinned.to_toml()?,
        signal_tags,
        replicate_seeds: seeds,
        solved_at,
        checksums,
    };
    fs::write(
        out_dir.join(MANIFEST_FILE),
        Manifest::Evolve(manifest.clone()).to_json(),
    )?;
    Ok(EvolveReport {
        out_dir: out_dir.to_path_buf(),
        manifest,
        summary_csv: summary,
    })
}

fn replicate_history(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(String, crate::evolution::EvolutionOutcome)> {
    let outcome = run_evolution(&config.params_for(seed)?)?;
    Ok((outcome.history.to_csv(), outcome))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRequest {
    pub benchmarks: Vec<Benchmark>,
    pub backends: Vec<Backend>,
    pub agents: Vec<usize>,
    pub replicates: usize,
    pub min_time: Duration,
    pub seed: u64,
    /// Timing CSV path; the speedup and workload CSVs and the manifest are
    /// written next to it.
    pub out: PathBuf,
}

impl BenchRequest {
    pub fn validate(&self) -> Result<()> {
        if self.benchmarks.is_empty() || self.backends.is_empty() || self.agents.is_empty() {
            return Err(Error::Config("benchmark, backend and agent lists must not be empty".into()));
        }
        if self.agents.contains(&0) {
            return Err(Error::Config("agent counts must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.out.file_name().is_none() {
            return Err(Error::Config(format!("{} is not a file path", self.out.display())));
        }
        Ok(())
    }

    fn sibling(&self, suffix: &str) -> PathBuf {
        let stem = self
            .out
            .file_stem()
            .map_or("bench".into(), |s| s.to_string_lossy().into_owned());
        self.out.with_file_name(format!("{stem}_{suffix}"))
    }

    pub fn speedup_path(&self) -> PathBuf {
        self.sibling("speedup.csv")
    }

    pub fn workload_path(&self) -> PathBuf {
        self.sibling("workload.csv")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.sibling("manifest.json")
    }
}

fn workload_csv(
    benchmarks: &[Benchmark],
    backends: &[Backend],
    agents: &[usize],
    seed: u64,
) -> Result<String> {
    let mut rows = Vec::new();
    for &b in benchmarks {
        for &backend in backends {
            for &n in agents {
                rows.push(bench::workload(b, backend, n, seed)?);
            }
        }
    }
    Ok(bench::workload_to_csv(&rows))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

/// Times the requested cells and writes the timing, speedup and workload
/// CSVs plus a manifest.
pub fn cmd_bench(request: &BenchRequest) -> Result<BenchManifest> {
    request.validate()?;
    if let Some(dir) = request.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let workload = workload_csv(
        &request.benchmarks,
        &request.backends,
        &request.agents,
        request.seed,
    )?;
    let options = BenchOptions {
        replicates: request.replicates,
        min_time: request.min_time,
        seed: request.seed,
    };
    let records = bench::run_sweep(&request.benchmarks, &request.backends, &request.agents, &options)?;
    bench::emit_csv(&records, &request.out)?;
    let speedup = bench::speedup_to_csv(&bench::compute_speedup(&records));
    fs::write(request.speedup_path(), speedup)?;
    fs::write(request.workload_path(), &workload)?;

    let workload_name = file_name(&request.workload_path());
    let manifest = BenchManifest {
        version: ARTIFACT_VERSION.to_string(),
        benchmarks: request.benchmarks.clone(),
        backends: request.backends.clone(),
        agents: request.agents.clone(),
        replicates: request.replicates,
        min_time_ms: request.min_time.as_millis() as u64,
        seed: request.seed,
        timing_csv: file_name(&request.out),
        speedup_csv: file_name(&request.speedup_path()),
        workload_csv: workload_name.clone(),
        checksums: BTreeMap::from([(workload_name, sha256_hex(workload.as_bytes()))]),
    };
    fs::write(
        request.manifest_path(),
        Manifest::Bench(manifest.clone()).to_json(),
    )?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    /// Where the recomputed CSV was written.
    pub path: PathBuf,
    pub checksum: String,
}

/// Recomputes one result CSV from a manifest and checks it against the
/// recorded checksum. `replicate` selects the replicate of an evolve run
/// and is ignored for bench runs.
pub fn cmd_replay(manifest_path: &Path, replicate: usize, out_dir: &Path) -> Result<ReplayReport> {
    let manifest = Manifest::load(manifest_path)?;
    if manifest.version() != ARTIFACT_VERSION {
        return Err(Error::Replay(format!(
            "manifest was written by version {}, this is {ARTIFACT_VERSION}",
            manifest.version()
        )));
    }
    let (name, csv, expected) = match &manifest {
        Manifest::Evolve(m) => {
            let Some(&seed) = m.replicate_seeds.get(replicate) else {
                return Err(Error::Replay(format!(
                    "replicate {replicate} is out of range ({} replicates)",
                    m.replicate_seeds.len()
                )));
            };
            let config = ExperimentConfig::from_toml(&m.config)
                .map_err(|e| Error::Replay(format!("manifest config: {e}")))?;
            if config.problem()?.signal_tags() != m.signal_tags {
                return Err(Error::Replay("signal tags disagree with the config".into()));
            }
            let name = history_file(replicate);
            let (csv, _) = replicate_history(&config, seed)?;
            (name.clone(), csv, m.checksums.get(&name).cloned())
        }
        Manifest::Bench(m) => {
            let csv = workload_csv(&m.benchmarks, &m.backends, &m.agents, m.seed)?;
            (m.workload_csv.clone(), csv, m.checksums.get(&m.workload_csv).cloned())
        }
    };
    let Some(expected) = expected else {
        return Err(Error::Replay(format!("manifest has no checksum for {name}")));
    };
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("replay_{name}"));
    fs::write(&path, &csv)?;
    let checksum = sha256_hex(csv.as_bytes());
    if checksum != expected {
        return Err(Error::Replay(format!(
            "checksum mismatch for {name}: recorded {expected}, replayed {checksum}"
        )));
    }
    Ok(ReplayReport { path, checksum })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sibling_paths() {
        let r = BenchRequest {
            benchmarks: vec![Benchmark::Nop],
            backends: Backend::ALL.to_vec(),
            agents: vec![1],
            replicates: 1,
            min_time: Duration::from_millis(1),
            seed: 1,
            out: PathBuf::from("runs/bench.csv"),
        };
        assert_eq!(r.speedup_path(), PathBuf::from("runs/bench_speedup.csv"));
        assert_eq!(r.workload_path(), PathBuf::from("runs/bench_workload.csv"));
        assert_eq!(r.manifest_path(), PathBuf::from("runs/bench_manifest.json"));
    }

    #[test]
    fn bench_request_validation() {
        let ok = BenchRequest {
            benchmarks: vec![Benchmark::Nop],
            backends: vec![Backend::Lite],
            agents: vec![1],
            replicates: 1,
            min_time: Duration::from_millis(1),
            seed: 1,
            out: PathBuf::from("bench.csv"),
        };
        assert!(ok.validate().is_ok());
        for bad in [
            BenchRequest { agents: vec![1, 0], ..ok.clone() },
            BenchRequest { replicates: 0, ..ok.clone() },
            BenchRequest { backends: vec![], ..ok.clone() },
            BenchRequest { out: PathBuf::from(".."), ..ok.clone() },
        ] {
            assert_eq!(bad.validate().unwrap_err().exit_code(), 1);
        }
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = Manifest::Evolve(EvolveManifest {
            version: ARTIFACT_VERSION.into(),
            config: "seed = 1\n".into(),
            signal_tags: vec![Tag(1), Tag(u64::MAX)],
            replicate_seeds: vec![u64::MAX, 3],
            solved_at: vec![None, Some(4)],
            checksums: BTreeMap::from([("a.csv".into(), "00".into())]),
        });
        assert_eq!(serde_json::from_str::<Manifest>(&m.to_json()).unwrap(), m);
    }
}
