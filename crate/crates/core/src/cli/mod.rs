//! File formats and the four commands behind the `hlm-gibbs` binary:
//! `fit`, `simulate`, `benchmark`, `diagnose`.
//!
//! Every CSV output starts with `#` comment lines carrying the run's
//! deterministic provenance (command, version, seed, config and input
//! digests); `manifest.json` adds wall time and the list of outputs.

mod config;
mod csv_io;
mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

pub use config::{load_fit_config, read_toml, Centering, CsvSchema, DataSource, FitConfig, OutputOptions};
pub use csv_io::{
    chains_csv, dataset_csv, load_csv, metrics_csv, parse_chains_csv, parse_csv, replication_diagnostics_csv,
    replications_csv, summary_csv,
};
pub use manifest::{config_sha256, file_sha256, sha256_hex, write_atomic, InputDigest, RunManifest};

use crate::diagnostics::{nonconverged, summarize};
use crate::error::{Error, Result};
use crate::gibbs::{run_model, Model, SamplerConfig};
use crate::sim::{run_replication, simulate_pair, sim_model_spec, summarize_study, ReplicationResult, SimScenario};

pub const PSRF_THRESHOLD: f64 = 1.1;

/// Command-line overrides shared by the commands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub burn: Option<usize>,
    pub post: Option<usize>,
    pub replications: Option<usize>,
    /// Replication whose data `simulate` writes.
    pub replication: usize,
    pub out_dir: PathBuf,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions { out_dir: out_dir.into(), ..RunOptions::default() }
    }

    fn apply(&self, sampler: &mut SamplerConfig) {
        if let Some(s) = self.seed {
            sampler.seed = s;
        }
        if let Some(c) = self.chains {
            sampler.n_chains = c;
        }
        if let Some(b) = self.burn {
            sampler.burn_in = b;
        }
        if let Some(p) = self.post {
            sampler.post_burn = p;
        }
    }
}

/// Files written and non-fatal warnings (PSRF above threshold, failed
/// replications).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Process exit code for an error: 2 for input or configuration problems,
/// 3 for numerical failures, 1 otherwise. A successful run with warnings
/// exits with 4.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        e if e.is_input_error() => 2,
        Error::Numerical(_) | Error::RankDeficient { .. } | Error::Domain(_) => 3,
        Error::Sweep { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        create_dir(dir)?;
        Ok(Writer { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        self.files.push(path);
        Ok(())
    }

    fn finish(mut self, mut manifest: RunManifest, started: Instant, warnings: Vec<String>) -> Result<Outcome> {
        manifest.outputs = self
            .files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        manifest.wall_time_secs = Some(started.elapsed().as_secs_f64());
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.put("manifest.json", &json)?;
        Ok(Outcome { files: self.files, warnings })
    }
}

/// Fits the model in a configuration file and writes `summary.csv`
/// (and `chains.csv` when requested).
pub fn cmd_fit(config_path: &Path, opts: &RunOptions) -> Result<Outcome> {
    let started = Instant::now();
    let mut cfg = load_fit_config(config_path)?;
    opts.apply(&mut cfg.sampler);
    cfg.sampler.validate()?;

    let mut data = load_csv(&cfg.data.path, &cfg.data.schema(), &cfg.model)?;
    let (mut c_shift, mut x_shift) = data.observed_means(&cfg.model);
    if !cfg.centering.continuous {
        c_shift.iter_mut().for_each(|v| *v = 0.0);
    }
    if !cfg.centering.level1 {
        x_shift.iter_mut().for_each(|v| *v = 0.0);
    }
    data.center(&c_shift, &x_shift);

    let model = Model::new(cfg.model.clone(), &data)?;
    let store = run_model(&data, &model, &cfg.sampler, 0)?;
    let rows = summarize(&store);

    let mut manifest = RunManifest::new("fit", cfg.sampler.seed, config_sha256(&cfg));
    manifest.add_input(&cfg.data.path)?;
    let mut header = manifest.header_lines();
    for (name, s) in cfg.model.continuous.iter().chain(&cfg.model.level1).zip(c_shift.iter().chain(&x_shift)) {
        if *s != 0.0 {
            header.push_str(&format!("# centered {name} at {s}\n"));
        }
    }

    let mut out = Writer::new(&opts.out_dir)?;
    out.put("summary.csv", &summary_csv(&rows, PSRF_THRESHOLD, &header)?)?;
    if cfg.output.chains {
        out.put("chains.csv", &chains_csv(&store, &header)?)?;
    }
    let warnings = nonconverged(&rows, PSRF_THRESHOLD)
        .iter()
        .map(|r| format!("PSRF of {} is {:.3} (> {PSRF_THRESHOLD})", r.name, r.psrf.unwrap_or(f64::NAN)))
        .collect();
    out.finish(manifest, started, warnings)
}

fn load_scenario(path: &Path, opts: &RunOptions) -> Result<SimScenario> {
    let mut sc: SimScenario = read_toml(path)?;
    if let Some(s) = opts.seed {
        sc.seed = s;
    }
    if let Some(r) = opts.replications {
        sc.replications = r;
    }
    opts.apply(&mut sc.sampler);
    sc.validate()?;
    Ok(sc)
}

/// Writes the complete and amputed data of one replication of a scenario.
pub fn cmd_simulate(scenario_path: &Path, opts: &RunOptions) -> Result<Outcome> {
    let started = Instant::now();
    let sc = load_scenario(scenario_path, opts)?;
    let (complete, amputed) = simulate_pair(&sc, opts.replication);
    let spec = sim_model_spec();
    let mut manifest = RunManifest::new("simulate", sc.seed, config_sha256(&sc));
    manifest.add_input(scenario_path)?;
    let header = format!("{}# replication: {}\n", manifest.header_lines(), opts.replication);
    let schema = CsvSchema::default();
    let mut out = Writer::new(&opts.out_dir)?;
    out.put("complete.csv", &dataset_csv(&complete, &schema, &spec, &header)?)?;
    out.put("amputed.csv", &dataset_csv(&amputed, &schema, &spec, &header)?)?;
    out.finish(manifest, started, Vec::new())
}

fn checkpoint_path(dir: &Path, r: usize) -> PathBuf {
    dir.join(format!("rep_{r:05}.json"))
}

/// Runs a Monte Carlo study with per-replication checkpoints under
/// `<out-dir>/checkpoints`, resuming from any already present.
pub fn cmd_benchmark(scenario_path: &Path, opts: &RunOptions) -> Result<Outcome> {
    let started = Instant::now();
    let sc = load_scenario(scenario_path, opts)?;
    let hash = config_sha256(&sc);

    let ckpt_dir = opts.out_dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let stamp = ckpt_dir.join("scenario.sha256");
    match std::fs::read_to_string(&stamp) {
        Ok(existing) if existing.trim() != hash => {
            return Err(Error::Config(format!(
                "{} holds checkpoints of a different scenario",
                ckpt_dir.display()
            )));
        }
        Ok(_) => {}
        Err(_) => write_atomic(&stamp, hash.as_bytes())?,
    }

    let mut done: Vec<ReplicationResult> = Vec::new();
    let mut todo = Vec::new();
    for r in 0..sc.replications {
        let path = checkpoint_path(&ckpt_dir, r);
        match std::fs::read(&path) {
            Ok(bytes) => done.push(
                serde_json::from_slice(&bytes)
                    .map_err(|e| Error::Input(format!("corrupt checkpoint {}: {e}", path.display())))?,
            ),
            Err(_) => todo.push(r),
        }
    }
    log::info!("{} replications checkpointed, {} to run", done.len(), todo.len());

    let fresh: Vec<(usize, Result<ReplicationResult>)> = todo
        .par_iter()
        .map(|&r| {
            let res = run_replication(&sc, r).and_then(|rep| {
                let json = serde_json::to_vec(&rep).expect("replication serializes");
                write_atomic(&checkpoint_path(&ckpt_dir, r), &json)?;
                Ok(rep)
            });
            log::debug!("replication {r} finished");
            (r, res)
        })
        .collect();
    let mut failures = Vec::new();
    for (r, res) in fresh {
        match res {
            Ok(rep) => done.push(rep),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    let study = summarize_study(&sc, done, failures)?;

    let mut manifest = RunManifest::new("benchmark", sc.seed, hash);
    manifest.add_input(scenario_path)?;
    let header = manifest.header_lines();
    let names = sc.parameter_names();
    let mut out = Writer::new(&opts.out_dir)?;
    out.put("metrics_gibbs.csv", &metrics_csv(&study.gibbs, &header)?)?;
    out.put("metrics_cdml.csv", &metrics_csv(&study.cdml, &header)?)?;
    out.put("replications.csv", &replications_csv(&study.results, &names, &header)?)?;
    out.put("replication_diagnostics.csv", &replication_diagnostics_csv(&study.results, &header)?)?;

    let mut warnings: Vec<String> =
        study.failures.iter().map(|(r, e)| format!("replication {r} failed: {e}")).collect();
    let unconverged = study.results.iter().filter(|r| r.psrf_over > 0).count();
    if unconverged > 0 {
        warnings.push(format!(
            "{unconverged} of {} replications have a PSRF above {}",
            study.results.len(),
            sc.psrf_threshold
        ));
    }
    out.finish(manifest, started, warnings)
}

/// Convergence summary of a `chains.csv` written by `fit`.
pub fn cmd_diagnose(chains_path: &Path, opts: &RunOptions) -> Result<Outcome> {
    let started = Instant::now();
    let text = std::fs::read_to_string(chains_path).map_err(|e| Error::io(chains_path, e))?;
    let store = parse_chains_csv(&text)?;
    let records = store.n_records(0);
    if (0..store.n_chains()).any(|c| store.n_records(c) != records) {
        return Err(Error::Input("chains have different lengths".into()));
    }
    let rows = summarize(&store);
    let mut manifest = RunManifest::new("diagnose", opts.seed.unwrap_or(0), sha256_hex(b""));
    manifest.add_input(chains_path)?;
    let mut out = Writer::new(&opts.out_dir)?;
    out.put("diagnostics.csv", &summary_csv(&rows, PSRF_THRESHOLD, &manifest.header_lines())?)?;
    let warnings = if store.n_chains() < 2 {
        vec!["a single chain: PSRF unavailable".to_string()]
    } else {
        nonconverged(&rows, PSRF_THRESHOLD)
            .iter()
            .map(|r| format!("PSRF of {} is {:.3} (> {PSRF_THRESHOLD})", r.name, r.psrf.unwrap_or(f64::NAN)))
            .collect()
    };
    out.finish(manifest, started, warnings)
}
