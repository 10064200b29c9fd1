//! File-level pipeline behind the `simrec` commands. Every step reads its
//! inputs from disk, writes its artifacts and a JSON run manifest next to
//! them.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cooc::CoocMatrix;
use crate::data::{build_sequences, ingest, split_users, DatasetSplit, Format, SequenceSet, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, DEFAULT_CUTOFFS};
use crate::model::{build_atlas, Mode, ModelParams};
use crate::synth::{generate, SynthConfig};
use crate::theory::{check_instance, AttributeMatrix, TheoryCheck};
use crate::train::{train_with_observer, LogEntry, TrainConfig, TrainLog};
use crate::viz::{self, labels_by_index, read_labels, VizConfig, Visualization};

/// Relative paths given to the commands resolve against this directory.
pub const DATA_DIR_ENV: &str = "SIMREC_DATA_DIR";

pub const ITEMS_FILE: &str = "items.txt";
pub const SEQUENCES_FILE: &str = "sequences.txt";
pub const SPLIT_FILE: &str = "split.tsv";
pub const STATS_FILE: &str = "stats.txt";

pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub secs: f64,
}

/// Provenance record written by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    /// SHA-256 over the input files, in order.
    pub dataset_fingerprint: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<String>,
    pub artifacts: Vec<String>,
    pub phases: Vec<Phase>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            dataset_fingerprint: String::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            phases: Vec::new(),
        }
    }

    /// Runs `f`, recording its wall-clock under `name`.
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let started = Instant::now();
        let out = f()?;
        self.phases.push(Phase {
            name: name.to_string(),
            secs: started.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    pub fn inputs(&mut self, paths: &[&Path]) -> Result<()> {
        self.dataset_fingerprint = fingerprint(paths)?;
        self.inputs = paths.iter().map(|p| p.display().to_string()).collect();
        Ok(())
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Hex SHA-256 of each file's name length, name and contents, chained.
pub fn fingerprint(paths: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    for p in paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        let mut f = open_artifact(p, "input file")?;
        loop {
            let n = f.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn open_artifact(path: &Path, expected: &'static str) -> Result<File> {
    File::open(path).map_err(|e| Error::Artifact {
        path: path.display().to_string(),
        expected,
        version: 1,
        reason: e.to_string(),
    })
}

fn manifest_path(artifact: &Path, command: &str) -> PathBuf {
    if artifact.is_dir() {
        artifact.join(format!("{command}.manifest.json"))
    } else {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(format!(".{command}.manifest.json"));
        artifact.with_file_name(name)
    }
}

/// A prepared dataset directory.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub sequences: SequenceSet,
    pub split: DatasetSplit,
}

impl Prepared {
    pub fn files(dir: &Path) -> [PathBuf; 3] {
        [dir.join(ITEMS_FILE), dir.join(SEQUENCES_FILE), dir.join(SPLIT_FILE)]
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let [items, seqs, split] = Self::files(dir);
        let sequences = SequenceSet::read_prepared(
            BufReader::new(open_artifact(&items, "prepared item list")?),
            BufReader::new(open_artifact(&seqs, "prepared sequences")?),
            DEFAULT_WINDOW,
        )?;
        let split = DatasetSplit::read_from(
            BufReader::new(open_artifact(&split, "prepared split")?),
            &sequences.ids,
        )?;
        Ok(Self { sequences, split })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let [items, seqs, split] = Self::files(dir);
        self.sequences.write_item_keys(BufWriter::new(File::create(items)?))?;
        self.sequences.write_seq_lines(BufWriter::new(File::create(seqs)?))?;
        self.split.write_to(&self.sequences.ids, BufWriter::new(File::create(split)?))?;
        fs::write(dir.join(STATS_FILE), self.sequences.stats_line() + "\n")?;
        Ok(())
    }

    pub fn train_sequences(&self) -> impl Iterator<Item = &[usize]> {
        self.split
            .train
            .iter()
            .map(|&u| self.sequences.sequences[u].items.as_slice())
    }
}

/// Writes `interactions.csv` and `labels.csv` into `out`.
pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<RunManifest> {
    let mut m = RunManifest::new(
        "synth",
        serde_json::json!({
            "users": cfg.n_users, "items": cfg.n_items, "groups": cfg.n_groups,
            "len": cfg.seq_len, "noise": cfg.noise,
        }),
    );
    m.seed("synth", cfg.seed);
    fs::create_dir_all(out)?;
    let data = m.phase("generate", || generate(cfg))?;
    let (csv, labels) = (out.join("interactions.csv"), out.join("labels.csv"));
    m.phase("write", || {
        data.write_csv(BufWriter::new(File::create(&csv)?))?;
        data.write_labels(BufWriter::new(File::create(&labels)?))
    })?;
    m.artifact(&csv);
    m.artifact(&labels);
    m.write(&manifest_path(out, "synth"))?;
    Ok(m)
}

/// Ingest, filter and split; returns the stats line.
pub fn prepare(input: &Path, format: Format, min_count: usize, seed: u64, out: &Path) -> Result<String> {
    let mut m = RunManifest::new(
        "prepare",
        serde_json::json!({ "format": format!("{format:?}"), "min_count": min_count }),
    );
    m.seed("split", seed);
    m.inputs(&[input])?;
    let (records, _) = m.phase("ingest", || ingest(BufReader::new(open_artifact(input, "interaction log")?), format))?;
    let sequences = m.phase("filter", || build_sequences(&records, min_count, DEFAULT_WINDOW))?;
    let users: Vec<usize> = (0..sequences.n_users()).collect();
    let split = split_users(&users, seed)?;
    let prepared = Prepared { sequences, split };
    m.phase("write", || prepared.save(out))?;
    for f in Prepared::files(out) {
        m.artifact(&f);
    }
    m.artifact(&out.join(STATS_FILE));
    m.write(&manifest_path(out, "prepare"))?;
    Ok(prepared.sequences.stats_line())
}

/// Builds the co-occurrence matrix from the training users' sequences.
pub fn cooc(data: &Path, threshold: usize, out: &Path) -> Result<CoocMatrix> {
    let mut m = RunManifest::new("cooc", serde_json::json!({ "T": threshold }));
    let files = Prepared::files(data);
    m.inputs(&files.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let prepared = Prepared::load(data)?;
    let a = m.phase("build", || {
        CoocMatrix::build(prepared.train_sequences(), prepared.sequences.n_items(), threshold)
    })?;
    m.phase("write", || a.save(out))?;
    m.artifact(out);
    m.write(&manifest_path(out, "cooc"))?;
    Ok(a)
}

fn load_cooc_for(mode: Mode, path: Option<&Path>, n_items: usize) -> Result<CoocMatrix> {
    match (mode, path) {
        (_, Some(p)) => CoocMatrix::load(p),
        (Mode::Baseline, None) => Ok(CoocMatrix::identity(n_items)),
        (Mode::SimEmb, None) => Err(Error::InvalidArgument(
            "simemb mode needs a co-occurrence matrix (--cooc)".into(),
        )),
    }
}

/// Trains and writes the checkpoint plus `<out>.log.csv`.
pub fn train(
    data: &Path,
    cooc_path: Option<&Path>,
    cfg: &TrainConfig,
    out: &Path,
    mut observe: impl FnMut(&LogEntry),
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut m = RunManifest::new("train", serde_json::json!({ "config": cfg.to_kv_string() }));
    m.seed("train", cfg.seed);
    let mut inputs: Vec<PathBuf> = Prepared::files(data).to_vec();
    inputs.extend(cooc_path.map(Path::to_path_buf));
    m.inputs(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let prepared = Prepared::load(data)?;
    let a = load_cooc_for(cfg.mode, cooc_path, prepared.sequences.n_items())?;
    if let Some(p) = cooc_path {
        if a.threshold != cfg.t {
            return Err(Error::InvalidArgument(format!(
                "{} was built with T={}, config says T={}",
                p.display(),
                a.threshold,
                cfg.t
            )));
        }
    }
    let (params, log) = m.phase("train", || {
        train_with_observer(cfg, &prepared.sequences, &prepared.split, &a, &mut observe)
    })?;
    params.save(out, cooc_path.filter(|_| cfg.mode == Mode::SimEmb))?;
    let log_path = PathBuf::from(format!("{}.log.csv", out.display()));
    let mut w = BufWriter::new(File::create(&log_path)?);
    writeln!(w, "iteration,loss_ema,valid_recall50,secs_per_batch")?;
    for e in &log.entries {
        writeln!(w, "{},{},{},{}", e.iteration, e.loss_ema, e.valid_recall50, e.secs_per_batch)?;
    }
    w.flush()?;
    m.artifact(out);
    m.artifact(&log_path);
    m.write(&manifest_path(out, "train"))?;
    Ok(log)
}

/// Loads a checkpoint with its co-occurrence matrix; `cooc` overrides the
/// path stored in the checkpoint.
pub fn load_model(checkpoint: &Path, cooc: Option<&Path>) -> Result<(ModelParams<f32>, CoocMatrix)> {
    let (params, stored) = ModelParams::load(checkpoint)?;
    let path = cooc.map(Path::to_path_buf).or(stored);
    let a = load_cooc_for(params.mode, path.as_deref(), params.dims.n_items)?;
    Ok((params, a))
}

pub fn eval(data: &Path, checkpoint: &Path, cooc: Option<&Path>, part: &str) -> Result<EvalReport> {
    let mut m = RunManifest::new("eval", serde_json::json!({ "split": part }));
    let mut inputs: Vec<PathBuf> = Prepared::files(data).to_vec();
    inputs.push(checkpoint.to_path_buf());
    m.inputs(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let prepared = Prepared::load(data)?;
    let (params, a) = load_model(checkpoint, cooc)?;
    if params.dims.n_items != prepared.sequences.n_items() {
        return Err(Error::InvalidArgument(format!(
            "checkpoint covers {} items, dataset has {}",
            params.dims.n_items,
            prepared.sequences.n_items()
        )));
    }
    let users = prepared.split.part(part)?;
    let report = m.phase("evaluate", || {
        let atlas = build_atlas(&params, &a)?;
        evaluate(&params, &atlas, &prepared.sequences, users, &DEFAULT_CUTOFFS)
    })?;
    m.config["report"] = serde_json::from_str(&report.to_json())?;
    m.write(&manifest_path(checkpoint, "eval"))?;
    Ok(report)
}

pub fn visualize(
    data: &Path,
    checkpoint: &Path,
    labels: &Path,
    cfg: &VizConfig,
    out: &Path,
    svg: bool,
) -> Result<Visualization> {
    let mut m = RunManifest::new(
        "visualize",
        serde_json::json!({
            "sample": cfg.sample, "categories": cfg.categories, "kappa": cfg.kappa,
            "perplexity": cfg.tsne.perplexity, "iterations": cfg.tsne.iterations,
        }),
    );
    m.seed("visualize", cfg.tsne.seed);
    let mut inputs: Vec<PathBuf> = Prepared::files(data)[..1].to_vec();
    inputs.extend([checkpoint.to_path_buf(), labels.to_path_buf()]);
    m.inputs(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let prepared = Prepared::load(data)?;
    let (params, a) = load_model(checkpoint, None)?;
    let labels = read_labels(BufReader::new(open_artifact(labels, "label file")?))?;
    let by_index = labels_by_index(&prepared.sequences.ids.items, &labels);
    let atlas = build_atlas(&params, &a)?;
    let out_viz = m.phase("project", || viz::visualize(&atlas, &prepared.sequences.ids.items, &by_index, cfg))?;
    m.phase("export", || viz::export(&out_viz.points, &out_viz.curve, out, svg))?;
    for f in ["points.csv", "density.csv"] {
        m.artifact(&out.join(f));
    }
    if svg {
        m.artifact(&out.join("embedding.svg"));
    }
    m.config["sharpness"] = serde_json::json!(out_viz.curve.sharpness());
    m.config["final_kl"] = serde_json::json!(out_viz.tsne.final_kl());
    m.write(&manifest_path(out, "visualize"))?;
    Ok(out_viz)
}

/// Checks `instances` generated attribute matrices with seeds `seed..`.
pub fn theory_check(items: usize, attrs: usize, seed: u64, instances: usize, manifest: &Path) -> Result<Vec<TheoryCheck>> {
    let mut m = RunManifest::new(
        "theory-check",
        serde_json::json!({ "items": items, "attrs": attrs, "instances": instances }),
    );
    m.seed("theory", seed);
    let checks = m.phase("check", || {
        (0..instances as u64)
            .map(|k| check_instance(&AttributeMatrix::generate(items, attrs, seed + k)?))
            .collect::<Result<Vec<_>>>()
    })?;
    m.config["passed"] = serde_json::json!(checks.iter().filter(|c| c.passed(1e-8)).count());
    m.write(manifest)?;
    Ok(checks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub simemb_secs: f64,
    pub baseline_secs: f64,
    pub ratio: f64,
    pub iterations: usize,
}

/// Mean per-batch training seconds (loss, gradients and Adam step) for both
/// modes on the same data and configuration.
pub fn bench(data: &Path, cooc_path: &Path, cfg: &TrainConfig, iterations: usize, manifest: &Path) -> Result<BenchReport> {
    let mut m = RunManifest::new("bench", serde_json::json!({ "config": cfg.to_kv_string(), "iterations": iterations }));
    m.seed("train", cfg.seed);
    let mut inputs: Vec<PathBuf> = Prepared::files(data).to_vec();
    inputs.push(cooc_path.to_path_buf());
    m.inputs(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let prepared = Prepared::load(data)?;
    let a = CoocMatrix::load(cooc_path)?;
    let mut time = |mode: Mode| -> Result<f64> {
        let c = TrainConfig {
            mode,
            max_iters: iterations,
            eval_every: iterations + 1,
            ..cfg.clone()
        };
        let (_, log) = m.phase(mode.as_str(), || {
            train_with_observer(&c, &prepared.sequences, &prepared.split, &a, |_| {})
        })?;
        Ok(log.secs_per_batch)
    };
    let simemb_secs = time(Mode::SimEmb)?;
    let baseline_secs = time(Mode::Baseline)?;
    let report = BenchReport {
        simemb_secs,
        baseline_secs,
        ratio: simemb_secs / baseline_secs,
        iterations,
    };
    m.config["report"] = serde_json::to_value(report)?;
    m.write(manifest)?;
    Ok(report)
}
