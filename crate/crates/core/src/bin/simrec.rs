use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use simrec::data::Format;
use simrec::pipeline::{self, resolve};
use simrec::synth::SynthConfig;
use simrec::train::TrainConfig;
use simrec::viz::{TsneConfig, VizConfig, DEFAULT_SAMPLE};
use simrec::Result;

/// Multi-interest recommendation with co-occurrence-simulated attribute
/// embeddings. Relative paths resolve against $SIMREC_DATA_DIR when set.
#[derive(Parser)]
#[command(name = "simrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Csv,
    SeqLines,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-cluster interaction log and label file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        users: usize,
        #[arg(long, default_value_t = 300)]
        items: usize,
        #[arg(long, default_value_t = 10)]
        groups: usize,
        #[arg(long, default_value_t = 20)]
        len: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ingest, k-core filter and split users 8:1:1.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: InputFormat,
        #[arg(long, default_value_t = 5)]
        min_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the normalized co-occurrence matrix from training sequences.
    Cooc {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "T", alias = "t", default_value_t = 3)]
        t: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; `--set key=value` overrides the config file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cooc: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint and print the JSON report.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cooc: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// t-SNE projection, unit-circle densities and CSV/SVG export.
    Visualize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLE)]
        sample: usize,
        /// Categories to sample from; 0 means all.
        #[arg(long, default_value_t = 3)]
        categories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the attribute-recovery identity on generated instances.
    TheoryCheck {
        #[arg(long, default_value_t = 32)]
        items: usize,
        #[arg(long, default_value_t = 8)]
        attrs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        instances: usize,
        #[arg(long, default_value = "theory-check.manifest.json")]
        manifest: PathBuf,
    },
    /// Mean per-batch training time of both modes and their ratio.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cooc: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value = "bench.manifest.json")]
        manifest: PathBuf,
    },
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::from_kv_str(&fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    for kv in overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            simrec::Error::InvalidArgument(format!("override `{kv}` is not key=value"))
        })?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, users, items, groups, len, noise, seed } => {
            let cfg = SynthConfig {
                n_users: users,
                n_items: items,
                n_groups: groups,
                seq_len: len,
                noise,
                seed,
            };
            let m = pipeline::synth(&cfg, &resolve(&out))?;
            for a in m.artifacts {
                println!("wrote {a}");
            }
        }
        Command::Prepare { input, format, min_count, seed, out } => {
            let format = match format {
                InputFormat::Csv => Format::Csv,
                InputFormat::SeqLines => Format::SeqLines,
            };
            println!("{}", pipeline::prepare(&resolve(&input), format, min_count, seed, &resolve(&out))?);
        }
        Command::Cooc { data, t, out } => {
            let a = pipeline::cooc(&resolve(&data), t, &resolve(&out))?;
            println!("items={} nnz={} density={:.6}", a.n_items(), a.matrix.nnz(), a.density);
        }
        Command::Train { data, cooc, config, overrides, out } => {
            let cfg = load_config(config.map(|p| resolve(&p)).as_deref(), &overrides)?;
            let log = pipeline::train(&resolve(&data), cooc.map(|p| resolve(&p)).as_deref(), &cfg, &resolve(&out), |e| {
                eprintln!(
                    "iter {} loss_ema {:.4} valid_recall@50 {:.4} {:.4}s/batch",
                    e.iteration, e.loss_ema, e.valid_recall50, e.secs_per_batch
                )
            })?;
            println!(
                "iterations={} best_iteration={} secs_per_batch={:.5}",
                log.iterations, log.best_iteration, log.secs_per_batch
            );
        }
        Command::Eval { data, checkpoint, cooc, split } => {
            let report = pipeline::eval(&resolve(&data), &resolve(&checkpoint), cooc.map(|p| resolve(&p)).as_deref(), &split)?;
            println!("{}", report.to_json());
        }
        Command::Visualize { data, checkpoint, labels, sample, categories, seed, svg, out } => {
            let cfg = VizConfig {
                sample,
                categories: (categories > 0).then_some(categories),
                tsne: TsneConfig { seed, ..TsneConfig::default() },
                ..VizConfig::default()
            };
            let v = pipeline::visualize(&resolve(&data), &resolve(&checkpoint), &resolve(&labels), &cfg, &resolve(&out), svg)?;
            println!(
                "points={} perplexity={} final_kl={:.4} sharpness={:.4}",
                v.points.len(),
                v.perplexity,
                v.tsne.final_kl(),
                v.curve.sharpness()
            );
        }
        Command::TheoryCheck { items, attrs, seed, instances, manifest } => {
            let checks = pipeline::theory_check(items, attrs, seed, instances, &resolve(&manifest))?;
            let mut ok = true;
            for (k, c) in checks.iter().enumerate() {
                ok &= c.passed(1e-8);
                println!(
                    "instance {k}: product_exact={} det={} max_residual={:.3e}",
                    c.product_exact, c.determinant, c.max_residual
                );
            }
            if !ok {
                return Err(simrec::Error::InvalidArgument("recovery identity failed".into()));
            }
        }
        Command::Bench { data, cooc, config, iters, manifest } => {
            let cfg = load_config(config.map(|p| resolve(&p)).as_deref(), &[])?;
            let r = pipeline::bench(&resolve(&data), &resolve(&cooc), &cfg, iters, &resolve(&manifest))?;
            println!(
                "simemb {:.5}s/batch baseline {:.5}s/batch ratio {:.3}",
                r.simemb_secs, r.baseline_secs, r.ratio
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
