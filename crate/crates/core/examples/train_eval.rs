//! Train both modes briefly on synthetic data and compare test metrics.
//!
//! cargo run --release --example train_eval [iterations]

use simrec::cooc::CoocMatrix;
use simrec::data::{build_sequences, split_users};
use simrec::eval::evaluate;
use simrec::model::{build_atlas, Mode};
use simrec::synth::{generate, SynthConfig};
use simrec::train::{train_with_observer, TrainConfig};

fn main() -> simrec::Result<()> {
    let iters = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let data = generate(&SynthConfig::default())?;
    let set = build_sequences(&data.records, 5, 20)?;
    let users: Vec<usize> = (0..set.n_users()).collect();
    let split = split_users(&users, 0)?;
    let a = CoocMatrix::build(
        split.train.iter().map(|&u| set.sequences[u].items.as_slice()),
        set.n_items(),
        3,
    )?;

    for mode in [Mode::SimEmb, Mode::Baseline] {
        let cfg = TrainConfig {
            mode,
            d: 32,
            batch: 128,
            lr: 0.005,
            max_iters: iters,
            eval_every: 200,
            patience: 3,
            ..TrainConfig::default()
        };
        let (params, log) = train_with_observer(&cfg, &set, &split, &a, |e| {
            println!(
                "  [{}] iter {:5} loss {:.3} valid recall@50 {:.3}",
                mode.as_str(),
                e.iteration,
                e.loss_ema,
                e.valid_recall50
            )
        })?;
        let atlas = build_atlas(&params, &a)?;
        let report = evaluate(&params, &atlas, &set, &split.test, &[20, 50])?;
        println!(
            "{}: {} ({:.4}s per batch)",
            mode.as_str(),
            report.to_json(),
            log.secs_per_batch
        );
    }
    Ok(())
}
