//! Project a briefly trained SimEmb atlas with t-SNE, estimate the angular
//! density and write CSV and SVG files to a temporary directory.
//!
//! cargo run --release --example visualize

use std::collections::HashMap;

use simrec::cooc::CoocMatrix;
use simrec::data::{build_sequences, split_users};
use simrec::model::build_atlas;
use simrec::synth::{generate, item_key, SynthConfig};
use simrec::train::{train, TrainConfig};
use simrec::viz::{self, labels_by_index, VizConfig};

fn main() -> simrec::Result<()> {
    let data = generate(&SynthConfig::default())?;
    let set = build_sequences(&data.records, 5, 20)?;
    let users: Vec<usize> = (0..set.n_users()).collect();
    let split = split_users(&users, 0)?;
    let a = CoocMatrix::build(
        split.train.iter().map(|&u| set.sequences[u].items.as_slice()),
        set.n_items(),
        3,
    )?;
    let cfg = TrainConfig { d: 32, batch: 128, lr: 0.005, max_iters: 400, eval_every: 400, ..TrainConfig::default() };
    let (params, _) = train(&cfg, &set, &split, &a)?;
    let atlas = build_atlas(&params, &a)?;

    let raw: HashMap<String, String> = data
        .item_groups
        .iter()
        .enumerate()
        .map(|(i, g)| (item_key(i), format!("g{}", g[0])))
        .collect();
    let labels = labels_by_index(&set.ids.items, &raw);
    let v = viz::visualize(&atlas, &set.ids.items, &labels, &VizConfig::default())?;
    println!(
        "{} points, perplexity {}, final KL {:.3}, sharpness {:.2}",
        v.points.len(),
        v.perplexity,
        v.tsne.final_kl(),
        v.curve.sharpness()
    );

    let dir = std::env::temp_dir().join("simrec-visualize");
    viz::export(&v.points, &v.curve, &dir, true)?;
    println!("wrote {}", dir.display());
    Ok(())
}
