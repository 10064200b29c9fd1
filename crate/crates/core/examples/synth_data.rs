//! Generate a planted-cluster log, k-core filter it and split users 8:1:1.
//!
//! cargo run --release --example synth_data

use simrec::data::{build_sequences, split_users};
use simrec::synth::{generate, SynthConfig};

fn main() -> simrec::Result<()> {
    let cfg = SynthConfig { n_users: 500, ..SynthConfig::default() };
    let data = generate(&cfg)?;
    println!("{} raw interactions", data.records.len());

    let set = build_sequences(&data.records, 5, 20)?;
    println!("{}", set.stats_line());

    let users: Vec<usize> = (0..set.n_users()).collect();
    let split = split_users(&users, cfg.seed)?;
    println!(
        "train {} / valid {} / test {}",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );

    let u = split.train[0];
    println!("user {} draws from groups {:?}", u, data.user_groups[u]);
    println!("pool of {} items; first sequence: {:?}", data.user_pool(u).len(), &set.sequences[u].items[..10]);
    Ok(())
}
