//! Planted-cluster interaction generator.
//!
//! Items belong to 1–3 latent groups. Each user picks two groups and draws
//! a sequence from the union of their items, replacing each draw with a
//! uniformly random item with a small noise probability.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::InteractionRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_groups: usize,
    pub seq_len: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_items: 300,
            n_groups: 10,
            seq_len: 20,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub records: Vec<InteractionRecord>,
    /// Groups of item `i` (0-based generation order, key `i{i}`); the first
    /// entry is its category label.
    pub item_groups: Vec<Vec<usize>>,
    /// The two groups user `u` (key `u{u}`) draws from.
    pub user_groups: Vec<[usize; 2]>,
}

pub fn item_key(i: usize) -> String {
    format!("i{i}")
}

pub fn user_key(u: usize) -> String {
    format!("u{u}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.n_groups < 2 || cfg.n_items < cfg.n_groups || cfg.seq_len == 0 || cfg.n_users == 0 {
        return Err(Error::InvalidArgument(format!("degenerate synth config {cfg:?}")));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::InvalidArgument(format!("noise {} outside [0, 1]", cfg.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let max_groups = 3.min(cfg.n_groups);
    let mut item_groups: Vec<Vec<usize>> = (0..cfg.n_items)
        .map(|_| {
            let count = rng.gen_range(1..=max_groups);
            sample(&mut rng, cfg.n_groups, count).into_vec()
        })
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_groups];
    for (i, gs) in item_groups.iter().enumerate() {
        for &g in gs {
            members[g].push(i);
        }
    }
    // every group needs at least one item to be drawable
    for (g, m) in members.iter_mut().enumerate() {
        if m.is_empty() {
            let i = rng.gen_range(0..cfg.n_items);
            m.push(i);
            item_groups[i].push(g);
        }
    }

    let mut records = Vec::with_capacity(cfg.n_users * cfg.seq_len);
    let mut user_groups = Vec::with_capacity(cfg.n_users);
    let mut clock = 0i64;
    for u in 0..cfg.n_users {
        let picked = sample(&mut rng, cfg.n_groups, 2).into_vec();
        user_groups.push([picked[0], picked[1]]);
        let mut pool: Vec<usize> = picked.iter().flat_map(|&g| members[g].iter().copied()).collect();
        pool.sort_unstable();
        pool.dedup();
        for _ in 0..cfg.seq_len {
            let item = if rng.gen_bool(cfg.noise) {
                rng.gen_range(0..cfg.n_items)
            } else {
                pool[rng.gen_range(0..pool.len())]
            };
            records.push(InteractionRecord {
                user_key: user_key(u),
                item_key: item_key(item),
                timestamp: clock,
            });
            clock += 1;
        }
    }
    Ok(SynthData {
        records,
        item_groups,
        user_groups,
    })
}

impl SynthData {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "user_id,item_id,timestamp")?;
        for r in &self.records {
            writeln!(w, "{},{},{}", r.user_key, r.item_key, r.timestamp)?;
        }
        Ok(())
    }

    /// Label file lines `item_key,category`, category = first group.
    pub fn write_labels<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, gs) in self.item_groups.iter().enumerate() {
            writeln!(w, "{},g{}", item_key(i), gs[0])?;
        }
        Ok(())
    }

    /// Items (generation order) user `u` draws from when not hit by noise.
    pub fn user_pool(&self, u: usize) -> Vec<usize> {
        let [g1, g2] = self.user_groups[u];
        (0..self.item_groups.len())
            .filter(|&i| self.item_groups[i].iter().any(|&g| g == g1 || g == g2))
            .collect()
    }

    /// Primary group per item key.
    pub fn category_of(&self, key: &str) -> Option<usize> {
        key.strip_prefix('i')
            .and_then(|s| s.parse::<usize>().ok())
            .and_then(|i| self.item_groups.get(i))
            .map(|gs| gs[0])
    }
}
