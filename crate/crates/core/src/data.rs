//! Interaction ingest, 5-core filtering, user splits and example construction.
//!
//! Item indices are dense and 1-based: index 0 is the padding sentinel used by
//! left-padded histories and by the reserved first row of the co-occurrence
//! matrix. User indices are dense and 0-based.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Item index reserved for padding.
pub const PAD: usize = 0;

/// Window length used for training histories and evaluation histories.
pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user_key: String,
    pub item_key: String,
    pub timestamp: i64,
}

/// Input layout accepted by [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `user_id,item_id,timestamp` with a header row.
    Csv,
    /// One user per line: `user item item ...` in chronological order.
    SeqLines,
}

/// Bijection between opaque keys and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyIndex {
    forward: HashMap<String, usize>,
    reverse: Vec<String>,
    offset: usize,
}

impl KeyIndex {
    fn with_offset(offset: usize) -> Self {
        Self {
            offset,
            ..Self::default()
        }
    }

    fn intern(&mut self, key: &str) -> usize {
        if let Some(&idx) = self.forward.get(key) {
            return idx;
        }
        let idx = self.reverse.len() + self.offset;
        self.forward.insert(key.to_owned(), idx);
        self.reverse.push(key.to_owned());
        idx
    }

    pub fn index(&self, key: &str) -> Option<usize> {
        self.forward.get(key).copied()
    }

    pub fn key(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(self.offset)
            .and_then(|i| self.reverse.get(i))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }

    /// Keys in index order.
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.reverse.iter().map(String::as_str)
    }
}

/// Item and user key maps. Items occupy `[1, n_items]`; users `[0, n_users)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMap {
    pub items: KeyIndex,
    pub users: KeyIndex,
}

impl Default for IdMap {
    fn default() -> Self {
        Self {
            items: KeyIndex::with_offset(1),
            users: KeyIndex::with_offset(0),
        }
    }
}

impl IdMap {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }
}

/// Parses an interaction log. Records come back in input order.
pub fn ingest<R: BufRead>(source: R, format: Format) -> Result<(Vec<InteractionRecord>, IdMap)> {
    let mut records = Vec::new();
    let mut ids = IdMap::default();
    let mut clock = 0i64;
    let mut saw_header = false;

    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match format {
            Format::Csv => {
                if !saw_header {
                    saw_header = true;
                    let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
                    if cols != ["user_id", "item_id", "timestamp"] {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!(
                                "expected header `user_id,item_id,timestamp`, got `{trimmed}`"
                            ),
                        });
                    }
                    continue;
                }
                let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
                if cols.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected 3 fields, got {}", cols.len()),
                    });
                }
                if cols[0].is_empty() || cols[1].is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "empty user or item key".into(),
                    });
                }
                let timestamp = cols[2].parse::<i64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad timestamp `{}`: {e}", cols[2]),
                })?;
                ids.users.intern(cols[0]);
                ids.items.intern(cols[1]);
                records.push(InteractionRecord {
                    user_key: cols[0].to_owned(),
                    item_key: cols[1].to_owned(),
                    timestamp,
                });
            }
            Format::SeqLines => {
                let mut tokens = trimmed.split_whitespace();
                let user = tokens.next().expect("non-empty line has a token");
                ids.users.intern(user);
                let mut any = false;
                for item in tokens {
                    any = true;
                    ids.items.intern(item);
                    records.push(InteractionRecord {
                        user_key: user.to_owned(),
                        item_key: item.to_owned(),
                        timestamp: clock,
                    });
                    clock += 1;
                }
                if !any {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("user `{user}` has no items"),
                    });
                }
            }
        }
    }

    if records.is_empty() {
        return Err(Error::EmptyInput("no interaction records".into()));
    }
    Ok((records, ids))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequence {
    pub user: usize,
    pub items: Vec<usize>,
}

impl UserSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Filtered, chronologically ordered sequences with compact re-indexed ids.
#[derive(Debug, Clone)]
pub struct SequenceSet {
    /// Indexed by user; `sequences[u].user == u`.
    pub sequences: Vec<UserSequence>,
    pub ids: IdMap,
    /// History window used downstream; sequences themselves are kept whole.
    pub max_len: usize,
}

impl SequenceSet {
    pub fn n_items(&self) -> usize {
        self.ids.n_items()
    }

    pub fn n_users(&self) -> usize {
        self.sequences.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.sequences.iter().map(UserSequence::len).sum()
    }

    /// Builds a set from already-indexed sequences (synthetic data, tests).
    /// Item indices must lie in `[1, n_items]`.
    pub fn from_indexed(seqs: Vec<Vec<usize>>, n_items: usize, max_len: usize) -> Result<Self> {
        let mut ids = IdMap::default();
        for i in 1..=n_items {
            ids.items.intern(&format!("i{i}"));
        }
        let mut sequences = Vec::with_capacity(seqs.len());
        for (u, items) in seqs.into_iter().enumerate() {
            if let Some(&bad) = items.iter().find(|&&i| i == PAD || i > n_items) {
                return Err(Error::IndexOutOfRange {
                    what: "item",
                    index: bad,
                    len: n_items + 1,
                });
            }
            ids.users.intern(&format!("u{u}"));
            sequences.push(UserSequence { user: u, items });
        }
        Ok(Self {
            sequences,
            ids,
            max_len,
        })
    }
}

/// Applies the iterated `min_count`-core filter and orders each user's items
/// by timestamp (ties keep input order). Survivors are re-indexed densely in
/// order of first appearance.
pub fn build_sequences(
    records: &[InteractionRecord],
    min_count: usize,
    max_len: usize,
) -> Result<SequenceSet> {
    let mut alive = vec![true; records.len()];
    loop {
        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for (r, _) in records.iter().zip(&alive).filter(|(_, &a)| a) {
            *user_counts.entry(&r.user_key).or_default() += 1;
            *item_counts.entry(&r.item_key).or_default() += 1;
        }
        let mut changed = false;
        for (r, a) in records.iter().zip(alive.iter_mut()) {
            if *a && (user_counts[r.user_key.as_str()] < min_count
                || item_counts[r.item_key.as_str()] < min_count)
            {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut ids = IdMap::default();
    let mut per_user: Vec<Vec<(i64, usize, usize)>> = Vec::new();
    for (pos, r) in records.iter().enumerate().filter(|(p, _)| alive[*p]) {
        let u = ids.users.intern(&r.user_key);
        let i = ids.items.intern(&r.item_key);
        if u == per_user.len() {
            per_user.push(Vec::new());
        }
        per_user[u].push((r.timestamp, pos, i));
    }
    if per_user.is_empty() {
        return Err(Error::AllFiltered { min_count });
    }

    let sequences = per_user
        .into_iter()
        .enumerate()
        .map(|(user, mut events)| {
            events.sort_by_key(|&(ts, pos, _)| (ts, pos));
            UserSequence {
                user,
                items: events.into_iter().map(|(_, _, i)| i).collect(),
            }
        })
        .collect();

    Ok(SequenceSet {
        sequences,
        ids,
        max_len,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle then contiguous 80/10/10 partition. Validation and test
/// each get `floor(n / 10)` users; training takes the rest.
pub fn split_users(users: &[usize], seed: u64) -> Result<DatasetSplit> {
    if users.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 users to split, got {}",
            users.len()
        )));
    }
    let mut order: Vec<usize> = users.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n = order.len();
    let n_holdout = n / 10;
    let n_train = n - 2 * n_holdout;
    let test = order.split_off(n_train + n_holdout);
    let valid = order.split_off(n_train);
    Ok(DatasetSplit {
        train: order,
        valid,
        test,
    })
}

/// History / target partition of one sequence for evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalCase {
    pub history: Vec<usize>,
    pub targets: BTreeSet<usize>,
}

/// First `floor(fraction * len)` items become the history (keeping only the
/// last `window` of them); the remainder becomes the target set. Returns
/// `None` when no targets remain.
pub fn eval_split(seq: &[usize], fraction: f64, window: usize) -> Option<EvalCase> {
    let cut = ((seq.len() as f64) * fraction + 1e-9).floor() as usize;
    let cut = cut.min(seq.len());
    let targets: BTreeSet<usize> = seq[cut..].iter().copied().collect();
    if targets.is_empty() || cut == 0 {
        return None;
    }
    let start = cut.saturating_sub(window);
    Some(EvalCase {
        history: seq[start..cut].to_vec(),
        targets,
    })
}

/// A left-padded training history with its target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainExample {
    pub history: Vec<usize>,
    pub mask: Vec<bool>,
    pub target: usize,
}

/// Left-pads `items` (keeping the last `window`) to exactly `window` slots.
pub fn pad_history(items: &[usize], window: usize) -> (Vec<usize>, Vec<bool>) {
    let tail = &items[items.len().saturating_sub(window)..];
    let pad = window - tail.len();
    let mut history = vec![PAD; pad];
    history.extend_from_slice(tail);
    let mut mask = vec![false; pad];
    mask.extend(std::iter::repeat_n(true, tail.len()));
    (history, mask)
}

/// Example whose target is the item at position `t` (`1 <= t < len`).
pub fn train_example_at(seq: &[usize], t: usize, window: usize) -> TrainExample {
    assert!(t >= 1 && t < seq.len(), "target position {t} out of range");
    let (history, mask) = pad_history(&seq[..t], window);
    TrainExample {
        history,
        mask,
        target: seq[t],
    }
}

/// Samples a target position uniformly from `[1, len)`.
pub fn train_example<R: Rng + ?Sized>(seq: &[usize], rng: &mut R, window: usize) -> TrainExample {
    assert!(seq.len() >= 2, "training sequence needs at least two items");
    let t = rng.gen_range(1..seq.len());
    train_example_at(seq, t, window)
}

impl SequenceSet {
    /// `users=.. items=.. interactions=.. avg_len=..`
    pub fn stats_line(&self) -> String {
        format!(
            "users={} items={} interactions={} avg_len={:.4}",
            self.n_users(),
            self.n_items(),
            self.n_interactions(),
            self.n_interactions() as f64 / self.n_users().max(1) as f64
        )
    }

    /// Seq-lines rendering, one `user_key item_key ...` line per user.
    pub fn write_seq_lines<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.sequences {
            let user = self.ids.users.key(s.user).unwrap_or_default();
            write!(w, "{user}")?;
            for &i in &s.items {
                write!(w, " {}", self.ids.items.key(i).unwrap_or_default())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Item keys in index order, one per line.
    pub fn write_item_keys<W: Write>(&self, mut w: W) -> Result<()> {
        for k in self.ids.items.keys() {
            writeln!(w, "{k}")?;
        }
        Ok(())
    }

    /// Inverse of [`write_item_keys`](Self::write_item_keys) plus
    /// [`write_seq_lines`](Self::write_seq_lines); indices are preserved.
    pub fn read_prepared<R1: BufRead, R2: BufRead>(item_keys: R1, seq_lines: R2, max_len: usize) -> Result<Self> {
        let mut ids = IdMap::default();
        for line in item_keys.lines() {
            let line = line?;
            let key = line.trim();
            if !key.is_empty() {
                ids.items.intern(key);
            }
        }
        let mut sequences = Vec::new();
        for (n, line) in seq_lines.lines().enumerate() {
            let line = line?;
            let mut tokens = line.split_whitespace();
            let Some(user) = tokens.next() else { continue };
            let items = tokens
                .map(|k| {
                    ids.items.index(k).ok_or_else(|| Error::Parse {
                        line: n + 1,
                        message: format!("item `{k}` missing from the item list"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let u = ids.users.intern(user);
            if u != sequences.len() {
                return Err(Error::Parse { line: n + 1, message: format!("user `{user}` repeated") });
            }
            sequences.push(UserSequence { user: u, items });
        }
        if sequences.is_empty() {
            return Err(Error::EmptyInput("prepared sequence file".into()));
        }
        Ok(Self { sequences, ids, max_len })
    }
}

impl DatasetSplit {
    /// `user_key<TAB>train|valid|test` lines, in split order.
    pub fn write_to<W: Write>(&self, ids: &IdMap, mut w: W) -> Result<()> {
        for (name, users) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for &u in users {
                writeln!(w, "{}\t{name}", ids.users.key(u).unwrap_or_default())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R, ids: &IdMap) -> Result<Self> {
        let mut split = DatasetSplit { train: Vec::new(), valid: Vec::new(), test: Vec::new() };
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: n + 1, message };
            let (user, part) = line.split_once('\t').ok_or_else(|| bad("expected user<TAB>part".into()))?;
            let u = ids.users.index(user).ok_or_else(|| bad(format!("unknown user `{user}`")))?;
            match part.trim() {
                "train" => split.train.push(u),
                "valid" => split.valid.push(u),
                "test" => split.test.push(u),
                other => return Err(bad(format!("unknown split `{other}`"))),
            }
        }
        Ok(split)
    }

    pub fn part(&self, name: &str) -> Result<&[usize]> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}
