//! Sampled-softmax training with batch-shared uniform negatives.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cooc::CoocMatrix;
use crate::data::{train_example, DatasetSplit, SequenceSet, TrainExample};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{
    build_atlas, dedup_indices, embed_on_tape, extract_interests_on_tape, select_interest, Mode,
    ModelDims, ModelParams, ParamVars,
};
use crate::numeric::{adam_step, AdamState, Scalar, Tape, Tensor};

/// Hyperparameters. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub k: usize,
    pub l: usize,
    pub lr: f64,
    pub batch: usize,
    pub neg_multiplier: usize,
    pub max_iters: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub seed: u64,
    pub t: usize,
    pub mode: Mode,
    pub positional: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 64,
            k: 4,
            l: 20,
            lr: 0.001,
            batch: 256,
            neg_multiplier: 10,
            max_iters: 1_000_000,
            eval_every: 500,
            patience: 20,
            seed: 0,
            t: 3,
            mode: Mode::SimEmb,
            positional: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("config key `{key}`: {e}")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 13] = [
        "d",
        "K",
        "L",
        "lr",
        "batch",
        "neg_multiplier",
        "max_iters",
        "eval_every",
        "patience",
        "seed",
        "T",
        "mode",
        "positional",
    ];

    pub fn negatives(&self) -> usize {
        self.neg_multiplier * self.batch
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "d" => self.d = parse(key, v)?,
            "K" => self.k = parse(key, v)?,
            "L" => self.l = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "neg_multiplier" => self.neg_multiplier = parse(key, v)?,
            "max_iters" => self.max_iters = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "T" => self.t = parse(key, v)?,
            "mode" => self.mode = v.parse()?,
            "positional" => self.positional = parse(key, v)?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Parses flat `key=value` lines over the defaults. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            cfg.set(k, v).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "d={}\nK={}\nL={}\nlr={}\nbatch={}\nneg_multiplier={}\nmax_iters={}\neval_every={}\npatience={}\nseed={}\nT={}\nmode={}\npositional={}\n",
            self.d,
            self.k,
            self.l,
            self.lr,
            self.batch,
            self.neg_multiplier,
            self.max_iters,
            self.eval_every,
            self.patience,
            self.seed,
            self.t,
            self.mode.as_str(),
            self.positional
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("K", self.k),
            ("L", self.l),
            ("batch", self.batch),
            ("neg_multiplier", self.neg_multiplier),
            ("max_iters", self.max_iters),
            ("eval_every", self.eval_every),
            ("patience", self.patience),
            ("T", self.t),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("config `{k}` must be positive")));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad learning rate {}", self.lr)));
        }
        Ok(())
    }

    pub fn dims(&self, n_items: usize) -> ModelDims {
        ModelDims::new(n_items, self.d, self.k, self.l)
    }
}

/// `count` uniform draws from `[1, n_items]`, with replacement.
pub fn sample_negatives<R: Rng + ?Sized>(n_items: usize, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n_items < 2 {
        return Err(Error::InvalidArgument(format!(
            "negative sampling needs at least 2 items, got {n_items}"
        )));
    }
    Ok((0..count).map(|_| rng.gen_range(1..=n_items)).collect())
}

/// Loss value and gradients in checkpoint tensor order.
#[derive(Debug, Clone)]
pub struct BatchLoss<F: Scalar> {
    pub loss: f64,
    pub grads: Vec<Tensor<F>>,
    /// Interest index chosen per example.
    pub selected: Vec<usize>,
}

/// Mean sampled-softmax negative log-likelihood over `batch`.
///
/// All embeddings (history items, targets, negatives) come from one pass of
/// the mode's embedding layer over the distinct indices in the batch. The
/// interest used for each example is the argmax against its target and is
/// treated as a constant during the backward pass.
pub fn batch_loss<F: Scalar>(
    batch: &[TrainExample],
    negatives: &[usize],
    params: &ModelParams<F>,
    a: &CoocMatrix,
) -> Result<BatchLoss<F>> {
    let b = batch.len();
    let window = params.dims.window;
    let (dim, k) = (params.dims.dim, params.dims.interests);
    if b == 0 || negatives.is_empty() {
        return Err(Error::InvalidArgument("empty batch or negative set".into()));
    }
    if let Some(ex) = batch.iter().find(|e| e.history.len() != window || e.mask.len() != window) {
        return Err(Error::Shape {
            op: "batch_loss",
            lhs: vec![ex.history.len()],
            rhs: vec![window],
        });
    }

    let mut all: Vec<usize> = batch.iter().flat_map(|e| e.history.iter().copied()).collect();
    all.extend(batch.iter().map(|e| e.target));
    all.extend_from_slice(negatives);
    let (uniq, position) = dedup_indices(&all);
    if let Some(&bad) = uniq.last().filter(|&&i| i > params.dims.n_items) {
        return Err(Error::IndexOutOfRange {
            what: "item",
            index: bad,
            len: params.dims.n_items + 1,
        });
    }
    let at = |items: &mut dyn Iterator<Item = usize>| -> Vec<usize> { items.map(|i| position[&i]).collect() };

    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params, true);
    let table = embed_on_tape(&mut tape, params.mode, a, vars.item_table, &uniq)?;

    let hist_idx = at(&mut batch.iter().flat_map(|e| e.history.iter().copied()));
    let mask: Vec<bool> = batch.iter().flat_map(|e| e.mask.iter().copied()).collect();
    let h = tape.gather(table, hist_idx)?;
    let out = extract_interests_on_tape(&mut tape, &vars, h, &mask, b, window)?;

    let targets = tape.gather(table, at(&mut batch.iter().map(|e| e.target)))?;
    let negs = tape.gather(table, at(&mut negatives.iter().copied()))?;

    let selected: Vec<usize> = {
        let v = tape.value(out.interests).data();
        let t = tape.value(targets);
        (0..b)
            .map(|r| select_interest(&v[r * k * dim..(r + 1) * k * dim], dim, t.row(r)))
            .collect()
    };
    let flat = tape.reshape(out.interests, &[b * k, dim])?;
    let chosen = tape.gather(flat, selected.iter().enumerate().map(|(r, &s)| r * k + s).collect())?;

    let pos_logits = tape.row_dot(chosen, targets)?;
    let neg_logits = tape.matmul(chosen, negs, false, true)?;
    let loss = tape.sampled_softmax_nll(pos_logits, neg_logits)?;
    let value = tape.value(loss).data()[0].f64();
    if !value.is_finite() {
        let max_logit = tape
            .value(neg_logits)
            .data()
            .iter()
            .chain(tape.value(pos_logits).data())
            .map(|v| v.f64().abs())
            .fold(0.0, f64::max);
        return Err(Error::NonFinite(format!(
            "batch loss {value} (batch {b}, {} negatives, max |logit| {max_logit})",
            negatives.len()
        )));
    }

    let mut grads = tape.backward(loss)?;
    let grads = vars
        .list()
        .into_iter()
        .zip(params.tensors())
        .map(|(v, p)| grads.take_or_zeros(v, p.shape()))
        .collect();
    Ok(BatchLoss {
        loss: value,
        grads,
        selected,
    })
}

/// One validation checkpoint in the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub loss_ema: f64,
    pub valid_recall50: f64,
    pub secs_per_batch: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    /// Loss EMA after every iteration.
    pub ema: Vec<f64>,
    pub iterations: usize,
    pub best_iteration: usize,
    /// Mean wall-clock of `batch_loss` plus the Adam step.
    pub secs_per_batch: f64,
}

pub const EMA_DECAY: f64 = 0.95;

/// Trains one model. Validation Recall@50 is computed every `eval_every`
/// iterations; the best parameters seen are returned, and training stops
/// after `patience` evaluations without improvement or at `max_iters`.
pub fn train(
    config: &TrainConfig,
    sequences: &SequenceSet,
    split: &DatasetSplit,
    a: &CoocMatrix,
) -> Result<(ModelParams<f32>, TrainLog)> {
    train_with_observer(config, sequences, split, a, |_| {})
}

pub fn train_with_observer<O: FnMut(&LogEntry)>(
    config: &TrainConfig,
    sequences: &SequenceSet,
    split: &DatasetSplit,
    a: &CoocMatrix,
    mut observe: O,
) -> Result<(ModelParams<f32>, TrainLog)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let n_items = sequences.n_items();
    if config.mode == Mode::SimEmb && a.n_items() != n_items {
        return Err(Error::InvalidArgument(format!(
            "co-occurrence matrix covers {} items, data has {n_items}",
            a.n_items()
        )));
    }
    let train_seqs: Vec<&[usize]> = split
        .train
        .iter()
        .map(|&u| sequences.sequences[u].items.as_slice())
        .filter(|s| s.len() >= 2)
        .collect();
    if train_seqs.is_empty() {
        return Err(Error::InvalidArgument("no training sequence has two items".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params =
        ModelParams::<f32>::init(config.dims(n_items), config.mode, config.positional, &mut rng);
    let mut adam = AdamState::new(&params.tensors().into_iter().cloned().collect::<Vec<_>>());
    let mut log = TrainLog::default();
    let mut best: Option<(f64, ModelParams<f32>)> = None;
    let mut stale = 0usize;
    let mut ema = f64::NAN;
    let mut window_secs = 0.0;
    let mut total_secs = 0.0;

    for it in 1..=config.max_iters {
        let batch: Vec<TrainExample> = (0..config.batch)
            .map(|_| {
                let s = train_seqs[rng.gen_range(0..train_seqs.len())];
                train_example(s, &mut rng, config.l)
            })
            .collect();
        let negatives = sample_negatives(n_items, config.negatives(), &mut rng)?;

        let started = Instant::now();
        let step = batch_loss(&batch, &negatives, &params, a)?;
        adam_step(&mut params.tensors_mut(), &step.grads, &mut adam, config.lr)?;
        let secs = started.elapsed().as_secs_f64();
        window_secs += secs;
        total_secs += secs;

        ema = if ema.is_nan() {
            step.loss
        } else {
            EMA_DECAY * ema + (1.0 - EMA_DECAY) * step.loss
        };
        log.ema.push(ema);
        log.iterations = it;

        if it % config.eval_every == 0 {
            let atlas = build_atlas(&params, a)?;
            let report = evaluate(&params, &atlas, sequences, &split.valid, &[50])?;
            let entry = LogEntry {
                iteration: it,
                loss_ema: ema,
                valid_recall50: report.recall(50),
                secs_per_batch: window_secs / config.eval_every as f64,
            };
            window_secs = 0.0;
            observe(&entry);
            let improved = best.as_ref().is_none_or(|(r, _)| entry.valid_recall50 > *r);
            if improved {
                best = Some((entry.valid_recall50, params.clone()));
                log.best_iteration = it;
                stale = 0;
            } else {
                stale += 1;
            }
            log.entries.push(entry);
            if stale >= config.patience {
                break;
            }
        }
    }
    log.secs_per_batch = total_secs / log.iterations.max(1) as f64;
    let params = match best {
        Some((_, p)) => p,
        None => {
            log.best_iteration = log.iterations;
            params
        }
    };
    Ok((params, log))
}
