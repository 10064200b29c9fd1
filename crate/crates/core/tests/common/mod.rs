//! Independent reference implementations shared by the integration and
//! acceptance targets. Everything here is deliberately naive: dense loops,
//! no shared code paths with the library beyond plain data types.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simrec::cooc::CoocMatrix;
use simrec::data::TrainExample;
use simrec::model::{ItemAtlas, Mode, ModelDims, ModelParams};
use simrec::numeric::{grad_check, Tape, Tensor, Var};
use simrec::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Raw co-occurrence weights by enumerating every ordered position pair.
pub fn brute_force_counts(seqs: &[Vec<usize>], n_items: usize, t: usize) -> Vec<Vec<u64>> {
    let mut a = vec![vec![0u64; n_items + 1]; n_items + 1];
    for s in seqs {
        for p in 0..s.len() {
            for q in p + 1..s.len() {
                let gap = q - p;
                if gap < t {
                    let w = (t - gap) as u64;
                    a[s[p]][s[q]] += w;
                    a[s[q]][s[p]] += w;
                }
            }
        }
    }
    a
}

pub fn random_sequences(n: usize, n_items: usize, max_len: usize, r: &mut impl Rng) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| {
            let len = r.gen_range(1..=max_len);
            (0..len).map(|_| r.gen_range(1..=n_items)).collect()
        })
        .collect()
}

pub fn random_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor<f64> {
    Tensor::uniform(shape, 1.0, r)
}

/// Every item scored by `max_k <v_k, e_i>`, sorted by score then index.
pub fn brute_force_topn(interests: &[f64], atlas: &ItemAtlas<f64>, n: usize) -> Vec<usize> {
    let d = atlas.dim();
    let mut scored: Vec<(f64, usize)> = (1..=atlas.n_items())
        .map(|i| {
            let e = atlas.row(i);
            let s = interests
                .chunks(d)
                .map(|v| v.iter().zip(e).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            (s, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(n).map(|(_, i)| i).collect()
}

/// Item embedding by the definition: `Σ_j A_ij Ẽ_j` or a table row.
fn embed(params: &ModelParams<f64>, dense_a: &[f64], item: usize) -> Vec<f64> {
    let d = params.dims.dim;
    let n = params.dims.n_items + 1;
    let table = params.item_table.data();
    match params.mode {
        Mode::Baseline => table[item * d..(item + 1) * d].to_vec(),
        Mode::SimEmb => {
            let mut out = vec![0.0; d];
            for j in 0..n {
                let w = dense_a[item * n + j];
                if w != 0.0 {
                    for c in 0..d {
                        out[c] += w * table[j * d + c];
                    }
                }
            }
            out
        }
    }
}

/// Dense-softmax reference of the batch loss, written from the model
/// definition with scalar loops.
pub fn reference_loss(
    params: &ModelParams<f64>,
    a: &CoocMatrix,
    batch: &[TrainExample],
    negatives: &[usize],
) -> f64 {
    let dims = params.dims;
    let (d, k, da, l) = (dims.dim, dims.interests, dims.hidden, dims.window);
    let dense_a = a.matrix.to_dense();
    let w1 = params.w1.data();
    let w2 = params.w2.data();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut total = 0.0;
    for ex in batch {
        let h: Vec<Vec<f64>> = ex.history.iter().map(|&i| embed(params, &dense_a, i)).collect();
        let mut scores = vec![vec![0.0; l]; k];
        for p in 0..l {
            let mut x = h[p].clone();
            if let Some(pos) = &params.pos {
                for c in 0..d {
                    x[c] += pos.data()[p * d + c];
                }
            }
            let hidden: Vec<f64> = (0..da).map(|r| dot(&w1[r * d..(r + 1) * d], &x).tanh()).collect();
            for j in 0..k {
                scores[j][p] = dot(&w2[j * da..(j + 1) * da], &hidden);
            }
        }
        let mut interests = vec![vec![0.0; d]; k];
        for j in 0..k {
            let max = (0..l).filter(|&p| ex.mask[p]).map(|p| scores[j][p]).fold(f64::MIN, f64::max);
            let z: f64 = (0..l).filter(|&p| ex.mask[p]).map(|p| (scores[j][p] - max).exp()).sum();
            for p in (0..l).filter(|&p| ex.mask[p]) {
                let w = (scores[j][p] - max).exp() / z;
                for c in 0..d {
                    interests[j][c] += w * h[p][c];
                }
            }
        }
        let target = embed(params, &dense_a, ex.target);
        let mut best = 0;
        for j in 1..k {
            if dot(&interests[j], &target) > dot(&interests[best], &target) {
                best = j;
            }
        }
        let v = &interests[best];
        let mut logits = vec![dot(v, &target)];
        logits.extend(negatives.iter().map(|&n| dot(v, &embed(params, &dense_a, n))));
        let max = logits.iter().copied().fold(f64::MIN, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - logits[0];
    }
    total / batch.len() as f64
}

/// Tiny instance from the gradient suite: 50 items, d = 8, K = 2, L = 6.
pub struct Tiny {
    pub params: ModelParams<f64>,
    pub a: CoocMatrix,
    pub batch: Vec<TrainExample>,
    pub negatives: Vec<usize>,
}

pub fn tiny_instance(mode: Mode, seed: u64) -> Tiny {
    let mut r = rng(seed);
    let n_items = 50;
    let seqs = random_sequences(40, n_items, 12, &mut r);
    let a = CoocMatrix::build(seqs.iter().map(Vec::as_slice), n_items, 3).unwrap();
    let mut params = ModelParams::<f64>::init(ModelDims::new(n_items, 8, 2, 6), mode, true, &mut r);
    // larger weights so attention is far from uniform
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v *= 3.0;
        }
    }
    params.item_table.row_mut(0).fill(0.0);
    let batch = (0..4)
        .map(|b| {
            let len = 2 + b;
            let items: Vec<usize> = (0..len).map(|_| r.gen_range(1..=n_items)).collect();
            let (history, mask) = simrec::data::pad_history(&items, 6);
            TrainExample { history, mask, target: r.gen_range(1..=n_items) }
        })
        .collect();
    let negatives = (0..8).map(|_| r.gen_range(1..=n_items)).collect();
    Tiny { params, a, batch, negatives }
}

/// Reduces a tape value to a scalar as `Σ out ⊙ w` for fixed random `w`,
/// so every output coordinate contributes to the checked gradient.
pub fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let n = tape.value(out).len();
    let flat = tape.reshape(out, &[1, n])?;
    let w = tape.constant(random_tensor(&[n, 1], &mut rng(seed)));
    tape.matmul(flat, w, false, false)
}

/// Finite-difference check of a tape expression built by `f` over `inputs`.
pub fn check_expr<G>(inputs: &[Tensor<f64>], f: G) -> f64
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let loss = |ps: &[Tensor<f64>]| -> Result<(f64, Vec<Tensor<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let s = weighted_sum(&mut tape, out, 99)?;
        let value = tape.value(s).data()[0];
        let mut g = tape.backward(s)?;
        let grads = vars.iter().zip(ps).map(|(&v, p)| g.take_or_zeros(v, p.shape())).collect();
        Ok((value, grads))
    };
    grad_check(loss, inputs, 1e-6, 200, 7).unwrap().max_rel_error
}

/// Max relative finite-difference error of every differentiable kernel on
/// small random shapes.
pub fn kernel_gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let t = |shape: &[usize], r: &mut ChaCha8Rng| random_tensor(shape, r);

    for (name, ta, tb, sa, sb) in [
        ("matmul", false, false, [3, 4], [4, 5]),
        ("matmul_ta", true, false, [4, 3], [4, 5]),
        ("matmul_tb", false, true, [3, 4], [5, 4]),
        ("matmul_ta_tb", true, true, [4, 3], [5, 4]),
    ] {
        let ins = [t(&sa, &mut r), t(&sb, &mut r)];
        out.push((name, check_expr(&ins, |tp, v| tp.matmul(v[0], v[1], ta, tb))));
    }
    let ins = [t(&[2, 4, 3], &mut r), t(&[2, 4, 5], &mut r)];
    out.push(("matmul_batched", check_expr(&ins, |tp, v| tp.matmul(v[0], v[1], true, false))));

    let seqs = random_sequences(20, 9, 6, &mut r);
    let a = CoocMatrix::build(seqs.iter().map(Vec::as_slice), 9, 3).unwrap();
    let rows = a.gather_rows(&[0, 3, 3, 7, 9]).unwrap();
    let ins = [t(&[10, 4], &mut r)];
    out.push((
        "sparse_dense_matmul",
        check_expr(&ins, |tp, v| tp.sparse_dense_matmul(rows.clone(), v[0])),
    ));

    let ins = [t(&[3, 5], &mut r)];
    out.push(("tanh", check_expr(&ins, |tp, v| Ok(tp.tanh(v[0])))));

    let ins = [t(&[2, 5, 3], &mut r)];
    let mask = [true, false, true, true, true, false, false, true, true, true];
    out.push(("masked_softmax", check_expr(&ins, |tp, v| tp.masked_softmax(v[0], &mask, 1))));
    let ins = [t(&[4, 6], &mut r)];
    let mask = [true, true, false, true, true, true, true, true, true, false, false, true, true, true, true, true, false, true, true, true, true, true, true, true];
    out.push(("masked_softmax_last_axis", check_expr(&ins, |tp, v| tp.masked_softmax(v[0], &mask, 1))));

    let ins = [t(&[5, 3], &mut r)];
    out.push(("gather", check_expr(&ins, |tp, v| tp.gather(v[0], vec![4, 0, 4, 2, 4]))));

    let ins = [t(&[3, 4], &mut r), t(&[3, 4], &mut r)];
    out.push(("add", check_expr(&ins, |tp, v| tp.add(v[0], v[1]))));
    let ins = [t(&[3, 4], &mut r)];
    out.push(("scale", check_expr(&ins, |tp, v| Ok(tp.scale(v[0], -1.7)))));
    let ins = [t(&[4, 5], &mut r), t(&[4, 5], &mut r)];
    out.push(("row_dot", check_expr(&ins, |tp, v| tp.row_dot(v[0], v[1]))));
    let ins = [t(&[2, 6], &mut r)];
    out.push(("reshape", check_expr(&ins, |tp, v| tp.reshape(v[0], &[3, 4]))));
    let ins = [t(&[4], &mut r), t(&[4, 7], &mut r)];
    out.push(("sampled_softmax_nll", check_expr(&ins, |tp, v| tp.sampled_softmax_nll(v[0], v[1]))));
    out
}

/// Max relative finite-difference error of `batch_loss` on the tiny instance.
pub fn batch_loss_gradient_error(mode: Mode, seed: u64) -> f64 {
    let tiny = tiny_instance(mode, seed);
    let loss = |ps: &[Tensor<f64>]| -> Result<(f64, Vec<Tensor<f64>>)> {
        let p = tiny.params.with_tensors(ps.to_vec())?;
        let out = simrec::train::batch_loss(&tiny.batch, &tiny.negatives, &p, &tiny.a)?;
        Ok((out.loss, out.grads))
    };
    let ps: Vec<Tensor<f64>> = tiny.params.tensors().into_iter().cloned().collect();
    grad_check(loss, &ps, 1e-6, 400, seed).unwrap().max_rel_error
}

/// Expected Recall@n of an oracle that knows each user's two generating
/// groups and ranks the union of their items first, in random order.
/// No model can beat this in expectation on `synth` data.
pub fn synth_recall_ceiling(
    data: &simrec::synth::SynthData,
    set: &simrec::data::SequenceSet,
    users: &[usize],
    n: usize,
) -> f64 {
    let n_items = set.n_items() as f64;
    let mut total = 0.0;
    let mut counted = 0usize;
    for &u in users {
        let Some(case) = simrec::data::eval_split(&set.sequences[u].items, 0.8, set.max_len) else {
            continue;
        };
        let key = set.ids.users.key(u).unwrap();
        let pool = data.user_pool(key[1..].parse().unwrap());
        let in_pool: std::collections::HashSet<String> =
            pool.iter().map(|&i| simrec::synth::item_key(i)).collect();
        let p = in_pool.len() as f64;
        let hit_in = (n as f64).min(p) / p;
        let hit_out = ((n as f64 - p).max(0.0)) / (n_items - p);
        let mean: f64 = case
            .targets
            .iter()
            .map(|&t| {
                if in_pool.contains(set.ids.items.key(t).unwrap()) {
                    hit_in
                } else {
                    hit_out
                }
            })
            .sum::<f64>()
            / case.targets.len() as f64;
        total += mean;
        counted += 1;
    }
    total / counted as f64
}
