//! Item embedding layers and the self-attentive multi-interest extractor.
//!
//! In `SimEmb` mode the trainable table is an attribute-embedding matrix
//! `Ẽ` and an item's embedding is its co-occurrence row times `Ẽ`, so a
//! history of `L` items costs one gather of sparse rows plus one
//! sparse-dense product. `Baseline` mode looks rows up in a plain item-ID
//! table instead. Both feed the same two-layer attention that produces `K`
//! interest vectors per user.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use crate::cooc::{read_f32, read_u32, read_u64, CoocMatrix};
use crate::error::{Error, Result};
use crate::numeric::kernels;
use crate::numeric::{Scalar, Tape, Tensor, Var};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SIMR";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Item embeddings are co-occurrence rows times attribute embeddings.
    SimEmb,
    /// Item embeddings are rows of an ID embedding table.
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SimEmb => "simemb",
            Mode::Baseline => "baseline",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simemb" => Ok(Mode::SimEmb),
            "baseline" => Ok(Mode::Baseline),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected simemb or baseline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_items: usize,
    /// Embedding width `d`.
    pub dim: usize,
    /// Number of interests `K`.
    pub interests: usize,
    /// Attention hidden width, `4d` by default.
    pub hidden: usize,
    /// History window `L`.
    pub window: usize,
}

impl ModelDims {
    pub fn new(n_items: usize, dim: usize, interests: usize, window: usize) -> Self {
        Self {
            n_items,
            dim,
            interests,
            hidden: 4 * dim,
            window,
        }
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F: Scalar = f32> {
    pub mode: Mode,
    pub dims: ModelDims,
    /// `Ẽ` in SimEmb mode, the ID table in baseline mode; `(n_items+1) × d`
    /// with a zero padding row.
    pub item_table: Tensor<F>,
    /// `d_a × d`
    pub w1: Tensor<F>,
    /// `K × d_a`
    pub w2: Tensor<F>,
    /// Optional positional embedding, `L × d`.
    pub pos: Option<Tensor<F>>,
}

impl<F: Scalar> ModelParams<F> {
    /// Uniform(−1/√d, 1/√d) init with the padding row zeroed.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, mode: Mode, positional: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (dims.dim as f64).sqrt();
        let mut item_table = Tensor::uniform(&[dims.n_items + 1, dims.dim], bound, rng);
        item_table.row_mut(0).iter_mut().for_each(|v| *v = F::zero());
        let w1 = Tensor::uniform(&[dims.hidden, dims.dim], bound, rng);
        let w2 = Tensor::uniform(&[dims.interests, dims.hidden], bound, rng);
        let pos = positional.then(|| Tensor::uniform(&[dims.window, dims.dim], bound, rng));
        Self {
            mode,
            dims,
            item_table,
            w1,
            w2,
            pos,
        }
    }

    /// Trainable tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = vec![&self.item_table, &self.w1, &self.w2];
        out.extend(self.pos.as_ref());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = vec![&mut self.item_table, &mut self.w1, &mut self.w2];
        out.extend(self.pos.as_mut());
        out
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        ModelParams {
            mode: self.mode,
            dims: self.dims,
            item_table: self.item_table.cast(),
            w1: self.w1.cast(),
            w2: self.w2.cast(),
            pos: self.pos.as_ref().map(Tensor::cast),
        }
    }

    /// Rebuilds parameters from tensors in checkpoint order.
    pub fn with_tensors(&self, tensors: Vec<Tensor<F>>) -> Result<Self> {
        let expected = self.tensors().len();
        if tensors.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "expected {expected} tensors, got {}",
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let mut out = self.clone();
        for slot in out.tensors_mut() {
            let t = it.next().unwrap();
            if t.shape() != slot.shape() {
                return Err(Error::Shape {
                    op: "with_tensors",
                    lhs: slot.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            *slot = t;
        }
        Ok(out)
    }
}

/// `H = gather_rows(A, history) · Ẽ`. Padding slots pick up row 0 of `Ẽ`.
pub fn sim_embed<F: Scalar>(a: &CoocMatrix, table: &Tensor<F>, history: &[usize]) -> Result<Tensor<F>> {
    kernels::sparse_dense_matmul(&a.gather_rows(history)?, table)
}

/// Enhanced embeddings for arbitrary target or negative indices.
pub fn embed_targets<F: Scalar>(a: &CoocMatrix, table: &Tensor<F>, items: &[usize]) -> Result<Tensor<F>> {
    sim_embed(a, table, items)
}

/// The materialized serving-time item embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemAtlas<F: Scalar = f32> {
    pub embeddings: Tensor<F>,
}

impl<F: Scalar> ItemAtlas<F> {
    pub fn n_items(&self) -> usize {
        self.embeddings.shape()[0] - 1
    }

    pub fn dim(&self) -> usize {
        self.embeddings.shape()[1]
    }

    pub fn row(&self, item: usize) -> &[F] {
        self.embeddings.row(item)
    }
}

/// `E_I = A Ẽ` in one sparse-dense product.
pub fn full_item_matrix<F: Scalar>(a: &CoocMatrix, table: &Tensor<F>) -> Result<ItemAtlas<F>> {
    Ok(ItemAtlas {
        embeddings: kernels::sparse_dense_matmul(&a.matrix, table)?,
    })
}

/// Serving atlas for either mode. `a` is only consulted in SimEmb mode.
pub fn build_atlas<F: Scalar>(params: &ModelParams<F>, a: &CoocMatrix) -> Result<ItemAtlas<F>> {
    match params.mode {
        Mode::SimEmb => {
            if a.n_items() != params.dims.n_items {
                return Err(Error::InvalidArgument(format!(
                    "co-occurrence matrix covers {} items, model {}",
                    a.n_items(),
                    params.dims.n_items
                )));
            }
            full_item_matrix(a, &params.item_table)
        }
        Mode::Baseline => Ok(ItemAtlas {
            embeddings: params.item_table.clone(),
        }),
    }
}

/// Parameter handles on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub item_table: Var,
    pub w1: Var,
    pub w2: Var,
    pub pos: Option<Var>,
}

impl ParamVars {
    /// Records parameters as trainable (`trainable = true`) or constant leaves.
    pub fn record<F: Scalar>(tape: &mut Tape<F>, params: &ModelParams<F>, trainable: bool) -> Self {
        let mut leaf = |t: &Tensor<F>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        Self {
            item_table: leaf(&params.item_table),
            w1: leaf(&params.w1),
            w2: leaf(&params.w2),
            pos: params.pos.as_ref().map(leaf),
        }
    }

    /// Variables in checkpoint order.
    pub fn list(&self) -> Vec<Var> {
        let mut out = vec![self.item_table, self.w1, self.w2];
        out.extend(self.pos);
        out
    }
}

/// Embeds `items` with the mode's layer; one sparse gather-multiply in
/// SimEmb mode, a row gather otherwise.
pub fn embed_on_tape<F: Scalar>(
    tape: &mut Tape<F>,
    mode: Mode,
    a: &CoocMatrix,
    table: Var,
    items: &[usize],
) -> Result<Var> {
    match mode {
        Mode::SimEmb => tape.sparse_dense_matmul(a.gather_rows(items)?, table),
        Mode::Baseline => tape.gather(table, items.to_vec()),
    }
}

/// Tape outputs of the interest extractor for a batch of `B` histories.
#[derive(Debug, Clone, Copy)]
pub struct InterestVars {
    /// `B × K × d`
    pub interests: Var,
    /// `B × L × K`, softmax over `L`.
    pub attention: Var,
}

/// Two-layer self-attention over a batch of embedded histories.
///
/// `h` is `(B·L) × d`; `mask` has `B·L` entries. Scores are
/// `W2 · tanh(W1 · (h + pos)ᵀ)`, normalized over unmasked positions, and the
/// interests are the attention-weighted sums of the un-positioned rows.
pub fn extract_interests_on_tape<F: Scalar>(
    tape: &mut Tape<F>,
    vars: &ParamVars,
    h: Var,
    mask: &[bool],
    batch: usize,
    window: usize,
) -> Result<InterestVars> {
    let dim = tape.value(h).shape()[1];
    if tape.value(h).shape()[0] != batch * window || mask.len() != batch * window {
        return Err(Error::Shape {
            op: "extract_interests",
            lhs: tape.value(h).shape().to_vec(),
            rhs: vec![batch, window, mask.len()],
        });
    }
    let positioned = match vars.pos {
        Some(pos) => {
            let idx: Vec<usize> = (0..batch).flat_map(|_| 0..window).collect();
            let tiled = tape.gather(pos, idx)?;
            tape.add(h, tiled)?
        }
        None => h,
    };
    let hidden = tape.matmul(positioned, vars.w1, false, true)?;
    let hidden = tape.tanh(hidden);
    let scores = tape.matmul(hidden, vars.w2, false, true)?;
    let k = tape.value(scores).shape()[1];
    let scores = tape.reshape(scores, &[batch, window, k])?;
    let attention = tape.masked_softmax(scores, mask, 1)?;
    let h3 = tape.reshape(h, &[batch, window, dim])?;
    let interests = tape.matmul(attention, h3, true, false)?;
    Ok(InterestVars {
        interests,
        attention,
    })
}

/// Interests of one user plus the attention that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct InterestMatrix<F: Scalar = f32> {
    /// `K × d`
    pub interests: Tensor<F>,
    /// `K × L`, rows sum to one over unmasked positions.
    pub attention: Tensor<F>,
}

/// Interest extraction for a single embedded history `h` (`L × d`).
pub fn extract_interests<F: Scalar>(
    params: &ModelParams<F>,
    h: &Tensor<F>,
    mask: &[bool],
) -> Result<InterestMatrix<F>> {
    let window = h.shape()[0];
    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params, false);
    let hv = tape.constant(h.clone());
    let out = extract_interests_on_tape(&mut tape, &vars, hv, mask, 1, window)?;
    let k = params.dims.interests;
    let interests = tape.value(out.interests).clone().reshape(&[k, h.shape()[1]])?;
    let att = tape.value(out.attention);
    let mut attention = Tensor::zeros(&[k, window]);
    for l in 0..window {
        for j in 0..k {
            attention.data_mut()[j * window + l] = att.data()[l * k + j];
        }
    }
    Ok(InterestMatrix {
        interests,
        attention,
    })
}

/// Interests for many left-padded histories at once, read from a
/// materialized atlas. Returns one `K × d` tensor per history.
pub fn interests_from_atlas<F: Scalar>(
    params: &ModelParams<F>,
    atlas: &ItemAtlas<F>,
    histories: &[Vec<usize>],
    masks: &[Vec<bool>],
) -> Result<Vec<Tensor<F>>> {
    let batch = histories.len();
    if batch == 0 {
        return Ok(Vec::new());
    }
    let window = histories[0].len();
    let flat: Vec<usize> = histories.iter().flatten().copied().collect();
    let mask: Vec<bool> = masks.iter().flatten().copied().collect();
    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params, false);
    let h = tape.constant(kernels::gather(&atlas.embeddings, &flat)?);
    let out = extract_interests_on_tape(&mut tape, &vars, h, &mask, batch, window)?;
    let (k, d) = (params.dims.interests, atlas.dim());
    let v = tape.value(out.interests);
    Ok((0..batch)
        .map(|b| Tensor::raw(vec![k, d], v.data()[b * k * d..(b + 1) * k * d].to_vec()))
        .collect())
}

/// Picks the interest with the largest inner product with the target,
/// lowest index on ties.
pub fn select_interest<F: Scalar>(interests: &[F], dim: usize, target: &[F]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (k, row) in interests.chunks_exact(dim).enumerate() {
        let s: f64 = row.iter().zip(target).map(|(a, b)| a.f64() * b.f64()).sum();
        if s > best_score {
            best = k;
            best_score = s;
        }
    }
    best
}

impl ModelParams<f32> {
    pub fn write_to<W: Write>(&self, mut w: W, cooc_path: Option<&Path>) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&[match self.mode {
            Mode::SimEmb => 0u8,
            Mode::Baseline => 1u8,
        }])?;
        w.write_all(&[u8::from(self.pos.is_some())])?;
        let d = &self.dims;
        for v in [d.n_items, d.dim, d.interests, d.hidden, d.window] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for t in self.tensors() {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let path = cooc_path.map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
        w.write_all(&(path.len() as u32).to_le_bytes())?;
        w.write_all(path.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, origin: &str) -> Result<(Self, Option<PathBuf>)> {
        let bad = |reason: String| Error::Artifact {
            path: origin.to_owned(),
            expected: "SIMR",
            version: CHECKPOINT_VERSION,
            reason,
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad(format!("found magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("found version {version}")));
        }
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags)?;
        let mode = match flags[0] {
            0 => Mode::SimEmb,
            1 => Mode::Baseline,
            m => return Err(bad(format!("unknown mode byte {m}"))),
        };
        let mut dims = [0usize; 5];
        for v in &mut dims {
            *v = read_u64(&mut r)? as usize;
        }
        let dims = ModelDims {
            n_items: dims[0],
            dim: dims[1],
            interests: dims[2],
            hidden: dims[3],
            window: dims[4],
        };
        let mut read = |shape: &[usize]| -> Result<Tensor<f32>> {
            let n = shape.iter().product();
            let data = (0..n).map(|_| read_f32(&mut r)).collect::<Result<Vec<_>>>()?;
            Tensor::new(shape.to_vec(), data)
        };
        let item_table = read(&[dims.n_items + 1, dims.dim])?;
        let w1 = read(&[dims.hidden, dims.dim])?;
        let w2 = read(&[dims.interests, dims.hidden])?;
        let pos = if flags[1] != 0 {
            Some(read(&[dims.window, dims.dim])?)
        } else {
            None
        };
        let len = read_u32(&mut r)? as usize;
        let mut path = vec![0u8; len];
        r.read_exact(&mut path)?;
        let path = String::from_utf8(path).map_err(|e| bad(e.to_string()))?;
        let params = ModelParams {
            mode,
            dims,
            item_table,
            w1,
            w2,
            pos,
        };
        Ok((params, (!path.is_empty()).then(|| PathBuf::from(path))))
    }

    pub fn save(&self, path: &Path, cooc_path: Option<&Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?), cooc_path)
    }

    pub fn load(path: &Path) -> Result<(Self, Option<PathBuf>)> {
        Self::read_from(BufReader::new(File::open(path)?), &path.display().to_string())
    }
}

/// Sorted distinct indices and each input's position among them.
pub(crate) fn dedup_indices(items: &[usize]) -> (Vec<usize>, HashMap<usize, usize>) {
    let mut uniq: Vec<usize> = items.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    let pos = uniq.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    (uniq, pos)
}
