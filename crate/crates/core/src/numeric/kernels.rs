//! Forward kernels. Reverse-mode rules live next to each kernel so the tape
//! only dispatches.

use crate::error::{Error, Result};
use crate::numeric::tensor::{Scalar, Tensor};
use crate::sparse::SparseRowMatrix;

fn shape_err<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// `op(a) · op(b)` where `op` optionally transposes the trailing two axes.
/// Rank-3 operands are batched over their leading axis.
pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, ta: bool, tb: bool) -> Result<Tensor<F>> {
    let (batch, sa, sb) = match (a.rank(), b.rank()) {
        (2, 2) => (1, a.shape(), b.shape()),
        (3, 3) if a.shape()[0] == b.shape()[0] => (a.shape()[0], &a.shape()[1..], &b.shape()[1..]),
        _ => return Err(shape_err("matmul", a, b)),
    };
    let (m, ka) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
    let (kb, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
    if ka != kb {
        return Err(shape_err("matmul", a, b));
    }
    let k = ka;
    let mut out = vec![F::zero(); batch * m * n];
    for bi in 0..batch {
        let ab = &a.data()[bi * m * k..(bi + 1) * m * k];
        let bb = &b.data()[bi * k * n..(bi + 1) * k * n];
        F::gemm(m, k, n, ab, ta, bb, tb, &mut out[bi * m * n..(bi + 1) * m * n]);
    }
    let shape = if batch == 1 && a.rank() == 2 {
        vec![m, n]
    } else {
        vec![batch, m, n]
    };
    Ok(Tensor::raw(shape, out))
}

/// Gradients of `matmul(a, b, ta, tb)` given the output gradient.
pub(crate) fn matmul_backward<F: Scalar>(
    a: &Tensor<F>,
    b: &Tensor<F>,
    ta: bool,
    tb: bool,
    g: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    Ok(match (ta, tb) {
        (false, false) => (matmul(g, b, false, true)?, matmul(a, g, true, false)?),
        (false, true) => (matmul(g, b, false, false)?, matmul(g, a, true, false)?),
        (true, false) => (matmul(b, g, false, true)?, matmul(a, g, false, false)?),
        (true, true) => (matmul(b, g, true, true)?, matmul(g, a, true, true)?),
    })
}

/// Sparse `s` (r×c) times dense `d` (c×w).
pub fn sparse_dense_matmul<F: Scalar>(s: &SparseRowMatrix, d: &Tensor<F>) -> Result<Tensor<F>> {
    if d.rank() != 2 || d.shape()[0] != s.n_cols() {
        return Err(Error::Shape {
            op: "sparse_dense_matmul",
            lhs: vec![s.n_rows(), s.n_cols()],
            rhs: d.shape().to_vec(),
        });
    }
    let w = d.shape()[1];
    let mut out = vec![F::zero(); s.n_rows() * w];
    for r in 0..s.n_rows() {
        let orow = &mut out[r * w..(r + 1) * w];
        for (c, v) in s.row(r) {
            let v = F::of(v);
            for (o, &x) in orow.iter_mut().zip(d.row(c)) {
                *o += v * x;
            }
        }
    }
    Ok(Tensor::raw(vec![s.n_rows(), w], out))
}

/// `sᵀ · g`, the gradient of `sparse_dense_matmul` w.r.t. the dense operand.
pub(crate) fn sparse_dense_backward<F: Scalar>(s: &SparseRowMatrix, g: &Tensor<F>) -> Tensor<F> {
    let w = g.shape()[1];
    let mut out = Tensor::zeros(&[s.n_cols(), w]);
    for r in 0..s.n_rows() {
        let grow = g.row(r);
        for (c, v) in s.row(r) {
            let v = F::of(v);
            for (o, &x) in out.row_mut(c).iter_mut().zip(grow) {
                *o += v * x;
            }
        }
    }
    out
}

pub fn tanh<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    Tensor::raw(x.shape().to_vec(), x.data().iter().map(|v| v.fast_tanh()).collect())
}

pub(crate) fn tanh_backward<F: Scalar>(y: &Tensor<F>, g: &Tensor<F>) -> Tensor<F> {
    let data = y
        .data()
        .iter()
        .zip(g.data())
        .map(|(&y, &g)| g * (F::one() - y * y))
        .collect();
    Tensor::raw(y.shape().to_vec(), data)
}

/// `(outer, len, inner)` view of a tensor around `axis`.
fn axis_view(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Softmax along `axis` restricted to positions where `mask` is true. The
/// mask covers the leading axes up to and including `axis` and broadcasts
/// over trailing ones. Masked positions get probability 0.
pub fn masked_softmax<F: Scalar>(x: &Tensor<F>, mask: &[bool], axis: usize) -> Result<Tensor<F>> {
    if axis >= x.rank() {
        return Err(Error::Shape {
            op: "masked_softmax",
            lhs: x.shape().to_vec(),
            rhs: vec![axis],
        });
    }
    let (outer, len, inner) = axis_view(x.shape(), axis);
    if mask.len() != outer * len {
        return Err(Error::Shape {
            op: "masked_softmax",
            lhs: x.shape().to_vec(),
            rhs: vec![mask.len()],
        });
    }
    let xs = x.data();
    let mut out = vec![F::zero(); xs.len()];
    for o in 0..outer {
        let m = &mask[o * len..(o + 1) * len];
        if !m.iter().any(|&b| b) {
            return Err(Error::InvalidArgument(format!(
                "masked_softmax: slice {o} has no unmasked entries"
            )));
        }
        for q in 0..inner {
            let at = |l: usize| (o * len + l) * inner + q;
            let max = (0..len)
                .filter(|&l| m[l])
                .map(|l| xs[at(l)].f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0f64;
            for l in (0..len).filter(|&l| m[l]) {
                let e = (xs[at(l)].f64() - max).exp();
                out[at(l)] = F::of(e);
                total += e;
            }
            for l in (0..len).filter(|&l| m[l]) {
                out[at(l)] = F::of(out[at(l)].f64() / total);
            }
        }
    }
    Ok(Tensor::raw(x.shape().to_vec(), out))
}

pub(crate) fn masked_softmax_backward<F: Scalar>(
    p: &Tensor<F>,
    axis: usize,
    g: &Tensor<F>,
) -> Tensor<F> {
    let (outer, len, inner) = axis_view(p.shape(), axis);
    let (ps, gs) = (p.data(), g.data());
    let mut out = vec![F::zero(); ps.len()];
    for o in 0..outer {
        for q in 0..inner {
            let at = |l: usize| (o * len + l) * inner + q;
            let dot: f64 = (0..len).map(|l| ps[at(l)].f64() * gs[at(l)].f64()).sum();
            for l in 0..len {
                let i = at(l);
                out[i] = F::of(ps[i].f64() * (gs[i].f64() - dot));
            }
        }
    }
    Tensor::raw(p.shape().to_vec(), out)
}

/// Rows of the rank-2 `src` at `indices`.
pub fn gather<F: Scalar>(src: &Tensor<F>, indices: &[usize]) -> Result<Tensor<F>> {
    if src.rank() != 2 {
        return Err(Error::Shape {
            op: "gather",
            lhs: src.shape().to_vec(),
            rhs: vec![indices.len()],
        });
    }
    let (n, w) = (src.shape()[0], src.shape()[1]);
    let mut out = Vec::with_capacity(indices.len() * w);
    for &i in indices {
        if i >= n {
            return Err(Error::IndexOutOfRange {
                what: "gather",
                index: i,
                len: n,
            });
        }
        out.extend_from_slice(src.row(i));
    }
    Ok(Tensor::raw(vec![indices.len(), w], out))
}

pub(crate) fn gather_backward<F: Scalar>(
    src_shape: &[usize],
    indices: &[usize],
    g: &Tensor<F>,
) -> Tensor<F> {
    let mut out = Tensor::zeros(src_shape);
    for (k, &i) in indices.iter().enumerate() {
        for (o, &x) in out.row_mut(i).iter_mut().zip(g.row(k)) {
            *o += x;
        }
    }
    out
}

pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    if a.shape() != b.shape() {
        return Err(shape_err("add", a, b));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::raw(a.shape().to_vec(), data))
}

pub fn scale<F: Scalar>(a: &Tensor<F>, c: F) -> Tensor<F> {
    Tensor::raw(a.shape().to_vec(), a.data().iter().map(|&x| x * c).collect())
}

/// Per-row inner products of two `n×d` tensors.
pub fn row_dot<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    if a.rank() != 2 || a.shape() != b.shape() {
        return Err(shape_err("row_dot", a, b));
    }
    let n = a.shape()[0];
    let data = (0..n)
        .map(|r| {
            let s: f64 = a.row(r).iter().zip(b.row(r)).map(|(x, y)| x.f64() * y.f64()).sum();
            F::of(s)
        })
        .collect();
    Ok(Tensor::raw(vec![n], data))
}

pub(crate) fn row_dot_backward<F: Scalar>(
    a: &Tensor<F>,
    b: &Tensor<F>,
    g: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>) {
    let mut da = Tensor::zeros(a.shape());
    let mut db = Tensor::zeros(b.shape());
    for r in 0..a.shape()[0] {
        let gr = g.data()[r];
        for ((x, y), (dx, dy)) in a
            .row(r)
            .iter()
            .zip(b.row(r))
            .zip(da.row_mut(r).iter_mut().zip(db.row_mut(r).iter_mut()))
        {
            *dx = gr * *y;
            *dy = gr * *x;
        }
    }
    (da, db)
}

/// Mean over the batch of `-log softmax(pos)` where the softmax runs over
/// the positive logit and that row's negative logits. `pos: [B]`, `neg: [B, M]`.
pub fn sampled_softmax_nll<F: Scalar>(pos: &Tensor<F>, neg: &Tensor<F>) -> Result<Tensor<F>> {
    let b = pos.len();
    if pos.rank() != 1 || neg.rank() != 2 || neg.shape()[0] != b || b == 0 {
        return Err(shape_err("sampled_softmax_nll", pos, neg));
    }
    let mut total = 0.0f64;
    for r in 0..b {
        let z = log_sum_exp(pos.data()[r].f64(), neg.row(r));
        total += z - pos.data()[r].f64();
    }
    Ok(Tensor::scalar(F::of(total / b as f64)))
}

fn log_sum_exp<F: Scalar>(first: f64, rest: &[F]) -> f64 {
    let max = rest.iter().map(|v| v.f64()).fold(first, f64::max);
    let m = F::of(max);
    let s: f64 = (first - max).exp() + rest.iter().map(|&v| (v - m).exp().f64()).sum::<f64>();
    max + s.ln()
}

pub(crate) fn sampled_softmax_nll_backward<F: Scalar>(
    pos: &Tensor<F>,
    neg: &Tensor<F>,
    g: F,
) -> (Tensor<F>, Tensor<F>) {
    let b = pos.len();
    let scale = g.f64() / b as f64;
    let mut dpos = Tensor::zeros(pos.shape());
    let mut dneg = Tensor::zeros(neg.shape());
    for r in 0..b {
        let p = pos.data()[r].f64();
        let row = neg.row(r);
        let max = row.iter().map(|v| v.f64()).fold(p, f64::max);
        let m = F::of(max);
        let d = dneg.row_mut(r);
        for (e, &v) in d.iter_mut().zip(row) {
            *e = (v - m).exp();
        }
        let e_pos = (p - max).exp();
        let sum = e_pos + d.iter().map(|e| e.f64()).sum::<f64>();
        let f = F::of(scale / sum);
        for e in d.iter_mut() {
            *e *= f;
        }
        dpos.data_mut()[r] = F::of((e_pos / sum - 1.0) * scale);
    }
    (dpos, dneg)
}
