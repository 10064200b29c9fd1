//! Small exact harness relating a binary item-attribute matrix `R` to the
//! shared-attribute similarity matrix `S = R Rᵀ`.
//!
//! Column `i` of `S` is the sum of the attribute columns of `R` that item `i`
//! owns, so `S = [R : O] P` for an integer matrix `P` whose top `|A|` rows
//! hold `Rᵀ` and whose remaining rows are the identity. When the top-left
//! `|A| × |A|` block of `R` is invertible, so is `P`, and `S P⁻¹` recovers
//! `[R : O]`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cooc::CoocMatrix;
use crate::error::{Error, Result};

pub const MAX_ITEMS: usize = 64;
pub const MAX_ATTRS: usize = 16;

/// Binary `|I| × |A|` incidence matrix; every item owns at least one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix(DMatrix<i64>);

impl AttributeMatrix {
    pub fn new(r: DMatrix<i64>) -> Result<Self> {
        if r.iter().any(|&v| v != 0 && v != 1) {
            return Err(Error::InvalidArgument("attribute matrix must be binary".into()));
        }
        if let Some(i) = (0..r.nrows()).find(|&i| r.row(i).iter().all(|&v| v == 0)) {
            return Err(Error::InvalidArgument(format!("item {i} has no attributes")));
        }
        if r.ncols() > r.nrows() {
            return Err(Error::InvalidArgument(format!(
                "{} attributes exceed {} items",
                r.ncols(),
                r.nrows()
            )));
        }
        Ok(Self(r))
    }

    /// Random instance whose first `n_attrs` items form a unit upper
    /// triangular incidence block (item `j` owns attribute `j` plus
    /// optional later attributes), so the transform is always invertible.
    pub fn generate(n_items: usize, n_attrs: usize, seed: u64) -> Result<Self> {
        if n_attrs == 0 || n_attrs > n_items || n_items > MAX_ITEMS || n_attrs > MAX_ATTRS {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= attrs <= items, items <= {MAX_ITEMS}, attrs <= {MAX_ATTRS}; got {n_items}x{n_attrs}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = DMatrix::<i64>::zeros(n_items, n_attrs);
        for j in 0..n_attrs {
            r[(j, j)] = 1;
            for k in j + 1..n_attrs {
                if rng.gen_bool(0.25) {
                    r[(j, k)] = 1;
                }
            }
        }
        let attrs: Vec<usize> = (0..n_attrs).collect();
        for i in n_attrs..n_items {
            let count = rng.gen_range(1..=3.min(n_attrs));
            for &a in attrs.choose_multiple(&mut rng, count) {
                r[(i, a)] = 1;
            }
        }
        Self::new(r)
    }

    pub fn n_items(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_attrs(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<i64> {
        &self.0
    }

    /// `[R : O]`, zero-extended to `|I|` columns.
    pub fn extended(&self) -> DMatrix<i64> {
        let mut out = DMatrix::<i64>::zeros(self.n_items(), self.n_items());
        out.columns_mut(0, self.n_attrs()).copy_from(&self.0);
        out
    }

    /// Items owning attribute `a`.
    pub fn holders(&self, a: usize) -> Vec<usize> {
        (0..self.n_items()).filter(|&i| self.0[(i, a)] != 0).collect()
    }

    /// Permutes attribute columns.
    pub fn permute_attrs(&self, perm: &[usize]) -> Self {
        let mut out = self.0.clone();
        for (new, &old) in perm.iter().enumerate() {
            out.set_column(new, &self.0.column(old));
        }
        Self(out)
    }
}

/// Indices of the attributes item `i` owns.
pub fn attr_index_set(r: &AttributeMatrix, i: usize) -> BTreeSet<usize> {
    r.0.row(i)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(j, _)| j)
        .collect()
}

/// `S[:, i] = Σ_{j ∈ C_i} R[:, j]`, i.e. shared-attribute counts.
pub fn similarity_from_attributes(r: &AttributeMatrix) -> DMatrix<i64> {
    let n = r.n_items();
    let mut s = DMatrix::<i64>::zeros(n, n);
    for i in 0..n {
        for j in attr_index_set(r, i) {
            let mut col = s.column_mut(i);
            col += r.0.column(j);
        }
    }
    s
}

/// Integer `P` with `[R : O] P = S`.
pub fn build_transform(r: &AttributeMatrix) -> Result<DMatrix<i64>> {
    let (n, m) = (r.n_items(), r.n_attrs());
    let block = r.0.rows(0, m).map(|v| v as f64);
    let det = block.determinant();
    if det.abs() < 0.5 {
        return Err(Error::Singular(format!(
            "top {m}x{m} incidence block has determinant {det}; regenerate the instance"
        )));
    }
    let mut p = DMatrix::<i64>::zeros(n, n);
    for i in 0..n {
        for j in 0..m {
            p[(j, i)] = r.0[(i, j)];
        }
    }
    for j in m..n {
        p[(j, j)] = 1;
    }
    Ok(p)
}

/// Solves `X P = S` for `X = S P⁻¹`.
pub fn verify_recovery(s: &DMatrix<f64>, p: &DMatrix<i64>) -> Result<DMatrix<f64>> {
    let pt = p.transpose().map(|v| v as f64);
    let xt = pt
        .lu()
        .solve(&s.transpose())
        .ok_or_else(|| Error::Singular("transform matrix is not invertible".into()))?;
    Ok(xt.transpose())
}

/// Outcome of one exact identity check.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCheck {
    pub product_exact: bool,
    pub determinant: f64,
    pub max_residual: f64,
}

impl TheoryCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.product_exact && self.determinant.abs() > 0.5 && self.max_residual <= tol
    }
}

pub fn check_instance(r: &AttributeMatrix) -> Result<TheoryCheck> {
    let s = similarity_from_attributes(r);
    let p = build_transform(r)?;
    let ext = r.extended();
    let product_exact = &ext * &p == s;
    let determinant = p.map(|v| v as f64).determinant();
    let recovered = verify_recovery(&s.map(|v| v as f64), &p)?;
    let max_residual = recovered
        .iter()
        .zip(ext.iter())
        .map(|(x, &e)| (x - e as f64).abs())
        .fold(0.0, f64::max);
    Ok(TheoryCheck {
        product_exact,
        determinant,
        max_residual,
    })
}

/// Sequences in which each user browses items sharing one attribute, so
/// co-occurrence tracks shared attributes. Items are 1-based.
pub fn sample_attribute_sequences(
    r: &AttributeMatrix,
    n_seqs: usize,
    len: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holders: Vec<Vec<usize>> = (0..r.n_attrs()).map(|a| r.holders(a)).collect();
    (0..n_seqs)
        .map(|_| {
            let pool = &holders[rng.gen_range(0..holders.len())];
            (0..len).map(|_| pool[rng.gen_range(0..pool.len())] + 1).collect()
        })
        .collect()
}

/// Pearson correlation between column `j` of `Â P⁻¹` and attribute column
/// `j` of `R`, for every attribute, where `Â` is the row-normalized
/// co-occurrence matrix (padding row and column dropped).
pub fn cooc_recovery_correlations(
    r: &AttributeMatrix,
    a: &CoocMatrix,
) -> Result<Vec<f64>> {
    let n = r.n_items();
    if a.n_items() != n {
        return Err(Error::InvalidArgument(format!(
            "co-occurrence matrix has {} items, attribute matrix {n}",
            a.n_items()
        )));
    }
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (c, v) in a.matrix.row(i + 1) {
            if c > 0 {
                dense[(i, c - 1)] = v;
            }
        }
    }
    let p = build_transform(r)?;
    let approx = verify_recovery(&dense, &p)?;
    Ok((0..r.n_attrs())
        .map(|j| {
            let x: Vec<f64> = approx.column(j).iter().copied().collect();
            let y: Vec<f64> = r.0.column(j).iter().map(|&v| v as f64).collect();
            pearson(&x, &y)
        })
        .collect())
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}
