//! Step-interval weighted item co-occurrence matrix.
//!
//! Every ordered pair of positions `p < q` inside one training sequence adds
//! `T - (q - p)` to both `a[i][j]` and `a[j][i]` when that weight is positive.
//! The diagonal of every real item is then overwritten with 1 and each row is
//! L1-normalized. Row and column 0 belong to the padding sentinel, whose row
//! is the single self-loop `a[0][0] = 1`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseRowMatrix;

pub const COOC_MAGIC: &[u8; 4] = b"COOC";
pub const COOC_VERSION: u32 = 1;

/// Unnormalized co-occurrence weights, one sorted map per item row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCounts {
    rows: Vec<BTreeMap<u32, u64>>,
}

impl RawCounts {
    pub fn new(n_items: usize) -> Self {
        Self {
            rows: vec![BTreeMap::new(); n_items + 1],
        }
    }

    pub fn n_items(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.rows[i].get(&(j as u32)).copied().unwrap_or(0)
    }

    fn add(&mut self, i: usize, j: usize, w: u64) {
        *self.rows[i].entry(j as u32).or_default() += w;
    }

    /// Adds one sequence's contributions.
    pub fn add_sequence(&mut self, items: &[usize], threshold: usize) -> Result<()> {
        let n = self.rows.len();
        if let Some(&bad) = items.iter().find(|&&i| i == 0 || i >= n) {
            return Err(Error::IndexOutOfRange {
                what: "co-occurrence item",
                index: bad,
                len: n,
            });
        }
        for p in 0..items.len() {
            let reach = (p + threshold).min(items.len());
            for q in p + 1..reach {
                let w = (threshold - (q - p)) as u64;
                let (i, j) = (items[p], items[q]);
                self.add(i, j, w);
                self.add(j, i, w);
            }
        }
        Ok(())
    }

    /// Commutative merge of another shard's counts.
    pub fn merge(&mut self, other: &RawCounts) {
        assert_eq!(self.rows.len(), other.rows.len(), "merging mismatched shards");
        for (mine, theirs) in self.rows.iter_mut().zip(&other.rows) {
            for (&c, &w) in theirs {
                *mine.entry(c).or_default() += w;
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, row)| {
            row.iter()
                .all(|(&j, &w)| self.get(j as usize, i) == w)
        })
    }
}

/// Accumulates raw weights over `sequences` (training split only).
pub fn accumulate<'a, I>(sequences: I, n_items: usize, threshold: usize) -> Result<RawCounts>
where
    I: IntoIterator<Item = &'a [usize]>,
{
    if threshold == 0 {
        return Err(Error::InvalidArgument("step threshold T must be >= 1".into()));
    }
    let mut counts = RawCounts::new(n_items);
    for seq in sequences {
        counts.add_sequence(seq, threshold)?;
    }
    Ok(counts)
}

/// The normalized co-occurrence matrix, `(n_items + 1)` square.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocMatrix {
    pub matrix: SparseRowMatrix,
    pub threshold: usize,
    /// Fraction of nonzero real-item entries before normalization.
    pub density: f64,
}

/// Overwrites the diagonal with 1 and L1-normalizes every row.
pub fn finalize(raw: &RawCounts, threshold: usize) -> Result<CoocMatrix> {
    let n_items = raw.n_items();
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n_items + 1);
    rows.push(vec![(0, 1.0)]);
    let mut nnz = 0usize;
    for i in 1..=n_items {
        let mut row: Vec<(u32, f64)> = raw.rows[i]
            .iter()
            .filter(|(&j, _)| j as usize != i)
            .map(|(&j, &w)| (j, w as f64))
            .collect();
        let pos = row.partition_point(|&(j, _)| (j as usize) < i);
        row.insert(pos, (i as u32, 1.0));
        nnz += row.len();
        let total: f64 = row.iter().map(|&(_, v)| v).sum();
        for (_, v) in &mut row {
            *v /= total;
        }
        rows.push(row);
    }
    let density = if n_items == 0 {
        0.0
    } else {
        nnz as f64 / (n_items as f64 * n_items as f64)
    };
    Ok(CoocMatrix {
        matrix: SparseRowMatrix::from_rows(n_items + 1, &rows)?,
        threshold,
        density,
    })
}

impl CoocMatrix {
    /// `accumulate` followed by `finalize`.
    pub fn build<'a, I>(sequences: I, n_items: usize, threshold: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        finalize(&accumulate(sequences, n_items, threshold)?, threshold)
    }

    /// The identity co-occurrence matrix, under which enhanced embeddings
    /// reduce to plain lookups.
    pub fn identity(n_items: usize) -> Self {
        Self {
            matrix: SparseRowMatrix::identity(n_items + 1),
            threshold: 1,
            density: if n_items == 0 { 0.0 } else { 1.0 / n_items as f64 },
        }
    }

    pub fn n_items(&self) -> usize {
        self.matrix.n_rows() - 1
    }

    /// Copies the requested rows; index 0 yields the padding row.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<SparseRowMatrix> {
        self.matrix.gather_rows(indices)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.matrix;
        w.write_all(COOC_MAGIC)?;
        w.write_all(&COOC_VERSION.to_le_bytes())?;
        for v in [m.n_rows(), m.n_cols(), m.nnz()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for &o in m.row_offsets() {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &c in m.col_indices() {
            w.write_all(&c.to_le_bytes())?;
        }
        for &v in m.values() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.write_all(&(self.threshold as u64).to_le_bytes())?;
        w.write_all(&self.density.to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Reads a COOC file. Stored values are f32; rows are renormalized in
    /// f64 after loading so real rows sum to one at double precision.
    pub fn read_from<R: Read>(mut r: R, origin: &str) -> Result<Self> {
        let bad = |reason: String| Error::Artifact {
            path: origin.to_owned(),
            expected: "COOC",
            version: COOC_VERSION,
            reason,
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != COOC_MAGIC {
            return Err(bad(format!("found magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != COOC_VERSION {
            return Err(bad(format!("found version {version}")));
        }
        let n_rows = read_u64(&mut r)? as usize;
        let n_cols = read_u64(&mut r)? as usize;
        let nnz = read_u64(&mut r)? as usize;
        let row_offsets = (0..=n_rows)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let col_indices = (0..nnz)
            .map(|_| read_u32(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let mut values = (0..nnz)
            .map(|_| read_f32(&mut r).map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let threshold = read_u64(&mut r)? as usize;
        let density = f64::from_bits(read_u64(&mut r)?);
        for row in row_offsets.windows(2) {
            let vals = &mut values[row[0].min(nnz)..row[1].min(nnz)];
            let total: f64 = vals.iter().sum();
            if total > 0.0 {
                vals.iter_mut().for_each(|v| *v /= total);
            }
        }
        let matrix = SparseRowMatrix::from_parts(n_rows, n_cols, row_offsets, col_indices, values)
            .map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            matrix,
            threshold,
            density,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}
