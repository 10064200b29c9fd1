//! Exact multi-interest retrieval and Recall / HitRate / NDCG.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::data::{eval_split, pad_history, SequenceSet};
use crate::error::{Error, Result};
use crate::model::{interests_from_atlas, ItemAtlas, ModelParams};
use crate::numeric::Scalar;

pub const DEFAULT_CUTOFFS: [usize; 2] = [20, 50];

/// Share of each sequence used as history during evaluation.
pub const HISTORY_FRACTION: f64 = 0.8;

fn dot<F: Scalar>(a: &[F], b: &[F]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.f64() * y.f64()).sum()
}

/// Higher score first, then lower item index.
fn by_score_desc(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

fn top_n(mut scored: Vec<(f64, usize)>, n: usize) -> Vec<(f64, usize)> {
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, by_score_desc);
        scored.truncate(n);
    }
    scored.sort_unstable_by(by_score_desc);
    scored
}

/// Top-`n` items under `f(i) = max_k <v_k, e_i>`.
///
/// Each interest retrieves its own exact top-`n`; the union is rescored by
/// the max over interests. The padding row is never returned.
pub fn retrieve_topn<F: Scalar>(
    interests: &[F],
    atlas: &ItemAtlas<F>,
    n: usize,
) -> Result<Vec<usize>> {
    let n_items = atlas.n_items();
    let dim = atlas.dim();
    if n > n_items {
        return Err(Error::InvalidArgument(format!(
            "cannot retrieve {n} of {n_items} items"
        )));
    }
    if interests.is_empty() || !interests.len().is_multiple_of(dim) {
        return Err(Error::Shape {
            op: "retrieve_topn",
            lhs: vec![interests.len()],
            rhs: vec![dim],
        });
    }
    let mut candidates: HashMap<usize, f64> = HashMap::new();
    for v in interests.chunks_exact(dim) {
        let scored = (1..=n_items).map(|i| (dot(v, atlas.row(i)), i)).collect();
        for (_, i) in top_n(scored, n) {
            candidates.entry(i).or_insert(f64::NEG_INFINITY);
        }
    }
    let rescored = candidates
        .into_keys()
        .map(|i| {
            let f = interests
                .chunks_exact(dim)
                .map(|v| dot(v, atlas.row(i)))
                .fold(f64::NEG_INFINITY, f64::max);
            (f, i)
        })
        .collect();
    Ok(top_n(rescored, n).into_iter().map(|(_, i)| i).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMetrics {
    pub recall: f64,
    pub hit: f64,
    pub ndcg: f64,
}

/// Recall, hit indicator and NDCG of the first `n` ranked items.
pub fn metrics(ranked: &[usize], targets: &BTreeSet<usize>, n: usize) -> Result<UserMetrics> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("metrics need a non-empty target set".into()));
    }
    if ranked.len() < n {
        return Err(Error::InvalidArgument(format!(
            "ranking has {} items, cutoff is {n}",
            ranked.len()
        )));
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (r, item) in ranked[..n].iter().enumerate() {
        if targets.contains(item) {
            hits += 1;
            dcg += 1.0 / ((r + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..targets.len().min(n))
        .map(|r| 1.0 / ((r + 2) as f64).log2())
        .sum();
    Ok(UserMetrics {
        recall: hits as f64 / targets.len() as f64,
        hit: if hits > 0 { 1.0 } else { 0.0 },
        ndcg: dcg / ideal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffMetrics {
    pub n: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cutoffs: Vec<CutoffMetrics>,
    pub users: usize,
    pub skipped: usize,
}

impl EvalReport {
    pub fn at(&self, n: usize) -> Option<&CutoffMetrics> {
        self.cutoffs.iter().find(|c| c.n == n)
    }

    pub fn recall(&self, n: usize) -> f64 {
        self.at(n).map_or(0.0, |c| c.recall)
    }

    /// Flat JSON object, `recall@N, ndcg@N, hit@N` per cutoff then counts.
    pub fn to_json(&self) -> String {
        let mut s = String::from("{");
        for c in &self.cutoffs {
            let _ = write!(
                s,
                "\"recall@{n}\": {}, \"ndcg@{n}\": {}, \"hit@{n}\": {}, ",
                c.recall,
                c.ndcg,
                c.hit_rate,
                n = c.n
            );
        }
        let _ = write!(s, "\"users\": {}, \"skipped\": {}}}", self.users, self.skipped);
        s
    }
}

/// Running sums; mergeable across user shards.
#[derive(Debug, Clone, Default)]
struct Totals {
    sums: Vec<(f64, f64, f64)>,
    users: usize,
    skipped: usize,
}

/// Scores every user in `users`: split 80/20, extract interests from the
/// history window, retrieve the top `max(cutoffs)` and average the metrics.
pub fn evaluate<F: Scalar>(
    params: &ModelParams<F>,
    atlas: &ItemAtlas<F>,
    sequences: &SequenceSet,
    users: &[usize],
    cutoffs: &[usize],
) -> Result<EvalReport> {
    let window = params.dims.window;
    let top = cutoffs.iter().copied().max().unwrap_or(0);
    let mut totals = Totals {
        sums: vec![(0.0, 0.0, 0.0); cutoffs.len()],
        ..Totals::default()
    };

    let mut cases = Vec::new();
    for &u in users {
        match eval_split(&sequences.sequences[u].items, HISTORY_FRACTION, window) {
            Some(c) => cases.push(c),
            None => totals.skipped += 1,
        }
    }

    for chunk in cases.chunks(256) {
        let (histories, masks): (Vec<_>, Vec<_>) =
            chunk.iter().map(|c| pad_history(&c.history, window)).unzip();
        let interests = interests_from_atlas(params, atlas, &histories, &masks)?;
        for (case, v) in chunk.iter().zip(&interests) {
            let ranked = retrieve_topn(v.data(), atlas, top)?;
            for (slot, &n) in totals.sums.iter_mut().zip(cutoffs) {
                let m = metrics(&ranked, &case.targets, n)?;
                slot.0 += m.recall;
                slot.1 += m.ndcg;
                slot.2 += m.hit;
            }
            totals.users += 1;
        }
    }

    let denom = totals.users.max(1) as f64;
    Ok(EvalReport {
        cutoffs: cutoffs
            .iter()
            .zip(&totals.sums)
            .map(|(&n, &(r, g, h))| CutoffMetrics {
                n,
                recall: r / denom,
                ndcg: g / denom,
                hit_rate: h / denom,
            })
            .collect(),
        users: totals.users,
        skipped: totals.skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn set(items: &[usize]) -> BTreeSet<usize> {
        items.iter().copied().collect()
    }

    #[test]
    fn perfect_rank() {
        let ranked: Vec<usize> = (1..=20).collect();
        let m = metrics(&ranked, &set(&[1]), 20).unwrap();
        assert_eq!((m.recall, m.hit, m.ndcg), (1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_derived_ndcg() {
        let mut ranked: Vec<usize> = (100..120).collect();
        ranked[4] = 2;
        let m = metrics(&ranked, &set(&[1, 2]), 20).unwrap();
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert_eq!(m.hit, 1.0);
        let expected = (1.0 / 6f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((m.ndcg - expected).abs() < 1e-12);
    }

    #[test]
    fn no_hits() {
        let ranked: Vec<usize> = (10..30).collect();
        let m = metrics(&ranked, &set(&[1, 2, 3]), 20).unwrap();
        assert_eq!((m.recall, m.hit, m.ndcg), (0.0, 0.0, 0.0));
        assert!(metrics(&ranked, &BTreeSet::new(), 20).is_err());
        assert!(metrics(&ranked[..5], &set(&[1]), 20).is_err());
    }

    fn atlas(rows: &[[f64; 2]]) -> ItemAtlas<f64> {
        let mut data = vec![0.0, 0.0];
        for r in rows {
            data.extend_from_slice(r);
        }
        ItemAtlas {
            embeddings: Tensor::from_f64(&[rows.len() + 1, 2], &data).unwrap(),
        }
    }

    #[test]
    fn single_interest_is_plain_top_n() {
        let a = atlas(&[[1.0, 0.0], [3.0, 0.0], [2.0, 0.0], [-1.0, 0.0]]);
        assert_eq!(retrieve_topn(&[1.0, 0.0], &a, 2).unwrap(), vec![2, 3]);
        assert!(retrieve_topn(&[1.0, 0.0], &a, 5).is_err());
    }

    #[test]
    fn disjoint_interests_rank_by_max() {
        let a = atlas(&[[5.0, 0.0], [4.0, 0.0], [0.0, 4.5], [0.0, 1.0], [-1.0, -1.0]]);
        let r = retrieve_topn(&[1.0, 0.0, 0.0, 1.0], &a, 3).unwrap();
        assert_eq!(r, vec![1, 3, 2]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let a = atlas(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(retrieve_topn(&[1.0, 0.0], &a, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn report_json_keys() {
        let r = EvalReport {
            cutoffs: vec![
                CutoffMetrics { n: 20, recall: 0.5, ndcg: 0.25, hit_rate: 1.0 },
                CutoffMetrics { n: 50, recall: 0.75, ndcg: 0.3, hit_rate: 1.0 },
            ],
            users: 3,
            skipped: 1,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["recall@20", "ndcg@20", "hit@20", "recall@50", "ndcg@50", "hit@50", "users", "skipped"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["skipped"], 1);
    }
}
