//! Embedding-space diagnostics: t-SNE to the plane, projection onto the
//! unit circle, angular and planar density estimates.

pub mod density;
pub mod export;
pub mod tsne;

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use density::{gaussian_kde2d, vmf_density, DensityCurve, DensityGrid};
pub use export::export;
pub use tsne::{tsne_project, TsneConfig, TsneOutput};

use crate::data::KeyIndex;
use crate::error::{Error, Result};
use crate::model::ItemAtlas;
use crate::numeric::Scalar;

pub const DEFAULT_SAMPLE: usize = 600;
pub const DEFAULT_CATEGORIES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub item: usize,
    pub key: String,
    pub category: String,
    pub x: f64,
    pub y: f64,
}

/// Centres the points on their mean and scales each to unit length.
/// A point that lands exactly on the mean is nudged by `1e-9` along x.
pub fn normalize_to_circle(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len().max(1) as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    let (mx, my) = (mx / n, my / n);
    points
        .iter()
        .map(|p| {
            let (mut x, y) = (p[0] - mx, p[1] - my);
            if x == 0.0 && y == 0.0 {
                x = 1e-9;
            }
            let norm = x.hypot(y);
            [x / norm, y / norm]
        })
        .collect()
}

/// Reads `item_key,category` lines.
pub fn read_labels<R: BufRead>(r: R) -> Result<HashMap<String, String>> {
    let mut labels = HashMap::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, cat) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected item_key,category".into(),
        })?;
        labels.insert(key.trim().to_string(), cat.trim().to_string());
    }
    Ok(labels)
}

/// Category of every item index (`None` for the padding row and unlabeled items).
pub fn labels_by_index(items: &KeyIndex, labels: &HashMap<String, String>) -> Vec<Option<String>> {
    let mut out = vec![None];
    out.extend(items.keys().map(|k| labels.get(k).cloned()));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct VizConfig {
    pub sample: usize,
    /// Number of categories to draw items from; `None` uses all of them.
    pub categories: Option<usize>,
    pub kappa: f64,
    pub tsne: TsneConfig,
}

impl Default for VizConfig {
    fn default() -> Self {
        Self {
            sample: DEFAULT_SAMPLE,
            categories: Some(DEFAULT_CATEGORIES),
            kappa: density::DEFAULT_KAPPA,
            tsne: TsneConfig::default(),
        }
    }
}

/// Picks `categories` labels at random, then up to `sample` items carrying
/// them. Returned indices are sorted.
pub fn sample_items(labels: &[Option<String>], cfg: &VizConfig) -> Result<Vec<usize>> {
    let mut by_cat: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            by_cat.entry(l.as_str()).or_default().push(i);
        }
    }
    if by_cat.is_empty() {
        return Err(Error::InvalidArgument("no sampled item carries a label".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.tsne.seed);
    let mut cats: Vec<&str> = by_cat.keys().copied().collect();
    if let Some(k) = cfg.categories {
        cats.shuffle(&mut rng);
        cats.truncate(k.max(1));
    }
    let mut pool: Vec<usize> = cats.iter().flat_map(|c| by_cat[c].iter().copied()).collect();
    pool.sort_unstable();
    let take = cfg.sample.min(pool.len());
    let mut picked: Vec<usize> = sample(&mut rng, pool.len(), take)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone)]
pub struct Visualization {
    pub points: Vec<Projection2D>,
    pub curve: DensityCurve,
    pub grid: DensityGrid,
    pub tsne: TsneOutput,
    /// Perplexity actually used (lowered when the sample is small).
    pub perplexity: f64,
}

/// Samples items, runs t-SNE on their atlas rows, maps the result onto the
/// unit circle and estimates the angular and planar densities.
pub fn visualize<F: Scalar>(
    atlas: &ItemAtlas<F>,
    items: &KeyIndex,
    labels: &[Option<String>],
    cfg: &VizConfig,
) -> Result<Visualization> {
    if labels.len() != atlas.n_items() + 1 {
        return Err(Error::Shape {
            op: "visualize",
            lhs: vec![labels.len()],
            rhs: vec![atlas.n_items() + 1],
        });
    }
    let picked = sample_items(labels, cfg)?;
    let n = picked.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("only {n} labeled items to project")));
    }
    let d = atlas.dim();
    let data: Vec<f64> = picked
        .iter()
        .flat_map(|&i| atlas.row(i).iter().map(|v| v.f64()))
        .collect();
    let perplexity = cfg.tsne.perplexity.min((n as f64 - 1.0) / 3.0);
    let tsne_cfg = TsneConfig { perplexity, ..cfg.tsne.clone() };
    let tsne = tsne_project(&data, n, d, &tsne_cfg)?;
    let unit = normalize_to_circle(&tsne.points);
    let points = picked
        .iter()
        .zip(&unit)
        .map(|(&i, p)| Projection2D {
            item: i,
            key: items.key(i).unwrap_or_default().to_string(),
            category: labels[i].clone().unwrap_or_default(),
            x: p[0],
            y: p[1],
        })
        .collect();
    let curve = vmf_density(&density::angles_of(&unit), cfg.kappa)?;
    let grid = gaussian_kde2d(&unit, None, density::GRID_SIZE)?;
    Ok(Visualization { points, curve, grid, tsne, perplexity })
}

/// Mean cosine similarity of atlas rows within and across categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterMargin {
    pub intra: f64,
    pub inter: f64,
}

impl ClusterMargin {
    pub fn margin(&self) -> f64 {
        self.intra - self.inter
    }
}

pub fn cluster_margin<F: Scalar>(atlas: &ItemAtlas<F>, labels: &[Option<String>]) -> Result<ClusterMargin> {
    let items: Vec<(usize, &str)> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.as_deref().map(|l| (i, l)))
        .filter(|&(i, _)| i >= 1 && i <= atlas.n_items())
        .collect();
    let rows: Vec<usize> = items.iter().map(|&(i, _)| i).collect();
    pair_margin(atlas, &rows, |a, b| items[a].1 == items[b].1)
}

/// Margin for overlapping memberships: a pair is intra-group when the two
/// items share at least one group. `groups[i]` lists the groups of item
/// index `i`; an empty list leaves the item out.
pub fn group_margin<F: Scalar>(atlas: &ItemAtlas<F>, groups: &[Vec<usize>]) -> Result<ClusterMargin> {
    let rows: Vec<usize> = (1..groups.len().min(atlas.n_items() + 1))
        .filter(|&i| !groups[i].is_empty())
        .collect();
    pair_margin(atlas, &rows, |a, b| {
        groups[rows[a]].iter().any(|g| groups[rows[b]].contains(g))
    })
}

fn pair_margin<F: Scalar>(
    atlas: &ItemAtlas<F>,
    rows: &[usize],
    same: impl Fn(usize, usize) -> bool,
) -> Result<ClusterMargin> {
    let unit: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| {
            let row: Vec<f64> = atlas.row(i).iter().map(|v| v.f64()).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            row.into_iter().map(|v| v / norm).collect()
        })
        .collect();
    let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let cos: f64 = unit[a].iter().zip(&unit[b]).map(|(x, y)| x * y).sum();
            let slot = if same(a, b) { &mut intra } else { &mut inter };
            slot.0 += cos;
            slot.1 += 1;
        }
    }
    if intra.1 == 0 || inter.1 == 0 {
        return Err(Error::InvalidArgument(
            "cluster margin needs pairs both within and across categories".into(),
        ));
    }
    Ok(ClusterMargin {
        intra: intra.0 / intra.1 as f64,
        inter: inter.0 / inter.1 as f64,
    })
}
