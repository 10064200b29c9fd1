//! Exact t-SNE (dense affinities, O(n²) gradient).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    /// `None` means `n / 12`.
    pub learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneOutput {
    pub points: Vec<[f64; 2]>,
    /// `(iteration, KL(P || Q))` every 50 iterations and at the end.
    pub kl: Vec<(usize, f64)>,
}

impl TsneOutput {
    pub fn kl_at(&self, iteration: usize) -> Option<f64> {
        self.kl.iter().find(|(i, _)| *i == iteration).map(|&(_, v)| v)
    }

    pub fn final_kl(&self) -> f64 {
        self.kl.last().map_or(f64::NAN, |&(_, v)| v)
    }
}

fn squared_distances(data: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let a = &data[i * d..(i + 1) * d];
        for j in i + 1..n {
            let b = &data[j * d..(j + 1) * d];
            let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

/// Row `i` of the conditional affinities, with the Gaussian precision
/// binary-searched so the row entropy matches `ln(perplexity)`.
fn conditional_row(dist: &[f64], i: usize, perplexity: f64, row: &mut [f64]) {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
    // shift by the nearest neighbour distance so exp never underflows wholesale
    let min_d = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    for _ in 0..100 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, (&dj, p)) in dist.iter().zip(row.iter_mut()).enumerate() {
            *p = if j == i { 0.0 } else { (-(dj - min_d) * beta).exp() };
            sum += *p;
            weighted += (dj - min_d) * *p;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        for p in row.iter_mut() {
            *p /= sum;
        }
        let gap = entropy - target;
        if gap.abs() < 1e-5 {
            break;
        }
        if gap > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
}

fn joint_affinities(data: &[f64], n: usize, d: usize, perplexity: f64) -> Vec<f64> {
    let dist = squared_distances(data, n, d);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        conditional_row(&dist[i * n..(i + 1) * n], i, perplexity, &mut p[i * n..(i + 1) * n]);
    }
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
        joint[i * n + i] = 0.0;
    }
    joint
}

/// Student-t kernel numerators `(1 + |yi - yj|²)⁻¹` and their sum.
fn output_kernel(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = q;
            num[j * n + i] = q;
            z += 2.0 * q;
        }
    }
    z
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &q)| pij * (pij / (q / z).max(1e-12)).ln())
        .sum()
}

/// Embeds the `n × d` row-major `data` into the plane.
pub fn tsne_project(data: &[f64], n: usize, d: usize, cfg: &TsneConfig) -> Result<TsneOutput> {
    if data.len() != n * d {
        return Err(Error::Shape {
            op: "tsne_project",
            lhs: vec![n, d],
            rhs: vec![data.len()],
        });
    }
    if n > MAX_POINTS {
        return Err(Error::InvalidArgument(format!(
            "exact t-SNE supports at most {MAX_POINTS} points, got {n}"
        )));
    }
    if !(cfg.perplexity > 0.0 && cfg.perplexity < n as f64 / 3.0) {
        return Err(Error::InvalidArgument(format!(
            "perplexity {} must lie in (0, n/3) for n = {n}",
            cfg.perplexity
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    let first = &data[..d];
    if data.chunks_exact(d).all(|row| row == first) {
        return Err(Error::InvalidArgument("t-SNE input rows are all identical".into()));
    }

    let p = joint_affinities(data, n, d, cfg.perplexity);
    let lr = cfg.learning_rate.unwrap_or(n as f64 / 12.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [1e-4 * a, 1e-4 * b]
        })
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0; 2]; n];
    let mut kl = Vec::new();

    for it in 1..=cfg.iterations {
        let exaggerate = it <= cfg.exaggeration_iters;
        let scale = if exaggerate { cfg.exaggeration } else { 1.0 };
        let momentum = if exaggerate { 0.5 } else { 0.8 };
        let z = output_kernel(&y, &mut num);

        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                let q = num[i * n + j];
                let w = (scale * p[i * n + j] - q / z) * q;
                g[0] += w * (y[i][0] - y[j][0]);
                g[1] += w * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }
        for i in 0..n {
            for c in 0..2 {
                let same_sign = (grad[i][c] > 0.0) == (velocity[i][c] > 0.0);
                gains[i][c] = if same_sign { gains[i][c] * 0.8 } else { gains[i][c] + 0.2 };
                gains[i][c] = gains[i][c].max(0.01);
                velocity[i][c] = momentum * velocity[i][c] - lr * gains[i][c] * grad[i][c];
                y[i][c] += velocity[i][c];
            }
        }
        let (mx, my) = y.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        for pt in &mut y {
            pt[0] -= mx / n as f64;
            pt[1] -= my / n as f64;
        }

        if it % 50 == 0 || it == cfg.iterations {
            let z = output_kernel(&y, &mut num);
            kl.push((it, kl_divergence(&p, &num, z)));
        }
    }
    if y.iter().any(|pt| !pt[0].is_finite() || !pt[1].is_finite()) {
        return Err(Error::NonFinite("t-SNE diverged".into()));
    }
    Ok(TsneOutput { points: y, kl })
}
