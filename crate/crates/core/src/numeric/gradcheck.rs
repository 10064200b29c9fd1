use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numeric::tensor::Tensor;

/// Denominator floor for relative errors, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// Minimum number of coordinates probed (all of them when there are fewer).
pub const MIN_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub coordinates: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares analytic gradients against central differences with step `h`.
///
/// `loss` maps parameters to `(value, gradients)`; gradients must match the
/// parameter shapes. At least `samples` coordinates (never fewer than 200
/// unless there are fewer in total) are drawn uniformly across all tensors.
pub fn grad_check<L>(loss: L, params: &[Tensor<f64>], h: f64, samples: usize, seed: u64) -> Result<GradCheck>
where
    L: Fn(&[Tensor<f64>]) -> Result<(f64, Vec<Tensor<f64>>)>,
{
    let (_, analytic) = loss(params)?;
    let offsets: Vec<usize> = std::iter::once(0)
        .chain(params.iter().scan(0, |acc, p| {
            *acc += p.len();
            Some(*acc)
        }))
        .collect();
    let total = *offsets.last().unwrap();
    let want = samples.max(MIN_SAMPLES).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<usize> = sample(&mut rng, total, want).into_vec();
    coords.sort_unstable();

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for flat in coords {
        let t = offsets.partition_point(|&o| o <= flat) - 1;
        let i = flat - offsets[t];
        let orig = work[t].data()[i];
        work[t].data_mut()[i] = orig + h;
        let (up, _) = loss(&work)?;
        work[t].data_mut()[i] = orig - h;
        let (down, _) = loss(&work)?;
        work[t].data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[t].data()[i], numeric));
    }
    Ok(GradCheck {
        max_rel_error: worst,
        coordinates: want,
    })
}
