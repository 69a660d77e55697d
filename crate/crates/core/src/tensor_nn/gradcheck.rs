use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParamSet;

/// Above this many coordinates a seeded random subset is checked.
pub const FULL_CHECK_LIMIT: usize = 10_000;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients against central finite differences.
///
/// `loss` evaluates the model at the current parameter values; when its
/// second argument is `true` it must also overwrite every gradient slot with
/// the analytic gradient. Returns the maximum relative error over the checked
/// coordinates (0 for an empty parameter set).
pub fn grad_check<F>(params: &mut ParamSet, eps: f64, seed: u64, mut loss: F) -> f64
where
    F: FnMut(&mut ParamSet, bool) -> f64,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let total = params.scalar_count();
    if total == 0 {
        return 0.0;
    }
    params.zero_grads();
    loss(params, true);
    let analytic: Vec<f64> = params
        .params()
        .iter()
        .flat_map(|p| p.grad.data().iter().copied())
        .collect();

    let mut offsets = Vec::with_capacity(params.len());
    let mut acc = 0;
    for p in params.params() {
        offsets.push(acc);
        acc += p.value.len();
    }
    let coords: Vec<usize> = if total > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, total, FULL_CHECK_LIMIT).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..total).collect()
    };

    let mut worst: f64 = 0.0;
    for flat in coords {
        let slot = offsets.partition_point(|&o| o <= flat) - 1;
        let local = flat - offsets[slot];
        let original = params.value(slot).data()[local];
        params.value_mut(slot).data_mut()[local] = original + eps;
        let plus = loss(params, false);
        params.value_mut(slot).data_mut()[local] = original - eps;
        let minus = loss(params, false);
        params.value_mut(slot).data_mut()[local] = original;
        let numeric = (plus - minus) / (2.0 * eps);

        worst = worst.max(relative_error(analytic[flat], numeric));
    }
    worst
}
