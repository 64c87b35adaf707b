//! Shared test oracles: central finite differences and parameter probes.
//! Kept independent of the differentiation engine — every derivative here
//! comes from re-running the forward computation at perturbed inputs.
#![allow(dead_code)] // each test target uses its own subset

use kinepose::rng::Rng;
use kinepose::tensor::DiffTensor;
use kinepose::PoseRefiner;

/// Central finite difference of `f` with respect to one element of a leaf
/// tensor, by perturbing the stored data in place and re-evaluating.
pub fn central_diff(param: &DiffTensor, index: usize, h: f64, mut f: impl FnMut() -> f64) -> f64 {
    param.with_data_mut(|d| d[index] += h);
    let plus = f();
    param.with_data_mut(|d| d[index] -= 2.0 * h);
    let minus = f();
    param.with_data_mut(|d| d[index] += h);
    (plus - minus) / (2.0 * h)
}

/// Relative error with an absolute floor: values both below `floor`
/// compare as equal.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < floor {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Compare every analytic gradient entry of `param` against central
/// differences of `f`. Returns the worst relative error.
pub fn check_param_gradient(
    param: &DiffTensor,
    analytic: &[f64],
    h: f64,
    mut f: impl FnMut() -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (i, &expected) in analytic.iter().enumerate().take(param.numel()) {
        let numeric = central_diff(param, i, h, &mut f);
        worst = worst.max(rel_err(expected, numeric, 1e-8));
    }
    worst
}

/// Random tensor with entries in ±scale.
pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut Rng) -> DiffTensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_in(-scale, scale)).collect();
    DiffTensor::param(data, shape)
}

/// Random constant (no gradient) tensor.
pub fn random_constant(shape: &[usize], scale: f64, rng: &mut Rng) -> DiffTensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_in(-scale, scale)).collect();
    DiffTensor::constant(data, shape)
}

/// Scalar loss that is sensitive to every output entry: a fixed random
/// projection of the tensor. Plain sums can have degenerate gradients
/// (softmax rows always sum to 1), so tests weight each entry.
pub fn weighted_probe(out: &DiffTensor, rng_seed: u64) -> DiffTensor {
    let mut rng = Rng::new(rng_seed);
    let n = out.numel();
    let weights: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let w = DiffTensor::constant(weights, out.shape());
    out.mul(&w).expect("probe shapes match").sum()
}

/// Test-side per-joint masked mean L1 between two flat T×(K·D) buffers,
/// computed directly from raw values. `None` for joints with no visible
/// frame. Independent of the tensor engine.
pub fn masked_l1_per_joint(
    a: &[f64],
    b: &[f64],
    vis: &[bool],
    frames: usize,
    keypoints: usize,
    dims: usize,
) -> Vec<Option<f64>> {
    let width = keypoints * dims;
    (0..keypoints)
        .map(|k| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for t in 0..frames {
                if vis[t * keypoints + k] {
                    count += 1;
                    for d in 0..dims {
                        let c = t * width + k * dims + d;
                        sum += (a[c] - b[c]).abs();
                    }
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect()
}

/// Nudge every parameter (including the zero-initialized ones) so all
/// gradient paths are live, keeping magnitudes small.
pub fn randomize_params(model: &PoseRefiner, seed: u64, scale: f64) {
    let mut rng = Rng::new(seed);
    for (_, p) in model.named_params() {
        p.with_data_mut(|d| {
            for v in d.iter_mut() {
                *v += rng.uniform_in(-scale, scale);
            }
        });
    }
}
