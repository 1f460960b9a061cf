//! Shared helpers for numeric tests: the central finite-difference oracle that
//! every backward pass is checked against, and small statistics utilities.
//!
//! Lives in the library (not `#[cfg(test)]`) so both unit tests and the
//! integration suites can use the same oracle implementation.

use crate::nn::tensor::Tensor;

/// Step size for central differences; chosen so truncation error (~h²) and
/// round-off error (~1e-16/h) are both far below the 1e-4 acceptance band in
/// double precision.
pub const FD_STEP: f64 = 1e-5;

/// Central finite-difference gradient of scalar `f` with respect to `x`.
///
/// `f` must be deterministic: it is invoked twice per element with perturbed
/// copies of `x`. Stochastic layers (dropout) must be frozen to their realized
/// mask before being checked.
pub fn numeric_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Largest elementwise relative error between an analytic and a numeric
/// gradient: |a − n| / max(floor, |a| + |n|). The floor keeps near-zero
/// entries from exploding the ratio; agreement below the floor counts as exact.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    assert!(
        analytic.same_shape(numeric),
        "gradient shape mismatch: {:?} vs {:?}",
        analytic.shape(),
        numeric.shape()
    );
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / floor.max(a.abs() + n.abs()))
        .fold(0.0, f64::max)
}

/// Pearson chi-square statistic for observed counts against uniform expected
/// counts. Degrees of freedom = counts.len() − 1.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let probs = vec![1.0 / counts.len() as f64; counts.len()];
    chi_square(counts, &probs)
}

/// Pearson chi-square statistic for observed counts against arbitrary
/// expected proportions (which must sum to 1). Degrees of freedom =
/// counts.len() − 1.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), probs.len(), "one probability per bin");
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let expected = total as f64 * p;
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Fills a tensor with a fixed, reproducible pattern that mixes signs and
/// magnitudes; handy when a test needs "arbitrary but deterministic" data
/// without threading an RNG through.
pub fn patterned(shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        // Irrational stride keeps the pattern from aligning with any layer
        // geometry; range roughly [-1, 1].
        *v = ((i as f64) * 0.618_033_988_749_895).sin();
    }
    t
}
