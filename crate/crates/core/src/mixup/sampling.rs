//! Mixing-weight samplers and batch permutations.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{Error, Result};

/// Largest `f64` strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!(
            "Beta shape must be positive and finite, got {alpha}"
        )));
    }
    Ok(())
}

/// Jöhnk's acceptance method in log space, valid for shape ≤ 1.
///
/// With x = u^(1/α), y = v^(1/α): accept when x + y ≤ 1 and return
/// x / (x + y). Working with ln x and ln y avoids underflow for small α.
fn johnk<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.sample(Open01);
        let v: f64 = rng.sample(Open01);
        let lx = u.ln() / alpha;
        let ly = v.ln() / alpha;
        let m = lx.max(ly);
        let log_sum = m + ((lx - m).exp() + (ly - m).exp()).ln();
        if log_sum <= 0.0 {
            return 1.0 / (1.0 + (ly - lx).exp());
        }
    }
}

/// Marsaglia–Tsang Gamma(shape, 1) sampler for shape ≥ 1.
fn gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.sample(Open01);
        if u.ln() < 0.5 * z * z + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

/// One draw from the symmetric `Beta(alpha, alpha)`, kept inside the open
/// interval (0, 1) even where the exact value rounds to an endpoint.
pub fn sample_beta<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    check_alpha(alpha)?;
    let x = if alpha <= 1.0 {
        johnk(alpha, rng)
    } else {
        let a = gamma(alpha, rng);
        let b = gamma(alpha, rng);
        a / (a + b)
    };
    Ok(x.clamp(f64::MIN_POSITIVE, BELOW_ONE))
}

/// `n` Beta draws and their maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSample {
    pub lambdas: Vec<f64>,
    pub lambda_max: f64,
}

pub fn sample_lambda_max<R: Rng + ?Sized>(
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<WeightSample> {
    if n == 0 {
        return Err(Error::Parameter("need at least one weight sample".into()));
    }
    let lambdas = (0..n)
        .map(|_| sample_beta(alpha, rng))
        .collect::<Result<Vec<_>>>()?;
    let lambda_max = lambdas.iter().copied().fold(f64::MIN, f64::max);
    Ok(WeightSample {
        lambdas,
        lambda_max,
    })
}

/// `max(λ, 1 − λ)`.
pub fn fold_lambda(lambda: f64) -> f64 {
    lambda.max(1.0 - lambda)
}

/// Folded single draw used by the baseline strategies; always ≥ 0.5.
pub fn baseline_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    Ok(fold_lambda(sample_beta(alpha, rng)?))
}

/// Uniform permutation of `0..l` by Fisher–Yates.
pub fn make_permutation<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..l).collect();
    for i in (1..l).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}
