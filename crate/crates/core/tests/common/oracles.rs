//! Dense reference forms of the regression conditionals.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use spice_core::regression::{unconstrained_to_chol, PriorSpec, RegressionParams};

use super::{kron, mean, variance, vec_of};

pub fn random_params(rng: &mut ChaCha8Rng, p: usize, k: usize) -> RegressionParams {
    let s = DVector::from_fn(k, |_, _| 0.5 + rng.random::<f64>());
    let y: Vec<f64> = (0..k * (k - 1) / 2).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut params = RegressionParams::new(p, k, s);
    params.l = unconstrained_to_chol(&y).unwrap();
    params.b = DMatrix::from_fn(p, k, |_, _| rng.sample(StandardNormal));
    params
}

/// Mean and covariance of `vec(B)` written directly from the Kronecker
/// form of the full conditional.
pub fn dense_b_posterior(
    units: &DMatrix<f64>,
    x0: &DMatrix<f64>,
    w: &DVector<f64>,
    params: &RegressionParams,
    prior: &PriorSpec,
) -> (DVector<f64>, DMatrix<f64>) {
    let wm = DMatrix::from_diagonal(w);
    let xtwx = x0.transpose() * &wm * x0;
    let gamma = params.covariance();
    let gamma_inv = gamma.try_inverse().unwrap();
    let lik = kron(&gamma_inv, &xtwx);
    let p = &lik + &prior.omega0;
    let cov = p.clone().try_inverse().unwrap();
    let b_hat = xtwx.clone().try_inverse().unwrap() * x0.transpose() * &wm * units;
    let mean = &cov * (&lik * vec_of(&b_hat) + &prior.omega0 * &prior.b0);
    (mean, cov)
}

/// Largest |z| over the coordinate means, variances and one covariance.
pub fn b_moment_z(draws: &[DVector<f64>], target: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = draws.len() as f64;
    let d = target.len();
    let mut worst = 0.0f64;
    for t in 0..d {
        let xs: Vec<f64> = draws.iter().map(|v| v[t]).collect();
        let z = (mean(&xs) - target[t]) / (cov[(t, t)] / n).sqrt();
        // sample variance of normals has sd sigma^2 sqrt(2 / (n - 1))
        let zv = (variance(&xs) - cov[(t, t)]) / (cov[(t, t)] * (2.0 / (n - 1.0)).sqrt());
        worst = worst.max(z.abs()).max(zv.abs());
    }
    // one off-diagonal covariance, standardized by its normal-theory sd
    let (a, b) = (0, d - 1);
    let c: f64 = draws.iter().map(|v| (v[a] - target[a]) * (v[b] - target[b])).sum::<f64>() / n;
    let sd = ((cov[(a, a)] * cov[(b, b)] + cov[(a, b)].powi(2)) / n).sqrt();
    worst.max(((c - cov[(a, b)]) / sd).abs())
}

/// Log of the L prior times the block likelihood, written with the dense
/// `(Gamma (x) I_U)` covariance of `vec(E)`.
pub fn dense_log_conditional(e: &DMatrix<f64>, l: &DMatrix<f64>, s: &DVector<f64>, eta: f64) -> f64 {
    let (u, k) = (e.nrows(), e.ncols());
    let mut prior = 0.0;
    for kk in 1..k {
        prior += ((k - kk - 1) as f64 + 2.0 * eta - 2.0) * l[(kk, kk)].ln();
    }
    let sm = DMatrix::from_diagonal(s);
    let gamma = &sm * l * l.transpose() * &sm;
    let big = kron(&gamma, &DMatrix::identity(u, u));
    let ev = vec_of(e);
    let quad = (ev.transpose() * big.clone().try_inverse().unwrap() * &ev)[(0, 0)];
    prior - 0.5 * big.determinant().ln() - 0.5 * quad
}

