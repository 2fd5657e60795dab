use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{inverse_scaled_factor, BlockDesign, PriorSpec, RegressionParams};
use crate::error::{Error, Result};

/// `E' W E` for residuals `E = U - X0 B`.
pub fn residual_crossprod(
    units: &DMatrix<f64>,
    design: &BlockDesign,
    b: &DMatrix<f64>,
) -> DMatrix<f64> {
    let e = units - &design.x0 * b;
    let we = DMatrix::from_fn(e.nrows(), e.ncols(), |r, c| e[(r, c)] * design.weights[r]);
    let m = e.transpose() * we;
    // symmetrize away rounding asymmetry
    (&m + m.transpose()) * 0.5
}

/// Log full conditional of the correlation factor (up to an `L`-free
/// constant):
///
/// `sum_{k>=2} (K - k + 2 eta - 2 - U_eff) log l_kk - U_eff sum_k log s_kk
///  - tr(E'WE Gamma^{-1}) / 2`.
pub fn log_full_conditional_l(
    l: &DMatrix<f64>,
    s: &DVector<f64>,
    etwe: &DMatrix<f64>,
    u_eff: f64,
    eta: f64,
) -> Result<f64> {
    let k = l.nrows();
    let mut total = 0.0;
    for kk in 1..k {
        let exponent = (k - (kk + 1)) as f64 + 2.0 * eta - 2.0 - u_eff;
        total += exponent * l[(kk, kk)].ln();
    }
    Ok(total + log_s_conditional(l, s, etwe, u_eff)?)
}

/// `-U_eff sum_k log s_kk - tr(E'WE Gamma^{-1}) / 2`, the part of the
/// block density that depends on `S`.
pub fn log_s_conditional(
    l: &DMatrix<f64>,
    s: &DVector<f64>,
    etwe: &DMatrix<f64>,
    u_eff: f64,
) -> Result<f64> {
    let m = inverse_scaled_factor(l, s)?;
    let quad = (&m * etwe * m.transpose()).trace();
    Ok(-u_eff * s.iter().map(|v| v.ln()).sum::<f64>() - 0.5 * quad)
}

/// Draws `vec(B)` from its normal full conditional with precision
/// `P = Gamma^{-1} (x) X0'WX0 + Omega0` and mean
/// `P^{-1} ((Gamma^{-1} (x) X0'WX0) b_hat + Omega0 b0)`.
///
/// Fixed entries keep their current values and the free entries are drawn
/// from the conditional normal given them.
pub fn sample_b<R: Rng + ?Sized>(
    units: &DMatrix<f64>,
    design: &BlockDesign,
    params: &RegressionParams,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (p, k) = (params.p(), params.k());
    let free: Vec<usize> = (0..p * k).filter(|&t| !params.fixed_b[t]).collect();
    if free.is_empty() {
        return Ok(params.b.clone());
    }
    let (precision, rhs) = b_conditional(units, design, params, prior)?;
    let current = DVector::from_column_slice(params.b.as_slice());

    let fixed: Vec<usize> = (0..p * k).filter(|&t| params.fixed_b[t]).collect();
    let pff = precision.select_rows(&free).select_columns(&free);
    let mut rf = rhs.select_rows(&free);
    if !fixed.is_empty() {
        let pfc = precision.select_rows(&free).select_columns(&fixed);
        rf -= pfc * current.select_rows(&fixed);
    }
    let chol = pff.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "posterior precision of B is not positive definite (condition number {:.3e})",
            condition_number(&pff)
        ))
    })?;
    let mean = chol.solve(&rf);
    let z = DVector::from_fn(free.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // x = mean + L^{-T} z has covariance (L L')^{-1}
    let lt = chol.l().transpose();
    let offset = lt
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor of P".into()))?;
    let draw = mean + offset;

    let mut out = current;
    for (slot, &t) in free.iter().enumerate() {
        out[t] = draw[slot];
    }
    Ok(DMatrix::from_column_slice(p, k, out.as_slice()))
}

/// Precision `P` and `P * mean` of the full conditional of `vec(B)`.
///
/// Uses `(Gamma^{-1} (x) X'WX) b_hat = vec(X'WU Gamma^{-1})`, which avoids
/// forming `(X'WX)^{-1}`.
pub(crate) fn b_conditional(
    units: &DMatrix<f64>,
    design: &BlockDesign,
    params: &RegressionParams,
    prior: &PriorSpec,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let gamma_inv = params.precision()?;
    let precision = gamma_inv.kronecker(&design.xtwx) + &prior.omega0;
    let xw = DMatrix::from_fn(design.units(), design.p(), |r, c| {
        design.x0[(r, c)] * design.weights[r]
    });
    let xtwu = xw.transpose() * units;
    let m = xtwu * gamma_inv;
    let rhs = DVector::from_column_slice(m.as_slice()) + &prior.omega0 * &prior.b0;
    Ok((precision, rhs))
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
