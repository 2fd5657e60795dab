use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::cholesky::{
    chol_to_unconstrained, free_count, log_jacobian_unconstrained_to_chol,
    unconstrained_to_chol_k,
};
use super::conditional::{log_full_conditional_l, log_s_conditional};
use super::{PriorSpec, RegressionParams};
use crate::error::{Error, Result};
use crate::model::math::{logit, sigmoid};

/// Proposes `y1` in `(a, b)` by a normal step of size `sigma` on the scale
/// `logit((y - a)/(b - a))`. Returns `y1` and
/// `log q(y0|y1) - log q(y1|y0) = log[(y1-a)(b-y1)] - log[(y0-a)(b-y0)]`.
pub fn bounded_proposal<R: Rng + ?Sized>(
    y0: f64,
    a: f64,
    b: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(a < y0 && y0 < b) {
        return Err(Error::Domain(format!("{y0} is not inside ({a}, {b})")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("proposal sd {sigma} must be positive")));
    }
    let center = logit((y0 - a) / (b - a));
    // A draw that rounds onto the boundary is redrawn; this only happens
    // for |x| beyond ~36 where the proposal mass is negligible.
    let y1 = loop {
        let z: f64 = rng.sample(StandardNormal);
        let y = a + (b - a) * sigmoid(center + sigma * z);
        if a < y && y < b {
            break y;
        }
    };
    Ok((y1, bounded_log_q_ratio(y0, y1, a, b)))
}

pub(crate) fn bounded_log_q_ratio(y0: f64, y1: f64, a: f64, b: f64) -> f64 {
    ((y1 - a) * (b - y1)).ln() - ((y0 - a) * (b - y0)).ln()
}

/// Metropolis update of the correlation factor, one unconstrained
/// coordinate at a time in row order. The target on the `y` scale is the
/// log full conditional of `L` plus the log Jacobian of `y -> L`.
///
/// Returns one acceptance flag per coordinate (empty when `R` is fixed or
/// `K = 1`).
pub fn update_r<R: Rng + ?Sized>(
    params: &mut RegressionParams,
    etwe: &DMatrix<f64>,
    u_eff: f64,
    prior: &PriorSpec,
    proposal_sds: &[f64],
    rng: &mut R,
) -> Result<Vec<bool>> {
    let k = params.k();
    if params.fixed_r || k < 2 {
        return Ok(Vec::new());
    }
    debug_assert_eq!(proposal_sds.len(), free_count(k));
    let target = |y: &[f64], l: &DMatrix<f64>| -> Result<f64> {
        Ok(log_full_conditional_l(l, &params.s, etwe, u_eff, prior.eta)?
            + log_jacobian_unconstrained_to_chol(y, l))
    };
    let mut y = chol_to_unconstrained(&params.l)?;
    let mut l = params.l.clone();
    let mut current = target(&y, &l)?;
    let mut flags = Vec::with_capacity(y.len());
    for t in 0..y.len() {
        let old = y[t];
        let z: f64 = rng.sample(StandardNormal);
        y[t] = old + proposal_sds[t] * z;
        let l_new = unconstrained_to_chol_k(k, &y);
        let proposed = match target(&y, &l_new) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        };
        let log_u: f64 = rng.random::<f64>().ln();
        if log_u < proposed - current {
            l = l_new;
            current = proposed;
            flags.push(true);
        } else {
            y[t] = old;
            flags.push(false);
        }
    }
    params.l = l;
    Ok(flags)
}

/// Metropolis update of each free standard deviation with the bounded
/// proposal on `(S_lower[k], S_upper[k])`.
///
/// Returns `None` for fixed coordinates and the acceptance flag otherwise.
pub fn update_s<R: Rng + ?Sized>(
    params: &mut RegressionParams,
    etwe: &DMatrix<f64>,
    u_eff: f64,
    prior: &PriorSpec,
    proposal_sds: &[f64],
    rng: &mut R,
) -> Result<Vec<Option<bool>>> {
    let k = params.k();
    let mut flags = Vec::with_capacity(k);
    let mut current = log_s_conditional(&params.l, &params.s, etwe, u_eff)?;
    for kk in 0..k {
        if params.fixed_s[kk] {
            flags.push(None);
            continue;
        }
        let old = params.s[kk];
        let (new, log_q) =
            bounded_proposal(old, prior.s_lower[kk], prior.s_upper[kk], proposal_sds[kk], rng)?;
        params.s[kk] = new;
        let proposed = log_s_conditional(&params.l, &params.s, etwe, u_eff)?;
        let log_u: f64 = rng.random::<f64>().ln();
        if log_u < proposed - current + log_q {
            current = proposed;
            flags.push(Some(true));
        } else {
            params.s[kk] = old;
            flags.push(Some(false));
        }
    }
    Ok(flags)
}
