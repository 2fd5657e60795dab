//! Unconstrained parameterization of correlation Cholesky factors.
//!
//! The free entries of `L` are read across the rows of the strict lower
//! triangle (`l21, l31, l32, l41, ...`). Each is mapped to a partial
//! correlation `z_ij = l_ij / sqrt(1 - sum_{j'<j} l_ij'^2)` in `(-1, 1)` and
//! then to `y_ij = atanh(z_ij)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::math::log_cosh;

const ROW_NORM_TOL: f64 = 1e-8;

/// Number of free parameters of a `K x K` correlation matrix.
pub fn free_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// `(i, j)` positions of the free entries in storage order.
pub fn free_positions(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..k).flat_map(|i| (0..i).map(move |j| (i, j)))
}

pub fn check_cholesky(l: &DMatrix<f64>) -> Result<()> {
    let k = l.nrows();
    if l.ncols() != k {
        return Err(Error::Domain("Cholesky factor must be square".into()));
    }
    for i in 0..k {
        for j in i + 1..k {
            if l[(i, j)] != 0.0 {
                return Err(Error::Domain(format!("L[{i},{j}] is above the diagonal")));
            }
        }
        if !(l[(i, i)] > 0.0) {
            return Err(Error::Domain(format!("L[{i},{i}] = {} is not positive", l[(i, i)])));
        }
        let norm: f64 = (0..=i).map(|j| l[(i, j)] * l[(i, j)]).sum();
        if (norm - 1.0).abs() > ROW_NORM_TOL {
            return Err(Error::Domain(format!("row {i} of L has squared norm {norm}")));
        }
    }
    Ok(())
}

pub fn chol_to_unconstrained(l: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_cholesky(l)?;
    let k = l.nrows();
    let mut y = Vec::with_capacity(free_count(k));
    for i in 1..k {
        let mut used = 0.0f64;
        for j in 0..i {
            let rem = (1.0 - used).max(0.0).sqrt();
            let z = (l[(i, j)] / rem).clamp(-1.0, 1.0);
            y.push(z.atanh());
            used += l[(i, j)] * l[(i, j)];
        }
    }
    Ok(y)
}

/// Inverse map. `k` is inferred from `y.len() = K(K-1)/2`.
pub fn unconstrained_to_chol(y: &[f64]) -> Result<DMatrix<f64>> {
    let k = dim_from_free(y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite coordinate in {y:?}")));
    }
    Ok(unconstrained_to_chol_k(k, y))
}

pub(crate) fn unconstrained_to_chol_k(k: usize, y: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(k, k);
    l[(0, 0)] = 1.0;
    let mut t = 0;
    for i in 1..k {
        let mut used = 0.0f64;
        for j in 0..i {
            let z = y[t].tanh();
            t += 1;
            let v = z * (1.0 - used).max(0.0).sqrt();
            l[(i, j)] = v;
            used += v * v;
        }
        l[(i, i)] = (1.0 - used).max(0.0).sqrt();
    }
    l
}

pub fn dim_from_free(n: usize) -> Result<usize> {
    let mut k = 1;
    while free_count(k) < n {
        k += 1;
    }
    if free_count(k) != n {
        return Err(Error::Domain(format!("{n} is not a triangular number")));
    }
    Ok(k)
}

/// `log |d l / d y|` for the map `y -> z -> l`: the `tanh` step contributes
/// `prod 1/cosh^2(y_ij)` and the `z -> l` step `prod sqrt(1 - sum_{j'<j} l_ij'^2)`.
pub fn log_jacobian_unconstrained_to_chol(y: &[f64], l: &DMatrix<f64>) -> f64 {
    let k = l.nrows();
    let mut total = 0.0;
    let mut t = 0;
    for i in 1..k {
        let mut used = 0.0f64;
        for j in 0..i {
            total -= 2.0 * log_cosh(y[t]);
            t += 1;
            if j > 0 {
                total += 0.5 * (1.0 - used).ln();
            }
            used += l[(i, j)] * l[(i, j)];
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// The free entries of L as a function of y.
    fn free_entries(y: &[f64]) -> Vec<f64> {
        let l = unconstrained_to_chol(y).unwrap();
        free_positions(l.nrows()).map(|(i, j)| l[(i, j)]).collect()
    }

    /// log |det J| of y -> free(L) by central differences and LU.
    fn fd_log_det(y: &[f64]) -> f64 {
        let n = y.len();
        let h = 1e-6;
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut up = y.to_vec();
            let mut dn = y.to_vec();
            up[c] += h;
            dn[c] -= h;
            let (fu, fd) = (free_entries(&up), free_entries(&dn));
            for r in 0..n {
                jac[(r, c)] = (fu[r] - fd[r]) / (2.0 * h);
            }
        }
        jac.determinant().abs().ln()
    }

    #[test]
    fn identity_and_half_correlation() {
        let l = DMatrix::identity(2, 2);
        assert_eq!(chol_to_unconstrained(&l).unwrap(), vec![0.0]);
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.75f64.sqrt()]);
        let y = chol_to_unconstrained(&l).unwrap();
        assert!((y[0] - 0.549306).abs() < 1e-6);
        assert!((y[0] - 0.5f64.atanh()).abs() < 1e-15);
    }

    #[test]
    fn jacobian_spot_values() {
        let l = unconstrained_to_chol(&[0.0]).unwrap();
        assert_eq!(log_jacobian_unconstrained_to_chol(&[0.0], &l), 0.0);
        let y = [0.5f64.atanh()];
        let l = unconstrained_to_chol(&y).unwrap();
        let lj = log_jacobian_unconstrained_to_chol(&y, &l);
        assert!((lj - 0.75f64.ln()).abs() < 1e-14);
        assert!((lj + 0.287682).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_rows() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        assert!(matches!(chol_to_unconstrained(&l), Err(Error::Domain(_))));
        assert!(unconstrained_to_chol(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn row_order() {
        // only l32 nonzero: it must be the third coordinate
        let y = [0.0, 0.0, 0.3f64.atanh()];
        let l = unconstrained_to_chol(&y).unwrap();
        assert!((l[(2, 1)] - 0.3).abs() < 1e-15);
        assert_eq!(l[(1, 0)], 0.0);
        assert_eq!(free_positions(3).collect::<Vec<_>>(), vec![(1, 0), (2, 0), (2, 1)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip_k4(y in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let l = unconstrained_to_chol(&y).unwrap();
            let back = chol_to_unconstrained(&l).unwrap();
            for (a, b) in y.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let r = &l * l.transpose();
            prop_assert!(r.clone().cholesky().is_some());
            for i in 0..4 {
                prop_assert!((r[(i, i)] - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn jacobian_matches_finite_differences(
            y in proptest::collection::vec(-1.5f64..1.5, 3)
        ) {
            let l = unconstrained_to_chol(&y).unwrap();
            let analytic = log_jacobian_unconstrained_to_chol(&y, &l);
            prop_assert!((analytic - fd_log_det(&y)).abs() < 1e-5);
        }
    }
}
