//! Block latent regressions `u = B'x + e`, `e ~ N(0, S R S)`.
//!
//! `B` has a conjugate normal full conditional. The correlation matrix is
//! carried as its Cholesky factor `L` and updated coordinate-wise on the
//! unconstrained `atanh` scale; the standard deviations are updated one at
//! a time with a proposal confined to their prior bounds.

pub mod cholesky;
mod conditional;
mod updates;

pub use cholesky::{
    chol_to_unconstrained, free_count, free_positions, log_jacobian_unconstrained_to_chol,
    unconstrained_to_chol,
};
pub use conditional::{log_full_conditional_l, log_s_conditional, residual_crossprod, sample_b};
pub use updates::{bounded_proposal, update_r, update_s};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Regression parameters of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionParams {
    /// `p x K` coefficients.
    pub b: DMatrix<f64>,
    /// Standard deviations (diagonal of `S`).
    pub s: DVector<f64>,
    /// Lower-triangular Cholesky factor of the correlation matrix.
    pub l: DMatrix<f64>,
    /// Fixed entries of `B` in `vec(B)` (column-major) order.
    pub fixed_b: Vec<bool>,
    pub fixed_s: Vec<bool>,
    pub fixed_r: bool,
}

impl RegressionParams {
    /// `B = 0`, `R = I`, every parameter free.
    pub fn new(p: usize, k: usize, s: DVector<f64>) -> Self {
        assert_eq!(s.len(), k);
        Self {
            b: DMatrix::zeros(p, k),
            s,
            l: DMatrix::identity(k, k),
            fixed_b: vec![false; p * k],
            fixed_s: vec![false; k],
            fixed_r: false,
        }
    }

    pub fn p(&self) -> usize {
        self.b.nrows()
    }

    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    /// `Gamma = S R S`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let r = self.correlation();
        DMatrix::from_fn(self.k(), self.k(), |i, j| self.s[i] * r[(i, j)] * self.s[j])
    }

    /// Lower-triangular factor of `Gamma`: `S L`.
    pub fn covariance_factor(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.k(), self.k(), |i, j| self.s[i] * self.l[(i, j)])
    }

    /// `Gamma^{-1} = S^{-1} L^{-T} L^{-1} S^{-1}`.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        let m = inverse_scaled_factor(&self.l, &self.s)?;
        Ok(m.transpose() * m)
    }

    pub fn all_fixed(&self) -> bool {
        self.fixed_r && self.fixed_s.iter().all(|&f| f) && self.fixed_b.iter().all(|&f| f)
    }

    pub fn validate(&self, prior: &PriorSpec) -> Result<()> {
        let (p, k) = (self.p(), self.k());
        if self.s.len() != k || self.l.shape() != (k, k) {
            return Err(Error::Validation("regression parameter shapes disagree".into()));
        }
        if self.fixed_b.len() != p * k || self.fixed_s.len() != k {
            return Err(Error::Validation("fixed-parameter masks have wrong length".into()));
        }
        cholesky::check_cholesky(&self.l).map_err(|e| e.context("correlation factor"))?;
        for kk in 0..k {
            let s = self.s[kk];
            if !(s > 0.0) {
                return Err(Error::Validation(format!("S[{kk}] = {s} must be positive")));
            }
            if !self.fixed_s[kk] && !(prior.s_lower[kk] < s && s < prior.s_upper[kk]) {
                return Err(Error::Validation(format!(
                    "S[{kk}] = {s} outside its bounds ({}, {})",
                    prior.s_lower[kk], prior.s_upper[kk]
                )));
            }
        }
        Ok(())
    }
}

/// Prior hyperparameters of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Prior mean of `vec(B)`, length `pK`.
    pub b0: DVector<f64>,
    /// Prior precision of `vec(B)`, `pK x pK`.
    pub omega0: DMatrix<f64>,
    pub s_lower: DVector<f64>,
    pub s_upper: DVector<f64>,
    /// LKJ shape.
    pub eta: f64,
}

impl PriorSpec {
    /// `b0 = 0`, `Omega0 = precision * I`, common `S` bounds, `eta = 1`.
    pub fn diffuse(p: usize, k: usize, precision: f64, s_bounds: (f64, f64)) -> Self {
        Self {
            b0: DVector::zeros(p * k),
            omega0: DMatrix::identity(p * k, p * k) * precision,
            s_lower: DVector::from_element(k, s_bounds.0),
            s_upper: DVector::from_element(k, s_bounds.1),
            eta: 1.0,
        }
    }

    pub fn validate(&self, p: usize, k: usize) -> Result<()> {
        let pk = p * k;
        if self.b0.len() != pk || self.omega0.shape() != (pk, pk) {
            return Err(Error::Validation(format!(
                "prior on B must have length {pk} and a {pk}x{pk} precision"
            )));
        }
        if self.s_lower.len() != k || self.s_upper.len() != k {
            return Err(Error::Validation(format!("S bounds must have length {k}")));
        }
        let asym = (&self.omega0 - self.omega0.transpose()).abs().max();
        if asym > 1e-10 * (1.0 + self.omega0.abs().max()) {
            return Err(Error::Validation("Omega0 is not symmetric".into()));
        }
        let min_eig = self.omega0.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 * (1.0 + self.omega0.abs().max()) {
            return Err(Error::Validation(format!(
                "Omega0 is not positive semidefinite (eigenvalue {min_eig})"
            )));
        }
        for kk in 0..k {
            if !(0.0 <= self.s_lower[kk] && self.s_lower[kk] < self.s_upper[kk])
                || !self.s_upper[kk].is_finite()
            {
                return Err(Error::Validation(format!(
                    "S bounds ({}, {}) for dimension {kk} are invalid",
                    self.s_lower[kk], self.s_upper[kk]
                )));
            }
        }
        if !(self.eta > 0.0) {
            return Err(Error::Validation(format!("eta = {} must be positive", self.eta)));
        }
        Ok(())
    }
}

/// Features and weights of the units in one block.
#[derive(Debug, Clone)]
pub struct BlockDesign {
    /// `U x p` features stacked by row.
    pub x0: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub u_eff: f64,
    /// `X0' W X0`, cached.
    pub xtwx: DMatrix<f64>,
}

impl BlockDesign {
    pub fn new(x0: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != x0.nrows() {
            return Err(Error::Validation(format!(
                "{} weights for {} units",
                weights.len(),
                x0.nrows()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Validation("weights must be finite and non-negative".into()));
        }
        let u_eff = weights.sum();
        if !(u_eff > 0.0) {
            return Err(Error::Validation("block has zero effective size".into()));
        }
        let xw = DMatrix::from_fn(x0.nrows(), x0.ncols(), |r, c| x0[(r, c)] * weights[r]);
        let xtwx = x0.transpose() * xw;
        let design = Self {
            x0,
            weights,
            u_eff,
            xtwx,
        };
        design.check_rank()?;
        Ok(design)
    }

    pub fn unweighted(x0: DMatrix<f64>) -> Result<Self> {
        let u = x0.nrows();
        Self::new(x0, DVector::from_element(u, 1.0))
    }

    /// Intercept-only design for `u` units.
    pub fn intercept(u: usize) -> Self {
        Self::unweighted(DMatrix::from_element(u, 1, 1.0)).expect("non-empty block")
    }

    pub fn units(&self) -> usize {
        self.x0.nrows()
    }

    pub fn p(&self) -> usize {
        self.x0.ncols()
    }

    fn check_rank(&self) -> Result<()> {
        let p = self.p();
        if self.units() < p {
            return Err(Error::Validation(format!(
                "{} units cannot identify {p} regression coefficients",
                self.units()
            )));
        }
        if let Some(col) = first_dependent_column(&self.xtwx) {
            return Err(Error::Validation(format!(
                "feature matrix is rank deficient: column {col} is linearly dependent on earlier columns"
            )));
        }
        Ok(())
    }
}

/// Index of the first column of a Gram matrix that is (numerically) a
/// combination of the preceding ones, found by incremental Cholesky.
pub(crate) fn first_dependent_column(gram: &DMatrix<f64>) -> Option<usize> {
    let p = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let scale = gram[(j, j)].abs().max(f64::MIN_POSITIVE);
        let mut d = gram[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 1e-10 * scale) {
            return Some(j);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..p {
            let mut v = gram[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    None
}

/// `M = L^{-1} S^{-1}` so that `Gamma^{-1} = M' M`.
pub(crate) fn inverse_scaled_factor(l: &DMatrix<f64>, s: &DVector<f64>) -> Result<DMatrix<f64>> {
    let k = l.nrows();
    if (0..k).any(|i| !(l[(i, i)] > 0.0)) || s.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Numerical("singular covariance factor".into()));
    }
    let rhs = DMatrix::from_diagonal(&s.map(|v| 1.0 / v));
    l.solve_lower_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))
}
