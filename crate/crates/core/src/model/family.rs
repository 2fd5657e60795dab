//! Item response families.
//!
//! Natural parameter layouts:
//!
//! | family     | natural            | unconstrained                          |
//! |------------|--------------------|----------------------------------------|
//! | 1PL        | `d`                | `d`                                    |
//! | 2PL        | `d, a`             | `d, log a`                             |
//! | 3PL        | `d, a, c`          | `d, log a, logit c`                    |
//! | 4PL        | `d, a, c, u`       | `d, log a, logit c, logit((u-c)/(1-c))`|
//! | GPCM(m)    | `a, b_1..b_{m-1}`  | `log a, b_1..b_{m-1}`                  |
//! | Gaussian   | `d, a, sigma`      | `d, log a, log sigma`                  |
//! | Bounded    | `d, a, precision`  | `d, log a, log precision`              |
//!
//! The dichotomous families share `P(y=1) = c + (u - c) * logistic(a*theta + d)`
//! with `a = 1` for the 1PL, `c = 0` below 3PL and `u = 1` below 4PL.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::math::{log_add_exp, log_sigmoid, logit, sigmoid, LN_2PI};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ItemFamily {
    Rasch,
    TwoPl,
    ThreePl,
    FourPl,
    /// Generalized partial credit with `m` ordered categories `0..m`.
    Gpcm(usize),
    Gaussian,
    /// `logit(y) ~ N(a*theta + d, 1/precision)` for `y` in `(0, 1)`.
    BoundedContinuous,
}

impl ItemFamily {
    pub fn param_count(&self) -> usize {
        match self {
            ItemFamily::Rasch => 1,
            ItemFamily::TwoPl => 2,
            ItemFamily::ThreePl => 3,
            ItemFamily::FourPl => 4,
            ItemFamily::Gpcm(m) => *m,
            ItemFamily::Gaussian | ItemFamily::BoundedContinuous => 3,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let fixed: &[&str] = match self {
            ItemFamily::Rasch => &["d"],
            ItemFamily::TwoPl => &["d", "a"],
            ItemFamily::ThreePl => &["d", "a", "c"],
            ItemFamily::FourPl => &["d", "a", "c", "u"],
            ItemFamily::Gaussian => &["d", "a", "sigma"],
            ItemFamily::BoundedContinuous => &["d", "a", "precision"],
            ItemFamily::Gpcm(m) => {
                let mut names = vec!["a".to_string()];
                names.extend((1..*m).map(|k| format!("b{k}")));
                return names;
            }
        };
        fixed.iter().map(|s| s.to_string()).collect()
    }

    /// Number of response categories for discrete families.
    pub fn categories(&self) -> Option<usize> {
        match self {
            ItemFamily::Rasch | ItemFamily::TwoPl | ItemFamily::ThreePl | ItemFamily::FourPl => {
                Some(2)
            }
            ItemFamily::Gpcm(m) => Some(*m),
            ItemFamily::Gaussian | ItemFamily::BoundedContinuous => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.categories().is_some()
    }

    pub fn check_response(&self, value: f64) -> Result<()> {
        match self.categories() {
            Some(m) => {
                if value.fract() != 0.0 || value < 0.0 || value >= m as f64 {
                    return Err(Error::Domain(format!(
                        "response {value} is not a category of {self} (0..{})",
                        m - 1
                    )));
                }
            }
            None => {
                if !value.is_finite() {
                    return Err(Error::Domain(format!("non-finite response {value}")));
                }
                if *self == ItemFamily::BoundedContinuous && !(value > 0.0 && value < 1.0) {
                    return Err(Error::Domain(format!(
                        "bounded-continuous response {value} outside (0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_len(&self, psi: &[f64]) -> Result<()> {
        if psi.len() != self.param_count() {
            return Err(Error::Domain(format!(
                "{self} expects {} parameters, got {}",
                self.param_count(),
                psi.len()
            )));
        }
        Ok(())
    }

    /// Checks the closed natural region used by the likelihood
    /// (`a > 0`, scales `> 0`, `0 <= c < u <= 1`).
    pub fn check_natural(&self, psi: &[f64]) -> Result<()> {
        self.check_len(psi)?;
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter in {psi:?}")));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} = {v} must be positive")))
            }
        };
        match self {
            ItemFamily::Rasch => Ok(()),
            ItemFamily::TwoPl => positive("a", psi[1]),
            ItemFamily::ThreePl => {
                positive("a", psi[1])?;
                if !(0.0..1.0).contains(&psi[2]) {
                    return Err(Error::Domain(format!("c = {} outside [0, 1)", psi[2])));
                }
                Ok(())
            }
            ItemFamily::FourPl => {
                positive("a", psi[1])?;
                let (c, u) = (psi[2], psi[3]);
                if !(0.0 <= c && c < u && u <= 1.0) {
                    return Err(Error::Domain(format!("need 0 <= c < u <= 1, got c={c}, u={u}")));
                }
                Ok(())
            }
            ItemFamily::Gpcm(_) => positive("a", psi[0]),
            ItemFamily::Gaussian => {
                positive("a", psi[1])?;
                positive("sigma", psi[2])
            }
            ItemFamily::BoundedContinuous => {
                positive("a", psi[1])?;
                positive("precision", psi[2])
            }
        }
    }

    /// `log p(value | theta, psi)` with all normalizing constants.
    pub fn log_likelihood(&self, psi: &[f64], theta: f64, value: f64) -> Result<f64> {
        self.check_natural(psi)?;
        self.check_response(value)?;
        Ok(self.log_likelihood_unchecked(psi, theta, value))
    }

    /// Same as [`ItemFamily::log_likelihood`] without argument validation.
    /// The sampler validates responses once at load time and only feeds
    /// parameters produced by [`ItemFamily::to_natural_into`].
    #[inline]
    pub fn log_likelihood_unchecked(&self, psi: &[f64], theta: f64, value: f64) -> f64 {
        match self {
            ItemFamily::Rasch => binary_ll(theta + psi[0], value),
            ItemFamily::TwoPl => binary_ll(psi[1] * theta + psi[0], value),
            ItemFamily::ThreePl => asymptotic_ll(psi[1] * theta + psi[0], psi[2], 1.0, value),
            ItemFamily::FourPl => asymptotic_ll(psi[1] * theta + psi[0], psi[2], psi[3], value),
            ItemFamily::Gpcm(m) => gpcm_ll(*m, psi, theta, value),
            ItemFamily::Gaussian => {
                let sigma = psi[2];
                let z = (value - psi[1] * theta - psi[0]) / sigma;
                -0.5 * LN_2PI - sigma.ln() - 0.5 * z * z
            }
            ItemFamily::BoundedContinuous => {
                let precision = psi[2];
                let x = logit(value);
                let r = x - psi[1] * theta - psi[0];
                0.5 * precision.ln() - 0.5 * LN_2PI - 0.5 * precision * r * r
                    - (value * (1.0 - value)).ln()
            }
        }
    }

    /// Maps natural parameters to the unconstrained scale. Values on the
    /// boundary of the admissible region are rejected.
    pub fn to_unconstrained(&self, psi: &[f64]) -> Result<Vec<f64>> {
        self.check_len(psi)?;
        self.check_natural(psi)?;
        let boundary = |what: &str| Err(Error::Domain(format!("{what} on the boundary")));
        let mut out = psi.to_vec();
        match self {
            ItemFamily::Rasch => {}
            ItemFamily::TwoPl => out[1] = psi[1].ln(),
            ItemFamily::ThreePl => {
                if psi[2] <= 0.0 {
                    return boundary("c");
                }
                out[1] = psi[1].ln();
                out[2] = logit(psi[2]);
            }
            ItemFamily::FourPl => {
                let (c, u) = (psi[2], psi[3]);
                if c <= 0.0 || u >= 1.0 {
                    return boundary("c or u");
                }
                out[1] = psi[1].ln();
                out[2] = logit(c);
                out[3] = logit((u - c) / (1.0 - c));
            }
            ItemFamily::Gpcm(_) => out[0] = psi[0].ln(),
            ItemFamily::Gaussian | ItemFamily::BoundedContinuous => {
                out[1] = psi[1].ln();
                out[2] = psi[2].ln();
            }
        }
        Ok(out)
    }

    pub fn to_natural(&self, psi_unconstrained: &[f64]) -> Result<Vec<f64>> {
        self.check_len(psi_unconstrained)?;
        if psi_unconstrained.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite unconstrained parameter in {psi_unconstrained:?}"
            )));
        }
        let mut out = vec![0.0; psi_unconstrained.len()];
        self.to_natural_into(psi_unconstrained, &mut out);
        Ok(out)
    }

    /// Allocation-free inverse transform used on the sampler hot path.
    #[inline]
    pub fn to_natural_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
        match self {
            ItemFamily::Rasch => {}
            ItemFamily::TwoPl => out[1] = y[1].exp(),
            ItemFamily::ThreePl => {
                out[1] = y[1].exp();
                out[2] = sigmoid(y[2]);
            }
            ItemFamily::FourPl => {
                out[1] = y[1].exp();
                let c = sigmoid(y[2]);
                out[2] = c;
                out[3] = c + (1.0 - c) * sigmoid(y[3]);
            }
            ItemFamily::Gpcm(_) => out[0] = y[0].exp(),
            ItemFamily::Gaussian | ItemFamily::BoundedContinuous => {
                out[1] = y[1].exp();
                out[2] = y[2].exp();
            }
        }
    }

    /// Draws a response given natural parameters.
    pub fn sample<R: Rng + ?Sized>(&self, psi: &[f64], theta: f64, rng: &mut R) -> f64 {
        match self {
            ItemFamily::Rasch
            | ItemFamily::TwoPl
            | ItemFamily::ThreePl
            | ItemFamily::FourPl => {
                let p = self.log_likelihood_unchecked(psi, theta, 1.0).exp();
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            ItemFamily::Gpcm(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for k in 0..*m {
                    acc += self.log_likelihood_unchecked(psi, theta, k as f64).exp();
                    if u < acc {
                        return k as f64;
                    }
                }
                (*m - 1) as f64
            }
            ItemFamily::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                psi[1] * theta + psi[0] + psi[2] * z
            }
            ItemFamily::BoundedContinuous => loop {
                let z: f64 = StandardNormal.sample(rng);
                let y = sigmoid(psi[1] * theta + psi[0] + z / psi[2].sqrt());
                if y > 0.0 && y < 1.0 {
                    break y;
                }
            },
        }
    }
}

#[inline]
fn binary_ll(eta: f64, value: f64) -> f64 {
    if value >= 0.5 {
        log_sigmoid(eta)
    } else {
        log_sigmoid(-eta)
    }
}

/// `P(1) = c*s(-eta) + u*s(eta)`, `P(0) = (1-c)*s(-eta) + (1-u)*s(eta)`;
/// both are sums of non-negative terms so the logs stay accurate in the tails.
#[inline]
fn asymptotic_ll(eta: f64, c: f64, u: f64, value: f64) -> f64 {
    let (lo, hi) = if value >= 0.5 { (c, u) } else { (1.0 - c, 1.0 - u) };
    log_add_exp(safe_ln(lo) + log_sigmoid(-eta), safe_ln(hi) + log_sigmoid(eta))
}

#[inline]
fn safe_ln(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

fn gpcm_ll(m: usize, psi: &[f64], theta: f64, value: f64) -> f64 {
    let a = psi[0];
    let y = value as usize;
    let mut z = 0.0;
    let mut z_y = 0.0;
    let mut max = 0.0f64;
    // Two passes keep this allocation free: the first finds the max exponent.
    for (k, b) in psi[1..m].iter().enumerate() {
        z += a * (theta - b);
        max = max.max(z);
        if k + 1 == y {
            z_y = z;
        }
    }
    let mut sum = (-max).exp();
    z = 0.0;
    for b in &psi[1..m] {
        z += a * (theta - b);
        sum += (z - max).exp();
    }
    z_y - max - sum.ln()
}

impl fmt::Display for ItemFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItemFamily::Rasch => write!(f, "1PL"),
            ItemFamily::TwoPl => write!(f, "2PL"),
            ItemFamily::ThreePl => write!(f, "3PL"),
            ItemFamily::FourPl => write!(f, "4PL"),
            ItemFamily::Gpcm(m) => write!(f, "GPCM({m})"),
            ItemFamily::Gaussian => write!(f, "gaussian"),
            ItemFamily::BoundedContinuous => write!(f, "bounded"),
        }
    }
}

impl FromStr for ItemFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let fam = match t.as_str() {
            "1pl" | "rasch" => ItemFamily::Rasch,
            "2pl" => ItemFamily::TwoPl,
            "3pl" => ItemFamily::ThreePl,
            "4pl" => ItemFamily::FourPl,
            "gaussian" | "continuous" | "normal" => ItemFamily::Gaussian,
            "bounded" | "bounded_continuous" | "logit_normal" => ItemFamily::BoundedContinuous,
            _ => {
                let inner = t
                    .strip_prefix("gpcm(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| t.strip_prefix("gpcm"));
                match inner.and_then(|n| n.trim().parse::<usize>().ok()) {
                    Some(m) if m >= 2 => ItemFamily::Gpcm(m),
                    _ => return Err(Error::Validation(format!("unknown item family '{s}'"))),
                }
            }
        };
        Ok(fam)
    }
}

impl TryFrom<String> for ItemFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ItemFamily> for String {
    fn from(f: ItemFamily) -> String {
        f.to_string()
    }
}
