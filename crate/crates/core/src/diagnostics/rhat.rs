use crate::error::{Error, Result};

/// Classic potential scale reduction factor
/// `sqrt(((n-1)/n W + B/n) / W)` over equal-length chains.
///
/// `B` is `n` times the sample variance of the chain means and `W` the
/// mean of the within-chain sample variances. Chains are truncated to the
/// shortest one.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Diagnostic(format!(
            "R-hat needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 2 {
        return Err(Error::Diagnostic(format!(
            "R-hat needs at least 2 draws per chain, got {n}"
        )));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(&c[..n])).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if !(w > 0.0) {
        return Err(Error::Diagnostic("zero within-chain variance".into()));
    }
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = nf * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (m - 1.0);
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

/// R-hat computed after splitting every chain into halves (odd middle
/// draw dropped).
pub fn split_gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    let mut split = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        split.push(c[..half].to_vec());
        split.push(c[n - half..n].to_vec());
    }
    gelman_rubin(&split)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
