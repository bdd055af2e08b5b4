//! Brooks-Gelman-Rubin statistic and batch-means Monte Carlo error.

use serde::{Deserialize, Serialize};

use super::ChainDraws;
use crate::error::{Error, Result};
use crate::stats;

/// Potential scale reduction of equal-length chains.
///
/// `W` is the mean within-chain variance, `B/n` the variance of the chain
/// means, and `R = √((W + (m+1)/m · B/n) / W)`. Identical chains give 1; a
/// zero within-chain variance with distinct chain means gives infinity.
pub fn bgr_values(chains: &[&[f64]]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::InsufficientDraws(format!("BGR needs at least 2 chains, got {m}")));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InsufficientDraws("BGR needs chains of equal length".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientDraws(format!("BGR needs at least 2 draws per chain, got {n}")));
    }
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let w = chains.iter().map(|c| stats::population_variance(c)).sum::<f64>() / m as f64;
    let b_over_n = stats::variance(&means);
    let scale = means.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    if w <= f64::EPSILON * scale * scale * 1e-6 {
        return Ok(if b_over_n <= f64::EPSILON * scale * scale { 1.0 } else { f64::INFINITY });
    }
    let v = w + (m as f64 + 1.0) / m as f64 * b_over_n;
    Ok((v / w).sqrt())
}

/// BGR statistic of the scalar parameter `param` across chains.
pub fn bgr(chains: &[ChainDraws], param: &str) -> Result<f64> {
    let cols = columns(chains, param)?;
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    bgr_values(&refs)
}

fn columns(chains: &[ChainDraws], param: &str) -> Result<Vec<Vec<f64>>> {
    chains.iter().map(|c| c.column(param).ok_or_else(|| Error::MissingColumn(param.to_string()))).collect()
}

/// Batch-means standard error of the mean of one chain, using ⌊√n⌋ batches.
pub fn batch_means_se(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    let n_batches = (n as f64).sqrt().floor() as usize;
    if n_batches < 20 {
        return Err(Error::InsufficientDraws(format!("{n} draws give {n_batches} batches; at least 20 are needed")));
    }
    let size = n / n_batches;
    let batch_means: Vec<f64> = xs.chunks_exact(size).take(n_batches).map(stats::mean).collect();
    Ok((stats::variance(&batch_means) / n_batches as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McError {
    /// Standard error of the pooled posterior mean.
    pub mcse: f64,
    /// Pooled posterior standard deviation.
    pub sd: f64,
    /// `mcse < 0.03 · sd` (a constant chain passes with both at 0).
    pub pass: bool,
}

impl McError {
    fn from_chains(cols: &[Vec<f64>]) -> Result<Self> {
        let m = cols.len() as f64;
        let mut sum_sq = 0.0;
        for c in cols {
            sum_sq += batch_means_se(c)?.powi(2);
        }
        let mcse = sum_sq.sqrt() / m;
        let pooled: Vec<f64> = cols.iter().flatten().copied().collect();
        let sd = stats::sd(&pooled);
        Ok(McError { mcse, sd, pass: mcse < 0.03 * sd || (mcse == 0.0 && sd == 0.0) })
    }
}

/// Monte Carlo error of the pooled posterior mean of `param`.
pub fn mc_error(chains: &[ChainDraws], param: &str) -> Result<McError> {
    McError::from_chains(&columns(chains, param)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub bgr: f64,
    pub mc: McError,
    /// Counted by the convergence gate.
    pub monitored: bool,
}

impl ParamDiagnostics {
    pub fn bgr_pass(&self) -> bool {
        self.bgr < 1.1
    }

    pub fn passed(&self) -> bool {
        self.bgr_pass() && self.mc.pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub params: Vec<ParamDiagnostics>,
}

impl ConvergenceReport {
    /// All monitored parameters pass both rules.
    pub fn passed(&self) -> bool {
        self.params.iter().filter(|p| p.monitored).all(ParamDiagnostics::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamDiagnostics> {
        self.params.iter().filter(|p| p.monitored && !p.passed())
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostics> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// BGR and MC error for every scalar column. Fixed coefficients, `phi`,
/// `theta` and the GE parameters are monitored; random-term SDs and the
/// log-likelihood are reported only. Columns held fixed in the run are
/// skipped.
pub fn convergence_report(chains: &[ChainDraws]) -> Result<ConvergenceReport> {
    let first = chains.first().ok_or_else(|| Error::InsufficientDraws("no chains".into()))?;
    let fixed = &first.config.fixed;
    let mut params = Vec::new();
    for name in &first.names {
        let held = match name.as_str() {
            "phi" => fixed.phi.is_some(),
            "theta" => fixed.theta.is_some(),
            "ge_a" | "ge_b" => fixed.ge_a.is_some(),
            _ => false,
        };
        if held {
            continue;
        }
        let cols = columns(chains, name)?;
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        params.push(ParamDiagnostics {
            name: name.clone(),
            bgr: bgr_values(&refs)?,
            mc: McError::from_chains(&cols)?,
            monitored: !(name.starts_with("sd[") || name == "loglik"),
        });
    }
    Ok(ConvergenceReport { params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normals(n: usize, mean: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sample_normal(mean, 1.0, &mut rng)).collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let innov = (1.0 - rho * rho).sqrt();
        let mut x = sample_normal(0.0, 1.0, &mut rng);
        (0..n)
            .map(|_| {
                x = rho * x + sample_normal(0.0, innov, &mut rng);
                x
            })
            .collect()
    }

    #[test]
    fn identical_chains_give_one() {
        let a = normals(500, 0.0, 1);
        assert!((bgr_values(&[&a, &a]).unwrap() - 1.0).abs() < 0.01);
        let c = vec![2.0; 100];
        assert_eq!(bgr_values(&[&c, &c]).unwrap(), 1.0);
    }

    #[test]
    fn independent_normal_chains_converged() {
        let (a, b, c) = (normals(1000, 0.0, 1), normals(1000, 0.0, 2), normals(1000, 0.0, 3));
        assert!(bgr_values(&[&a, &b, &c]).unwrap() < 1.1);
    }

    #[test]
    fn separated_chains_flagged() {
        let (a, b) = (normals(1000, 0.0, 1), normals(1000, 10.0, 2));
        let r = bgr_values(&[&a, &b]).unwrap();
        // W = 1, B/n = 50: R ≈ √(1 + 1.5·50)
        assert!(r > 2.0 && (r - 76f64.sqrt()).abs() < 0.6, "{r}");
    }

    #[test]
    fn bgr_errors() {
        let a = normals(10, 0.0, 1);
        assert!(matches!(bgr_values(&[&a]), Err(Error::InsufficientDraws(_))));
        assert!(bgr_values(&[&a, &a[..5]]).is_err());
    }

    #[test]
    fn iid_mc_error() {
        let x = normals(10_000, 0.0, 4);
        let se = batch_means_se(&x).unwrap();
        assert!((se / 0.01 - 1.0).abs() < 0.2, "{se}");
    }

    #[test]
    fn ar1_mc_error_inflated() {
        // variance inflation (1 + ρ)/(1 − ρ) = 19 for ρ = 0.9; averaged over
        // replicates to damp the batch-means noise
        let n = 40_000;
        let reps = 20;
        let mean_ratio: f64 =
            (0..reps).map(|s| batch_means_se(&ar1(n, 0.9, 100 + s)).unwrap() / (1.0 / (n as f64).sqrt())).sum::<f64>()
                / reps as f64;
        assert!((mean_ratio / 19f64.sqrt() - 1.0).abs() < 0.25, "{mean_ratio}");
    }

    #[test]
    fn constant_chain_zero_error() {
        assert_eq!(batch_means_se(&vec![3.0; 900]).unwrap(), 0.0);
        assert!(batch_means_se(&vec![3.0; 399]).is_err());
        let m = McError::from_chains(&[vec![1.0; 400], vec![1.0; 400]]).unwrap();
        assert!(m.pass);
    }
}
