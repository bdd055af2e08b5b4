//! Multi-chain MCMC estimation of NB, NB-L, RPNB-L and RPNB-GE models.

mod adapt;
mod diagnostics;
mod state;
mod storage;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{
    batch_means_se, bgr, bgr_values, convergence_report, mc_error, ConvergenceReport, McError, ParamDiagnostics,
};
pub use state::{AcceptanceStats, ChainState, Model, Move};
pub use storage::{load_fit, read_draws, save_fit, write_atomic, write_draws, DRAWS_MAGIC};

use crate::data::SiteRecord;
use crate::distributions::{ge_mean, lindley_mean};
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model_spec::{
    build_design, destandardize_coefficients, response, standardize, ColumnStats, DesignMatrix, Family, Formula,
    ModelSpec,
};

/// Hyperparameters held at fixed values instead of being sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedValues {
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub ge_a: Option<f64>,
    pub ge_b: Option<f64>,
}

/// Starting values shared by every chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitValues {
    pub theta: f64,
    pub phi: f64,
    pub lambda: f64,
    pub sigma: f64,
}

impl Default for InitValues {
    fn default() -> Self {
        Self { theta: 1.5, phi: 1.0, lambda: 1.0, sigma: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in iteration.
    pub thin: usize,
    /// Keep site latents on every `latent_thin`-th stored iteration.
    pub latent_thin: usize,
    pub seed: u64,
    /// Iterations between refreshes of the coefficient block proposal.
    pub adapt_window: usize,
    pub target_acceptance: f64,
    /// Drop the likelihood so the chains sample the prior.
    pub prior_only: bool,
    pub fixed: FixedValues,
    pub init: InitValues,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_chains: 3,
            n_iter: 80_000,
            burn_in: 30_000,
            thin: 1,
            latent_thin: 10,
            seed: 0,
            adapt_window: 50,
            target_acceptance: 0.35,
            prior_only: false,
            fixed: FixedValues::default(),
            init: InitValues::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::Config(format!(
                "n_chains = {}: at least 2 chains are needed for the BGR statistic",
                self.n_chains
            )));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!("burn_in ({}) must be below n_iter ({})", self.burn_in, self.n_iter)));
        }
        if self.thin == 0 || self.latent_thin == 0 {
            return Err(Error::Config("thin and latent_thin must be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config(format!("target_acceptance {} outside (0, 1)", self.target_acceptance)));
        }
        let init = &self.init;
        for (name, v) in [("theta", init.theta), ("phi", init.phi), ("lambda", init.lambda), ("sigma", init.sigma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("init.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Number of stored draws per chain.
    pub fn n_stored(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

/// Standardized design matrix, response and site identifiers of a fit.
#[derive(Clone, Debug)]
pub struct ModelData {
    pub x: DesignMatrix,
    pub y: Vec<u64>,
    pub site_ids: Vec<String>,
}

impl ModelData {
    /// Builds and standardizes the design for `formula`.
    pub fn from_records(records: &[SiteRecord], formula: &Formula) -> Result<Self> {
        let x = standardize(&build_design(records, formula)?)?;
        Ok(ModelData {
            x,
            y: response(records, formula.response),
            site_ids: records.iter().map(|r| r.site_id.clone()).collect(),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.y.len()
    }
}

/// Post-burn-in draws of one chain.
///
/// Scalars are stored row-major with one row per kept iteration, in the
/// column order of `names`: design coefficients (standardized scale),
/// `sd[<column>]` for random terms, `phi`, then `theta` or `ge_a`/`ge_b`
/// depending on the family, and `loglik`. Site latents are stored for the
/// scalar rows listed in `latent_rows`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    pub seed: u64,
    pub family: Family,
    pub formula: Formula,
    pub config: McmcConfig,
    pub column_stats: Vec<Option<ColumnStats>>,
    pub site_ids: Vec<String>,
    pub names: Vec<String>,
    pub scalars: Vec<f64>,
    pub latent_rows: Vec<u64>,
    /// `latent_rows.len() × n_sites`.
    pub lambda: Vec<f64>,
    pub z: Vec<u8>,
    /// Design columns with random coefficients.
    pub random_columns: Vec<usize>,
    /// Site coefficients `b_ij = b_j + v_ij`, `latent_rows.len() × n_sites × r`.
    pub site_coefs: Vec<f64>,
    pub acceptance: Vec<(String, f64)>,
}

impl ChainDraws {
    pub fn n_draws(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.scalars.len() / self.names.len()
        }
    }

    pub fn n_sites(&self) -> usize {
        self.site_ids.len()
    }

    pub fn n_coef(&self) -> usize {
        self.column_stats.len()
    }

    pub fn n_latent(&self) -> usize {
        self.latent_rows.len()
    }

    pub fn coefficient_names(&self) -> &[String] {
        &self.names[..self.n_coef()]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.names.len();
        &self.scalars[k * w..(k + 1) * w]
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.index_of(name)?;
        Some((0..self.n_draws()).map(|k| self.row(k)[j]).collect())
    }

    /// Value of `name` at draw `k`, for optional hyperparameters.
    pub fn value(&self, k: usize, name: &str) -> Option<f64> {
        self.index_of(name).map(|j| self.row(k)[j])
    }

    /// Fixed coefficients of draw `k` on the standardized scale.
    pub fn coefficients(&self, k: usize) -> &[f64] {
        &self.row(k)[..self.n_coef()]
    }

    /// Fixed coefficients of draw `k` mapped back to raw covariate units.
    pub fn coefficients_original(&self, k: usize) -> Result<Vec<f64>> {
        destandardize_coefficients(self.coefficients(k), &self.column_stats)
    }

    /// Population mean `E(λ)` of the site effects at draw `k`: the Lindley
    /// mean `(θ+2)/(θ(θ+1))`, the GE mean, or 1 without heterogeneity.
    pub fn heterogeneity_mean(&self, k: usize) -> f64 {
        match self.family {
            Family::Nb => 1.0,
            Family::NbL | Family::RpnbL => {
                let theta = self.config.fixed.theta.or_else(|| self.value(k, "theta")).unwrap_or(f64::NAN);
                lindley_mean(theta)
            }
            Family::RpnbGe => {
                let a = self.config.fixed.ge_a.or_else(|| self.value(k, "ge_a")).unwrap_or(f64::NAN);
                let b = self.config.fixed.ge_b.or_else(|| self.value(k, "ge_b")).unwrap_or(f64::NAN);
                ge_mean(a, b)
            }
        }
    }

    pub fn lambda_row(&self, k: usize) -> &[f64] {
        let n = self.n_sites();
        &self.lambda[k * n..(k + 1) * n]
    }

    pub fn z_row(&self, k: usize) -> &[u8] {
        let n = self.n_sites();
        &self.z[k * n..(k + 1) * n]
    }

    /// Standardized-scale coefficient vector of site `i` at latent draw `k`:
    /// fixed coefficients with the site's random coefficients substituted.
    pub fn site_coefficients(&self, k: usize, i: usize) -> Vec<f64> {
        let mut b = self.coefficients(self.latent_rows[k] as usize).to_vec();
        let r = self.random_columns.len();
        let base = (k * self.n_sites() + i) * r;
        for (kk, &c) in self.random_columns.iter().enumerate() {
            b[c] = self.site_coefs[base + kk];
        }
        b
    }

    pub fn acceptance_rate(&self, mv: &str) -> Option<f64> {
        self.acceptance.iter().find(|(n, _)| n == mv).map(|(_, r)| *r)
    }
}

/// Checks that the design has full column rank.
fn check_full_rank(x: &DesignMatrix) -> Result<()> {
    let p = x.n_cols();
    let mut xtx = vec![0.0; p * p];
    for i in 0..x.n_rows() {
        let row = x.row(i);
        for a in 0..p {
            for b in 0..=a {
                xtx[a * p + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[b * p + a] = xtx[a * p + b];
        }
    }
    let scale = (0..p).map(|a| xtx[a * p + a]).fold(0.0f64, f64::max);
    let l = cholesky(&xtx, p).ok_or_else(|| Error::domain("design matrix is not of full column rank"))?;
    // near-singular factors pass Cholesky with a tiny pivot
    let min_pivot = (0..p).map(|a| l[a * p + a] * l[a * p + a]).fold(f64::INFINITY, f64::min);
    if min_pivot <= scale * 1e-10 {
        return Err(Error::domain("design matrix is not of full column rank"));
    }
    Ok(())
}

fn scalar_names(m: &Model) -> Vec<String> {
    let cols = m.x.names();
    let mut names = cols.clone();
    names.extend(m.random_cols.iter().map(|&c| format!("sd[{}]", cols[c])));
    names.push("phi".into());
    if m.family.has_lindley() {
        names.push("theta".into());
    }
    if m.family.has_ge() {
        names.push("ge_a".into());
        names.push("ge_b".into());
    }
    names.push("loglik".into());
    names
}

/// Runs one chain from its own seed `cfg.seed + chain`.
pub fn run_chain(spec: &ModelSpec, data: &ModelData, cfg: &McmcConfig, chain: usize) -> Result<ChainDraws> {
    cfg.validate()?;
    let model = Model::new(spec, &data.x, &data.y, cfg)?;
    Ok(sample_chain(&model, spec, data, cfg, chain))
}

fn sample_chain(model: &Model, spec: &ModelSpec, data: &ModelData, cfg: &McmcConfig, chain: usize) -> ChainDraws {
    let seed = cfg.seed.wrapping_add(chain as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ChainState::new(model, cfg, &mut rng);
    let names = scalar_names(model);
    let n = model.n_sites();
    let r = model.n_random();
    let stored = cfg.n_stored();
    let n_latent = stored.div_ceil(cfg.latent_thin);
    let mut out = ChainDraws {
        chain,
        seed,
        family: spec.family,
        formula: spec.formula.clone(),
        config: cfg.clone(),
        column_stats: data.x.stats().to_vec(),
        site_ids: data.site_ids.clone(),
        names,
        scalars: Vec::with_capacity(stored * (model.n_coef() + r + 5)),
        latent_rows: Vec::with_capacity(n_latent),
        lambda: Vec::with_capacity(n_latent * n),
        z: Vec::with_capacity(n_latent * n),
        random_columns: model.random_cols.clone(),
        site_coefs: Vec::with_capacity(n_latent * n * r),
        acceptance: Vec::new(),
    };
    let report_every = (cfg.n_iter / 10).max(1);
    let mut kept = 0usize;
    for it in 0..cfg.n_iter {
        state.sweep(model, &mut rng);
        if (it + 1) % report_every == 0 {
            log::debug!("chain {chain}: iteration {}/{}", it + 1, cfg.n_iter);
        }
        if it < cfg.burn_in || (it - cfg.burn_in) % cfg.thin != 0 {
            continue;
        }
        debug_assert!(state.check_domain(), "state left its domain at iteration {it}");
        out.scalars.extend_from_slice(&state.beta);
        out.scalars.extend_from_slice(&state.sigma);
        out.scalars.push(state.phi);
        if model.family.has_lindley() {
            out.scalars.push(state.theta);
        }
        if model.family.has_ge() {
            out.scalars.push(state.ge_a);
            out.scalars.push(state.ge_b);
        }
        out.scalars.push(state.log_likelihood(model));
        if kept % cfg.latent_thin == 0 {
            out.latent_rows.push(kept as u64);
            out.lambda.extend_from_slice(&state.lambda);
            out.z.extend_from_slice(&state.z);
            for i in 0..n {
                for (k, &c) in model.random_cols.iter().enumerate() {
                    out.site_coefs.push(state.beta[c] + state.v[i * r + k]);
                }
            }
        }
        kept += 1;
    }
    out.acceptance = state.acceptance().rates();
    out
}

/// Runs `cfg.n_chains` independent chains in parallel. Chain `c` is seeded
/// with `cfg.seed + c`, so results do not depend on the thread count.
pub fn run(spec: &ModelSpec, data: &ModelData, cfg: &McmcConfig) -> Result<Vec<ChainDraws>> {
    cfg.validate()?;
    check_full_rank(&data.x)?;
    if data.site_ids.len() != data.y.len() {
        return Err(Error::Dimension(format!("{} site ids for {} responses", data.site_ids.len(), data.y.len())));
    }
    let model = Model::new(spec, &data.x, &data.y, cfg)?;
    Ok((0..cfg.n_chains).into_par_iter().map(|c| sample_chain(&model, spec, data, cfg, c)).collect())
}
