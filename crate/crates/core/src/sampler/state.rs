//! Chain state and the Metropolis-within-Gibbs updates.
//!
//! Parameterization: fixed coefficients `β` on the standardized scale; random
//! coefficients `b_ij = β_j + v_ij` with the offsets `v_ij ~ N(0, σ_j²)`
//! stored directly; site effects `λ_i` (Lindley or GE); Lindley indicators
//! `z_i`. The linear predictor `η_i = x_i'β + Σ_j x_ij v_ij` and `ln λ_i` are
//! cached and kept in sync by every move.

use rand::Rng;

use super::adapt::{AdaptiveScale, BlockProposal};
use super::McmcConfig;
use crate::distributions::{gamma_ln_pdf, ge_ln_pdf, nb_ln_pmf, nb_log_kernel, sample_gamma, sample_normal};
use crate::error::{Error, Result};
use crate::model_spec::{DesignMatrix, Family, ModelSpec, PriorConfig, ETA_CLAMP};

/// Proposals leaving `ln x` outside this band are rejected so that positive
/// parameters never underflow to zero or overflow.
const LN_BOUND: f64 = 700.0;

/// Coefficient block proposals per sweep. Each costs one likelihood pass,
/// against roughly ten for the rest of a sweep.
const BETA_STEPS: usize = 3;

/// Everything held fixed during a run.
#[derive(Clone, Debug)]
pub struct Model {
    pub family: Family,
    pub priors: PriorConfig,
    /// Standardized design matrix.
    pub x: DesignMatrix,
    pub y: Vec<u64>,
    /// Design columns carrying random coefficients.
    pub random_cols: Vec<usize>,
    pub prior_only: bool,
    pub fixed_theta: Option<f64>,
    pub fixed_phi: Option<f64>,
    pub fixed_ge: Option<(f64, f64)>,
    pub target_acceptance: f64,
    pub adapt_window: usize,
}

impl Model {
    pub fn new(spec: &ModelSpec, x: &DesignMatrix, y: &[u64], cfg: &McmcConfig) -> Result<Self> {
        spec.validate()?;
        if x.n_rows() != y.len() {
            return Err(Error::Dimension(format!("{} design rows for {} responses", x.n_rows(), y.len())));
        }
        let expected = spec.formula.column_names();
        if x.names() != expected {
            return Err(Error::Dimension(format!(
                "design columns {:?} do not match formula columns {:?}",
                x.names(),
                expected
            )));
        }
        for (name, v) in
            [("theta", cfg.fixed.theta), ("phi", cfg.fixed.phi), ("ge_a", cfg.fixed.ge_a), ("ge_b", cfg.fixed.ge_b)]
        {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::domain(format!("fixed {name} must be positive, got {v}")));
                }
            }
        }
        let fixed_ge = match (cfg.fixed.ge_a, cfg.fixed.ge_b) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(Error::Config("ge_a and ge_b must be fixed together".into())),
        };
        Ok(Model {
            family: spec.family,
            priors: spec.priors,
            x: x.clone(),
            y: y.to_vec(),
            random_cols: spec.formula.random_columns(),
            prior_only: cfg.prior_only,
            fixed_theta: cfg.fixed.theta,
            fixed_phi: cfg.fixed.phi,
            fixed_ge,
            target_acceptance: cfg.target_acceptance,
            adapt_window: cfg.adapt_window.max(1),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.y.len()
    }

    pub fn n_coef(&self) -> usize {
        self.x.n_cols()
    }

    pub fn n_random(&self) -> usize {
        self.random_cols.len()
    }

    fn has_latent(&self) -> bool {
        self.family != Family::Nb
    }
}

/// Named Metropolis moves, for acceptance bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Lambda,
    RandomOffset,
    SigmaRescale,
    Coefficients,
    InterceptShift,
    Theta,
    ThetaRescale,
    Phi,
    GeA,
    GeB,
    GeRescale,
}

impl Move {
    pub const ALL: [Move; 11] = [
        Move::Lambda,
        Move::RandomOffset,
        Move::SigmaRescale,
        Move::Coefficients,
        Move::InterceptShift,
        Move::Theta,
        Move::ThetaRescale,
        Move::Phi,
        Move::GeA,
        Move::GeB,
        Move::GeRescale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Move::Lambda => "lambda",
            Move::RandomOffset => "random_offset",
            Move::SigmaRescale => "sigma_rescale",
            Move::Coefficients => "coefficients",
            Move::InterceptShift => "intercept_shift",
            Move::Theta => "theta",
            Move::ThetaRescale => "theta_rescale",
            Move::Phi => "phi",
            Move::GeA => "ge_a",
            Move::GeB => "ge_b",
            Move::GeRescale => "ge_rescale",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AcceptanceStats {
    proposed: [u64; 11],
    accepted: [u64; 11],
}

impl AcceptanceStats {
    fn count(&mut self, m: Move, accepted: bool) {
        let k = m as usize;
        self.proposed[k] += 1;
        self.accepted[k] += u64::from(accepted);
    }

    pub fn rate(&self, m: Move) -> Option<f64> {
        let k = m as usize;
        (self.proposed[k] > 0).then(|| self.accepted[k] as f64 / self.proposed[k] as f64)
    }

    /// `(move name, acceptance rate)` for every move that was proposed.
    pub fn rates(&self) -> Vec<(String, f64)> {
        Move::ALL.iter().filter_map(|m| self.rate(*m).map(|r| (m.name().to_string(), r))).collect()
    }
}

#[derive(Clone, Debug)]
struct Tuning {
    lambda: Vec<AdaptiveScale>,
    offset: Vec<AdaptiveScale>,
    sigma_rescale: Vec<AdaptiveScale>,
    beta: BlockProposal,
    intercept_shift: AdaptiveScale,
    theta: AdaptiveScale,
    theta_rescale: AdaptiveScale,
    phi: AdaptiveScale,
    ge_a: AdaptiveScale,
    ge_b: AdaptiveScale,
    ge_rescale: AdaptiveScale,
}

#[inline]
fn metropolis<R: Rng + ?Sized>(log_r: f64, rng: &mut R) -> (bool, f64) {
    if log_r.is_nan() {
        return (false, 0.0);
    }
    if log_r >= 0.0 {
        return (true, 1.0);
    }
    let p = log_r.exp();
    (rng.random::<f64>() < p, p)
}

#[inline]
fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    sample_normal(0.0, 1.0, rng)
}

/// One chain's current position plus its adaptive proposal state.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub beta: Vec<f64>,
    /// Random offsets `v_ij`, site-major (`n × r`).
    pub v: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z: Vec<u8>,
    pub phi: f64,
    pub theta: f64,
    pub ge_a: f64,
    pub ge_b: f64,
    eta: Vec<f64>,
    ln_lambda: Vec<f64>,
    tune: Tuning,
    stats: AcceptanceStats,
    iter: usize,
    burn_in: usize,
}

impl ChainState {
    /// Starting point: coefficients 0, θ from `cfg.init`, φ from `cfg.init`,
    /// every λ_i at `cfg.init.lambda`, σ_j at `cfg.init.sigma`, GE (a, b) at
    /// (1, 1). Fixed hyperparameters override the starting values. Each
    /// `z_i` is drawn from its conditional given λ_i.
    pub fn new<R: Rng + ?Sized>(m: &Model, cfg: &McmcConfig, rng: &mut R) -> Self {
        let n = m.n_sites();
        let r = m.n_random();
        let p = m.n_coef();
        let lambda0 = if m.has_latent() { cfg.init.lambda } else { 1.0 };
        let (ge_a, ge_b) = m.fixed_ge.unwrap_or((1.0, 1.0));
        let mut s = ChainState {
            beta: vec![0.0; p],
            v: vec![0.0; n * r],
            sigma: vec![cfg.init.sigma; r],
            lambda: vec![lambda0; n],
            z: vec![0; n],
            phi: m.fixed_phi.unwrap_or(cfg.init.phi),
            theta: m.fixed_theta.unwrap_or(cfg.init.theta),
            ge_a,
            ge_b,
            eta: vec![0.0; n],
            ln_lambda: vec![lambda0.ln(); n],
            tune: Tuning {
                lambda: vec![AdaptiveScale::new(1.0); n],
                offset: vec![AdaptiveScale::new(0.1); n * r],
                sigma_rescale: vec![AdaptiveScale::new(0.1); r],
                beta: BlockProposal::new(p, 0.05),
                intercept_shift: AdaptiveScale::new(0.1),
                theta: AdaptiveScale::new(0.1),
                theta_rescale: AdaptiveScale::new(0.1),
                phi: AdaptiveScale::new(0.3),
                ge_a: AdaptiveScale::new(0.1),
                ge_b: AdaptiveScale::new(0.1),
                ge_rescale: AdaptiveScale::new(0.1),
            },
            stats: AcceptanceStats::default(),
            iter: 0,
            burn_in: cfg.burn_in,
        };
        if m.family.has_lindley() {
            for i in 0..n {
                let l = s.lambda[i];
                s.z[i] = u8::from(rng.random::<f64>() < l / (1.0 + l));
            }
        }
        s.sync(m);
        s
    }

    /// Recomputes cached quantities after fields were edited directly.
    pub fn sync(&mut self, m: &Model) {
        let r = m.n_random();
        for i in 0..m.n_sites() {
            let row = m.x.row(i);
            let mut eta: f64 = self.beta.iter().zip(row).map(|(b, x)| b * x).sum();
            for (k, &c) in m.random_cols.iter().enumerate() {
                eta += row[c] * self.v[i * r + k];
            }
            self.eta[i] = eta;
            self.ln_lambda[i] = self.lambda[i].ln();
        }
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn acceptance(&self) -> &AcceptanceStats {
        &self.stats
    }

    pub fn reset_acceptance(&mut self) {
        self.stats = AcceptanceStats::default();
    }

    fn adapting(&self) -> bool {
        self.iter < self.burn_in
    }

    /// One full sweep over every unfixed block.
    pub fn sweep<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        self.update_latents(m, rng);
        self.update_coefficients(m, rng);
        self.update_theta(m, rng);
        self.update_ge_params(m, rng);
        self.update_phi(m, rng);
        if self.iter == self.burn_in {
            self.reset_acceptance();
        }
        self.iter += 1;
    }

    #[inline]
    fn site_ll(&self, m: &Model, i: usize, eta: f64, ln_lambda: f64) -> f64 {
        if m.prior_only {
            return 0.0;
        }
        let ln_mean = eta.clamp(-ETA_CLAMP, ETA_CLAMP) + ln_lambda;
        nb_log_kernel(m.y[i], ln_mean, ln_mean.exp(), self.phi)
    }

    /// Normalized log density of a site effect under the heterogeneity prior.
    #[inline]
    fn latent_ln_prior(m: &Model, lambda: f64, ln_lambda: f64, z: u8, theta: f64, a: f64, b: f64) -> f64 {
        match m.family {
            Family::Nb => 0.0,
            Family::NbL | Family::RpnbL => {
                let zf = f64::from(z);
                (1.0 + zf) * theta.ln() + zf * ln_lambda - theta * lambda
            }
            Family::RpnbGe => ge_ln_pdf(lambda, a, b),
        }
    }

    /// Conditional (on λ) log likelihood `Σ ln NB(y_i; φ, λ_i μ_i)`, evaluated
    /// even in prior-only runs.
    pub fn log_likelihood(&self, m: &Model) -> f64 {
        (0..m.n_sites())
            .map(|i| {
                let mean = (self.eta[i].clamp(-ETA_CLAMP, ETA_CLAMP) + self.ln_lambda[i]).exp();
                nb_ln_pmf(m.y[i], mean, self.phi)
            })
            .sum()
    }

    /// λ_i by log-scale random walk against `NB · Gamma(1 + z_i, θ)` (or the
    /// GE density), then every z_i from its exact conditional.
    pub fn update_latents<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        if !m.has_latent() {
            return;
        }
        let adapting = self.adapting();
        for i in 0..m.n_sites() {
            let l0 = self.ln_lambda[i];
            let l1 = l0 + self.tune.lambda[i].scale() * std_normal(rng);
            if l1.abs() > LN_BOUND {
                self.stats.count(Move::Lambda, false);
                continue;
            }
            let (lam0, lam1) = (self.lambda[i], l1.exp());
            let z = self.z[i];
            let log_r = self.site_ll(m, i, self.eta[i], l1) - self.site_ll(m, i, self.eta[i], l0)
                + Self::latent_ln_prior(m, lam1, l1, z, self.theta, self.ge_a, self.ge_b)
                - Self::latent_ln_prior(m, lam0, l0, z, self.theta, self.ge_a, self.ge_b)
                + (l1 - l0);
            let (acc, p) = metropolis(log_r, rng);
            if acc {
                self.lambda[i] = lam1;
                self.ln_lambda[i] = l1;
            }
            self.stats.count(Move::Lambda, acc);
            if adapting {
                self.tune.lambda[i].adapt(p, m.target_acceptance);
            }
        }
        self.update_indicators(m, rng);
    }

    /// Exact Gibbs draw of every `z_i` given `λ_i`: `P(z_i = 1) = λ_i / (1 + λ_i)`.
    pub fn update_indicators<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        if !m.family.has_lindley() {
            return;
        }
        for (z, &l) in self.z.iter_mut().zip(&self.lambda) {
            *z = u8::from(rng.random::<f64>() < l / (1.0 + l));
        }
    }

    /// Random offsets (per-site random walk), their SDs (conjugate Gibbs plus
    /// a joint rescale move), the fixed coefficients (adaptive block
    /// Metropolis) and an intercept shift compensated through the site
    /// effects.
    pub fn update_coefficients<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        self.update_offsets(m, rng);
        self.update_sigma(m, rng);
        for _ in 0..BETA_STEPS {
            self.update_beta(m, rng);
        }
        self.refresh_beta_proposal(m);
        self.update_intercept_shift(m, rng);
    }

    fn update_offsets<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        let r = m.n_random();
        if r == 0 {
            return;
        }
        let adapting = self.adapting();
        for i in 0..m.n_sites() {
            for (k, &c) in m.random_cols.iter().enumerate() {
                let idx = i * r + k;
                let x = m.x.get(i, c);
                let v0 = self.v[idx];
                let v1 = v0 + self.tune.offset[idx].scale() * std_normal(rng);
                let eta1 = self.eta[i] + x * (v1 - v0);
                let var = self.sigma[k] * self.sigma[k];
                let log_r = self.site_ll(m, i, eta1, self.ln_lambda[i])
                    - self.site_ll(m, i, self.eta[i], self.ln_lambda[i])
                    - (v1 * v1 - v0 * v0) / (2.0 * var);
                let (acc, p) = metropolis(log_r, rng);
                if acc {
                    self.v[idx] = v1;
                    self.eta[i] = eta1;
                }
                self.stats.count(Move::RandomOffset, acc);
                if adapting {
                    self.tune.offset[idx].adapt(p, m.target_acceptance);
                }
            }
        }
    }

    /// Log density of `ln σ` implied by the Gamma prior on `τ = σ⁻²`.
    fn ln_sigma_prior(m: &Model, ln_sigma: f64) -> f64 {
        let tau = (-2.0 * ln_sigma).exp();
        let pr = m.priors.rp_precision;
        gamma_ln_pdf(tau, pr.shape, pr.rate) + (2.0 * tau).ln()
    }

    fn update_sigma<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        let r = m.n_random();
        let n = m.n_sites();
        let adapting = self.adapting();
        let pr = m.priors.rp_precision;
        for (k, &c) in m.random_cols.iter().enumerate() {
            let ss: f64 = (0..n).map(|i| self.v[i * r + k].powi(2)).sum();
            let tau = sample_gamma(pr.shape + n as f64 / 2.0, pr.rate + ss / 2.0, rng);
            let ln_sigma = (-0.5 * tau.ln()).clamp(-LN_BOUND / 2.0, LN_BOUND / 2.0);
            self.sigma[k] = ln_sigma.exp();

            // σ' = σ e^ε with v' = v e^ε leaves the standardized offsets fixed
            let eps = self.tune.sigma_rescale[k].scale() * std_normal(rng);
            let ln_sigma1 = ln_sigma + eps;
            if ln_sigma1.abs() > LN_BOUND / 2.0 {
                self.stats.count(Move::SigmaRescale, false);
                continue;
            }
            let f = eps.exp_m1();
            let scale = eps.exp();
            let mut d_ll = 0.0;
            let mut eta1 = Vec::with_capacity(n);
            for i in 0..n {
                let e = self.eta[i] + m.x.get(i, c) * self.v[i * r + k] * f;
                d_ll += self.site_ll(m, i, e, self.ln_lambda[i]) - self.site_ll(m, i, self.eta[i], self.ln_lambda[i]);
                eta1.push(e);
            }
            let log_r = d_ll + Self::ln_sigma_prior(m, ln_sigma1) - Self::ln_sigma_prior(m, ln_sigma);
            let (acc, p) = metropolis(log_r, rng);
            if acc {
                self.sigma[k] = ln_sigma1.exp();
                for i in 0..n {
                    self.v[i * r + k] *= scale;
                }
                self.eta = eta1;
            }
            self.stats.count(Move::SigmaRescale, acc);
            if adapting {
                self.tune.sigma_rescale[k].adapt(p, m.target_acceptance);
            }
        }
    }

    fn coef_ln_prior(m: &Model, b: f64) -> f64 {
        let c = m.priors.coef;
        -(b - c.mean).powi(2) / (2.0 * c.variance)
    }

    fn update_beta<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        let p = m.n_coef();
        let n = m.n_sites();
        let adapting = self.adapting();
        let mut step = vec![0.0; p];
        self.tune.beta.propose(rng, &mut step);
        let mut d = 0.0;
        for j in 0..p {
            d += Self::coef_ln_prior(m, self.beta[j] + step[j]) - Self::coef_ln_prior(m, self.beta[j]);
        }
        let mut eta1 = Vec::with_capacity(n);
        for i in 0..n {
            let e = self.eta[i] + m.x.row(i).iter().zip(&step).map(|(x, s)| x * s).sum::<f64>();
            d += self.site_ll(m, i, e, self.ln_lambda[i]) - self.site_ll(m, i, self.eta[i], self.ln_lambda[i]);
            eta1.push(e);
        }
        let (acc, prob) = metropolis(d, rng);
        if acc {
            self.beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
            self.eta = eta1;
        }
        self.stats.count(Move::Coefficients, acc);
        if adapting {
            let tb = &mut self.tune.beta;
            tb.adapt(prob, m.target_acceptance);
            tb.record(&self.beta);
        }
    }

    fn refresh_beta_proposal(&mut self, m: &Model) {
        if self.adapting() {
            let tb = &mut self.tune.beta;
            // the first fifth of burn-in is treated as transient
            if self.iter == self.burn_in / 5 {
                tb.forget_history();
            }
            if (self.iter + 1) % m.adapt_window == 0 {
                tb.refresh();
            }
        }
    }

    /// `β₀ → β₀ + δ` with every `λ_i → λ_i e^{-δ}`: the site means are
    /// unchanged, so this moves along the ridge between the intercept and the
    /// overall level of the site effects.
    fn update_intercept_shift<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        if !m.has_latent() {
            return;
        }
        let delta = self.tune.intercept_shift.scale() * std_normal(rng);
        let log_r = self.rescale_log_ratio(m, delta, self.theta, self.ge_b);
        self.finish_rescale(m, rng, Move::InterceptShift, log_r, delta);
        if self.adapting() {
            let p = log_r.min(0.0).exp();
            self.tune.intercept_shift.adapt(if log_r.is_nan() { 0.0 } else { p }, m.target_acceptance);
        }
    }

    /// Log acceptance ratio of `β₀ += δ`, `ln λ_i -= δ`, with the
    /// heterogeneity hyperparameters moved to `theta1` / `b1` (unchanged for a
    /// pure intercept shift). Hyperprior terms are added by the caller.
    fn rescale_log_ratio(&self, m: &Model, delta: f64, theta1: f64, b1: f64) -> f64 {
        let n = m.n_sites();
        let mut d = Self::coef_ln_prior(m, self.beta[0] + delta) - Self::coef_ln_prior(m, self.beta[0]);
        d -= n as f64 * delta;
        for i in 0..n {
            let l0 = self.ln_lambda[i];
            let l1 = l0 - delta;
            if l1.abs() > LN_BOUND {
                return f64::NEG_INFINITY;
            }
            let e1 = self.eta[i] + delta;
            d += self.site_ll(m, i, e1, l1) - self.site_ll(m, i, self.eta[i], l0);
            d += Self::latent_ln_prior(m, l1.exp(), l1, self.z[i], theta1, self.ge_a, b1)
                - Self::latent_ln_prior(m, self.lambda[i], l0, self.z[i], self.theta, self.ge_a, self.ge_b);
        }
        d
    }

    /// Accept/reject a rescale proposal and apply it to β₀, η and λ.
    fn finish_rescale<R: Rng + ?Sized>(&mut self, _m: &Model, rng: &mut R, mv: Move, log_r: f64, delta: f64) -> bool {
        let (acc, _) = metropolis(log_r, rng);
        if acc {
            self.beta[0] += delta;
            for i in 0..self.eta.len() {
                self.eta[i] += delta;
                self.ln_lambda[i] -= delta;
                self.lambda[i] = self.ln_lambda[i].exp();
            }
        }
        self.stats.count(mv, acc);
        acc
    }

    /// Log density of `ln θ` from the Beta prior on `w = 1/(1+θ)` together
    /// with the Bernoulli(w) indicators.
    fn ln_theta_target_w(m: &Model, theta: f64, n_z: f64, n: f64) -> f64 {
        let ln_w = -theta.ln_1p();
        let ln_1mw = theta.ln() + ln_w;
        let pr = m.priors.lindley;
        (n_z + pr.a) * ln_w + (n - n_z + pr.b) * ln_1mw
    }

    /// θ by random walk on `ln θ` (equivalently on `logit w`), then a joint
    /// move `θ → θe^ε, λ → λe^{-ε}, β₀ → β₀ + ε` along the scale ridge.
    pub fn update_theta<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        if !m.family.has_lindley() || m.fixed_theta.is_some() {
            return;
        }
        let adapting = self.adapting();
        let n = m.n_sites() as f64;
        let n_z: f64 = self.z.iter().map(|&z| f64::from(z)).sum();
        let s1 = n + n_z;
        let sum_l: f64 = self.lambda.iter().sum();
        let target = |t: f64| s1 * t.ln() - t * sum_l + Self::ln_theta_target_w(m, t, n_z, n);
        for _ in 0..5 {
            let lt1 = self.theta.ln() + self.tune.theta.scale() * std_normal(rng);
            if lt1.abs() > LN_BOUND {
                self.stats.count(Move::Theta, false);
                continue;
            }
            let t1 = lt1.exp();
            let log_r = target(t1) - target(self.theta);
            let (acc, p) = metropolis(log_r, rng);
            if acc {
                self.theta = t1;
            }
            self.stats.count(Move::Theta, acc);
            if adapting {
                self.tune.theta.adapt(p, m.target_acceptance);
            }
        }

        let eps = self.tune.theta_rescale.scale() * std_normal(rng);
        let t1 = self.theta * eps.exp();
        let mut log_r = self.rescale_log_ratio(m, eps, t1, self.ge_b);
        log_r += Self::ln_theta_target_w(m, t1, n_z, n) - Self::ln_theta_target_w(m, self.theta, n_z, n);
        if self.finish_rescale(m, rng, Move::ThetaRescale, log_r, eps) {
            self.theta = t1;
        }
        if adapting {
            let p = if log_r.is_nan() { 0.0 } else { log_r.min(0.0).exp() };
            self.tune.theta_rescale.adapt(p, m.target_acceptance);
        }
    }

    fn ge_sum(&self, a: f64, b: f64) -> f64 {
        self.lambda.iter().map(|&d| ge_ln_pdf(d, a, b)).sum()
    }

    /// GE shape and rate by log-scale random walks, plus the rate analogue of
    /// the θ rescale move.
    pub fn update_ge_params<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        if !m.family.has_ge() || m.fixed_ge.is_some() {
            return;
        }
        let adapting = self.adapting();
        let pa = m.priors.ge_a;
        let pb = m.priors.ge_b;
        let hyper = |x: f64, shape: f64, rate: f64| gamma_ln_pdf(x, shape, rate) + x.ln();

        let la1 = self.ge_a.ln() + self.tune.ge_a.scale() * std_normal(rng);
        if la1.abs() < LN_BOUND {
            let a1 = la1.exp();
            let log_r = self.ge_sum(a1, self.ge_b) - self.ge_sum(self.ge_a, self.ge_b) + hyper(a1, pa.shape, pa.rate)
                - hyper(self.ge_a, pa.shape, pa.rate);
            let (acc, p) = metropolis(log_r, rng);
            if acc {
                self.ge_a = a1;
            }
            self.stats.count(Move::GeA, acc);
            if adapting {
                self.tune.ge_a.adapt(p, m.target_acceptance);
            }
        }

        let lb1 = self.ge_b.ln() + self.tune.ge_b.scale() * std_normal(rng);
        if lb1.abs() < LN_BOUND {
            let b1 = lb1.exp();
            let log_r = self.ge_sum(self.ge_a, b1) - self.ge_sum(self.ge_a, self.ge_b) + hyper(b1, pb.shape, pb.rate)
                - hyper(self.ge_b, pb.shape, pb.rate);
            let (acc, p) = metropolis(log_r, rng);
            if acc {
                self.ge_b = b1;
            }
            self.stats.count(Move::GeB, acc);
            if adapting {
                self.tune.ge_b.adapt(p, m.target_acceptance);
            }
        }

        let eps = self.tune.ge_rescale.scale() * std_normal(rng);
        let b1 = self.ge_b * eps.exp();
        let mut log_r = self.rescale_log_ratio(m, eps, self.theta, b1);
        log_r += hyper(b1, pb.shape, pb.rate) - hyper(self.ge_b, pb.shape, pb.rate);
        if self.finish_rescale(m, rng, Move::GeRescale, log_r, eps) {
            self.ge_b = b1;
        }
        if adapting {
            let p = if log_r.is_nan() { 0.0 } else { log_r.min(0.0).exp() };
            self.tune.ge_rescale.adapt(p, m.target_acceptance);
        }
    }

    /// φ by random walk on `ln φ` against the full NB likelihood.
    pub fn update_phi<R: Rng + ?Sized>(&mut self, m: &Model, rng: &mut R) {
        if m.fixed_phi.is_some() {
            return;
        }
        let adapting = self.adapting();
        let pr = m.priors.dispersion;
        let means: Vec<f64> = if m.prior_only {
            Vec::new()
        } else {
            (0..m.n_sites()).map(|i| (self.eta[i].clamp(-ETA_CLAMP, ETA_CLAMP) + self.ln_lambda[i]).exp()).collect()
        };
        let target = |phi: f64| {
            let ll: f64 = means.iter().zip(&m.y).map(|(&mu, &y)| nb_ln_pmf(y, mu, phi)).sum();
            ll + gamma_ln_pdf(phi, pr.shape, pr.rate) + phi.ln()
        };
        let mut current = target(self.phi);
        for _ in 0..2 {
            let l1 = self.phi.ln() + self.tune.phi.scale() * std_normal(rng);
            if l1.abs() > LN_BOUND {
                self.stats.count(Move::Phi, false);
                continue;
            }
            let phi1 = l1.exp();
            let t1 = target(phi1);
            let (acc, p) = metropolis(t1 - current, rng);
            if acc {
                self.phi = phi1;
                current = t1;
            }
            self.stats.count(Move::Phi, acc);
            if adapting {
                self.tune.phi.adapt(p, m.target_acceptance);
            }
        }
    }

    /// Positivity and binary constraints of a stored state.
    pub fn check_domain(&self) -> bool {
        self.phi > 0.0
            && self.theta > 0.0
            && self.ge_a > 0.0
            && self.ge_b > 0.0
            && self.sigma.iter().all(|s| *s > 0.0)
            && self.lambda.iter().all(|l| *l > 0.0)
            && self.z.iter().all(|z| *z <= 1)
    }
}
