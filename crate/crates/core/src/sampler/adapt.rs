//! Proposal-scale adaptation. Every adaptive quantity is frozen once burn-in
//! ends, so the retained draws come from a fixed Markov kernel.

use rand::Rng;

use crate::distributions::sample_normal;
use crate::linalg::{cholesky, lower_mul, RunningCovariance};

const LOG_SCALE_BOUND: f64 = 15.0;

/// Robbins-Monro scale for a scalar random-walk proposal, adapted on the log
/// scale towards a target acceptance probability.
#[derive(Clone, Debug)]
pub struct AdaptiveScale {
    log_scale: f64,
    steps: u64,
}

impl AdaptiveScale {
    pub fn new(scale: f64) -> Self {
        Self { log_scale: scale.ln(), steps: 0 }
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// `accept_prob` is `min(1, exp(log ratio))` of the last proposal.
    #[inline]
    pub fn adapt(&mut self, accept_prob: f64, target: f64) {
        self.steps += 1;
        let gain = (1.0 + self.steps as f64).powf(-0.6);
        self.log_scale = (self.log_scale + gain * (accept_prob - target)).clamp(-LOG_SCALE_BOUND, LOG_SCALE_BOUND);
    }
}

/// Adaptive-Metropolis block proposal: empirical covariance of the chain
/// history times a Robbins-Monro global scale.
#[derive(Clone, Debug)]
pub struct BlockProposal {
    dim: usize,
    global: AdaptiveScale,
    history: RunningCovariance,
    chol: Vec<f64>,
    empirical: bool,
}

impl BlockProposal {
    pub fn new(dim: usize, initial_sd: f64) -> Self {
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            chol[i * dim + i] = initial_sd;
        }
        Self { dim, global: AdaptiveScale::new(1.0), history: RunningCovariance::new(dim), chol, empirical: false }
    }

    /// Fills `step` with a proposal increment.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R, step: &mut [f64]) {
        let z: Vec<f64> = (0..self.dim).map(|_| sample_normal(0.0, 1.0, rng)).collect();
        lower_mul(&self.chol, &z, step);
        let s = self.global.scale();
        step.iter_mut().for_each(|v| *v *= s);
    }

    pub fn adapt(&mut self, accept_prob: f64, target: f64) {
        self.global.adapt(accept_prob, target);
    }

    pub fn record(&mut self, x: &[f64]) {
        self.history.push(x);
    }

    pub fn forget_history(&mut self) {
        self.history.reset();
    }

    /// Refreshes the proposal factor from the recorded history once enough
    /// points are available, using the `2.38²/d` optimal scaling.
    pub fn refresh(&mut self) {
        let d = self.dim;
        if self.history.count() < (10 * d as u64).max(50) {
            return;
        }
        let Some(mut cov) = self.history.covariance() else { return };
        let factor = 2.38 * 2.38 / d as f64;
        let ridge = cov.iter().step_by(d + 1).fold(0.0f64, |m, v| m.max(*v)) * 1e-8 + 1e-12;
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] *= factor;
            }
            cov[i * d + i] += ridge;
        }
        if let Some(l) = cholesky(&cov, d) {
            self.chol = l;
            if !self.empirical {
                // the diagonal start scale says nothing about the new factor
                self.global = AdaptiveScale::new(1.0);
                self.empirical = true;
            }
        }
    }
}
