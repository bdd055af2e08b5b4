//! Probability primitives for the count models.
//!
//! Conventions used throughout the crate:
//!
//! * `Gamma(shape, rate)`, so the mean is `shape / rate`.
//! * Negative Binomial in mean / inverse-dispersion form, `Var = m + m²/φ`.
//! * Lindley(θ) with density `θ²/(θ+1) (1+x) e^{-θx}`, equivalently the
//!   mixture `1/(1+θ) Gamma(2, θ) + θ/(1+θ) Gamma(1, θ)`.
//! * Generalized Exponential(a, b) with density `a b (1-e^{-bx})^{a-1} e^{-bx}`.

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_support(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("x must be nonnegative and finite, got {x}")))
    }
}

/// Lindley distribution parameter θ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindleyParam {
    theta: f64,
}

impl LindleyParam {
    pub fn new(theta: f64) -> Result<Self> {
        check_positive("theta", theta)?;
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Mixing weight of the `Gamma(2, θ)` component, `1/(1+θ)`.
    pub fn shape_two_weight(&self) -> f64 {
        1.0 / (1.0 + self.theta)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        check_support(x)?;
        let t = self.theta;
        Ok(t * t / (t + 1.0) * (1.0 + x) * (-t * x).exp())
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        check_support(x)?;
        let t = self.theta;
        Ok(2.0 * t.ln() - t.ln_1p() + x.ln_1p() - t * x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let t = self.theta;
        1.0 - (1.0 + t * x / (t + 1.0)) * (-t * x).exp()
    }

    /// Raw moment `E[X^k] = k! (θ + k + 1) / (θ^k (θ + 1))`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k == 0 {
            return Err(Error::domain("moment order must be at least 1"));
        }
        let t = self.theta;
        if k == 1 {
            return Ok(lindley_mean(t));
        }
        let ln_fact = ln_gamma(f64::from(k) + 1.0);
        Ok((ln_fact - f64::from(k) * t.ln()).exp() * (t + f64::from(k) + 1.0) / (t + 1.0))
    }

    pub fn mean(&self) -> f64 {
        lindley_mean(self.theta)
    }

    pub fn variance(&self) -> f64 {
        let t = self.theta;
        (t * t + 4.0 * t + 2.0) / (t * t * (t + 1.0) * (t + 1.0))
    }

    /// Draws via the latent-indicator construction:
    /// `z ~ Bernoulli(1/(1+θ))`, then `Gamma(1 + z, θ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = rng.random::<f64>() < self.shape_two_weight();
        let shape = if z { 2.0 } else { 1.0 };
        sample_gamma(shape, self.theta, rng)
    }

    /// Draws from the two-component mixture directly, building each gamma
    /// component from exponential spacings. Shares no code with [`sample`](Self::sample).
    pub fn sample_mixture<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let exp1 = |rng: &mut R| -> f64 { -(1.0 - rng.random::<f64>()).ln() };
        let total = if u < self.shape_two_weight() { exp1(rng) + exp1(rng) } else { exp1(rng) };
        total / self.theta
    }
}

/// `E(λ) = (θ + 2) / (θ (θ + 1))`.
#[inline]
pub fn lindley_mean(theta: f64) -> f64 {
    (theta + 2.0) / (theta * (theta + 1.0))
}

/// Negative Binomial parameters (mean, inverse dispersion φ = 1/α).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbParam {
    mean: f64,
    inverse_dispersion: f64,
}

impl NbParam {
    pub fn new(mean: f64, inverse_dispersion: f64) -> Result<Self> {
        check_positive("mean", mean)?;
        check_positive("inverse dispersion", inverse_dispersion)?;
        Ok(Self { mean, inverse_dispersion })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn inverse_dispersion(&self) -> f64 {
        self.inverse_dispersion
    }

    pub fn variance(&self) -> f64 {
        self.mean + self.mean * self.mean / self.inverse_dispersion
    }

    pub fn ln_pmf(&self, y: u64) -> f64 {
        nb_ln_pmf(y, self.mean, self.inverse_dispersion)
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.ln_pmf(y).exp()
    }

    /// Gamma-Poisson construction.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        nb_sample(self.mean, self.inverse_dispersion, rng)
    }
}

/// Log mass of `NB(y; φ, m)`. Stable for very large φ (Poisson limit).
#[inline]
pub fn nb_ln_pmf(y: u64, mean: f64, phi: f64) -> f64 {
    let yf = y as f64;
    let norm = ln_rising(phi, y) - ln_gamma(yf + 1.0);
    let log_p0 = -phi * (mean / phi).ln_1p();
    let tail = if y == 0 { 0.0 } else { yf * (mean / (phi + mean)).ln() };
    norm + log_p0 + tail
}

/// `ln Γ(φ + y) - ln Γ(φ)`, summed directly for small counts so that large φ
/// does not cancel catastrophically.
#[inline]
pub(crate) fn ln_rising(phi: f64, y: u64) -> f64 {
    if y <= 64 {
        (0..y).map(|k| (phi + k as f64).ln()).sum()
    } else {
        ln_gamma(phi + y as f64) - ln_gamma(phi)
    }
}

#[cfg(test)]
fn nb_mean_kernel(y: u64, mean: f64, phi: f64) -> f64 {
    nb_log_kernel(y, mean.ln(), mean, phi)
}

/// The part of `ln NB(y; φ, m)` that varies with `m` at fixed φ, given both
/// `ln m` and `m`.
#[inline]
pub(crate) fn nb_log_kernel(y: u64, ln_mean: f64, mean: f64, phi: f64) -> f64 {
    let yf = y as f64;
    let t = if y == 0 { 0.0 } else { yf * ln_mean };
    t - (yf + phi) * (mean / phi).ln_1p()
}

pub fn nb_sample<R: Rng + ?Sized>(mean: f64, phi: f64, rng: &mut R) -> u64 {
    let rate = sample_gamma(phi, phi / mean, rng);
    if !(rate > 0.0) {
        return 0;
    }
    match Poisson::new(rate) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// Generalized Exponential parameters: shape `a`, rate `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeParam {
    a: f64,
    b: f64,
}

impl GeParam {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        check_positive("GE shape a", a)?;
        check_positive("GE rate b", b)?;
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        check_support(x)?;
        let (a, b) = (self.a, self.b);
        let e = (-b * x).exp();
        Ok(a * b * (1.0 - e).powf(a - 1.0) * e)
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        check_support(x)?;
        Ok(ge_ln_pdf(x, self.a, self.b))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (self.a * (-(-self.b * x).exp_m1()).ln()).exp()
        }
    }

    /// `E(X) = (ψ(a + 1) − ψ(1)) / b`.
    pub fn mean(&self) -> f64 {
        ge_mean(self.a, self.b)
    }

    /// Inverse-CDF draw `x = −ln(1 − u^{1/a}) / b`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        -(-(u.powf(1.0 / self.a))).ln_1p() / self.b
    }
}

#[inline]
pub(crate) fn ge_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    // ln(1 - e^{-bx}) computed through expm1 to stay accurate near zero.
    a.ln() + b.ln() + (a - 1.0) * (-(-b * x).exp_m1()).ln() - b * x
}

#[inline]
pub fn ge_mean(a: f64, b: f64) -> f64 {
    (digamma(a + 1.0) - digamma(1.0)) / b
}

/// Log density of `Gamma(shape, rate)` at `x > 0`.
#[inline]
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log density of `Beta(a, b)` at `x ∈ (0, 1)`.
#[inline]
pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
}

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + d * d / variance)
}

/// Draw from `Gamma(shape, rate)`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    GammaDist::new(shape, 1.0 / rate).expect("gamma parameters validated by caller").sample(rng)
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    mean + sd * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, ks_two_sample_critical, mean, variance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson rule on [lo, hi]; `n` must be even.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    /// Integral over [0, ∞) for densities with exponential tails.
    fn integrate_tail(f: impl Fn(f64) -> f64, rate: f64) -> f64 {
        let hi = 60.0 / rate;
        simpson(f, 0.0, hi, 200_000)
    }

    #[test]
    fn lindley_pdf_values() {
        let p1 = LindleyParam::new(1.0).unwrap();
        let p2 = LindleyParam::new(2.0).unwrap();
        assert!((p1.pdf(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((p2.pdf(0.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((p1.pdf(1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((p1.ln_pdf(1.0).unwrap() - (-1.0)).abs() < 1e-14);
    }

    #[test]
    fn lindley_domain_errors() {
        assert!(LindleyParam::new(0.0).is_err());
        assert!(LindleyParam::new(-1.0).is_err());
        assert!(LindleyParam::new(f64::NAN).is_err());
        assert!(LindleyParam::new(1.0).unwrap().pdf(-0.1).is_err());
        assert!(LindleyParam::new(1.0).unwrap().moment(0).is_err());
    }

    #[test]
    fn lindley_pdf_normalizes_and_moments_match_quadrature() {
        for &t in &[0.5, 1.0, std::f64::consts::SQRT_2, 5.0] {
            let p = LindleyParam::new(t).unwrap();
            let total = integrate_tail(|x| p.pdf(x).unwrap(), t);
            assert!((total - 1.0).abs() < 1e-8, "theta={t} total={total}");
            let m1 = integrate_tail(|x| x * p.pdf(x).unwrap(), t);
            assert!((m1 - p.moment(1).unwrap()).abs() < 1e-8);
            let m2 = integrate_tail(|x| x * x * p.pdf(x).unwrap(), t);
            assert!((m2 - p.moment(2).unwrap()).abs() < 1e-7);
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn lindley_moment_examples() {
        let p = LindleyParam::new(1.0).unwrap();
        assert_eq!(p.moment(1).unwrap(), 1.5);
        let p = LindleyParam::new(1.414214).unwrap();
        assert!((p.moment(1).unwrap() - 1.0).abs() < 1e-6);
        assert!((p.moment(2).unwrap() - (2.0 * 2f64.sqrt() - 1.0)).abs() < 1e-5);
        let exact = LindleyParam::new(2f64.sqrt()).unwrap();
        assert!((exact.moment(1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lindley_cdf_matches_pdf_integral() {
        let p = LindleyParam::new(1.378).unwrap();
        for &x in &[0.1, 0.7, 2.0, 5.0] {
            let num = simpson(|u| p.pdf(u).unwrap(), 0.0, x, 20_000);
            assert!((num - p.cdf(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn lindley_sampler_means() {
        for (t, target) in [(2f64.sqrt(), 1.0), (1.0, 1.5)] {
            let p = LindleyParam::new(t).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let draws: Vec<f64> = (0..1_000_000).map(|_| p.sample(&mut rng)).collect();
            assert!((mean(&draws) - target).abs() < 0.01);
        }
    }

    #[test]
    fn lindley_mixture_and_latent_samplers_agree() {
        let p = LindleyParam::new(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..100_000).map(|_| p.sample_mixture(&mut rng)).collect();
        let d = ks_two_sample(&a, &b);
        assert!(d < ks_two_sample_critical(a.len(), b.len(), 0.01), "D={d}");
    }

    #[test]
    fn samplers_are_deterministic() {
        let p = LindleyParam::new(1.3).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| p.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn nb_pmf_examples() {
        let poisson_limit = NbParam::new(1.0, 1e12).unwrap();
        assert!((poisson_limit.pmf(0) - (-1.0f64).exp()).abs() < 1e-9);
        let geometric = NbParam::new(1.0, 1.0).unwrap();
        assert!((geometric.pmf(0) - 0.5).abs() < 1e-15);
        assert!((geometric.pmf(3) - 0.0625).abs() < 1e-14);
    }

    /// Sum the pmf until a Chebyshev-style tail bound on the remaining mass
    /// drops below 1e-12.
    fn adaptive_pmf_total(p: &NbParam) -> f64 {
        let mut total = 0.0;
        let mut y = 0u64;
        loop {
            total += p.pmf(y);
            y += 1;
            let gap = y as f64 - p.mean();
            if gap > 0.0 && p.variance() / (gap * gap) < 1e-12 {
                return total;
            }
            // Ratio test: once terms decay geometrically the tail is bounded
            // by term * r / (1 - r).
            let r = p.pmf(y) / p.pmf(y - 1);
            if y as f64 > p.mean() && r < 1.0 && p.pmf(y) / (1.0 - r) < 1e-12 {
                return total + p.pmf(y) / (1.0 - r);
            }
        }
    }

    #[test]
    fn nb_pmf_normalizes() {
        let p = NbParam::new(2.0, 0.5).unwrap();
        let s: f64 = (0..=500).map(|y| p.pmf(y)).sum();
        assert!((s - 1.0).abs() < 1e-10);
        for &(m, phi) in &[(0.752, 0.365f64.recip()), (5.0, 2.0), (0.1, 0.2), (30.0, 50.0)] {
            let p = NbParam::new(m, phi).unwrap();
            assert!((adaptive_pmf_total(&p) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn nb_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draw = |m, phi, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..1_000_000).map(|_| nb_sample(m, phi, rng) as f64).collect()
        };
        let a = draw(1.0, 1.0, &mut rng);
        assert!((mean(&a) - 1.0).abs() < 0.01);
        let b = draw(2.0, 0.5, &mut rng);
        assert!((variance(&b) / 10.0 - 1.0).abs() < 0.02);
        let c = draw(0.752, 0.365, &mut rng);
        assert!((mean(&c) - 0.752).abs() < 0.01);
    }

    #[test]
    fn nb_kernel_differences_match_full_log_pmf() {
        for &(y, phi) in &[(0u64, 2.0), (3, 0.7), (8, 7.3)] {
            let (m1, m2) = (0.4, 1.9);
            let full = nb_ln_pmf(y, m2, phi) - nb_ln_pmf(y, m1, phi);
            let kern = nb_mean_kernel(y, m2, phi) - nb_mean_kernel(y, m1, phi);
            assert!((full - kern).abs() < 1e-12);
        }
    }

    #[test]
    fn ge_examples() {
        let p = GeParam::new(1.0, 1.0).unwrap();
        assert!((p.pdf(0.0).unwrap() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let draws: Vec<f64> = (0..1_000_000).map(|_| p.sample(&mut rng)).collect();
        assert!((mean(&draws) - 1.0).abs() < 0.01);
        assert!(GeParam::new(0.0, 1.0).is_err());
        assert!(GeParam::new(1.0, -2.0).is_err());
    }

    #[test]
    fn ge_pdf_normalizes_and_mean_matches() {
        let p = GeParam::new(2.022, 1.442).unwrap();
        let total = integrate_tail(|x| p.pdf(x).unwrap(), 1.442);
        assert!((total - 1.0).abs() < 1e-8);
        let m = integrate_tail(|x| x * p.pdf(x).unwrap(), 1.442);
        assert!((m - p.mean()).abs() < 1e-8);
        for &x in &[0.3, 1.0, 2.5] {
            assert!((p.ln_pdf(x).unwrap() - p.pdf(x).unwrap().ln()).abs() < 1e-12);
            let num = simpson(|u| p.pdf(u).unwrap(), 0.0, x, 20_000);
            assert!((num - p.cdf(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn ge_sampler_matches_cdf() {
        let p = GeParam::new(0.6, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut draws: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        draws.sort_by(|a, b| a.total_cmp(b));
        let n = draws.len() as f64;
        let d = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = p.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.628 / n.sqrt(), "D={d}");
    }

    #[test]
    fn helper_densities() {
        // Gamma(1, rate) is exponential.
        assert!((gamma_ln_pdf(0.5, 1.0, 2.0) - (2f64.ln() - 1.0)).abs() < 1e-14);
        // Beta(1, 1) is uniform.
        assert!(beta_ln_pdf(0.3, 1.0, 1.0).abs() < 1e-14);
        let v = normal_ln_pdf(0.0, 0.0, 1.0);
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }
}
