//! Synthetic site data with known truth, calibrated to the published
//! descriptive statistics.
//!
//! Covariates are drawn independently per site; joint dependence between
//! covariates is not modeled. Every site owns two counter-based ChaCha
//! streams (one for covariates, one for the response), so output does not
//! depend on thread scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::records::*;
use crate::distributions::{ge_mean, lindley_mean, nb_sample, sample_normal, GeParam, LindleyParam};
use crate::error::{Error, Result};
use crate::model_spec::{build_design, linear_predictor, standardize, ColumnStats, Formula, ETA_CLAMP};

/// Range-truncated lognormal with the given untruncated mean and SD.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveMarginal {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl PositiveMarginal {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let s2 = (1.0 + (self.sd / self.mean).powi(2)).ln();
        let mu = self.mean.ln() - 0.5 * s2;
        let s = s2.sqrt();
        for _ in 0..10_000 {
            let x = (mu + s * sample_normal(0.0, 1.0, rng)).exp();
            if x >= self.min && x <= self.max {
                return x;
            }
        }
        self.mean.clamp(self.min, self.max)
    }
}

/// Integer-valued (or stepped) covariates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountMarginal {
    /// Poisson truncated to `[0, max]`.
    Poisson { mean: f64, max: u32 },
    /// Normal rounded to the nearest multiple of `step`, truncated to `[min, max]`.
    RoundedNormal { mean: f64, sd: f64, step: f64, min: f64, max: f64 },
}

impl CountMarginal {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            CountMarginal::Poisson { mean, max } => {
                let p = Poisson::new(mean).expect("validated");
                for _ in 0..10_000 {
                    let k: f64 = p.sample(rng);
                    if k <= f64::from(max) {
                        return k;
                    }
                }
                f64::from(max)
            }
            CountMarginal::RoundedNormal { mean, sd, step, min, max } => {
                for _ in 0..10_000 {
                    let x = (sample_normal(mean, sd, rng) / step).round() * step;
                    if x >= min && x <= max {
                        return x;
                    }
                }
                ((mean / step).round() * step).clamp(min, max)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CountMarginal::Poisson { mean, .. } => mean > 0.0 && mean.is_finite(),
            CountMarginal::RoundedNormal { sd, step, min, max, .. } => sd > 0.0 && step > 0.0 && min <= max,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid count marginal {self:?}")))
        }
    }
}

/// Probabilities of the categorical levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalShares {
    pub int_type_signalized: f64,
    pub marked_xwalk_no: f64,
    pub median_undivided: f64,
    pub lighting_no: f64,
    /// `[com, res, mix]`
    pub area: [f64; 3],
    pub sidewalk_yes: f64,
    pub curve_yes: f64,
    pub design_curbside: f64,
    /// `[near, far, midblock]`
    pub proximity: [f64; 3],
    pub cover_uncovered: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateMarginals {
    pub aadt: PositiveMarginal,
    pub avg_on: PositiveMarginal,
    pub avg_off: PositiveMarginal,
    pub dist_to_int: PositiveMarginal,
    /// Width where the median is divided; undivided medians have width 0.
    pub median_width_divided: PositiveMarginal,
    pub speed_limit: CountMarginal,
    pub lane_count: CountMarginal,
    pub school_count: CountMarginal,
    pub park_count: CountMarginal,
    pub stop_count: CountMarginal,
    pub shares: CategoricalShares,
}

impl Default for CovariateMarginals {
    /// Calibrated to the published 596-stop descriptive table.
    fn default() -> Self {
        let pm = |mean, sd, min, max| PositiveMarginal { mean, sd, min, max };
        let median_undivided = 311.0 / 608.0;
        let divided = 1.0 - median_undivided;
        // conditional moments that reproduce the unconditional mean 7.10, sd 12.38
        let m_div = 7.10 / divided;
        let second = (12.38f64.powi(2) + 7.10f64.powi(2)) / divided;
        let sd_div = (second - m_div * m_div).sqrt();
        CovariateMarginals {
            aadt: pm(13540.6, 8827.85, 166.0, 42056.0),
            avg_on: pm(53.20, 66.78, 0.0, 769.0),
            avg_off: pm(56.63, 60.64, 0.0, 831.0),
            dist_to_int: pm(198.94, 241.04, 0.4, 2106.0),
            median_width_divided: pm(m_div, sd_div, 0.5, 131.9),
            speed_limit: CountMarginal::RoundedNormal { mean: 36.63, sd: 7.78, step: 5.0, min: 20.0, max: 65.0 },
            lane_count: CountMarginal::RoundedNormal { mean: 4.34, sd: 1.46, step: 1.0, min: 1.0, max: 8.0 },
            school_count: CountMarginal::Poisson { mean: 0.82, max: 6 },
            park_count: CountMarginal::Poisson { mean: 0.64, max: 6 },
            stop_count: CountMarginal::Poisson { mean: 3.45, max: 11 },
            shares: CategoricalShares {
                int_type_signalized: 382.0 / 596.0,
                marked_xwalk_no: 234.0 / 596.0,
                median_undivided,
                lighting_no: 339.0 / 596.0,
                area: [307.0 / 596.0, 118.0 / 596.0, 171.0 / 596.0],
                sidewalk_yes: 550.0 / 596.0,
                curve_yes: 38.0 / 596.0,
                design_curbside: 507.0 / 596.0,
                proximity: [226.0 / 596.0, 301.0 / 596.0, 69.0 / 596.0],
                cover_uncovered: 294.0 / 596.0,
            },
        }
    }
}

/// Site-level multiplicative heterogeneity in the generating model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Heterogeneity {
    None,
    Lindley { theta: f64 },
    Ge { a: f64, b: f64 },
}

impl Heterogeneity {
    pub fn mean(&self) -> f64 {
        match *self {
            Heterogeneity::None => 1.0,
            Heterogeneity::Lindley { theta } => lindley_mean(theta),
            Heterogeneity::Ge { a, b } => ge_mean(a, b),
        }
    }
}

/// Per-site thinning probabilities: `P(KABC | crash)` and `P(KAB | crash)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeverityShares {
    pub kabc: f64,
    pub kab: f64,
}

impl Default for SeverityShares {
    fn default() -> Self {
        SeverityShares { kabc: 0.699, kab: 0.418 }
    }
}

/// True coefficient of one formula term; `sd > 0` makes it random.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermTruth {
    pub term: String,
    pub coef: f64,
    #[serde(default)]
    pub sd: f64,
}

impl TermTruth {
    pub fn fixed(term: &str, coef: f64) -> Self {
        TermTruth { term: term.to_string(), coef, sd: 0.0 }
    }

    pub fn random(term: &str, coef: f64, sd: f64) -> Self {
        TermTruth { term: term.to_string(), coef, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_sites: usize,
    pub seed: u64,
    pub intercept: f64,
    pub terms: Vec<TermTruth>,
    pub heterogeneity: Heterogeneity,
    /// NB inverse dispersion φ = 1/α.
    pub phi: f64,
    /// Apply the coefficients to standardized continuous columns (using the
    /// generated sample's own mean and population SD).
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Shift the intercept so the analytic mean KABCO equals this value.
    #[serde(default)]
    pub target_mean: Option<f64>,
    #[serde(default)]
    pub marginals: CovariateMarginals,
    #[serde(default)]
    pub severity: SeverityShares,
}

fn default_true() -> bool {
    true
}

impl GeneratorConfig {
    /// Truth taken from the published RPNB-L column for KABCO crashes.
    pub fn published_rpnbl(n_sites: usize, seed: u64) -> Self {
        GeneratorConfig {
            n_sites,
            seed,
            intercept: -0.488,
            terms: vec![
                TermTruth::random("ln(aadt)", 0.345, 0.042),
                TermTruth::random("avg_on", 0.010, 0.008),
                TermTruth::fixed("speed_limit>=35", 0.448),
                TermTruth::fixed("median_type", 0.326),
                TermTruth::fixed("int_type", -0.329),
                TermTruth::fixed("sidewalk=yes", -0.379),
                TermTruth::fixed("marked_xwalk", 0.098),
                TermTruth::fixed("lighting", 0.100),
                TermTruth::fixed("area=mix", -0.367),
                TermTruth::fixed("school_count>1", 0.556),
                TermTruth::fixed("proximity=far", -0.251),
            ],
            heterogeneity: Heterogeneity::Lindley { theta: 1.378 },
            phi: 1.0 / 0.137,
            standardize: true,
            target_mean: None,
            marginals: CovariateMarginals::default(),
            severity: SeverityShares::default(),
        }
    }

    pub fn formula(&self) -> Result<Formula> {
        let terms: Vec<&str> = self.terms.iter().map(|t| t.term.as_str()).collect();
        let random: Vec<&str> = self.terms.iter().filter(|t| t.sd > 0.0).map(|t| t.term.as_str()).collect();
        Formula::new(Severity::Kabco, &terms, &random)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_sites < 10 {
            return bad(format!("n_sites must be at least 10, got {}", self.n_sites));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return bad(format!("phi must be positive, got {}", self.phi));
        }
        match self.heterogeneity {
            Heterogeneity::Lindley { theta } => {
                LindleyParam::new(theta)?;
            }
            Heterogeneity::Ge { a, b } => {
                GeParam::new(a, b)?;
            }
            Heterogeneity::None => {}
        }
        for t in &self.terms {
            if !(t.sd >= 0.0 && t.sd.is_finite() && t.coef.is_finite()) {
                return bad(format!("term `{}` has invalid truth", t.term));
            }
        }
        let formula = self.formula()?;
        if let Some(t) = formula.terms.iter().find(|t| t.columns().len() != 1) {
            return bad(format!("truth term `{t}` expands to several columns; name one level, e.g. `area=mix`"));
        }
        if !self.intercept.is_finite() {
            return bad("intercept must be finite".into());
        }
        if let Some(m) = self.target_mean {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("target_mean must be positive, got {m}"));
            }
        }
        let s = self.severity;
        if !(0.0..=1.0).contains(&s.kabc) || !(0.0..=s.kabc).contains(&s.kab) {
            return bad("severity shares must satisfy 0 <= kab <= kabc <= 1".into());
        }
        for m in [
            self.marginals.speed_limit,
            self.marginals.lane_count,
            self.marginals.school_count,
            self.marginals.park_count,
            self.marginals.stop_count,
        ] {
            m.validate()?;
        }
        let sh = self.marginals.shares;
        for p in [
            sh.int_type_signalized,
            sh.marked_xwalk_no,
            sh.median_undivided,
            sh.lighting_no,
            sh.sidewalk_yes,
            sh.curve_yes,
            sh.design_curbside,
            sh.cover_uncovered,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("category share {p} outside [0, 1]"));
            }
        }
        for arr in [sh.area, sh.proximity] {
            if arr.iter().any(|p| *p < 0.0) || (arr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("multi-level shares must be nonnegative and sum to 1".into());
            }
        }
        Ok(())
    }
}

/// Everything needed to score a fit against the generating truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub config: GeneratorConfig,
    pub formula: Formula,
    pub column_names: Vec<String>,
    /// Realized standardization statistics (None for intercept/binary or when
    /// the truth is on the raw scale).
    pub column_stats: Vec<Option<ColumnStats>>,
    /// Coefficients on the scale the truth was applied to, intercept first
    /// (after any `target_mean` calibration).
    pub coefficients: Vec<f64>,
    /// Raw-scale equivalent of `coefficients`.
    pub coefficients_original: Vec<f64>,
    /// Random-coefficient SDs by column name, on the scale of `coefficients`.
    pub random_sd: Vec<(String, f64)>,
    pub random_sd_original: Vec<(String, f64)>,
    pub phi: f64,
    pub heterogeneity: Heterogeneity,
    /// Mean over sites of the analytic `E[KABCO]`.
    pub expected_mean: f64,
}

impl TruthRecord {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.column_names.iter().position(|c| c == name).map(|j| self.coefficients[j])
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub records: Vec<SiteRecord>,
    pub truth: TruthRecord,
}

fn site_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn pick<T: Copy>(u: f64, shares: &[f64], levels: &[T]) -> T {
    let mut acc = 0.0;
    for (p, l) in shares.iter().zip(levels) {
        acc += p;
        if u < acc {
            return *l;
        }
    }
    levels[levels.len() - 1]
}

fn covariates(i: usize, m: &CovariateMarginals, rng: &mut ChaCha8Rng) -> SiteRecord {
    let sh = &m.shares;
    let mut flip = |p: f64| rng.random::<f64>() < p;
    let int_type = if flip(sh.int_type_signalized) { IntType::Signalized } else { IntType::NonSignalized };
    let marked_xwalk = if flip(sh.marked_xwalk_no) { MarkedXwalk::No } else { MarkedXwalk::Yes };
    let median_type = if flip(sh.median_undivided) { MedianType::Undivided } else { MedianType::Divided };
    let lighting = if flip(sh.lighting_no) { Lighting::No } else { Lighting::Yes };
    let sidewalk = if flip(sh.sidewalk_yes) { Sidewalk::Yes } else { Sidewalk::No };
    let curve = if flip(sh.curve_yes) { Curve::Yes } else { Curve::No };
    let design = if flip(sh.design_curbside) { StopDesign::Curbside } else { StopDesign::Other };
    let cover = if flip(sh.cover_uncovered) { Cover::Uncovered } else { Cover::Covered };
    let area = pick(rng.random(), &sh.area, &[Area::Commercial, Area::Residential, Area::Mixed]);
    let proximity = pick(rng.random(), &sh.proximity, &[Proximity::Near, Proximity::Far, Proximity::Midblock]);
    let round = |x: f64, d: f64| (x * d).round() / d;
    let median_width = match median_type {
        MedianType::Undivided => 0.0,
        MedianType::Divided => round(m.median_width_divided.sample(rng), 10.0),
    };
    SiteRecord {
        site_id: format!("S{:05}", i + 1),
        kabco: 0,
        kabc: 0,
        kab: 0,
        aadt: round(m.aadt.sample(rng), 1.0).max(1.0),
        avg_on: round(m.avg_on.sample(rng), 100.0),
        avg_off: round(m.avg_off.sample(rng), 100.0),
        dist_to_int: round(m.dist_to_int.sample(rng), 10.0),
        median_width,
        speed_limit: m.speed_limit.sample(rng),
        lane_count: m.lane_count.sample(rng) as u32,
        school_count: m.school_count.sample(rng) as u32,
        park_count: m.park_count.sample(rng) as u32,
        stop_count: m.stop_count.sample(rng) as u32,
        int_type,
        marked_xwalk,
        median_type,
        lighting,
        area,
        sidewalk,
        curve,
        design,
        proximity,
        cover,
    }
}

/// Generates covariates, site heterogeneity and crash counts from `cfg`.
pub fn synthesize(cfg: &GeneratorConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let n = cfg.n_sites;
    let mut records: Vec<SiteRecord> =
        (0..n).into_par_iter().map(|i| covariates(i, &cfg.marginals, &mut site_rng(cfg.seed, 2 * i as u64))).collect();

    let formula = cfg.formula()?;
    let raw = build_design(&records, &formula)?;
    let design = if cfg.standardize { standardize(&raw)? } else { raw.clone() };
    let p = design.n_cols();
    // validated: every truth term maps to exactly one design column
    let mut coef = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for (j, truth) in cfg.terms.iter().enumerate() {
        coef[j + 1] = truth.coef;
        sd[j + 1] = truth.sd;
    }
    let e_lambda = cfg.heterogeneity.mean();
    let site_mean = |b0: f64, i: usize| {
        let row = design.row(i);
        let eta = b0 + linear_predictor(&coef[1..], &row[1..]);
        let corr: f64 = (1..p).map(|j| 0.5 * (sd[j] * row[j]).powi(2)).sum();
        (eta + corr).exp() * e_lambda
    };
    let mut intercept = cfg.intercept;
    if let Some(target) = cfg.target_mean {
        let m = (0..n).map(|i| site_mean(intercept, i)).sum::<f64>() / n as f64;
        intercept += (target / m).ln();
    }
    let expected_mean = (0..n).map(|i| site_mean(intercept, i)).sum::<f64>() / n as f64;
    coef[0] = intercept;

    let p_kab = if cfg.severity.kabc > 0.0 { cfg.severity.kab / cfg.severity.kabc } else { 0.0 };
    let counts: Vec<(u32, u32, u32)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = site_rng(cfg.seed, 2 * i as u64 + 1);
            let row = design.row(i);
            let mut eta = 0.0;
            for j in 0..p {
                let b = if sd[j] > 0.0 { coef[j] + sd[j] * sample_normal(0.0, 1.0, &mut rng) } else { coef[j] };
                eta += b * row[j];
            }
            let lambda = match cfg.heterogeneity {
                Heterogeneity::None => 1.0,
                Heterogeneity::Lindley { theta } => LindleyParam::new(theta).expect("validated").sample(&mut rng),
                Heterogeneity::Ge { a, b } => GeParam::new(a, b).expect("validated").sample(&mut rng),
            };
            let mean = eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp() * lambda;
            let y = u32::try_from(nb_sample(mean, cfg.phi, &mut rng)).unwrap_or(u32::MAX);
            let kabc = Binomial::new(u64::from(y), cfg.severity.kabc).expect("validated").sample(&mut rng) as u32;
            let kab = Binomial::new(u64::from(kabc), p_kab).expect("validated").sample(&mut rng) as u32;
            (y, kabc, kab)
        })
        .collect();
    for (r, (y, kabc, kab)) in records.iter_mut().zip(counts) {
        r.kabco = y;
        r.kabc = kabc;
        r.kab = kab;
    }

    let stats = design.stats().to_vec();
    let coefficients_original = crate::model_spec::destandardize_coefficients(&coef, &stats)?;
    let names = design.names();
    let random_cols = formula.random_columns();
    let random_sd: Vec<(String, f64)> = random_cols.iter().map(|&j| (names[j].clone(), sd[j])).collect();
    let random_sd_original =
        random_cols.iter().map(|&j| (names[j].clone(), stats[j].map_or(sd[j], |s| sd[j] / s.sd))).collect();
    let truth = TruthRecord {
        config: cfg.clone(),
        formula,
        column_names: names,
        column_stats: stats,
        coefficients: coef,
        coefficients_original,
        random_sd,
        random_sd_original,
        phi: cfg.phi,
        heterogeneity: cfg.heterogeneity,
        expected_mean,
    };
    Ok(Synthetic { records, truth })
}
