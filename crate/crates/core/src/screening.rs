//! Full-Bayes site screening by potential for safety improvement, and
//! Mantel-Haenszel pooling of stratified 2×2 tables.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_spec::ETA_CLAMP;
use crate::sampler::{ChainDraws, ModelData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Hotspot,
    Normal,
    Cold,
}

impl Zone {
    pub fn name(self) -> &'static str {
        match self {
            Zone::Hotspot => "hotspot",
            Zone::Normal => "normal",
            Zone::Cold => "cold",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiResult {
    pub site_id: String,
    /// Posterior mean of `μ_i λ_i` with the site's own coefficients.
    pub expected: f64,
    /// Posterior mean of `μ_i E(λ)` with the fixed coefficients.
    pub predicted: f64,
    pub psi: f64,
    pub zone: Zone,
}

impl PsiResult {
    /// Zone from the sign alone; [`classify`] assigns hotspots.
    pub fn new(site_id: impl Into<String>, expected: f64, predicted: f64) -> Self {
        let psi = expected - predicted;
        PsiResult {
            site_id: site_id.into(),
            expected,
            predicted,
            psi,
            zone: if psi < 0.0 { Zone::Cold } else { Zone::Normal },
        }
    }
}

#[inline]
fn exp_eta(b: &[f64], row: &[f64]) -> f64 {
    let eta: f64 = b.iter().zip(row).map(|(b, x)| b * x).sum();
    eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp()
}

fn site_psi(chains: &[ChainDraws], data: &ModelData, i: usize) -> Result<PsiResult> {
    let row = data.x.row(i);
    let mut expected = 0.0;
    let mut predicted = 0.0;
    let mut n = 0usize;
    for c in chains {
        for k in 0..c.n_latent() {
            let scalar_row = c.latent_rows[k] as usize;
            expected += exp_eta(&c.site_coefficients(k, i), row) * c.lambda_row(k)[i];
            predicted += exp_eta(c.coefficients(scalar_row), row) * c.heterogeneity_mean(scalar_row);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientDraws("fit stores no site latents".into()));
    }
    Ok(PsiResult::new(data.site_ids[i].clone(), expected / n as f64, predicted / n as f64))
}

fn check_fit(chains: &[ChainDraws], data: &ModelData) -> Result<()> {
    let c = chains.first().ok_or_else(|| Error::InsufficientDraws("no chains".into()))?;
    if c.site_ids != data.site_ids || c.n_coef() != data.x.n_cols() {
        return Err(Error::Dimension("data sites or columns differ from the fitted ones".into()));
    }
    Ok(())
}

/// PSI of one fitted site, averaged over every stored latent draw.
pub fn psi(chains: &[ChainDraws], data: &ModelData, site_id: &str) -> Result<PsiResult> {
    check_fit(chains, data)?;
    let i = data.site_ids.iter().position(|s| s == site_id).ok_or_else(|| Error::UnknownSite(site_id.to_string()))?;
    site_psi(chains, data, i)
}

/// PSI of every fitted site, classified into zones.
pub fn psi_all(chains: &[ChainDraws], data: &ModelData) -> Result<Vec<PsiResult>> {
    check_fit(chains, data)?;
    let results = (0..data.n_sites()).into_par_iter().map(|i| site_psi(chains, data, i)).collect::<Result<Vec<_>>>()?;
    Ok(classify(results))
}

/// Number of hotspots among `n_pos` positive values: those at or above the
/// type-7 90th percentile, i.e. `n_pos − ⌈0.9 (n_pos − 1)⌉`.
pub fn hotspot_count(n_pos: usize) -> usize {
    if n_pos == 0 {
        0
    } else {
        n_pos - (9 * (n_pos - 1)).div_ceil(10)
    }
}

/// Hotspot: positive PSI at or above the 90th percentile of the positive
/// values. Normal: other nonnegative values. Cold: negative values.
pub fn classify(mut results: Vec<PsiResult>) -> Vec<PsiResult> {
    let mut pos: Vec<f64> = results.iter().map(|r| r.psi).filter(|&p| p > 0.0).collect();
    pos.sort_by(f64::total_cmp);
    let k = hotspot_count(pos.len());
    let threshold = if k > 0 { pos[pos.len() - k] } else { f64::INFINITY };
    for r in &mut results {
        r.zone = if r.psi < 0.0 {
            Zone::Cold
        } else if r.psi > 0.0 && r.psi >= threshold {
            Zone::Hotspot
        } else {
            Zone::Normal
        };
    }
    results
}

/// Results ordered by decreasing PSI, ties by site id.
pub fn ranked(results: &[PsiResult]) -> Vec<PsiResult> {
    let mut out = results.to_vec();
    out.sort_by(|a, b| b.psi.total_cmp(&a.psi).then_with(|| a.site_id.cmp(&b.site_id)));
    out
}

/// `site_id,expected,predicted,psi,zone` rows in ranked order.
pub fn psi_csv(results: &[PsiResult]) -> String {
    let mut s = String::from("rank,site_id,expected,predicted,psi,zone\n");
    for (k, r) in ranked(results).iter().enumerate() {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            k + 1,
            r.site_id,
            r.expected,
            r.predicted,
            r.psi,
            r.zone.name()
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorridorSummary {
    pub corridor: String,
    pub rank: usize,
    pub n_sites: usize,
    pub n_hotspots: usize,
    pub psi_sum: f64,
    /// Sum over the corridor's sites with positive PSI; ranking key.
    pub positive_psi_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorridorReport {
    pub corridors: Vec<CorridorSummary>,
    /// Sites without a corridor assignment.
    pub unassigned: Vec<String>,
    pub unassigned_psi_sum: f64,
}

/// Sums PSI by corridor and ranks corridors by their positive PSI, ties by
/// corridor id.
pub fn corridor_aggregate(results: &[PsiResult], corridor_of: &HashMap<String, String>) -> CorridorReport {
    let mut acc: BTreeMap<&str, CorridorSummary> = BTreeMap::new();
    let mut unassigned = Vec::new();
    let mut unassigned_psi_sum = 0.0;
    for r in results {
        let Some(c) = corridor_of.get(&r.site_id) else {
            unassigned.push(r.site_id.clone());
            unassigned_psi_sum += r.psi;
            continue;
        };
        let e = acc.entry(c.as_str()).or_insert_with(|| CorridorSummary {
            corridor: c.clone(),
            rank: 0,
            n_sites: 0,
            n_hotspots: 0,
            psi_sum: 0.0,
            positive_psi_sum: 0.0,
        });
        e.n_sites += 1;
        e.n_hotspots += usize::from(r.zone == Zone::Hotspot);
        e.psi_sum += r.psi;
        e.positive_psi_sum += r.psi.max(0.0);
    }
    let mut corridors: Vec<CorridorSummary> = acc.into_values().collect();
    corridors
        .sort_by(|a, b| b.positive_psi_sum.total_cmp(&a.positive_psi_sum).then_with(|| a.corridor.cmp(&b.corridor)));
    corridors.iter_mut().enumerate().for_each(|(k, c)| c.rank = k + 1);
    CorridorReport { corridors, unassigned, unassigned_psi_sum }
}

/// One stratum's 2×2 table: `a`/`b` exposed with/without the outcome,
/// `c`/`d` unexposed with/without it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl StratumTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self> {
        let t = StratumTable { a, b, c, d };
        if t.n() == 0 {
            return Err(Error::domain("stratum table has no observations"));
        }
        Ok(t)
    }

    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

#[derive(Deserialize)]
struct StratumRow {
    #[serde(default)]
    #[allow(dead_code)]
    stratum: Option<String>,
    a: u64,
    b: u64,
    c: u64,
    d: u64,
}

/// Reads stratum tables from a CSV with columns `a,b,c,d` (and an optional
/// `stratum` label).
pub fn read_strata(path: impl AsRef<Path>) -> Result<Vec<StratumTable>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: StratumRow = row?;
        out.push(StratumTable::new(r.a, r.b, r.c, r.d)?);
    }
    if out.is_empty() {
        return Err(Error::Config("no strata in file".into()));
    }
    Ok(out)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Nonnegative rational in lowest terms; `None` once it overflows.
#[derive(Clone, Copy)]
struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Ratio { num: num / g, den: den / g }
    }

    fn add(self, o: Ratio) -> Option<Ratio> {
        let g = gcd(self.den, o.den).max(1);
        let den = (self.den / g).checked_mul(o.den)?;
        let num = self.num.checked_mul(o.den / g)?.checked_add(o.num.checked_mul(self.den / g)?)?;
        Some(Ratio::new(num, den))
    }
}

/// `Σ num_s / n_s ÷ Σ den_s / n_s`, accumulated exactly in rationals so that
/// equal pooled fractions give bit-identical results; falls back to floating
/// point if the rationals overflow.
fn pooled(
    tables: &[StratumTable],
    num: impl Fn(&StratumTable) -> u64,
    den: impl Fn(&StratumTable) -> u64,
    what: &str,
) -> Result<f64> {
    if let Some(t) = tables.iter().find(|t| t.n() == 0) {
        return Err(Error::domain(format!("empty stratum table {t:?}")));
    }
    let exact = tables.iter().try_fold((Ratio::new(0, 1), Ratio::new(0, 1)), |(p, q), t| {
        let n = u128::from(t.n());
        Some((p.add(Ratio::new(u128::from(num(t)), n))?, q.add(Ratio::new(u128::from(den(t)), n))?))
    });
    let (n, d) = match exact {
        Some((p, q)) if q.num > 0 => match (p.num.checked_mul(q.den), q.num.checked_mul(p.den)) {
            (Some(a), Some(b)) => {
                let g = gcd(a, b).max(1);
                ((a / g) as f64, (b / g) as f64)
            }
            _ => (p.num as f64 / p.den as f64, q.num as f64 / q.den as f64),
        },
        Some(_) => (0.0, 0.0),
        None => (
            tables.iter().map(|t| num(t) as f64 / t.n() as f64).sum(),
            tables.iter().map(|t| den(t) as f64 / t.n() as f64).sum(),
        ),
    };
    if d <= 0.0 {
        return Err(Error::Undefined(format!("Mantel-Haenszel {what}: zero denominator")));
    }
    Ok(n / d)
}

/// `Σ a_s d_s / n_s ÷ Σ b_s c_s / n_s`.
pub fn mh_odds_ratio(tables: &[StratumTable]) -> Result<f64> {
    pooled(tables, |t| t.a * t.d, |t| t.b * t.c, "odds ratio")
}

/// `Σ a_s (c_s + d_s) / n_s ÷ Σ c_s (a_s + b_s) / n_s`.
pub fn mh_risk_ratio(tables: &[StratumTable]) -> Result<f64> {
    pooled(tables, |t| t.a * (t.c + t.d), |t| t.c * (t.a + t.b), "risk ratio")
}
