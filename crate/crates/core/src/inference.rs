//! Posterior summaries, DIC and average marginal effects from saved draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::nb_ln_pmf;
use crate::error::{Error, Result};
use crate::model_spec::{ColumnKind, ETA_CLAMP};
use crate::sampler::{batch_means_se, bgr_values, ChainDraws, ModelData};
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// 2.5% quantile (type 7).
    pub lower: f64,
    /// 97.5% quantile.
    pub upper: f64,
    /// `None` when the chains are too short or too few.
    pub bgr: Option<f64>,
    pub mc_error: Option<f64>,
    /// The 95% interval excludes zero.
    pub significant: bool,
}

impl ParamSummary {
    /// Summary of per-chain draws of one quantity.
    pub fn from_chains(name: &str, chains: &[&[f64]]) -> Result<Self> {
        let pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
        if pooled.is_empty() {
            return Err(Error::InsufficientDraws(format!("no draws for `{name}`")));
        }
        let mut sorted = pooled.clone();
        sorted.sort_by(f64::total_cmp);
        let lower = stats::quantile_sorted(&sorted, 0.025);
        let upper = stats::quantile_sorted(&sorted, 0.975);
        let mc_error = chains
            .iter()
            .map(|c| batch_means_se(c).map(|s| s * s))
            .sum::<Result<f64>>()
            .ok()
            .map(|s| s.sqrt() / chains.len() as f64);
        Ok(ParamSummary {
            name: name.to_string(),
            mean: stats::mean(&pooled),
            sd: if pooled.len() > 1 { stats::sd(&pooled) } else { 0.0 },
            lower,
            upper,
            bgr: bgr_values(chains).ok(),
            mc_error,
            significant: lower > 0.0 || upper < 0.0,
        })
    }
}

/// Scale on which coefficients are reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Sampled scale: continuous columns centered and divided by their SD.
    Standardized,
    /// Raw covariate units.
    Original,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub scale: Scale,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Delimiter-separated table with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,mean,sd,lower_95,upper_95,bgr,mc_error,significant\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for p in &self.params {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
                p.name,
                p.mean,
                p.sd,
                p.lower,
                p.upper,
                opt(p.bgr),
                opt(p.mc_error),
                p.significant
            ));
        }
        s
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let w = self.params.iter().map(|p| p.name.len()).max().unwrap_or(9).max(9);
        let mut s = format!(
            "{:<w$}  {:>10}  {:>9}  {:>10}  {:>10}  {:>6}  {:>9}\n",
            "parameter", "mean", "sd", "2.5%", "97.5%", "BGR", "MC error"
        );
        for p in &self.params {
            let bgr = p.bgr.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            let mc = p.mc_error.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "{:<w$}  {:>10.4}  {:>9.4}  {:>10.4}  {:>10.4}  {:>6}  {:>9}{}\n",
                p.name,
                p.mean,
                p.sd,
                p.lower,
                p.upper,
                bgr,
                mc,
                if p.significant { " *" } else { "" }
            ));
        }
        s
    }
}

/// Per-chain columns of every scalar parameter, with coefficients and
/// random-term SDs mapped to `scale`.
fn scalar_columns(chains: &[ChainDraws], scale: Scale) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    let first = chains.first().ok_or_else(|| Error::InsufficientDraws("no chains".into()))?;
    let p = first.n_coef();
    let mut out: Vec<(String, Vec<Vec<f64>>)> = first.names.iter().map(|n| (n.clone(), Vec::new())).collect();
    for c in chains {
        if c.names != first.names {
            return Err(Error::Dimension("chains disagree on parameter names".into()));
        }
        let n = c.n_draws();
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); c.names.len()];
        for k in 0..n {
            let row = c.row(k);
            let coefs = match scale {
                Scale::Standardized => row[..p].to_vec(),
                Scale::Original => c.coefficients_original(k)?,
            };
            for (j, v) in coefs.into_iter().enumerate() {
                cols[j].push(v);
            }
            for (j, v) in row.iter().enumerate().skip(p) {
                cols[j].push(*v);
            }
        }
        if scale == Scale::Original {
            for (k, &col) in c.random_columns.iter().enumerate() {
                if let Some(s) = c.column_stats[col] {
                    cols[p + k].iter_mut().for_each(|v| *v /= s.sd);
                }
            }
        }
        for (j, col) in cols.into_iter().enumerate() {
            out[j].1.push(col);
        }
    }
    Ok(out)
}

/// Pooled post-burn-in summaries of every scalar parameter.
pub fn summarize(chains: &[ChainDraws], scale: Scale) -> Result<PosteriorSummary> {
    let cols = scalar_columns(chains, scale)?;
    let params = cols
        .par_iter()
        .map(|(name, per_chain)| {
            let refs: Vec<&[f64]> = per_chain.iter().map(Vec::as_slice).collect();
            ParamSummary::from_chains(name, &refs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSummary { scale, n_chains: chains.len(), draws_per_chain: chains[0].n_draws(), params })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    /// Posterior mean deviance.
    pub dbar: f64,
    /// Deviance at the posterior means.
    pub d_at_mean: f64,
    pub pd: f64,
    pub dic: f64,
}

impl DicReport {
    /// Report from a posterior mean deviance and effective parameter count.
    pub fn from_parts(dbar: f64, pd: f64) -> Self {
        DicReport { dbar, d_at_mean: dbar - pd, pd, dic: dbar + pd }
    }

    pub fn from_deviances(dbar: f64, d_at_mean: f64) -> Self {
        Self::from_parts(dbar, dbar - d_at_mean)
    }
}

/// Mean of `−2 · loglik` over every stored draw of every chain.
fn dbar_from_trace(chains: &[ChainDraws]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in chains {
        let ll = c.column("loglik").ok_or_else(|| Error::MissingColumn("loglik".into()))?;
        sum += ll.iter().map(|v| -2.0 * v).sum::<f64>();
        n += ll.len();
    }
    if n == 0 {
        return Err(Error::InsufficientDraws("empty log-likelihood trace".into()));
    }
    Ok(sum / n as f64)
}

fn check_data(chains: &[ChainDraws], data: &ModelData) -> Result<()> {
    let c = chains.first().ok_or_else(|| Error::InsufficientDraws("no chains".into()))?;
    if data.n_sites() != c.n_sites() || data.x.n_cols() != c.n_coef() {
        return Err(Error::Dimension(format!(
            "fit has {} sites and {} columns; data has {} and {}",
            c.n_sites(),
            c.n_coef(),
            data.n_sites(),
            data.x.n_cols()
        )));
    }
    Ok(())
}

/// Conditional log likelihood at latent draw `k` of one chain, recomputed
/// from the stored coefficients, site effects and φ.
pub fn latent_log_likelihood(c: &ChainDraws, data: &ModelData, k: usize) -> f64 {
    let row = c.latent_rows[k] as usize;
    let phi = c.value(row, "phi").unwrap_or(f64::NAN);
    let lambda = c.lambda_row(k);
    (0..c.n_sites())
        .map(|i| {
            let b = c.site_coefficients(k, i);
            let eta: f64 = b.iter().zip(data.x.row(i)).map(|(b, x)| b * x).sum();
            let mean = (eta.clamp(-ETA_CLAMP, ETA_CLAMP) + lambda[i].ln()).exp();
            nb_ln_pmf(data.y[i], mean, phi)
        })
        .sum()
}

/// Posterior mean deviance over the latent draws, recomputed from the saved
/// state rather than read from the trace. Returns `(recomputed, logged)`
/// where `logged` is the trace average over the same draws.
pub fn recompute_dbar(chains: &[ChainDraws], data: &ModelData) -> Result<(f64, f64)> {
    check_data(chains, data)?;
    let mut rec = 0.0;
    let mut logged = 0.0;
    let mut n = 0usize;
    for c in chains {
        let j = c.index_of("loglik").ok_or_else(|| Error::MissingColumn("loglik".into()))?;
        for k in 0..c.n_latent() {
            rec += -2.0 * latent_log_likelihood(c, data, k);
            logged += -2.0 * c.row(c.latent_rows[k] as usize)[j];
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientDraws("no latent draws stored".into()));
    }
    Ok((rec / n as f64, logged / n as f64))
}

/// DIC with the deviance conditional on the site effects: `D̄` is the
/// posterior mean of `−2 Σ ln NB(y_i; φ, λ_i μ_i)`, and `D(θ̄)` plugs in the
/// posterior means of every site's coefficients, of every `λ_i` and of `φ`.
pub fn dic(chains: &[ChainDraws], data: &ModelData) -> Result<DicReport> {
    check_data(chains, data)?;
    let dbar = dbar_from_trace(chains)?;
    let n = data.n_sites();
    let p = data.x.n_cols();
    let mut b_bar = vec![0.0; n * p];
    let mut lambda_bar = vec![0.0; n];
    let mut n_latent = 0usize;
    let mut phi_sum = 0.0;
    let mut n_draws = 0usize;
    for c in chains {
        let j = c.index_of("phi").ok_or_else(|| Error::MissingColumn("phi".into()))?;
        for k in 0..c.n_draws() {
            phi_sum += c.row(k)[j];
        }
        n_draws += c.n_draws();
        for k in 0..c.n_latent() {
            let lam = c.lambda_row(k);
            for i in 0..n {
                let b = c.site_coefficients(k, i);
                b_bar[i * p..(i + 1) * p].iter_mut().zip(&b).for_each(|(s, v)| *s += v);
                lambda_bar[i] += lam[i];
            }
            n_latent += 1;
        }
    }
    if n_latent == 0 || n_draws == 0 {
        return Err(Error::InsufficientDraws("no latent draws stored".into()));
    }
    let phi_bar = phi_sum / n_draws as f64;
    let ll: f64 = (0..n)
        .map(|i| {
            let b = &b_bar[i * p..(i + 1) * p];
            let eta: f64 = b.iter().zip(data.x.row(i)).map(|(b, x)| b / n_latent as f64 * x).sum();
            let mean = eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp() * lambda_bar[i] / n_latent as f64;
            nb_ln_pmf(data.y[i], mean, phi_bar)
        })
        .sum();
    Ok(DicReport::from_deviances(dbar, -2.0 * ll))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    /// Derivative of the expected frequency with respect to the design
    /// column (the log of the covariate for `ln(·)` terms).
    Derivative,
    /// Difference of expected frequencies between the indicator at 1 and 0
    /// (for one-hot groups: the level versus the reference level).
    Difference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub column: String,
    pub kind: EffectKind,
    /// Average over sites of the posterior-mean effect.
    pub mean: f64,
    /// 95% interval of the site-averaged effect across draws.
    pub lower: f64,
    pub upper: f64,
    /// Posterior-mean effect of each site.
    pub per_site: Vec<f64>,
}

/// Expected frequency `exp(x'b) · E(λ)` of one standardized design row.
#[inline]
fn expected(b: &[f64], row: &[f64], e_lambda: f64) -> f64 {
    let eta: f64 = b.iter().zip(row).map(|(b, x)| b * x).sum();
    eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp() * e_lambda
}

/// Effect of column `j` at one site for one draw. `b` is on the standardized
/// scale; `scale_j` converts the derivative to raw column units.
fn site_effect(
    b: &[f64],
    row: &[f64],
    e_lambda: f64,
    j: usize,
    kind: EffectKind,
    group: &[usize],
    scale_j: f64,
) -> f64 {
    match kind {
        EffectKind::Derivative => b[j] / scale_j * expected(b, row, e_lambda),
        EffectKind::Difference => {
            let mut r = row.to_vec();
            group.iter().for_each(|&g| r[g] = 0.0);
            let off = expected(b, &r, e_lambda);
            r[j] = 1.0;
            expected(b, &r, e_lambda) - off
        }
    }
}

/// Average marginal effects of the requested design columns (all
/// non-intercept columns when `columns` is empty), using the fixed
/// coefficients and the population mean `E(λ)` of each draw. Continuous
/// columns give `b_j · E[y_i]` in raw column units; indicators give the exact
/// difference of expected frequencies.
pub fn marginal_effects(chains: &[ChainDraws], data: &ModelData, columns: &[&str]) -> Result<Vec<MarginalEffect>> {
    check_data(chains, data)?;
    let cols = data.x.columns();
    let names = data.x.names();
    let selected: Vec<usize> = if columns.is_empty() {
        (1..cols.len()).collect()
    } else {
        columns
            .iter()
            .map(|c| {
                let j = names.iter().position(|n| n == c).ok_or_else(|| Error::MissingColumn(c.to_string()))?;
                if cols[j].kind == ColumnKind::Intercept {
                    return Err(Error::Config("the intercept has no marginal effect".into()));
                }
                Ok(j)
            })
            .collect::<Result<_>>()?
    };
    let n = data.n_sites();
    let total: usize = chains.iter().map(ChainDraws::n_draws).sum();
    if total == 0 {
        return Err(Error::InsufficientDraws("no draws".into()));
    }
    selected
        .par_iter()
        .map(|&j| {
            let kind =
                if cols[j].kind == ColumnKind::Continuous { EffectKind::Derivative } else { EffectKind::Difference };
            let group: Vec<usize> = match kind {
                EffectKind::Derivative => Vec::new(),
                EffectKind::Difference => {
                    let same_term = |g: usize| cols[g].term == cols[j].term && cols[g].kind == ColumnKind::Binary;
                    (1..cols.len()).filter(|&g| same_term(g)).collect()
                }
            };
            let scale_j = data.x.stats()[j].map_or(1.0, |s| s.sd);
            let mut per_site = vec![0.0; n];
            let mut averages = Vec::with_capacity(total);
            for c in chains {
                for k in 0..c.n_draws() {
                    let b = c.coefficients(k);
                    let e_lambda = c.heterogeneity_mean(k);
                    let mut avg = 0.0;
                    for (i, acc) in per_site.iter_mut().enumerate() {
                        let e = site_effect(b, data.x.row(i), e_lambda, j, kind, &group, scale_j);
                        *acc += e;
                        avg += e;
                    }
                    averages.push(avg / n as f64);
                }
            }
            per_site.iter_mut().for_each(|v| *v /= total as f64);
            averages.sort_by(f64::total_cmp);
            Ok(MarginalEffect {
                column: names[j].clone(),
                kind,
                mean: per_site.iter().sum::<f64>() / n as f64,
                lower: stats::quantile_sorted(&averages, 0.025),
                upper: stats::quantile_sorted(&averages, 0.975),
                per_site,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample_normal;
    use crate::model_spec::{Column, DesignMatrix, Family, Formula};
    use crate::sampler::McmcConfig;
    use crate::Severity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fake_chain(chain: usize, family: Family, names: &[&str], rows: &[Vec<f64>], n_sites: usize) -> ChainDraws {
        let p = names.iter().take_while(|n| !n.starts_with("sd[") && **n != "phi").count();
        ChainDraws {
            chain,
            seed: chain as u64,
            family,
            formula: Formula::intercept_only(Severity::Kabco),
            config: McmcConfig::default(),
            column_stats: vec![None; p],
            site_ids: (0..n_sites).map(|i| format!("s{i}")).collect(),
            names: names.iter().map(|s| s.to_string()).collect(),
            scalars: rows.iter().flatten().copied().collect(),
            latent_rows: Vec::new(),
            lambda: Vec::new(),
            z: Vec::new(),
            random_columns: Vec::new(),
            site_coefs: Vec::new(),
            acceptance: Vec::new(),
        }
    }

    fn one_column_data(values: &[f64], kind: ColumnKind, y: &[u64]) -> ModelData {
        let cols = vec![
            Column { name: "intercept".into(), kind: ColumnKind::Intercept, term: None },
            Column { name: "x".into(), kind, term: Some(0) },
        ];
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![1.0, *v]).collect();
        ModelData {
            x: DesignMatrix::from_rows(cols, &rows).unwrap(),
            y: y.to_vec(),
            site_ids: (0..y.len()).map(|i| format!("s{i}")).collect(),
        }
    }

    #[test]
    fn constant_chain_summary() {
        let c = vec![2.0; 500];
        let s = ParamSummary::from_chains("b", &[&c, &c]).unwrap();
        assert_eq!((s.mean, s.sd, s.lower, s.upper), (2.0, 0.0, 2.0, 2.0));
        assert!(s.significant);
        assert_eq!(s.bgr, Some(1.0));
        assert!(ParamSummary::from_chains("b", &[&[]]).is_err());
    }

    #[test]
    fn normal_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chains: Vec<Vec<f64>> =
            (0..2).map(|_| (0..500_000).map(|_| sample_normal(0.0, 1.0, &mut rng)).collect()).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let s = ParamSummary::from_chains("z", &refs).unwrap();
        assert!((s.lower + 1.959964).abs() < 0.02 && (s.upper - 1.959964).abs() < 0.02);
        assert!(!s.significant);
    }

    #[test]
    fn dic_identity_on_published_triples() {
        let a = DicReport::from_parts(992.13, 201.1);
        assert!((a.dic - 1193.23).abs() < 1e-9);
        let b = DicReport::from_parts(1114.06, 119.5);
        assert!((b.dic - 1233.56).abs() < 1e-9);
        let c = DicReport::from_deviances(10.0, 7.5);
        assert_eq!(c.dic, c.dbar + c.pd);
    }

    #[test]
    fn frozen_parameters_give_zero_pd() {
        // NB with b0 = ln 2, φ = 3 at every draw
        let y = [0u64, 1, 4, 2];
        let data = one_column_data(&[0.0, 1.0, 0.0, 1.0], ColumnKind::Binary, &y);
        let ll: f64 = y.iter().map(|&v| nb_ln_pmf(v, 2.0, 3.0)).sum();
        let row = vec![2f64.ln(), 0.0, 3.0, ll];
        let mut chain = fake_chain(0, Family::Nb, &["intercept", "x", "phi", "loglik"], &vec![row; 50], 4);
        chain.latent_rows = (0..50).step_by(10).collect();
        chain.lambda = vec![1.0; 5 * 4];
        chain.z = vec![0; 5 * 4];
        let chains = vec![chain.clone(), chain];
        let r = dic(&chains, &data).unwrap();
        assert!(r.pd.abs() < 1e-9, "{r:?}");
        assert!((r.dbar + 2.0 * ll).abs() < 1e-9);
        let (rec, logged) = recompute_dbar(&chains, &data).unwrap();
        assert!((rec - logged).abs() < 1e-9);
    }

    #[test]
    fn marginal_effect_examples() {
        // ME = b · E[y] at unit expected mean
        let data = one_column_data(&[0.0], ColumnKind::Continuous, &[0]);
        let rows = vec![vec![0.0, 0.336, 1.0, 0.0]; 10];
        let chains = vec![fake_chain(0, Family::Nb, &["intercept", "x", "phi", "loglik"], &rows, 1)];
        let me = marginal_effects(&chains, &data, &["x"]).unwrap();
        assert!((me[0].mean - 0.336).abs() < 1e-12);
        assert_eq!(me[0].kind, EffectKind::Derivative);

        // indicator with b = ln 2 at b0 = 0: 2 − 1
        let data = one_column_data(&[0.0], ColumnKind::Binary, &[0]);
        let rows = vec![vec![0.0, 2f64.ln(), 1.0, 0.0]; 10];
        let chains = vec![fake_chain(0, Family::Nb, &["intercept", "x", "phi", "loglik"], &rows, 1)];
        let me = marginal_effects(&chains, &data, &[]).unwrap();
        assert!((me[0].mean - 1.0).abs() < 1e-12);

        let rows = vec![vec![0.3, 0.0, 1.0, 0.0]; 10];
        let chains = vec![fake_chain(0, Family::Nb, &["intercept", "x", "phi", "loglik"], &rows, 1)];
        assert_eq!(marginal_effects(&chains, &data, &[]).unwrap()[0].mean, 0.0);
        assert!(matches!(marginal_effects(&chains, &data, &["aadt"]), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn lindley_population_mean_enters_effects() {
        let data = one_column_data(&[0.0], ColumnKind::Continuous, &[0]);
        let theta = 2f64.sqrt();
        let rows = vec![vec![0.0, 0.5, 1.0, theta, 0.0]; 4];
        let chains = vec![fake_chain(0, Family::NbL, &["intercept", "x", "phi", "theta", "loglik"], &rows, 1)];
        let me = marginal_effects(&chains, &data, &["x"]).unwrap();
        assert!((me[0].mean - 0.5).abs() < 1e-9);
    }

    #[test]
    fn summary_maps_to_original_scale() {
        let mut c =
            fake_chain(0, Family::Nb, &["intercept", "x", "phi", "loglik"], &vec![vec![1.0, 2.0, 1.0, 0.0]; 100], 3);
        c.column_stats = vec![None, Some(crate::model_spec::ColumnStats { mean: 10.0, sd: 4.0 })];
        let s = summarize(&[c.clone(), c], Scale::Original).unwrap();
        assert!((s.get("x").unwrap().mean - 0.5).abs() < 1e-12);
        assert!((s.get("intercept").unwrap().mean - (1.0 - 5.0)).abs() < 1e-12);
        assert!(s.to_csv().starts_with("parameter,mean"));
    }
}
