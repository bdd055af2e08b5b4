//! End-to-end acceptance suite. Every test prints one `criterion N: PASS|FAIL`
//! line before asserting, so `--nocapture` gives a readable scorecard.

mod common;

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use common::intercept_data;
use crashfreq::data::{synthesize, GeneratorConfig, Heterogeneity, TermTruth};
use crashfreq::evaluation::{cure, mae, predict, rmse};
use crashfreq::inference::{marginal_effects, summarize, DicReport, EffectKind, Scale};
use crashfreq::model_spec::{ColumnKind, DesignMatrix, Family, Formula, ModelSpec};
use crashfreq::sampler::{bgr, bgr_values, mc_error, run, ChainDraws, FixedValues, McmcConfig, ModelData};
use crashfreq::screening::{classify, corridor_aggregate, mh_odds_ratio, PsiResult, StratumTable, Zone};
use crashfreq::stats::{
    effective_sample_size, ks_one_sample, ks_one_sample_critical, ks_two_sample, ks_two_sample_critical,
};
use crashfreq::{LindleyParam, Severity};

fn verdict(n: u32, ok: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_01_dic_identity() {
    let t = Instant::now();
    let a = DicReport::from_parts(992.13, 201.1);
    let b = DicReport::from_parts(1114.06, 119.5);
    let (ea, eb) = ((a.dic - 1193.23).abs(), (b.dic - 1233.56).abs());
    let ok = ea < 1e-9 && eb < 1e-9 && t.elapsed().as_secs_f64() < 1.0;
    verdict(1, ok, &format!("dic {:.2} and {:.2} (errors {ea:.1e}, {eb:.1e})", a.dic, b.dic));
}

/// Composite Simpson over `[0, hi]` with `k` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, hi: f64, k: usize) -> f64 {
    let h = hi / k as f64;
    let inner: f64 = (1..k).map(|j| f(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(0.0) + inner + f(hi)) * h / 3.0
}

#[test]
#[allow(clippy::approx_constant)]
fn criterion_02_lindley_analytics() {
    let t = Instant::now();
    let m1 = LindleyParam::new(1.414214).unwrap().moment(1).unwrap();
    let mut worst_norm = 0.0f64;
    for theta in [0.5, 1.0, 2f64.sqrt(), 5.0] {
        let l = LindleyParam::new(theta).unwrap();
        let mass = simpson(|x| l.pdf(x).unwrap(), 120.0 / theta, 200_000);
        worst_norm = worst_norm.max((mass - 1.0).abs());
    }
    let mut worst_z = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for theta in [0.5, 1.378, 3.0] {
        let l = LindleyParam::new(theta).unwrap();
        let n = 1_000_000;
        let mean = (0..n).map(|_| l.sample(&mut rng)).sum::<f64>() / n as f64;
        // E(λ) = (θ + 2) / (θ (θ + 1)), E(λ²) = 2 (θ + 3) / (θ² (θ + 1))
        let m = (theta + 2.0) / (theta * (theta + 1.0));
        let v = 2.0 * (theta + 3.0) / (theta * theta * (theta + 1.0)) - m * m;
        worst_z = worst_z.max((mean - m).abs() / (v / n as f64).sqrt());
    }
    let ok = (m1 - 1.0).abs() < 1e-6 && worst_norm < 1e-8 && worst_z < 3.0 && t.elapsed().as_secs_f64() < 10.0;
    verdict(2, ok, &format!("E(λ) at 1.414214 = {m1:.9}; max |mass - 1| {worst_norm:.1e}; max |z| {worst_z:.2}"));
}

#[test]
fn criterion_03_mixture_equivalence() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let crit = ks_two_sample_critical(n, n, 0.01);
    let mut worst = 0.0f64;
    for theta in [0.5, 1.378, 3.0] {
        let l = LindleyParam::new(theta).unwrap();
        let a: Vec<f64> = (0..n).map(|_| l.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| l.sample_mixture(&mut rng)).collect();
        worst = worst.max(ks_two_sample(&a, &b));
    }
    let ok = worst < crit && t.elapsed().as_secs_f64() < 10.0;
    verdict(3, ok, &format!("max KS {worst:.5} vs critical {crit:.5}"));
}

fn nb_ln_pmf_oracle(y: u64, mean: f64, phi: f64) -> f64 {
    let y = y as f64;
    ln_gamma(y + phi) - ln_gamma(phi) - ln_gamma(y + 1.0)
        + phi * (phi / (phi + mean)).ln()
        + y * (mean / (phi + mean)).ln()
}

/// Log marginal likelihood of one site with λ integrated out on `u = ln λ`.
fn site_marginal(y: u64, b0: f64, theta: f64, phi: f64) -> f64 {
    let (lo, hi, k) = (-40.0, (80.0 / theta).ln(), 4000usize);
    let h = (hi - lo) / k as f64;
    let ln_norm = 2.0 * theta.ln() - theta.ln_1p();
    let terms: Vec<f64> = (0..=k)
        .map(|j| {
            let u = lo + j as f64 * h;
            let l = u.exp();
            nb_ln_pmf_oracle(y, (b0 + u).exp(), phi) + ln_norm + l.ln_1p() - theta * l + u
        })
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().enumerate().map(|(j, t)| (t - m).exp() * if j == 0 || j == k { 0.5 } else { 1.0 }).sum();
    m + (s * h).ln()
}

#[test]
fn criterion_04_micro_posterior() {
    let t = Instant::now();
    let (y, theta, phi) = ([0u64, 2, 5], 1.378, 2.0);
    let (lo, hi, k) = (-8.0, 22.0, 6000usize);
    let h = (hi - lo) / k as f64;
    let log_post: Vec<f64> = (0..=k)
        .into_par_iter()
        .map(|j| {
            let b0 = lo + j as f64 * h;
            -b0 * b0 / 2e4 + y.iter().map(|&yi| site_marginal(yi, b0, theta, phi)).sum::<f64>()
        })
        .collect();
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(
        log_post[0] < top - 30.0 && log_post[k] < top - 30.0,
        "grid does not cover the posterior: {} {} {top}",
        log_post[0],
        log_post[k]
    );
    let dens: Vec<f64> = log_post.iter().map(|l| (l - top).exp()).collect();
    let mut cum = vec![0.0; k + 1];
    for j in 1..=k {
        cum[j] = cum[j - 1] + 0.5 * h * (dens[j - 1] + dens[j]);
    }
    let total = cum[k];
    let cdf = |x: f64| -> f64 {
        let pos = ((x - lo) / h).clamp(0.0, k as f64 - 1e-9);
        let j = pos.floor() as usize;
        (cum[j] + (pos - j as f64) * (cum[j + 1] - cum[j])) / total
    };

    let data = intercept_data(&y);
    let spec = ModelSpec::new(Family::NbL, Formula::intercept_only(Severity::Kabco), y.len()).unwrap();
    let cfg = McmcConfig {
        n_chains: 2,
        n_iter: 12_000,
        burn_in: 2_000,
        seed: 4,
        fixed: FixedValues { theta: Some(theta), phi: Some(phi), ..Default::default() },
        ..Default::default()
    };
    let fit = run(&spec, &data, &cfg).unwrap();
    let per_chain: Vec<Vec<f64>> = fit.iter().map(|c| c.column("intercept").unwrap()).collect();
    let pooled = per_chain.concat();
    let ess: f64 = per_chain.iter().map(|c| effective_sample_size(c).min(c.len() as f64)).sum();
    let d = ks_one_sample(&pooled, cdf);
    let crit = ks_one_sample_critical(ess, 0.01);
    let ok = pooled.len() == 20_000 && d < crit && t.elapsed().as_secs_f64() < 60.0;
    verdict(4, ok, &format!("KS {d:.4} vs critical {crit:.4} ({} draws, ess {ess:.0})", pooled.len()));
}

#[test]
fn criterion_05_parameter_recovery() {
    let t = Instant::now();
    let reps = 5;
    let mut bgr_ok = 0;
    let mut covered: Vec<usize> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for rep in 0..reps {
        let gen = GeneratorConfig::published_rpnbl(596, 500 + rep);
        let syn = synthesize(&gen).unwrap();
        let formula = gen.formula().unwrap();
        let data = ModelData::from_records(&syn.records, &formula).unwrap();
        let spec = ModelSpec::new(Family::RpnbL, formula, 596).unwrap();
        let cfg = McmcConfig { n_chains: 3, n_iter: 20_000, burn_in: 8_000, seed: 50 + rep, ..Default::default() };
        let fit = run(&spec, &data, &cfg).unwrap();
        let summary = summarize(&fit, Scale::Standardized).unwrap();
        names = fit[0].coefficient_names().to_vec();
        covered.resize(names.len(), 0);
        let mut all_bgr = true;
        for (j, name) in names.iter().enumerate() {
            let p = summary.get(name).unwrap();
            let truth = syn.truth.coefficient(name).unwrap();
            all_bgr &= p.bgr.is_some_and(|r| r < 1.1);
            if p.lower <= truth && truth <= p.upper {
                covered[j] += 1;
            } else {
                println!("  rep {rep}: {name} truth {truth:.3} outside [{:.3}, {:.3}]", p.lower, p.upper);
            }
        }
        bgr_ok += usize::from(all_bgr);
    }
    let worst = names.iter().zip(&covered).min_by_key(|(_, c)| **c).unwrap();
    let ok = bgr_ok >= 4 && covered.iter().all(|&c| c >= 4);
    verdict(
        5,
        ok,
        &format!(
            "BGR < 1.1 in {bgr_ok}/{reps} reps; lowest coverage {} ({}/{reps}); {:.0} s",
            worst.0,
            worst.1,
            t.elapsed().as_secs_f64()
        ),
    );
}

fn raw_chains(traces: &[Vec<f64>]) -> Vec<ChainDraws> {
    traces
        .iter()
        .enumerate()
        .map(|(k, t)| ChainDraws {
            chain: k,
            seed: k as u64,
            family: Family::Nb,
            formula: Formula::intercept_only(Severity::Kabco),
            config: McmcConfig::default(),
            column_stats: Vec::new(),
            site_ids: Vec::new(),
            names: vec!["x".into()],
            scalars: t.clone(),
            latent_rows: Vec::new(),
            lambda: Vec::new(),
            z: Vec::new(),
            random_columns: Vec::new(),
            site_coefs: Vec::new(),
            acceptance: Vec::new(),
        })
        .collect()
}

#[test]
fn criterion_06_convergence_gates() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let gen = GeneratorConfig {
        terms: vec![TermTruth::fixed("ln(aadt)", 0.3)],
        heterogeneity: Heterogeneity::Lindley { theta: 1.5 },
        ..GeneratorConfig::published_rpnbl(200, 6)
    };
    let syn = synthesize(&gen).unwrap();
    let formula = gen.formula().unwrap();
    let data = ModelData::from_records(&syn.records, &formula).unwrap();
    let spec = ModelSpec::new(Family::NbL, formula, 200).unwrap();
    let cfg = McmcConfig { n_iter: 3_000, burn_in: 1_000, seed: 6, ..Default::default() };
    let fit = run(&spec, &data, &cfg).unwrap();
    let toy = ["intercept", "ln(aadt)"].iter().map(|p| bgr(&fit, p).unwrap()).fold(0.0, f64::max);

    let std = NormalDist::new(0.0, 1.0).unwrap();
    let a: Vec<f64> = (0..2000).map(|_| std.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..2000).map(|_| 10.0 + std.sample(&mut rng)).collect();
    let separated = bgr_values(&[&a, &b]).unwrap();

    let (rho, n) = (0.99f64, 30_000);
    let ar: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let mut x = std.sample(&mut rng) / (1.0 - rho * rho).sqrt();
            (0..n)
                .map(|_| {
                    x = rho * x + std.sample(&mut rng);
                    x
                })
                .collect()
        })
        .collect();
    let mc = mc_error(&raw_chains(&ar), "x").unwrap();
    let iid_se = mc.sd / ((3 * n) as f64).sqrt();
    let iid_pass = iid_se < 0.03 * mc.sd;
    let ok = toy < 1.1 && separated > 2.0 && iid_pass && !mc.pass && t.elapsed().as_secs_f64() < 10.0;
    verdict(
        6,
        ok,
        &format!(
            "toy BGR {toy:.3}; separated BGR {separated:.2}; AR(1) mcse/sd {:.4} flagged, iid {:.4} passes",
            mc.mcse / mc.sd,
            iid_se / mc.sd
        ),
    );
}

#[test]
fn criterion_07_mh_oracle() {
    let t = Instant::now();
    let single = StratumTable::new(10, 20, 20, 10).unwrap();
    let single_ok = mh_odds_ratio(&[single]).unwrap() == (10.0 * 10.0) / (20.0 * 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ad_bc_ok = true;
    for _ in 0..1000 {
        let [a, b, c, d]: [u64; 4] = std::array::from_fn(|_| rng.random_range(1..500));
        ad_bc_ok &=
            mh_odds_ratio(&[StratumTable::new(a, b, c, d).unwrap()]).unwrap() == (a * d) as f64 / (b * c) as f64;
    }
    let two = [StratumTable::new(5, 5, 10, 20).unwrap(), StratumTable::new(2, 8, 4, 16).unwrap()];
    let hand = (5.0 * 20.0 / 40.0 + 2.0 * 16.0 / 30.0) / (5.0 * 10.0 / 40.0 + 8.0 * 4.0 / 30.0);
    let or = mh_odds_ratio(&two).unwrap();
    let doubled = [two[0], two[1], two[0], two[1]];
    let dup_ok = mh_odds_ratio(&doubled).unwrap() == or;
    let ok = single_ok
        && ad_bc_ok
        && (or - hand).abs() < 1e-4
        && (or - 1.5396).abs() < 1e-4
        && dup_ok
        && t.elapsed().as_secs_f64() < 1.0;
    verdict(
        7,
        ok,
        &format!(
            "two-stratum OR {or:.4}; single-stratum ad/bc exact {}; duplication exact {dup_ok}",
            single_ok && ad_bc_ok
        ),
    );
}

/// Hotspot membership by explicit sort: positive values at or above the
/// type-7 90th percentile of the positives, located by exact rank.
fn hotspot_oracle(psi: &[f64]) -> Vec<bool> {
    let mut pos: Vec<f64> = psi.iter().copied().filter(|&p| p > 0.0).collect();
    if pos.is_empty() {
        return vec![false; psi.len()];
    }
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h9 = 9 * (pos.len() - 1);
    let idx = h9 / 10 + usize::from(h9 % 10 != 0);
    psi.iter().map(|&p| p > 0.0 && p >= pos[idx]).collect()
}

#[test]
fn criterion_08_psi_classification() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    let mut worst_conservation = 0.0f64;
    for inst in 0..1000 {
        let n = rng.random_range(1..300);
        let coarse = inst % 3 == 0;
        let results: Vec<PsiResult> = (0..n)
            .map(|i| {
                let expected =
                    if coarse { f64::from(rng.random_range(0..12u32)) / 4.0 } else { rng.random_range(0.0..5.0) };
                let predicted =
                    if coarse { f64::from(rng.random_range(0..12u32)) / 4.0 } else { rng.random_range(0.0..5.0) };
                PsiResult::new(format!("s{i}"), expected, predicted)
            })
            .collect();
        let classified = classify(results);
        let psi: Vec<f64> = classified.iter().map(|r| r.psi).collect();
        let oracle = hotspot_oracle(&psi);
        for (r, &hot) in classified.iter().zip(&oracle) {
            let cold = r.psi < 0.0;
            let expected_zone = if hot {
                Zone::Hotspot
            } else if cold {
                Zone::Cold
            } else {
                Zone::Normal
            };
            mismatches += usize::from(r.zone != expected_zone || r.psi != r.expected - r.predicted);
        }
        let corridor_of: HashMap<String, String> = classified
            .iter()
            .filter_map(|r| {
                let c = rng.random_range(0..8);
                (c < 7).then(|| (r.site_id.clone(), format!("c{c}")))
            })
            .collect();
        let report = corridor_aggregate(&classified, &corridor_of);
        let total: f64 = psi.iter().sum();
        let parts: f64 = report.corridors.iter().map(|c| c.psi_sum).sum::<f64>() + report.unassigned_psi_sum;
        worst_conservation = worst_conservation.max((total - parts).abs());
    }
    let ok = mismatches == 0 && worst_conservation < 1e-9 && t.elapsed().as_secs_f64() < 5.0;
    verdict(
        8,
        ok,
        &format!("{mismatches} zone mismatches over 1000 instances; corridor drift {worst_conservation:.1e}"),
    );
}

#[test]
fn criterion_09_cure_calibration() {
    let t = Instant::now();
    let reps = 50u64;
    let outcomes: Vec<(f64, bool)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let gen = GeneratorConfig::published_rpnbl(596, 900 + rep);
            let syn = synthesize(&gen).unwrap();
            let formula = gen.formula().unwrap();
            let data = ModelData::from_records(&syn.records, &formula).unwrap();
            let spec = ModelSpec::new(Family::RpnbL, formula, 596).unwrap();
            let cfg = McmcConfig { n_chains: 2, n_iter: 3_000, burn_in: 1_500, seed: rep, ..Default::default() };
            let fit = run(&spec, &data, &cfg).unwrap();
            let predicted = predict(&fit, &data.x).unwrap();
            let aadt: Vec<f64> = syn.records.iter().map(|r| r.aadt).collect();
            let curve = cure("aadt", &data.y, &predicted, &aadt, &data.site_ids).unwrap();
            let residual_sum = curve.points.iter().map(|p| p.residual).sum::<f64>();
            let last = curve.points.last().unwrap();
            (curve.fraction_outside(), last.cumulative == residual_sum && last.band == 0.0)
        })
        .collect();
    let avg = outcomes.iter().map(|o| o.0).sum::<f64>() / reps as f64;
    let terminal = outcomes.iter().all(|o| o.1);
    let secs = t.elapsed().as_secs_f64();
    let ok = avg <= 0.10 && terminal && secs < 300.0;
    verdict(
        9,
        ok,
        &format!("mean fraction outside {avg:.4} over {reps} reps; terminal value exact {terminal}; {secs:.0} s"),
    );
}

fn effect_fit() -> (Vec<ChainDraws>, ModelData) {
    let gen = GeneratorConfig {
        terms: vec![
            TermTruth::fixed("ln(aadt)", 0.345),
            TermTruth::fixed("avg_on", 0.1),
            TermTruth::fixed("speed_limit>=35", 0.448),
            TermTruth::fixed("proximity=far", -0.251),
        ],
        ..GeneratorConfig::published_rpnbl(150, 10)
    };
    let syn = synthesize(&gen).unwrap();
    let formula = gen.formula().unwrap();
    let data = ModelData::from_records(&syn.records, &formula).unwrap();
    let spec = ModelSpec::new(Family::NbL, formula, 150).unwrap();
    let cfg = McmcConfig { n_chains: 2, n_iter: 1_500, burn_in: 500, seed: 10, ..Default::default() };
    (run(&spec, &data, &cfg).unwrap(), data)
}

/// Posterior-mean expected frequency of the given standardized rows.
fn expected_rows(fit: &[ChainDraws], data: &ModelData, rows: &[Vec<f64>]) -> Vec<f64> {
    let x = DesignMatrix::from_rows(data.x.columns().to_vec(), rows).unwrap();
    predict(fit, &x).unwrap()
}

#[test]
fn criterion_10_metric_identities() {
    let t = Instant::now();
    let obs = [0u64, 1, 2, 3];
    let pred = [0.5, 1.0, 1.0, 5.0];
    let hand_ok = (mae(&obs, &pred).unwrap() - 0.875).abs() < 1e-15
        && (rmse(&obs, &pred).unwrap() - 1.3125f64.sqrt()).abs() < 1e-15;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut order_ok = true;
    for _ in 0..10_000 {
        let n = rng.random_range(1..50);
        let o: Vec<u64> = (0..n).map(|_| rng.random_range(0..20)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
        order_ok &= rmse(&o, &p).unwrap() >= mae(&o, &p).unwrap();
    }

    let (fit, data) = effect_fit();
    let effects = marginal_effects(&fit, &data, &[]).unwrap();
    let cols = data.x.columns();
    let names = data.x.names();
    let n = data.n_sites();
    let mut worst = 0.0f64;
    for e in &effects {
        let j = names.iter().position(|c| *c == e.column).unwrap();
        let mut rows = Vec::with_capacity(2 * n);
        let mut step = 0.0;
        match e.kind {
            EffectKind::Derivative => {
                // one raw unit of the design column is 1/sd standardized units
                let sd = data.x.stats()[j].unwrap().sd;
                step = 1e-4 * sd.max(1.0);
                for i in 0..n {
                    for sign in [1.0, -1.0] {
                        let mut r = data.x.row(i).to_vec();
                        r[j] += sign * step / sd;
                        rows.push(r);
                    }
                }
            }
            EffectKind::Difference => {
                let group: Vec<usize> = (1..cols.len())
                    .filter(|&g| cols[g].term == cols[j].term && cols[g].kind == ColumnKind::Binary)
                    .collect();
                for i in 0..n {
                    for on in [1.0, 0.0] {
                        let mut r = data.x.row(i).to_vec();
                        group.iter().for_each(|&g| r[g] = 0.0);
                        r[j] = on;
                        rows.push(r);
                    }
                }
            }
        }
        let f = expected_rows(&fit, &data, &rows);
        for i in 0..n {
            let diff = f[2 * i] - f[2 * i + 1];
            let oracle = if e.kind == EffectKind::Derivative { diff / (2.0 * step) } else { diff };
            let rel = (e.per_site[i] - oracle).abs() / oracle.abs().max(1e-12);
            worst = worst.max(rel);
        }
    }
    let ok = hand_ok && order_ok && worst < 1e-3 && effects.len() >= 4;
    verdict(
        10,
        ok,
        &format!(
            "hand vectors {hand_ok}; RMSE >= MAE on 10000 vectors {order_ok}; worst ME relative error {worst:.1e} over {} effects; {:.1} s",
            effects.len(),
            t.elapsed().as_secs_f64()
        ),
    );
}
