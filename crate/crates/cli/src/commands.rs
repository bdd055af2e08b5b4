use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;

use crashfreq::data::{self, synthesize, ContinuousVar, GeneratorConfig, Heterogeneity, SiteRecord, TruthRecord};
use crashfreq::evaluation::{cure as cure_curve, mae, predict, predict_records, rmse};
use crashfreq::inference::{dic, marginal_effects, summarize, EffectKind, PosteriorSummary, Scale};
use crashfreq::model_spec::{build_design, response, standardize_with, ModelConfig};
use crashfreq::sampler::{
    convergence_report, load_fit, run as run_chains, save_fit, write_atomic, ChainDraws, ModelData,
};
use crashfreq::screening::{corridor_aggregate, mh_odds_ratio, mh_risk_ratio, psi_all, psi_csv, read_strata, Zone};

use crate::{CureArgs, EffectsArgs, EvaluateArgs, FitArgs, MhArgs, PsiArgs, ReportArgs, SimulateArgs};

pub enum Outcome {
    Done,
    GateFailed,
}

/// What a subcommand touched, for the manifest.
#[derive(Default)]
pub struct Run {
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub converged: Option<bool>,
    pub gate_failures: Vec<String>,
    out_dir: Option<PathBuf>,
}

impl Run {
    pub fn manifest_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Records where the manifest goes before any work that may fail.
    fn target_dir(&mut self, dir: &Path) {
        self.out_dir = Some(dir.to_path_buf());
    }

    fn target_file(&mut self, file: &Path) {
        let dir = file.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        self.target_dir(dir);
    }

    fn dir_output(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        self.out_dir = Some(dir.to_path_buf());
        Ok(())
    }

    fn file_output(&mut self, file: &Path) -> Result<()> {
        let dir = file.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        self.dir_output(dir)
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        write_atomic(path, contents.as_bytes()).with_context(|| format!("cannot write {}", path.display()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }
}

fn load_records(path: &Path, run: &mut Run) -> Result<Vec<SiteRecord>> {
    run.inputs.push(path.to_path_buf());
    data::load(path).with_context(|| format!("cannot load site data {}", path.display()))
}

fn load_chains(dir: &Path, run: &mut Run) -> Result<Vec<ChainDraws>> {
    run.inputs.push(dir.to_path_buf());
    load_fit(dir).with_context(|| format!("cannot load draws from {}", dir.display()))
}

/// The fitted sites, encoded and scaled exactly as during the fit.
fn fitted_data(chains: &[ChainDraws], records: &[SiteRecord]) -> Result<ModelData> {
    let c = &chains[0];
    let x = standardize_with(&build_design(records, &c.formula)?, &c.column_stats)?;
    let site_ids: Vec<String> = records.iter().map(|r| r.site_id.clone()).collect();
    ensure!(site_ids == c.site_ids, "data sites differ from the fitted sites; pass the data the chains were fitted to");
    Ok(ModelData { x, y: response(records, c.formula.response), site_ids })
}

pub fn simulate(a: &SimulateArgs, run: &mut Run) -> Result<Outcome> {
    run.target_file(&a.out);
    let mut cfg = match &a.config {
        Some(p) => {
            run.config = Some(p.clone());
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            toml::from_str::<GeneratorConfig>(&text)
                .with_context(|| format!("invalid generator config {}", p.display()))?
        }
        None => GeneratorConfig::published_rpnbl(596, 0),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.sites {
        cfg.n_sites = n;
    }
    run.seed = Some(cfg.seed);
    run.file_output(&a.out)?;
    let syn = synthesize(&cfg)?;
    let mut csv = Vec::new();
    data::write_records(&mut csv, &syn.records)?;
    run.write(&a.out, std::str::from_utf8(&csv)?)?;
    let truth_path = a.out.with_extension("truth.json");
    run.write(&truth_path, &serde_json::to_string_pretty(&syn.truth)?)?;
    println!("wrote {} sites to {} (mean KABCO {:.3})", syn.records.len(), a.out.display(), syn.truth.expected_mean);
    Ok(Outcome::Done)
}

pub fn fit(a: &FitArgs, run: &mut Run) -> Result<Outcome> {
    run.target_dir(&a.out);
    run.config = Some(a.config.clone());
    let mut cfg =
        ModelConfig::load(&a.config).with_context(|| format!("invalid model config {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg.mcmc.seed = s;
    }
    if let Some(n) = a.chains {
        cfg.mcmc.n_chains = n;
    }
    if let Some(n) = a.iters {
        cfg.mcmc.n_iter = n;
    }
    if let Some(n) = a.burnin {
        cfg.mcmc.burn_in = n;
    }
    cfg.mcmc.validate()?;
    run.seed = Some(cfg.mcmc.seed);
    let records = load_records(&a.data, run)?;
    let data = ModelData::from_records(&records, &cfg.formula()?)?;
    let spec = cfg.model_spec(data.n_sites())?;
    run.dir_output(&a.out)?;
    log::info!("fitting {} to {} sites", spec.family.name(), data.n_sites());
    let chains = run_chains(&spec, &data, &cfg.mcmc)?;
    run.outputs.extend(save_fit(&a.out, &chains)?);

    let report = convergence_report(&chains)?;
    let mut csv = String::from("parameter,bgr,mc_error,posterior_sd,monitored,passed\n");
    let mut table = format!("{:<24}  {:>7}  {:>9}  {:>6}\n", "parameter", "BGR", "MCSE/SD", "status");
    for p in &report.params {
        let ratio = if p.mc.sd > 0.0 { p.mc.mcse / p.mc.sd } else { 0.0 };
        writeln!(csv, "{},{:.6},{:.6},{:.6},{},{}", p.name, p.bgr, p.mc.mcse, p.mc.sd, p.monitored, p.passed())?;
        let status = match (p.monitored, p.passed()) {
            (false, _) => "info",
            (true, true) => "ok",
            (true, false) => "FAIL",
        };
        writeln!(table, "{:<24}  {:>7.4}  {:>9.4}  {:>6}", p.name, p.bgr, ratio, status)?;
    }
    run.write(&a.out.join("convergence.csv"), &csv)?;
    print!("{table}");
    run.converged = Some(report.passed());
    run.gate_failures = report.failures().map(|p| p.name.clone()).collect();
    if report.passed() {
        println!("convergence gates passed");
        return Ok(Outcome::Done);
    }
    eprintln!("convergence gates failed for: {}", run.gate_failures.join(", "));
    Ok(if a.no_gate { Outcome::Done } else { Outcome::GateFailed })
}

/// Truth value of each reportable scalar on the requested scale.
fn truth_values(t: &TruthRecord, scale: Scale) -> HashMap<String, f64> {
    let (coefs, sds) = match scale {
        Scale::Standardized => (&t.coefficients, &t.random_sd),
        Scale::Original => (&t.coefficients_original, &t.random_sd_original),
    };
    let mut m: HashMap<String, f64> = t.column_names.iter().cloned().zip(coefs.iter().copied()).collect();
    m.extend(sds.iter().map(|(c, s)| (format!("sd[{c}]"), *s)));
    m.insert("phi".into(), t.phi);
    match t.heterogeneity {
        Heterogeneity::Lindley { theta } => {
            m.insert("theta".into(), theta);
        }
        Heterogeneity::Ge { a, b } => {
            m.insert("ge_a".into(), a);
            m.insert("ge_b".into(), b);
        }
        Heterogeneity::None => {}
    }
    m
}

fn summary_csv(s: &PosteriorSummary, truth: Option<&HashMap<String, f64>>) -> Result<String> {
    let mut out = String::from("parameter,mean,sd,lower_95,upper_95,bgr,mc_error,significant");
    if truth.is_some() {
        out.push_str(",truth,covered");
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for p in &s.params {
        write!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            p.name,
            p.mean,
            p.sd,
            p.lower,
            p.upper,
            opt(p.bgr),
            opt(p.mc_error),
            p.significant
        )?;
        if let Some(t) = truth {
            match t.get(&p.name) {
                Some(v) => write!(out, ",{v:.6},{}", p.lower <= *v && *v <= p.upper)?,
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn report(a: &ReportArgs, run: &mut Run) -> Result<Outcome> {
    run.target_dir(&a.out);
    let chains = load_chains(&a.draws, run)?;
    let truth = match &a.truth {
        Some(p) => {
            run.inputs.push(p.clone());
            Some(TruthRecord::load(p).with_context(|| format!("cannot load truth {}", p.display()))?)
        }
        None => None,
    };
    run.dir_output(&a.out)?;
    for (scale, name) in [(Scale::Standardized, "standardized"), (Scale::Original, "original")] {
        let s = summarize(&chains, scale)?;
        let t = truth.as_ref().map(|t| truth_values(t, scale));
        run.write(&a.out.join(format!("summary_{name}.csv")), &summary_csv(&s, t.as_ref())?)?;
        println!("[{name} scale]\n{}", s.to_table());
        if let Some(t) = &t {
            let missed: Vec<&str> = s
                .params
                .iter()
                .filter(|p| t.get(&p.name).is_some_and(|v| *v < p.lower || *v > p.upper))
                .map(|p| p.name.as_str())
                .collect();
            if missed.is_empty() {
                println!("every truth value lies inside its 95% interval");
            } else {
                println!("truth outside the 95% interval: {}", missed.join(", "));
            }
        }
    }
    if let Some(p) = &a.data {
        let records = load_records(p, run)?;
        let d = dic(&chains, &fitted_data(&chains, &records)?)?;
        let csv = format!("dbar,d_at_mean,pd,dic\n{:.4},{:.4},{:.4},{:.4}\n", d.dbar, d.d_at_mean, d.pd, d.dic);
        run.write(&a.out.join("dic.csv"), &csv)?;
        println!("Dbar {:.2}  D(mean) {:.2}  pD {:.2}  DIC {:.2}", d.dbar, d.d_at_mean, d.pd, d.dic);
    }
    Ok(Outcome::Done)
}

pub fn effects(a: &EffectsArgs, run: &mut Run) -> Result<Outcome> {
    run.target_file(&a.out);
    let chains = load_chains(&a.draws, run)?;
    let records = load_records(&a.data, run)?;
    let data = fitted_data(&chains, &records)?;
    let cols: Vec<&str> = a.columns.iter().map(String::as_str).collect();
    let effects = marginal_effects(&chains, &data, &cols)?;
    run.file_output(&a.out)?;
    let mut csv = String::from("column,kind,mean,lower_95,upper_95\n");
    for e in &effects {
        let kind = match e.kind {
            EffectKind::Derivative => "derivative",
            EffectKind::Difference => "difference",
        };
        writeln!(csv, "{},{kind},{:.6},{:.6},{:.6}", e.column, e.mean, e.lower, e.upper)?;
        println!("{:<24} {:<10} {:>10.4}  [{:.4}, {:.4}]", e.column, kind, e.mean, e.lower, e.upper);
    }
    run.write(&a.out, &csv)?;
    Ok(Outcome::Done)
}

#[derive(Deserialize)]
struct CorridorRow {
    site_id: String,
    corridor: String,
}

pub fn psi(a: &PsiArgs, run: &mut Run) -> Result<Outcome> {
    run.target_file(&a.out);
    let chains = load_chains(&a.draws, run)?;
    let records = load_records(&a.data, run)?;
    let results = psi_all(&chains, &fitted_data(&chains, &records)?)?;
    run.file_output(&a.out)?;
    run.write(&a.out, &psi_csv(&results))?;
    let count = |z: Zone| results.iter().filter(|r| r.zone == z).count();
    let positive = results.iter().filter(|r| r.psi > 0.0).count();
    println!(
        "{} sites: {} hotspots among {positive} positive, {} normal, {} cold",
        results.len(),
        count(Zone::Hotspot),
        count(Zone::Normal),
        count(Zone::Cold)
    );
    if let Some(p) = &a.corridors {
        run.inputs.push(p.clone());
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(p)?;
        let mut map = HashMap::new();
        for row in rdr.deserialize() {
            let r: CorridorRow = row.with_context(|| format!("bad corridor row in {}", p.display()))?;
            map.insert(r.site_id, r.corridor);
        }
        let rep = corridor_aggregate(&results, &map);
        let mut csv = String::from("rank,corridor,n_sites,n_hotspots,psi_sum,positive_psi_sum\n");
        for c in &rep.corridors {
            writeln!(
                csv,
                "{},{},{},{},{:.6},{:.6}",
                c.rank, c.corridor, c.n_sites, c.n_hotspots, c.psi_sum, c.positive_psi_sum
            )?;
        }
        let stem = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("psi");
        run.write(&a.out.with_file_name(format!("{stem}_corridors.csv")), &csv)?;
        if !rep.unassigned.is_empty() {
            eprintln!("warning: {} sites have no corridor", rep.unassigned.len());
        }
    }
    Ok(Outcome::Done)
}

pub fn mh(a: &MhArgs, run: &mut Run) -> Result<Outcome> {
    if let Some(out) = &a.out {
        run.target_file(out);
    }
    run.inputs.push(a.strata.clone());
    let tables = read_strata(&a.strata).with_context(|| format!("cannot read strata {}", a.strata.display()))?;
    let or = mh_odds_ratio(&tables)?;
    let rr = mh_risk_ratio(&tables).map(|v| format!("{v:.4}")).unwrap_or_else(|_| "undefined".into());
    let text = format!("strata: {}\nodds ratio: {or:.4}\nrisk ratio: {rr}\n", tables.len());
    print!("{text}");
    if let Some(out) = &a.out {
        run.file_output(out)?;
        run.write(out, &text)?;
    }
    Ok(Outcome::Done)
}

pub fn cure(a: &CureArgs, run: &mut Run) -> Result<Outcome> {
    run.target_dir(&a.out);
    let Some(var) = ContinuousVar::ALL.iter().copied().find(|v| v.name() == a.covariate) else {
        let names: Vec<&str> = ContinuousVar::ALL.iter().map(|v| v.name()).collect();
        bail!("unknown covariate `{}`; choose one of {}", a.covariate, names.join(", "));
    };
    let chains = load_chains(&a.draws, run)?;
    let records = load_records(&a.data, run)?;
    let data = fitted_data(&chains, &records)?;
    let predicted = predict(&chains, &data.x)?;
    let x: Vec<f64> = records.iter().map(|r| var.value(r)).collect();
    let curve = cure_curve(var.name(), &data.y, &predicted, &x, &data.site_ids)?;
    run.dir_output(&a.out)?;
    run.write(&a.out.join(format!("cure_{}.csv", var.name())), &curve.to_csv())?;
    run.write(&a.out.join(format!("cure_{}.svg", var.name())), &curve.to_svg(720.0, 400.0))?;
    println!("{:.1}% of points outside the 95% band", 100.0 * curve.fraction_outside());
    Ok(Outcome::Done)
}

pub fn evaluate(a: &EvaluateArgs, run: &mut Run) -> Result<Outcome> {
    if let Some(out) = &a.out {
        run.target_file(out);
    }
    let chains = load_chains(&a.draws, run)?;
    let records = load_records(&a.data, run)?;
    let predicted = predict_records(&chains, &records)?;
    let observed = response(&records, chains[0].formula.response);
    let text = format!(
        "metric,value\nn,{}\nmae,{:.6}\nrmse,{:.6}\n",
        records.len(),
        mae(&observed, &predicted)?,
        rmse(&observed, &predicted)?
    );
    print!("{text}");
    if let Some(out) = &a.out {
        run.file_output(out)?;
        run.write(out, &text)?;
    }
    Ok(Outcome::Done)
}
