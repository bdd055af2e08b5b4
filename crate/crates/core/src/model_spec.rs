//! Model declarations: family, formula, priors, design matrices and the
//! standardization round trip.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{CategoricalVar, Severity, SiteRecord, Variable};
use crate::distributions::lindley_mean;
use crate::error::{Error, Result};
use crate::sampler::McmcConfig;

/// Linear predictors are clamped to this magnitude before exponentiation.
pub const ETA_CLAMP: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Plain negative binomial (no site heterogeneity term).
    #[serde(rename = "nb")]
    Nb,
    #[serde(rename = "nb-l")]
    NbL,
    #[serde(rename = "rpnb-l")]
    RpnbL,
    #[serde(rename = "rpnb-ge")]
    RpnbGe,
}

impl Family {
    pub fn has_lindley(self) -> bool {
        matches!(self, Family::NbL | Family::RpnbL)
    }

    pub fn has_ge(self) -> bool {
        self == Family::RpnbGe
    }

    pub fn allows_random(self) -> bool {
        matches!(self, Family::RpnbL | Family::RpnbGe)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Nb => "nb",
            Family::NbL => "nb-l",
            Family::RpnbL => "rpnb-l",
            Family::RpnbGe => "rpnb-ge",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" => Ok(Family::Nb),
            "nb-l" | "nbl" => Ok(Family::NbL),
            "rpnb-l" | "rpnbl" => Ok(Family::RpnbL),
            "rpnb-ge" | "rpnbge" => Ok(Family::RpnbGe),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Ge,
    Gt,
    Le,
    Lt,
}

impl Comparison {
    fn symbol(self) -> &'static str {
        match self {
            Comparison::Ge => ">=",
            Comparison::Gt => ">",
            Comparison::Le => "<=",
            Comparison::Lt => "<",
        }
    }

    fn holds(self, x: f64, v: f64) -> bool {
        match self {
            Comparison::Ge => x >= v,
            Comparison::Gt => x > v,
            Comparison::Le => x <= v,
            Comparison::Lt => x < v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    Identity,
    Log,
    /// Indicator of one categorical level.
    Level(&'static str),
    /// Indicator of a threshold condition on a numeric covariate.
    Threshold(Comparison, f64),
    /// One indicator per non-reference level.
    OneHot {
        reference: &'static str,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Intercept,
    /// Identity or log transform of a numeric covariate; standardized.
    Continuous,
    /// 0/1 indicator; left on its natural scale.
    Binary,
}

/// One formula term such as `ln(aadt)`, `speed_limit>=35`, `sidewalk=yes`,
/// `area` or `area[ref=res]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub variable: Variable,
    pub transform: Transform,
    name: String,
}

impl Term {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Design columns produced by this term: `(name, kind)`.
    pub fn columns(&self) -> Vec<(String, ColumnKind)> {
        let v = self.variable.name();
        match &self.transform {
            Transform::Identity => vec![(v.to_string(), ColumnKind::Continuous)],
            Transform::Log => vec![(format!("ln({v})"), ColumnKind::Continuous)],
            Transform::Level(l) => vec![(format!("{v}={l}"), ColumnKind::Binary)],
            Transform::Threshold(..) => vec![(self.name.clone(), ColumnKind::Binary)],
            Transform::OneHot { reference } => match self.variable {
                Variable::Categorical(c) => c
                    .levels()
                    .into_iter()
                    .filter(|l| l != reference)
                    .map(|l| (format!("{v}={l}"), ColumnKind::Binary))
                    .collect(),
                Variable::Continuous(_) => unreachable!("one-hot on a numeric covariate"),
            },
        }
    }

    fn push_values(&self, r: &SiteRecord, out: &mut Vec<f64>) -> Result<()> {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match (&self.transform, self.variable) {
            (Transform::Identity, Variable::Continuous(c)) => out.push(c.value(r)),
            (Transform::Log, Variable::Continuous(c)) => {
                let x = c.value(r);
                if !(x > 0.0) {
                    return Err(Error::domain(format!(
                        "site {}: {} under log transform must be positive, got {x}",
                        r.site_id,
                        c.name()
                    )));
                }
                out.push(x.ln());
            }
            (Transform::Threshold(op, v), Variable::Continuous(c)) => out.push(ind(op.holds(c.value(r), *v))),
            (Transform::Level(l), Variable::Categorical(c)) => out.push(ind(c.label_of(r) == *l)),
            (Transform::OneHot { reference }, Variable::Categorical(c)) => {
                let label = c.label_of(r);
                for l in c.levels().into_iter().filter(|l| l != reference) {
                    out.push(ind(label == l));
                }
            }
            _ => unreachable!("transform validated at parse time"),
        }
        Ok(())
    }
}

fn find_level(c: CategoricalVar, label: &str) -> Result<&'static str> {
    c.levels()
        .into_iter()
        .find(|l| *l == label)
        .ok_or_else(|| Error::Config(format!("unknown level `{label}` for `{}`", c.name())))
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let n = name.as_str();
        if let Some(inner) = n.strip_prefix("ln(").and_then(|r| r.strip_suffix(')')) {
            return match inner.parse::<Variable>()? {
                v @ Variable::Continuous(_) => Ok(Term { variable: v, transform: Transform::Log, name }),
                Variable::Categorical(c) => Err(Error::Config(format!("log transform of categorical `{}`", c.name()))),
            };
        }
        for op in [Comparison::Ge, Comparison::Le, Comparison::Gt, Comparison::Lt] {
            if let Some((var, val)) = n.split_once(op.symbol()) {
                let variable = var.parse::<Variable>()?;
                if !matches!(variable, Variable::Continuous(_)) {
                    return Err(Error::Config(format!("threshold on categorical `{var}`")));
                }
                let v: f64 = val.parse().map_err(|_| Error::Config(format!("bad threshold value in `{n}`")))?;
                return Ok(Term { variable, transform: Transform::Threshold(op, v), name });
            }
        }
        if let Some((var, level)) = n.split_once('=') {
            if let Some(var) = var.strip_suffix("[ref") {
                let level = level.strip_suffix(']').ok_or_else(|| Error::Config(format!("bad term `{n}`")))?;
                return match var.parse::<Variable>()? {
                    v @ Variable::Categorical(c) => {
                        let reference = find_level(c, level)?;
                        Ok(Term { variable: v, transform: Transform::OneHot { reference }, name })
                    }
                    Variable::Continuous(c) => Err(Error::Config(format!("reference level on numeric `{}`", c.name()))),
                };
            }
            return match var.parse::<Variable>()? {
                v @ Variable::Categorical(c) => {
                    Ok(Term { variable: v, transform: Transform::Level(find_level(c, level)?), name })
                }
                Variable::Continuous(c) => Err(Error::Config(format!("level indicator on numeric `{}`", c.name()))),
            };
        }
        let variable = n.parse::<Variable>()?;
        let transform = match variable {
            Variable::Continuous(_) => Transform::Identity,
            Variable::Categorical(c) => {
                let levels = c.levels();
                if levels.len() == 2 {
                    // binary covariates are coded 1 for their code-1 level
                    Transform::Level(levels[1])
                } else {
                    Transform::OneHot { reference: levels[0] }
                }
            }
        };
        Ok(Term { variable, transform, name })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Response group, covariate terms, and the subset given random coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormulaDef", into = "FormulaDef")]
pub struct Formula {
    pub response: Severity,
    pub terms: Vec<Term>,
    /// Indices into `terms`.
    pub random: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FormulaDef {
    response: Severity,
    terms: Vec<String>,
    #[serde(default)]
    random: Vec<String>,
}

impl TryFrom<FormulaDef> for Formula {
    type Error = Error;

    fn try_from(d: FormulaDef) -> Result<Self> {
        let terms: Vec<&str> = d.terms.iter().map(String::as_str).collect();
        let random: Vec<&str> = d.random.iter().map(String::as_str).collect();
        Formula::new(d.response, &terms, &random)
    }
}

impl From<Formula> for FormulaDef {
    fn from(f: Formula) -> Self {
        FormulaDef {
            response: f.response,
            random: f.random.iter().map(|&i| f.terms[i].name.clone()).collect(),
            terms: f.terms.into_iter().map(|t| t.name).collect(),
        }
    }
}

impl Formula {
    pub fn new(response: Severity, terms: &[&str], random: &[&str]) -> Result<Self> {
        let terms: Vec<Term> = terms.iter().map(|t| t.parse()).collect::<Result<_>>()?;
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].iter().any(|u| u.name == t.name) {
                return Err(Error::Config(format!("duplicate term `{}`", t.name)));
            }
        }
        let mut idx = Vec::new();
        for r in random {
            let name: String = r.chars().filter(|c| !c.is_whitespace()).collect();
            let i = terms
                .iter()
                .position(|t| t.name == name)
                .ok_or_else(|| Error::Config(format!("random term `{name}` is not among the terms")))?;
            if terms[i].columns().len() != 1 {
                return Err(Error::Config(format!("random term `{name}` must produce a single column")));
            }
            if !idx.contains(&i) {
                idx.push(i);
            }
        }
        Ok(Formula { response, terms, random: idx })
    }

    pub fn intercept_only(response: Severity) -> Self {
        Formula { response, terms: Vec::new(), random: Vec::new() }
    }

    /// Column names of the design matrix, intercept first.
    pub fn column_names(&self) -> Vec<String> {
        std::iter::once("intercept".to_string())
            .chain(self.terms.iter().flat_map(|t| t.columns().into_iter().map(|c| c.0)))
            .collect()
    }

    /// Design-column index of each random term, in `random` order.
    pub fn random_columns(&self) -> Vec<usize> {
        let mut col = 1;
        let mut starts = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            starts.push(col);
            col += t.columns().len();
        }
        self.random.iter().map(|&i| starts[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    /// Index of the generating term (`None` for the intercept).
    pub term: Option<usize>,
}

/// Row-major design matrix with the intercept in column 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    columns: Vec<Column>,
    n_rows: usize,
    data: Vec<f64>,
    /// Composite standardization applied so far, per column.
    stats: Vec<Option<ColumnStats>>,
}

impl DesignMatrix {
    /// Assembles a matrix from rows. The first column must be the intercept.
    pub fn from_rows(columns: Vec<Column>, rows: &[Vec<f64>]) -> Result<Self> {
        if columns.first().map(|c| c.kind) != Some(ColumnKind::Intercept) {
            return Err(Error::Config("design matrix must start with the intercept".into()));
        }
        let p = columns.len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Dimension(format!("row {i} has {} cells, expected {p}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("row {i} has a non-finite cell")));
            }
            data.extend_from_slice(r);
        }
        Ok(DesignMatrix { stats: vec![None; p], columns, n_rows: rows.len(), data })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn stats(&self) -> &[Option<ColumnStats>] {
        &self.stats
    }

    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix { columns: self.columns.clone(), n_rows: idx.len(), data, stats: self.stats.clone() }
    }
}

/// Encodes `records` under `formula`. Categorical levels follow the published
/// codes: binary covariates are 1 at their code-1 level, multi-level ones are
/// one-hot against the code-0 level unless a reference is named.
pub fn build_design(records: &[SiteRecord], formula: &Formula) -> Result<DesignMatrix> {
    if records.is_empty() {
        return Err(Error::Dimension("no records".into()));
    }
    let mut columns = vec![Column { name: "intercept".into(), kind: ColumnKind::Intercept, term: None }];
    for (k, t) in formula.terms.iter().enumerate() {
        for (name, kind) in t.columns() {
            columns.push(Column { name, kind, term: Some(k) });
        }
    }
    let p = columns.len();
    let mut data = Vec::with_capacity(records.len() * p);
    for r in records {
        data.push(1.0);
        for t in &formula.terms {
            t.push_values(r, &mut data)?;
        }
    }
    Ok(DesignMatrix { stats: vec![None; p], columns, n_rows: records.len(), data })
}

/// Response vector for the formula's severity group.
pub fn response(records: &[SiteRecord], severity: Severity) -> Vec<u64> {
    records.iter().map(|r| u64::from(severity.count(r))).collect()
}

/// Centers and scales every continuous column by its mean and population SD.
pub fn standardize(m: &DesignMatrix) -> Result<DesignMatrix> {
    let mut fresh = vec![None; m.n_cols()];
    for (j, c) in m.columns.iter().enumerate() {
        if c.kind != ColumnKind::Continuous {
            continue;
        }
        let col = m.column(j);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(sd > 1e-12 * (1.0 + mean.abs())) {
            return Err(Error::domain(format!("column `{}` has zero variance", c.name)));
        }
        fresh[j] = Some(ColumnStats { mean, sd });
    }
    apply_stats(m, &fresh)
}

/// Applies previously computed column statistics (for example the training
/// set's) to another matrix with the same columns.
pub fn standardize_with(m: &DesignMatrix, stats: &[Option<ColumnStats>]) -> Result<DesignMatrix> {
    if stats.len() != m.n_cols() {
        return Err(Error::Dimension(format!("{} stats for {} columns", stats.len(), m.n_cols())));
    }
    if m.stats.iter().any(Option::is_some) {
        return Err(Error::Config("matrix is already standardized".into()));
    }
    apply_stats(m, stats)
}

fn apply_stats(m: &DesignMatrix, fresh: &[Option<ColumnStats>]) -> Result<DesignMatrix> {
    let p = m.n_cols();
    let mut out = m.clone();
    for i in 0..m.n_rows {
        for (j, s) in fresh.iter().enumerate() {
            if let Some(s) = s {
                let v = &mut out.data[i * p + j];
                *v = (*v - s.mean) / s.sd;
            }
        }
    }
    for (j, s) in fresh.iter().enumerate() {
        if let Some(s) = s {
            if !(s.sd > 0.0) {
                return Err(Error::domain(format!("column `{}` has nonpositive scale", m.columns[j].name)));
            }
            out.stats[j] = Some(match m.stats[j] {
                // x = μ₀ + σ₀ (μ₁ + σ₁ x'')
                Some(prev) => ColumnStats { mean: prev.mean + prev.sd * s.mean, sd: prev.sd * s.sd },
                None => *s,
            });
        }
    }
    Ok(out)
}

/// Maps coefficients fitted on standardized columns back to the raw scale:
/// `b_j = b*_j / σ_j` and `b_0 = b*_0 − Σ b_j μ_j`.
pub fn destandardize_coefficients(b_star: &[f64], stats: &[Option<ColumnStats>]) -> Result<Vec<f64>> {
    if b_star.len() != stats.len() || b_star.is_empty() {
        return Err(Error::Dimension(format!("{} coefficients for {} column stats", b_star.len(), stats.len())));
    }
    if stats[0].is_some() {
        return Err(Error::Config("intercept column cannot carry standardization stats".into()));
    }
    let mut b = b_star.to_vec();
    let mut shift = 0.0;
    for (j, s) in stats.iter().enumerate().skip(1) {
        if let Some(s) = s {
            b[j] = b_star[j] / s.sd;
            shift += b[j] * s.mean;
        }
    }
    b[0] = b_star[0] - shift;
    Ok(b)
}

#[inline]
pub fn linear_predictor(b: &[f64], row: &[f64]) -> f64 {
    b.iter().zip(row).map(|(a, x)| a * x).sum()
}

/// `exp(x'b) · lambda_component`, with the linear predictor clamped to
/// `±ETA_CLAMP`. Passing `lindley_mean(θ)` gives the population-level NB-L
/// mean.
pub fn mean_response(b: &[f64], row: &[f64], lambda_component: f64) -> Result<f64> {
    if b.len() != row.len() {
        return Err(Error::Dimension(format!("{} coefficients for {} columns", b.len(), row.len())));
    }
    if !(lambda_component > 0.0) {
        return Err(Error::domain(format!("lambda component must be positive, got {lambda_component}")));
    }
    Ok(linear_predictor(b, row).clamp(-ETA_CLAMP, ETA_CLAMP).exp() * lambda_component)
}

/// Population-level NB-L mean of a design row at Lindley parameter `theta`.
pub fn nbl_population_mean(b: &[f64], row: &[f64], theta: f64) -> Result<f64> {
    mean_response(b, row, lindley_mean(theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Prior on every fixed coefficient, standardized scale.
    pub coef: NormalPrior,
    /// Prior on the precision `1/σ_j²` of each random coefficient.
    pub rp_precision: GammaPrior,
    /// Prior on `w = 1/(1+θ)`.
    pub lindley: BetaPrior,
    pub dispersion: GammaPrior,
    pub ge_a: GammaPrior,
    pub ge_b: GammaPrior,
}

impl PriorConfig {
    /// Defaults for a dataset with `n` observations; the Lindley prior is
    /// `Beta(n/3, n/2)`.
    pub fn for_observations(n: usize) -> Self {
        let n = n as f64;
        PriorConfig {
            coef: NormalPrior { mean: 0.0, variance: 1e4 },
            rp_precision: GammaPrior { shape: 0.01, rate: 0.01 },
            lindley: BetaPrior { a: n / 3.0, b: n / 2.0 },
            dispersion: GammaPrior { shape: 0.01, rate: 0.01 },
            ge_a: GammaPrior { shape: 0.01, rate: 0.01 },
            ge_b: GammaPrior { shape: 1.0, rate: 1.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            ("coef variance", self.coef.variance),
            ("rp precision shape", self.rp_precision.shape),
            ("rp precision rate", self.rp_precision.rate),
            ("lindley a", self.lindley.a),
            ("lindley b", self.lindley.b),
            ("dispersion shape", self.dispersion.shape),
            ("dispersion rate", self.dispersion.rate),
            ("ge a shape", self.ge_a.shape),
            ("ge a rate", self.ge_a.rate),
            ("ge b shape", self.ge_b.shape),
            ("ge b rate", self.ge_b.rate),
        ];
        for (name, v) in vals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("prior hyperparameter {name} must be positive, got {v}")));
            }
        }
        if !self.coef.mean.is_finite() {
            return Err(Error::Config("coefficient prior mean must be finite".into()));
        }
        Ok(())
    }
}

/// Optional prior overrides as written in a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOverrides {
    pub coef_mean: Option<f64>,
    pub coef_variance: Option<f64>,
    pub rp_precision: Option<[f64; 2]>,
    pub lindley: Option<[f64; 2]>,
    pub dispersion: Option<[f64; 2]>,
    pub ge_a: Option<[f64; 2]>,
    pub ge_b: Option<[f64; 2]>,
}

impl PriorOverrides {
    pub fn resolve(&self, n: usize) -> Result<PriorConfig> {
        let mut p = PriorConfig::for_observations(n);
        let g = |v: [f64; 2]| GammaPrior { shape: v[0], rate: v[1] };
        if let Some(v) = self.coef_mean {
            p.coef.mean = v;
        }
        if let Some(v) = self.coef_variance {
            p.coef.variance = v;
        }
        if let Some(v) = self.rp_precision {
            p.rp_precision = g(v);
        }
        if let Some(v) = self.lindley {
            p.lindley = BetaPrior { a: v[0], b: v[1] };
        }
        if let Some(v) = self.dispersion {
            p.dispersion = g(v);
        }
        if let Some(v) = self.ge_a {
            p.ge_a = g(v);
        }
        if let Some(v) = self.ge_b {
            p.ge_b = g(v);
        }
        p.validate()?;
        Ok(p)
    }
}

/// A fully specified model: family, formula and resolved priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub formula: Formula,
    pub priors: PriorConfig,
}

impl ModelSpec {
    pub fn new(family: Family, formula: Formula, n_obs: usize) -> Result<Self> {
        let spec = ModelSpec { family, formula, priors: PriorConfig::for_observations(n_obs) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.formula.random.is_empty() && !self.family.allows_random() {
            return Err(Error::Config(format!(
                "family `{}` has no random coefficients; use rpnb-l or rpnb-ge",
                self.family.name()
            )));
        }
        self.priors.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    pub response: Severity,
    #[serde(default)]
    pub terms: Vec<String>,
    #[serde(default)]
    pub random: Vec<String>,
}

/// The TOML run configuration:
///
/// ```toml
/// [model]
/// family = "rpnb-l"
/// response = "kabco"
/// terms = ["ln(aadt)", "avg_on", "speed_limit>=35", "area"]
/// random = ["ln(aadt)"]
///
/// [priors]          # optional
/// coef_variance = 1e4
///
/// [mcmc]            # optional
/// n_chains = 3
/// n_iter = 80000
/// burn_in = 30000
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub priors: PriorOverrides,
    #[serde(default)]
    pub mcmc: McmcConfig,
}

impl ModelConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(s)?;
        cfg.formula()?;
        cfg.mcmc.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn formula(&self) -> Result<Formula> {
        let terms: Vec<&str> = self.model.terms.iter().map(String::as_str).collect();
        let random: Vec<&str> = self.model.random.iter().map(String::as_str).collect();
        Formula::new(self.model.response, &terms, &random)
    }

    pub fn model_spec(&self, n_obs: usize) -> Result<ModelSpec> {
        let spec =
            ModelSpec { family: self.model.family, formula: self.formula()?, priors: self.priors.resolve(n_obs)? };
        spec.validate()?;
        Ok(spec)
    }
}
