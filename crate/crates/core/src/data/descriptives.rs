use serde::{Deserialize, Serialize};

use super::records::{CategoricalVar, ContinuousVar, SiteRecord};

/// Published descriptive statistics for one numeric variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStat {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for constant or single-row columns.
    pub sd: f64,
    pub reference: Option<ReferenceStat>,
    /// Mean deviates from the reference by more than `tolerance × reference sd`.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelShare {
    pub variable: String,
    pub level: String,
    pub count: usize,
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveReport {
    pub n: usize,
    pub tolerance: f64,
    pub variables: Vec<VariableSummary>,
    pub levels: Vec<LevelShare>,
}

impl DescriptiveReport {
    pub fn variable(&self, name: &str) -> Option<&VariableSummary> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &VariableSummary> {
        self.variables.iter().filter(|v| v.flagged)
    }
}

/// Published descriptive statistics of the crash counts and numeric
/// covariates over 596 stops.
pub fn published_descriptives() -> Vec<ReferenceStat> {
    let r = |name: &str, min, max, mean, sd| ReferenceStat { name: name.to_string(), min, max, mean, sd };
    vec![
        r("kabco", 0.0, 8.0, 0.752, 1.45),
        r("kabc", 0.0, 6.0, 0.526, 1.11),
        r("kab", 0.0, 5.0, 0.314, 0.65),
        r("aadt", 166.0, 42056.0, 13540.6, 8827.85),
        r("avg_on", 0.0, 769.0, 53.20, 66.78),
        r("avg_off", 0.0, 831.0, 56.63, 60.64),
        r("dist_to_int", 0.4, 2106.0, 198.94, 241.04),
        r("median_width", 0.0, 131.9, 7.10, 12.38),
        r("speed_limit", 20.0, 65.0, 36.63, 7.78),
        r("lane_count", 1.0, 8.0, 4.34, 1.46),
        r("school_count", 0.0, 6.0, 0.82, 1.12),
        r("park_count", 0.0, 6.0, 0.64, 0.84),
        r("stop_count", 0.0, 11.0, 3.45, 2.19),
    ]
}

fn summarize(name: &str, xs: &[f64]) -> VariableSummary {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    VariableSummary {
        name: name.to_string(),
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        sd,
        reference: None,
        flagged: false,
    }
}

/// Min/max/mean/SD of every numeric variable and level shares of every
/// categorical one. When `reference` is non-empty, variables whose mean lies
/// more than `tolerance` reference SDs away are flagged.
pub fn validate_descriptives(records: &[SiteRecord], reference: &[ReferenceStat], tolerance: f64) -> DescriptiveReport {
    let counts: [(&str, fn(&SiteRecord) -> u32); 3] =
        [("kabco", |r| r.kabco), ("kabc", |r| r.kabc), ("kab", |r| r.kab)];
    let mut variables: Vec<VariableSummary> = counts
        .iter()
        .map(|(name, f)| summarize(name, &records.iter().map(|r| f64::from(f(r))).collect::<Vec<_>>()))
        .collect();
    for c in ContinuousVar::ALL {
        let xs: Vec<f64> = records.iter().map(|r| c.value(r)).collect();
        variables.push(summarize(c.name(), &xs));
    }
    for v in &mut variables {
        if let Some(rf) = reference.iter().find(|rf| rf.name == v.name) {
            let scale = if rf.sd > 0.0 { rf.sd } else { 1.0 };
            v.flagged = (v.mean - rf.mean).abs() > tolerance * scale;
            v.reference = Some(rf.clone());
        }
    }
    let n = records.len();
    let mut levels = Vec::new();
    for c in CategoricalVar::ALL {
        for level in c.levels() {
            let count = records.iter().filter(|r| c.label_of(r) == level).count();
            levels.push(LevelShare {
                variable: c.name().to_string(),
                level: level.to_string(),
                count,
                share: if n > 0 { count as f64 / n as f64 } else { 0.0 },
            });
        }
    }
    DescriptiveReport { n, tolerance, variables, levels }
}
