#![allow(dead_code)]

use crashfreq::model_spec::{Column, ColumnKind};
use crashfreq::sampler::batch_means_se;
use crashfreq::{ChainDraws, DesignMatrix, ModelData};

pub fn intercept_data(y: &[u64]) -> ModelData {
    let cols = vec![Column { name: "intercept".into(), kind: ColumnKind::Intercept, term: None }];
    let rows: Vec<Vec<f64>> = y.iter().map(|_| vec![1.0]).collect();
    ModelData {
        x: DesignMatrix::from_rows(cols, &rows).unwrap(),
        y: y.to_vec(),
        site_ids: (0..y.len()).map(|i| format!("s{i}")).collect(),
    }
}

/// Per-chain traces of one scalar.
pub fn traces(chains: &[ChainDraws], name: &str) -> Vec<Vec<f64>> {
    chains.iter().map(|c| c.column(name).unwrap()).collect()
}

/// Pooled mean of `f` over chains and its batch-means standard error.
pub fn pooled_mean(traces: &[Vec<f64>], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mapped: Vec<Vec<f64>> = traces.iter().map(|t| t.iter().map(|&x| f(x)).collect()).collect();
    let m = mapped.len() as f64;
    let mean = mapped.iter().map(|t| t.iter().sum::<f64>() / t.len() as f64).sum::<f64>() / m;
    let se2: f64 = mapped.iter().map(|t| batch_means_se(t).unwrap().powi(2)).sum();
    (mean, se2.sqrt() / m)
}

/// Asserts that the fraction of draws below `q` equals `p` within `k`
/// batch-means standard errors (floored at the iid error of the pooled draws).
pub fn assert_quantile(traces: &[Vec<f64>], q: f64, p: f64, k: f64, what: &str) {
    let (frac, se) = pooled_mean(traces, |x| f64::from(u8::from(x <= q)));
    let n: usize = traces.iter().map(Vec::len).sum();
    let se = se.max((p * (1.0 - p) / n as f64).sqrt());
    assert!((frac - p).abs() < k * se, "{what}: P(x <= {q:.4}) = {frac:.4}, expected {p} (se {se:.4})");
}
