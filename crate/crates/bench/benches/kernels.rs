use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use crashfreq::distributions::nb_ln_pmf;
use crashfreq::evaluation::cure;
use crashfreq::model_spec::Family;
use crashfreq::sampler::{batch_means_se, bgr_values, ChainState, Model};
use crashfreq::screening::{classify, mh_odds_ratio, StratumTable};
use crashfreq::{LindleyParam, McmcConfig};
use crashfreq_bench::{ar1_trace, psi_results, published_fixture};

fn lindley(c: &mut Criterion) {
    let l = LindleyParam::new(1.378).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("lindley/sample", |b| b.iter(|| l.sample(&mut rng)));
    c.bench_function("lindley/sample_mixture", |b| b.iter(|| l.sample_mixture(&mut rng)));
    c.bench_function("nb_ln_pmf", |b| b.iter(|| nb_ln_pmf(black_box(7), black_box(2.3), black_box(4.1))));
}

fn sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep_596_sites");
    for family in [Family::NbL, Family::RpnbL, Family::RpnbGe] {
        let (spec, data) = published_fixture(596, family, 7);
        let cfg = McmcConfig { burn_in: 0, ..Default::default() };
        let model = Model::new(&spec, &data.x, &data.y, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = ChainState::new(&model, &cfg, &mut rng);
        g.bench_function(family.name(), |b| b.iter(|| state.sweep(&model, &mut rng)));
    }
    g.finish();
}

fn diagnostics(c: &mut Criterion) {
    let chains: Vec<Vec<f64>> = (0..3).map(|k| ar1_trace(20_000, 0.9, k)).collect();
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    c.bench_function("bgr/3x20000", |b| b.iter(|| bgr_values(black_box(&refs)).unwrap()));
    c.bench_function("batch_means/20000", |b| b.iter(|| batch_means_se(black_box(&chains[0])).unwrap()));
}

fn screening(c: &mut Criterion) {
    let results = psi_results(5_000);
    c.bench_function("classify/5000", |b| b.iter_batched(|| results.clone(), classify, BatchSize::SmallInput));
    let strata: Vec<StratumTable> =
        (0..50).map(|s| StratumTable::new(5 + s % 7, 9 + s % 5, 11 + s % 3, 20 + s % 11).unwrap()).collect();
    c.bench_function("mh_odds_ratio/50_strata", |b| b.iter(|| mh_odds_ratio(black_box(&strata)).unwrap()));
    let n = 596;
    let observed: Vec<u64> = (0..n).map(|i| (i % 5) as u64).collect();
    let predicted: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64 * 0.5).collect();
    let covariate: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("s{i:04}")).collect();
    c.bench_function("cure/596", |b| b.iter(|| cure("x", &observed, &predicted, &covariate, &ids).unwrap()));
}

criterion_group!(benches, lindley, sweeps, diagnostics, screening);
criterion_main!(benches);
