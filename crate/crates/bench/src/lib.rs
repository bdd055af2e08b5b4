//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crashfreq::data::{synthesize, GeneratorConfig};
use crashfreq::model_spec::{Family, ModelSpec};
use crashfreq::screening::PsiResult;
use crashfreq::ModelData;

/// Sites drawn from the published RPNB-L truth, with the matching model.
pub fn published_fixture(n_sites: usize, family: Family, seed: u64) -> (ModelSpec, ModelData) {
    let gen = GeneratorConfig::published_rpnbl(n_sites, seed);
    let syn = synthesize(&gen).expect("published generator config is valid");
    let mut formula = gen.formula().expect("published terms parse");
    if !family.allows_random() {
        formula.random.clear();
    }
    let data = ModelData::from_records(&syn.records, &formula).expect("synthetic records encode");
    let spec = ModelSpec::new(family, formula, n_sites).expect("default priors are valid");
    (spec, data)
}

/// Deterministic PSI results spread over both signs.
pub fn psi_results(n: usize) -> Vec<PsiResult> {
    (0..n)
        .map(|i| {
            let u = (i as f64 * 0.618_033_988_75).fract();
            PsiResult::new(format!("s{i:05}"), 3.0 * u, 1.0 + (i % 7) as f64 * 0.1)
        })
        .collect()
}

/// AR(1) trace with standard normal innovations.
pub fn ar1_trace(n: usize, rho: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = rho * x + e;
            x
        })
        .collect()
}
