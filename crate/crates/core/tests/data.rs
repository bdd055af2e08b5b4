use crashfreq::data::{
    load, published_descriptives, save, synthesize, validate_descriptives, GeneratorConfig, Heterogeneity, TermTruth,
    TruthRecord,
};

fn mean_kabco(records: &[crashfreq::SiteRecord]) -> f64 {
    records.iter().map(|r| f64::from(r.kabco)).sum::<f64>() / records.len() as f64
}

#[test]
fn generator_moments_match_analytic_mean() {
    let base = GeneratorConfig {
        intercept: -0.3,
        terms: vec![
            TermTruth::random("ln(aadt)", 0.345, 0.3),
            TermTruth::random("avg_on", 0.1, 0.02),
            TermTruth::fixed("speed_limit>=35", 0.448),
            TermTruth::fixed("area=mix", -0.367),
        ],
        ..GeneratorConfig::published_rpnbl(10_000, 0)
    };
    let (mut observed, mut expected) = (0.0, 0.0);
    for rep in 0..100 {
        let s = synthesize(&GeneratorConfig { seed: 1000 + rep, ..base.clone() }).unwrap();
        observed += mean_kabco(&s.records);
        expected += s.truth.expected_mean;
    }
    let rel = (observed / expected - 1.0).abs();
    eprintln!("relative deviation {rel:.4}");
    assert!(rel < 0.02, "pooled mean {} vs analytic {} ({rel:.4})", observed / 100.0, expected / 100.0);
}

#[test]
fn targeted_generator_reproduces_published_kabco_mean() {
    let cfg = GeneratorConfig { target_mean: Some(0.752), ..GeneratorConfig::published_rpnbl(596, 31) };
    let s = synthesize(&cfg).unwrap();
    let report = validate_descriptives(&s.records, &published_descriptives(), 0.5);
    let kabco = report.variable("kabco").unwrap();
    assert!((kabco.mean - 0.752).abs() < 0.1, "mean KABCO {}", kabco.mean);
    assert_eq!(report.n, 596);
    let aadt = report.variable("aadt").unwrap();
    assert!(aadt.min >= 166.0 && aadt.max <= 42056.0);
    assert!(!aadt.flagged, "aadt mean {} flagged", aadt.mean);
}

#[test]
fn empty_reference_reports_without_flags() {
    let s = synthesize(&GeneratorConfig::published_rpnbl(50, 1)).unwrap();
    let report = validate_descriptives(&s.records, &[], 0.1);
    assert!(report.flagged().next().is_none());
    assert!(report.variables.iter().all(|v| v.reference.is_none()));
}

#[test]
fn synthetic_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GeneratorConfig {
        heterogeneity: Heterogeneity::Ge { a: 1.7, b: 0.9 },
        ..GeneratorConfig::published_rpnbl(596, 8)
    };
    let s = synthesize(&cfg).unwrap();
    let data = dir.path().join("sites.csv");
    let truth = dir.path().join("sites.truth.json");
    save(&data, &s.records).unwrap();
    s.truth.save(&truth).unwrap();
    let back = load(&data).unwrap();
    assert_eq!(back.len(), 596);
    assert_eq!(back, s.records);
    assert_eq!(TruthRecord::load(&truth).unwrap(), s.truth);
}
