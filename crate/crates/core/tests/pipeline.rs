use optilime::optimizer::{maximize, Evaluation, SearchSettings};
use optilime::stability::{self, run_with_seeds};
use optilime::trend::{log_grid, scan, spearman};
use optilime::{optilime, toy, FeatureStats, FnPredictor, LimeConfig, OptiLimeConfig, StabilityConfig};

fn linear_setup() -> (Vec<String>, FeatureStats, impl optilime::Predictor) {
    let names = vec!["u".to_owned(), "v".to_owned(), "w".to_owned()];
    let stats = FeatureStats::new(vec![0.0, 5.0, 1.0], vec![1.0, 3.0, 0.2]).unwrap();
    let f = FnPredictor::new("linear", 3, |x: &[f64]| 2.0 * x[0] - 0.5 * x[1] + 3.0 * x[2] + 1.0);
    (names, stats, f)
}

#[test]
fn linear_black_box_is_perfectly_stable() {
    let (names, stats, f) = linear_setup();
    let grid = log_grid(0.05, 3.0, 6).unwrap();
    // all features kept: the surrogate is exact
    let cfg = StabilityConfig::new(LimeConfig::new(1.0, 3, 3));
    let s = scan(&f, &names, &stats, &[0.1, 4.0, 1.1], &grid, &cfg).unwrap();
    for p in &s.points {
        assert_eq!(p.csi, 1.0, "kw {}", p.kernel_width);
        assert_eq!(p.vsi, 1.0, "kw {}", p.kernel_width);
        assert!(p.r_squared > 1.0 - 1e-9);
    }
}

#[test]
fn parallel_repetitions_match_sequential() {
    let data = toy::canonical_dataset();
    let model = toy::build_toy_model(&data).unwrap();
    let stats = data.compute_stats();
    let reference = data.row(toy::reference_row(&data)).unwrap();
    let lime = LimeConfig::new(0.2, 1, 11);
    let seeds: Vec<u64> = (11..19).collect();
    let a = run_with_seeds(&model, data.feature_names(), &stats, &reference, &lime, &seeds, 1).unwrap();
    let b = run_with_seeds(&model, data.feature_names(), &stats, &reference, &lime, &seeds, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|e| e.seed).collect::<Vec<_>>(), seeds);
}

#[test]
fn toy_explanations_vary_across_seeds() {
    let data = toy::canonical_dataset();
    let model = toy::build_toy_model(&data).unwrap();
    let stats = data.compute_stats();
    let reference = data.row(toy::reference_row(&data)).unwrap();
    let cfg = StabilityConfig::new(LimeConfig::new(0.1, 1, 0));
    let report = stability::assess(&model, data.feature_names(), &stats, &reference, &cfg).unwrap();
    let betas: Vec<f64> = report.explanations.iter().map(|e| e.features[0].coefficient).collect();
    let lo = betas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo > 0.0);
    assert_eq!(report.vsi, 1.0);
    assert!(report.csi <= 1.0);
}

#[test]
fn toy_adherence_falls_and_stability_rises_with_width() {
    let data = toy::canonical_dataset();
    let model = toy::build_toy_model(&data).unwrap();
    let stats = data.compute_stats();
    let reference = data.row(toy::reference_row(&data)).unwrap();
    let grid = log_grid(0.05, 3.0, 8).unwrap();
    let cfg = StabilityConfig::new(LimeConfig::new(1.0, 1, 0));
    let s = scan(&model, data.feature_names(), &stats, &reference, &grid, &cfg).unwrap();
    assert!(spearman(&s.grid(), &s.r_squared()).unwrap() < -0.9);
    // small widths are the least stable
    assert!(s.points[0].csi < s.points[5].csi);
}

#[test]
fn higher_target_selects_narrower_kernel() {
    let data = toy::canonical_dataset();
    let model = toy::build_toy_model(&data).unwrap();
    let stats = data.compute_stats();
    let reference = data.row(toy::reference_row(&data)).unwrap();
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[v.len() / 2] + v[(v.len() - 1) / 2])
    };
    let best = |target: f64| -> Vec<f64> {
        (0..20)
            .map(|seed| {
                let mut cfg = OptiLimeConfig::new(LimeConfig {
                    num_samples: 1000,
                    ..LimeConfig::new(1.0, 1, seed)
                });
                cfg.target_adherence = target;
                cfg.refinement_iterations = 15;
                cfg.stability_repetitions = 2;
                optilime(&model, data.feature_names(), &stats, &reference, &cfg)
                    .unwrap()
                    .best_kw
            })
            .collect()
    };
    let strict = median(best(0.95));
    let loose = median(best(0.8));
    assert!(strict <= loose, "{strict} > {loose}");
}

#[test]
fn optilime_is_reproducible() {
    let data = toy::canonical_dataset();
    let model = toy::build_toy_model(&data).unwrap();
    let stats = data.compute_stats();
    let reference = data.row(toy::reference_row(&data)).unwrap();
    let mut cfg = OptiLimeConfig::new(LimeConfig {
        num_samples: 800,
        ..LimeConfig::new(1.0, 1, 21)
    });
    cfg.refinement_iterations = 8;
    cfg.stability_repetitions = 3;
    let a = optilime(&model, data.feature_names(), &stats, &reference, &cfg).unwrap();
    cfg.jobs = 3;
    let b = optilime(&model, data.feature_names(), &stats, &reference, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.explanation, b.explanation);
    assert_eq!(a.stability, b.stability);
    assert_eq!(a.trace.len(), 18);
    assert_eq!(a.explanation.kernel_width, a.best_kw);
    assert_eq!(a.achieved_r_squared, a.explanation.r_squared);
}

#[test]
fn search_matches_dense_grid_argmax() {
    // asymmetric unimodal objective in kw
    let objective = |kw: f64| -((kw.ln() - 0.4f64.ln()).powi(2)) + 0.1 * (kw - 0.4).max(0.0);
    let grid_best = (50..=3000)
        .map(|i| i as f64 * 0.001)
        .max_by(|a, b| objective(*a).total_cmp(&objective(*b)))
        .unwrap();
    let settings = SearchSettings {
        kw_bounds: (0.05, 3.0),
        preliminary_calls: 10,
        refinement_iterations: 30,
        seed: 2,
    };
    let mut f = |kw: f64, _: usize| {
        Ok(Evaluation {
            loss: objective(kw),
            r_squared: 0.0,
        })
    };
    let out = maximize(&settings, &mut f).unwrap();
    assert!(
        (out.best_kw - grid_best).abs() <= 0.05,
        "{} vs {grid_best}",
        out.best_kw
    );
}
