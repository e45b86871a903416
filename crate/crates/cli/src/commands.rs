use std::fs;
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use optilime::stability::{self, StabilityConfig};
use optilime::toy::{self, ToySpec};
use optilime::trend::{self, LogisticFit};
use optilime::{FeatureStats, LimeConfig, OptiLimeConfig, PolynomialModel, Predictor, TabularDataset};
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{emit, envelope, write_atomic, Run};
use crate::predictor::PredictorSpec;
use crate::{CommonArgs, ExplainArgs, OptimizeArgs, ReferenceArgs, ScanArgs, StabilityArgs, ToyArgs};

#[derive(Serialize)]
struct ToyResult<'a> {
    spec: &'a ToySpec,
    degree: usize,
    model: &'a PolynomialModel,
    training_mae: f64,
    reference_row: usize,
    reference: Vec<f64>,
    data_file: &'static str,
}

pub fn toy(args: &ToyArgs) -> Result<()> {
    let run = Run::start("toy", args.seed);
    let spec = ToySpec {
        seed: args.seed,
        ..ToySpec::default()
    };
    let data = toy::generate(&spec);
    let model = toy::build_toy_model(&data)?;
    let xs = data.rows().column(0);
    let ys = data.target().expect("toy data is labelled");
    let training_mae = xs.iter().zip(ys).map(|(x, y)| (model.eval(*x) - y).abs()).sum::<f64>() / ys.len() as f64;
    let reference_row = toy::reference_row(&data);

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut csv = Vec::new();
    data.write_csv(&mut csv, "y")?;
    write_atomic(&args.out.join("toy.csv"), &csv)?;

    let result = ToyResult {
        spec: &spec,
        degree: model.degree(),
        model: &model,
        training_mae,
        reference_row,
        reference: data.row(reference_row).expect("row exists"),
        data_file: "toy.csv",
    };
    let manifest = run.manifest(json!({ "out": args.out, "spec": spec }));
    write_atomic(
        &args.out.join("toy.json"),
        &envelope("optilime.toy", &manifest, &result)?,
    )
}

/// Everything a pipeline command needs, resolved from the common flags.
struct Setup {
    run: Run,
    data: TabularDataset,
    stats: FeatureStats,
    predictor: Box<dyn Predictor>,
    reference: Vec<f64>,
    lime: LimeConfig,
    config: Value,
}

fn resolve_reference(args: &ReferenceArgs, data: &TabularDataset) -> Result<Vec<f64>> {
    match (args.row, &args.point) {
        (Some(i), None) => data
            .row(i)
            .with_context(|| format!("--row {i} out of range (dataset has {} rows)", data.n_rows())),
        (None, Some(p)) => {
            let v = p
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("--point `{p}` is not a comma-separated list of reals"))?;
            ensure!(
                v.len() == data.n_features(),
                "--point has {} values, dataset has {} features",
                v.len(),
                data.n_features()
            );
            ensure!(v.iter().all(|x| x.is_finite()), "--point values must be finite");
            Ok(v)
        }
        _ => bail!("exactly one of --row and --point is required"),
    }
}

fn setup(command: &'static str, common: &CommonArgs, kernel_width: f64) -> Result<Setup> {
    let mut run = Run::start(command, common.seed);
    ensure!(common.jobs >= 1, "--jobs must be at least 1");
    let bytes = run.read_input(&common.data)?;
    let data = TabularDataset::read_csv(bytes.as_slice(), common.target_column.as_deref())
        .with_context(|| format!("parsing {}", common.data.display()))?;
    let stats = data.compute_stats();
    let reference = resolve_reference(&common.reference, &data)?;
    let lime = LimeConfig {
        num_samples: common.num_samples,
        kernel_width,
        ridge_penalty: common.ridge,
        num_features: common.num_features.unwrap_or(data.n_features()),
        seed: common.seed,
    };
    lime.validate(data.n_features())?;
    ensure!(
        common.predictor_timeout > 0.0 && common.predictor_timeout.is_finite(),
        "--predictor-timeout must be positive"
    );
    let spec = PredictorSpec::parse(&common.predictor)?;
    let predictor = spec.build(&mut run, Duration::from_secs_f64(common.predictor_timeout))?;
    let config = json!({
        "data": common.data,
        "target_column": common.target_column,
        "predictor": common.predictor,
        "predictor_timeout_secs": common.predictor_timeout,
        "row": common.reference.row,
        "point": common.reference.point,
        "feature_names": data.feature_names(),
        "reference": reference,
        "jobs": common.jobs,
    });
    Ok(Setup {
        run,
        data,
        stats,
        predictor,
        reference,
        lime,
        config,
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let s = setup("explain", &args.common, args.kernel_width)?;
    let e = optilime::explain(&s.predictor, s.data.feature_names(), &s.stats, &s.reference, &s.lime)?;
    let manifest = s.run.manifest(merge(s.config, json!({ "lime": s.lime })));
    emit(args.out.as_deref(), &envelope("optilime.explanation", &manifest, &e)?)
}

pub fn stability(args: &StabilityArgs) -> Result<()> {
    let s = setup("stability", &args.common, args.kernel_width)?;
    let cfg = StabilityConfig {
        repetitions: args.repetitions,
        confidence_level: args.confidence,
        lime: s.lime.clone(),
        jobs: args.common.jobs,
    };
    let report = stability::assess(&s.predictor, s.data.feature_names(), &s.stats, &s.reference, &cfg)?;
    let manifest = s.run.manifest(merge(s.config, json!({ "stability": cfg })));
    emit(
        args.out.as_deref(),
        &envelope("optilime.stability", &manifest, &report)?,
    )
}

#[derive(Serialize)]
struct Trends {
    r_squared: Option<f64>,
    csi: Option<f64>,
    vsi: Option<f64>,
}

#[derive(Serialize)]
struct ScanResult<'a> {
    scan: &'a trend::KwScan,
    r_squared_fit: LogisticFit,
    csi_fit: LogisticFit,
    spearman: Trends,
    csv_file: &'static str,
}

pub fn scan(args: &ScanArgs) -> Result<()> {
    let s = setup("scan", &args.common, args.kw_min)?;
    let grid = trend::log_grid(args.kw_min, args.kw_max, args.steps)?;
    let cfg = StabilityConfig {
        repetitions: args.repetitions,
        confidence_level: args.confidence,
        lime: s.lime.clone(),
        jobs: args.common.jobs,
    };
    let scan = trend::scan(
        &s.predictor,
        s.data.feature_names(),
        &s.stats,
        &s.reference,
        &grid,
        &cfg,
    )?;
    let result = ScanResult {
        r_squared_fit: trend::fit_logistic(&grid, &scan.r_squared())?,
        csi_fit: trend::fit_logistic(&grid, &scan.csi())?,
        spearman: Trends {
            r_squared: trend::spearman(&grid, &scan.r_squared()),
            csi: trend::spearman(&grid, &scan.csi()),
            vsi: trend::spearman(&grid, &scan.vsi()),
        },
        scan: &scan,
        csv_file: "scan.csv",
    };

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut csv = Vec::new();
    scan.write_csv(&mut csv)?;
    write_atomic(&args.out.join("scan.csv"), &csv)?;
    let manifest = s.run.manifest(merge(
        s.config,
        json!({
            "out": args.out,
            "grid": { "kw_min": args.kw_min, "kw_max": args.kw_max, "steps": args.steps },
            "stability": cfg,
        }),
    ));
    write_atomic(
        &args.out.join("scan.json"),
        &envelope("optilime.scan", &manifest, &result)?,
    )
}

pub fn optimize(args: &OptimizeArgs) -> Result<()> {
    let s = setup("optimize", &args.common, 1.0)?;
    let mut cfg = OptiLimeConfig::new(s.lime.clone());
    cfg.target_adherence = args.target;
    cfg.preliminary_calls = args.preliminary;
    cfg.refinement_iterations = args.iterations;
    cfg.stability_repetitions = args.repetitions;
    cfg.confidence_level = args.confidence;
    cfg.jobs = args.common.jobs;
    if args.kw_min.is_some() || args.kw_max.is_some() {
        let (lo, hi) = cfg.resolved_bounds(s.data.n_features());
        cfg.kw_bounds = Some((args.kw_min.unwrap_or(lo), args.kw_max.unwrap_or(hi)));
    }
    let result = optilime::optilime(&s.predictor, s.data.feature_names(), &s.stats, &s.reference, &cfg)?;
    let manifest = s.run.manifest(merge(s.config, json!({ "optimize": cfg })));
    emit(
        args.out.as_deref(),
        &envelope("optilime.optimization", &manifest, &result)?,
    )
}
