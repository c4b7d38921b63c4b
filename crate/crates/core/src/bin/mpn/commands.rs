use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use mpn::data::har::{convert_har as har_convert, HarOptions};
use mpn::data::phm::{convert_phm as phm_convert, PhmOptions};
use mpn::data::synth::{synth_generate, SynthConfig};
use mpn::data::window::WindowOptions;
use mpn::data::{
    class_stats, load_dataset, save_dataset, split, DatasetMeta, Sample, SplitSizes, Splits,
};
use mpn::decide::{broadcast_baseline, localize_gated, ClassifierKind};
use mpn::eval::{fit_classifiers, localization_report, segment_report, Classifiers};
use mpn::loss::LossConfig;
use mpn::loss::LossParams;
use mpn::model::{MpnDims, MpnModel};
use mpn::persist::{load_model, save_model, ModelFile};
use mpn::tensor::derive_seed;
use mpn::train::{
    default_grid, grad_check, grid_search, predict_all, tiny_instance, train as fit, TrainConfig,
    SEED_TAG_CLASSIFIER, SEED_TAG_SPLIT,
};

use crate::args::*;
use crate::report::{
    differences, differences_text, write_json, EvaluationReport, LocalizationRecord,
};
use crate::{usage, CliError, CliResult};

/// Gradient-check tolerance on the relative error.
const GRAD_CHECK_TOL: f64 = 1e-4;

fn window_options(w: &WindowArgs, seed: u64) -> WindowOptions {
    WindowOptions {
        n_samples: w.n_samples,
        seed,
        allow_overlap: w.allow_overlap,
    }
}

fn print_stats(meta: &DatasetMeta, samples: &[Sample]) -> CliResult<()> {
    println!("{} samples, {} labels", samples.len(), meta.labels);
    if samples.is_empty() {
        return Ok(());
    }
    let counts = class_stats(samples)?;
    println!(
        "{:>5} {:<24} {:>7} {:>9}",
        "label", "name", "count", "frequency"
    );
    for (l, (name, c)) in meta.label_names.iter().zip(&counts).enumerate() {
        println!(
            "{l:>5} {name:<24} {c:>7} {:>9.4}",
            *c as f64 / samples.len() as f64
        );
    }
    Ok(())
}

pub fn generate(a: GenerateArgs, seed: Option<u64>) -> CliResult<()> {
    let mut config = match &a.config {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(noise) = a.noise {
        config.noise = noise;
    }
    usage(config.validate())?;
    let (meta, samples) = synth_generate(&config, a.n)?;
    save_dataset(&a.out, &meta, &samples)?;
    print_stats(&meta, &samples)
}

pub fn convert_phm(a: ConvertPhmArgs, seed: u64) -> CliResult<()> {
    let opts = PhmOptions {
        history: a.history,
        horizon: a.horizon,
        codes: a.codes,
        plant: a.plant,
        windows: window_options(&a.windows, seed),
        standardize: !a.windows.no_standardize,
    };
    let (meta, samples) = phm_convert(&a.sensors, a.environment.as_deref(), &a.faults, &opts)?;
    save_dataset(&a.out, &meta, &samples)?;
    print_stats(&meta, &samples)
}

pub fn convert_har(a: ConvertHarArgs, seed: u64) -> CliResult<()> {
    let opts = HarOptions {
        history: a.history,
        horizon: a.horizon,
        windows: window_options(&a.windows, seed),
        standardize: !a.windows.no_standardize,
    };
    let (meta, samples) = har_convert(&a.inputs, &opts)?;
    save_dataset(&a.out, &meta, &samples)?;
    print_stats(&meta, &samples)
}

fn load_splits(
    path: &Path,
    sizes: Option<SplitSizes>,
    seed: u64,
) -> CliResult<(DatasetMeta, Vec<Sample>, Splits)> {
    let (meta, samples) = load_dataset(path)?;
    let sizes = sizes.unwrap_or_else(|| SplitSizes::for_len(samples.len()));
    let splits = split(&samples, sizes, derive_seed(seed, SEED_TAG_SPLIT))?;
    Ok((meta, samples, splits))
}

fn pick<'a>(subset: Subset, all: &'a [Sample], splits: &'a Splits) -> &'a [Sample] {
    match subset {
        Subset::Train => &splits.train,
        Subset::Val => &splits.val,
        Subset::Test => &splits.test,
        Subset::All => all,
    }
}

fn subset_name(subset: Subset) -> &'static str {
    match subset {
        Subset::Train => "train",
        Subset::Val => "val",
        Subset::Test => "test",
        Subset::All => "all",
    }
}

fn check_dims(model: &MpnModel, meta: &DatasetMeta) -> CliResult<()> {
    let want = meta.dims();
    if model.dims != want {
        return Err(CliError::Data(mpn::MpnError::DimensionMismatch {
            context: "dataset vs model".into(),
            expected: format!("{:?}", model.dims),
            found: format!("{want:?}"),
        }));
    }
    Ok(())
}

fn classifiers_on_train(model: &MpnModel, train: &[Sample], seed: u64) -> CliResult<Classifiers> {
    let preds = predict_all(model, train)?;
    Ok(fit_classifiers(
        &preds,
        train,
        derive_seed(seed, SEED_TAG_CLASSIFIER),
    )?)
}

fn require_train_split(splits: &Splits) -> CliResult<()> {
    if splits.train.is_empty() {
        return Err(CliError::Data(mpn::MpnError::Empty(
            "the training split is empty".into(),
        )));
    }
    Ok(())
}

pub fn train(a: TrainArgs, seed: u64) -> CliResult<()> {
    let config = a.hyper.config(seed);
    usage(config.validate())?;
    let (meta, _, splits) = load_splits(&a.data, a.split.split, seed)?;
    require_train_split(&splits)?;
    let init = mpn::train::init_model(meta.dims(), seed)?;
    let (model, history) = fit(&init, &splits.train, &splits.val, &config)?;
    let classifiers = classifiers_on_train(&model, &splits.train, seed)?;
    save_model(&a.model, &ModelFile::new(model, Some(classifiers)))?;
    if let Some(p) = &a.history_csv {
        history.write_csv(BufWriter::new(File::create(p)?))?;
    }
    println!(
        "loss: {}  eta: {}  lambda: {}  beta: {}",
        config.loss.name(),
        config.eta,
        config.lambda,
        config.beta
    );
    println!(
        "epochs run: {}  best epoch: {:?}",
        history.records.len(),
        history.best_epoch
    );
    if let Some(best) = history
        .best_epoch
        .and_then(|e| history.records.iter().find(|r| r.epoch == e))
    {
        println!(
            "validation micro_f1: {:.6}  macro_f1: {:.6}",
            best.val_micro_f1, best.val_macro_f1
        );
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct GridPoint {
    eta: f64,
    lambda: f64,
    #[serde(default)]
    beta: Option<f64>,
}

fn read_grid(path: &Path, base: &TrainConfig) -> CliResult<Vec<TrainConfig>> {
    let points: Vec<GridPoint> = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| CliError::Usage(format!("grid file: {e}")))?;
    Ok(points
        .into_iter()
        .enumerate()
        .map(|(k, p)| TrainConfig {
            eta: p.eta,
            lambda: p.lambda,
            beta: p.beta.unwrap_or(base.beta),
            seed: base.seed.wrapping_add(k as u64),
            ..base.clone()
        })
        .collect())
}

pub fn gridsearch(a: GridArgs, seed: u64) -> CliResult<()> {
    let base = a.hyper.config(seed);
    let grid = match &a.grid_file {
        Some(p) => read_grid(p, &base)?,
        None => default_grid(&base),
    };
    if grid.is_empty() {
        return Err(CliError::Usage("the grid has no points".into()));
    }
    for c in &grid {
        usage(c.validate())?;
    }
    let (meta, _, splits) = load_splits(&a.data, a.split.split, seed)?;
    require_train_split(&splits)?;
    let result = grid_search(&grid, meta.dims(), &splits.train, &splits.val)?;
    let classifiers = classifiers_on_train(&result.model, &splits.train, result.config.seed)?;
    save_model(&a.model, &ModelFile::new(result.model, Some(classifiers)))?;
    if let Some(p) = &a.report {
        write_json(p, &result.report)?;
    }
    print!("{}", result.report.to_text());
    Ok(())
}

fn load_for_scoring(
    data: &Path,
    model: &Path,
    sizes: Option<SplitSizes>,
    seed: u64,
) -> CliResult<(DatasetMeta, Vec<Sample>, Splits, MpnModel, Classifiers)> {
    let file = load_model(model)?;
    let (meta, samples, splits) = load_splits(data, sizes, seed)?;
    check_dims(&file.model, &meta)?;
    let classifiers = match file.classifiers {
        Some(c) => c,
        None => {
            require_train_split(&splits)?;
            classifiers_on_train(&file.model, &splits.train, seed)?
        }
    };
    Ok((meta, samples, splits, file.model, classifiers))
}

fn segment_classifier(
    c: &Classifiers,
    kind: ClassifierKind,
) -> CliResult<&mpn::decide::LabelClassifier> {
    c.segment(kind).ok_or_else(|| {
        CliError::Data(mpn::MpnError::InvalidConfig(format!(
            "model has no {} classifier",
            kind.name()
        )))
    })
}

pub fn evaluate(a: EvaluateArgs, seed: u64) -> CliResult<()> {
    let (_, samples, splits, model, classifiers) =
        load_for_scoring(&a.data, &a.model, a.split.split, seed)?;
    let set = pick(a.subset, &samples, &splits);
    let preds = predict_all(&model, set)?;
    let mut segment = BTreeMap::new();
    for kind in a.classifier.kinds() {
        let clf = segment_classifier(&classifiers, kind)?;
        segment.insert(kind.name().to_string(), segment_report(clf, &preds, set)?);
    }
    let localization = if a.localize {
        let kind = a.classifier.primary();
        let clf = segment_classifier(&classifiers, kind)?;
        Some(LocalizationRecord {
            classifier: kind.name().to_string(),
            report: localization_report(clf, &classifiers.step, &preds, set)?,
        })
    } else {
        None
    };
    let report = EvaluationReport {
        subset: subset_name(a.subset).to_string(),
        samples: set.len(),
        segment,
        localization,
    };
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    print!("{}", report.to_text());
    Ok(())
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    index: usize,
    g: &'a [f64],
    y: &'a [f64],
    o: Vec<Vec<f64>>,
    segment: Vec<u8>,
}

pub fn predict(a: PredictArgs, seed: u64) -> CliResult<()> {
    let (_, samples, splits, model, classifiers) =
        load_for_scoring(&a.data, &a.model, a.split.split, seed)?;
    let clf = segment_classifier(&classifiers, a.classifier.primary())?;
    let set = pick(a.subset, &samples, &splits);
    let preds = predict_all(&model, set)?;
    let mut out = BufWriter::new(File::create(&a.out)?);
    for (index, p) in preds.iter().enumerate() {
        let rec = PredictionRecord {
            index,
            g: &p.g,
            y: &p.y,
            o: p.o.to_rows(),
            segment: clf.classify(&p.g),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    println!("{} predictions written", preds.len());
    Ok(())
}

#[derive(Serialize)]
struct LocalizationLine {
    index: usize,
    localized: Vec<Vec<u8>>,
    broadcast: Vec<Vec<u8>>,
}

pub fn localize(a: LocalizeArgs, seed: u64) -> CliResult<()> {
    let (_, samples, splits, model, classifiers) =
        load_for_scoring(&a.data, &a.model, a.split.split, seed)?;
    let kind = a.classifier.primary();
    let clf = segment_classifier(&classifiers, kind)?;
    let set = pick(a.subset, &samples, &splits);
    let preds = predict_all(&model, set)?;
    let mut out = BufWriter::new(File::create(&a.out)?);
    for (index, p) in preds.iter().enumerate() {
        let seg = clf.classify(&p.g);
        let line = LocalizationLine {
            index,
            localized: localize_gated(&classifiers.step, &p.o, &seg),
            broadcast: broadcast_baseline(&seg, p.o.rows()),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let report = EvaluationReport {
        subset: subset_name(a.subset).to_string(),
        samples: set.len(),
        segment: BTreeMap::new(),
        localization: Some(LocalizationRecord {
            classifier: kind.name().to_string(),
            report: localization_report(clf, &classifiers.step, &preds, set)?,
        }),
    };
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    print!("{}", report.to_text());
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs, seed: u64) -> CliResult<()> {
    if !(a.fd_step > 0.0 && a.fd_step.is_finite()) {
        return Err(CliError::Usage("--fd-step must be positive".into()));
    }
    if a.instances == 0 {
        return Err(CliError::Usage("--instances must be at least 1".into()));
    }
    let configs: Vec<LossConfig> = match a.loss {
        Some(l) => vec![l],
        None => LossConfig::ALL.to_vec(),
    };
    let dims = MpnDims {
        labels: 3,
        obs_dim: 2,
        ctx_dim: 2,
        history: 4,
        total: 7,
    };
    let mut failed = 0;
    for config in configs {
        for k in 0..a.instances {
            let (model, samples, weights) = tiny_instance(dims, 3, derive_seed(seed, k as u64))?;
            let params = LossParams {
                config,
                lambda: 0.3,
                beta: 0.4,
            };
            let r = grad_check(&model, &samples, params, &weights, a.fd_step)?;
            let pass = r.max_rel_error < GRAD_CHECK_TOL;
            failed += usize::from(!pass);
            println!(
                "{} {:<8} instance {k}: max rel error {:.3e} at {} (analytic {:.6e}, numeric {:.6e}, {} coordinates)",
                if pass { "PASS" } else { "FAIL" },
                config.name(),
                r.max_rel_error,
                r.worst_name,
                r.analytic,
                r.numeric,
                r.checked
            );
        }
    }
    if failed > 0 {
        return Err(CliError::Check(format!(
            "{failed} gradient check(s) above {GRAD_CHECK_TOL:e}"
        )));
    }
    Ok(())
}

pub fn compare(a: CompareArgs) -> CliResult<()> {
    let read = |p: &Path| -> CliResult<serde_json::Value> {
        Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?)
    };
    let method = read(&a.method)?;
    let baseline = read(&a.baseline)?;
    let diffs = differences(&method, &baseline);
    if let Some(p) = &a.report {
        write_json(p, &diffs)?;
    }
    print!("{}", differences_text(&diffs));
    Ok(())
}
