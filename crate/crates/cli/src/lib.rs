//! Pipeline commands behind the `urbanca` binary.
//!
//! Each command reads a [`RunConfig`], writes its artifacts into the output
//! directory and records content hashes in a manifest so reruns can be
//! compared byte for byte. Timing columns are the only run-to-run variation.

pub mod config;
pub mod error;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use urbanca::ca::Automaton;
use urbanca::dataset::{
    class_histogram, encode_raster, feature_matrix, make_folds, make_stratified_folds, neighborhood_matrix,
    read_matrix_csv, transition_labels, write_matrix_csv, ClassCounts, TransitionClass,
};
use urbanca::encoder::{Autoencoder, TrainReport};
use urbanca::knowledge::TransitionModel;
use urbanca::metrics::{cross_validate, write_report_csv, ModelReportRow, ValidationReport};
use urbanca::raster::{
    normalize, read_builtup, read_raster, write_builtup, write_raster, BuiltUpMap, NeighborhoodSpec, NormalizedRaster,
};
use urbanca::synth::{self, SynthScenario};

pub use config::{RunConfig, StartMap};
use error::{CliError, CliResult, Context};

pub const ENCODER_FILE: &str = "encoder.ucae";
pub const DATA_FILE: &str = "data.csv";
pub const COUNTS_FILE: &str = "class_counts.csv";
pub const LOSSES_FILE: &str = "encoder_losses.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const CV_FILE: &str = "cv_report.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const RUN_FILE: &str = "run.toml";

pub const DEFAULT_LENGTHS: [usize; 5] = [5, 10, 15, 20, 25];

/// Seed of the fold assignment derived from the run seed.
pub fn fold_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x9e37_79b9)
}

/// Seed of roster entry `index` derived from the run seed.
pub fn model_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(0x5851_f42d).wrapping_add(index as u64)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, std::io::Error::other(e)))
}

fn csv_rows<I, R>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let to_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// Content hashes of a command's inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    fn new(command: &str, seed: u64) -> Self {
        Manifest {
            command: command.into(),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Records `name` inside `dir`.
    fn output(&mut self, dir: &Path, name: &str) -> CliResult<()> {
        self.outputs.insert(name.into(), sha256_file(&dir.join(name))?);
        Ok(())
    }

    fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(format!("manifest_{}.toml", self.command));
        write_text(&path, &toml::to_string(self).expect("manifest serializes"))?;
        Ok(path)
    }
}

fn write_resolved(cfg: &RunConfig, dir: &Path, command: &str) -> CliResult<()> {
    write_text(&dir.join(format!("resolved_{command}.toml")), &cfg.to_toml())
}

/// Observed inputs of a run, loaded and checked for matching shapes.
pub struct Inputs {
    pub raster: NormalizedRaster,
    pub b_t: BuiltUpMap,
    pub b_t1: BuiltUpMap,
    pub b_t2: Option<BuiltUpMap>,
    pub spec: NeighborhoodSpec,
}

impl Inputs {
    pub fn load(cfg: &RunConfig) -> CliResult<Self> {
        let p = &cfg.paths;
        let grid = read_raster(&p.raster).stage(format!("reading {}", p.raster.display()))?;
        let raster = normalize(&grid).stage(format!("normalizing {}", p.raster.display()))?;
        let map = |path: &Path| -> CliResult<BuiltUpMap> {
            let b = read_builtup(path).stage(format!("reading {}", path.display()))?;
            if !b.same_shape(raster.width(), raster.height()) {
                return Err(CliError::Config(format!(
                    "{} is {}x{} but the raster is {}x{}",
                    path.display(),
                    b.width(),
                    b.height(),
                    raster.width(),
                    raster.height()
                )));
            }
            Ok(b)
        };
        Ok(Inputs {
            b_t: map(&p.builtup_t)?,
            b_t1: map(&p.builtup_t1)?,
            b_t2: p.builtup_t2.as_deref().map(map).transpose()?,
            spec: cfg.neighborhood.spec()?,
            raster,
        })
    }
}

/// Trains the raster autoencoder on every cell's neighborhood window.
pub fn train_encoder(cfg: &RunConfig, inputs: &Inputs) -> CliResult<(Autoencoder, TrainReport)> {
    let windows = neighborhood_matrix(&inputs.raster, &inputs.spec);
    let hidden = cfg.encoder.hidden_for(windows.cols());
    let mut enc = Autoencoder::with_activation(
        windows.cols(),
        cfg.encoder.len,
        &hidden,
        cfg.encoder.activation()?,
        cfg.seed,
    )
    .stage("building autoencoder")?;
    let report = enc
        .train(&windows, &cfg.encoder.train_params(cfg.seed))
        .stage("training autoencoder")?;
    log::info!(
        "autoencoder len {}: final loss {:.6} after {:.1}s",
        cfg.encoder.len,
        report.final_loss().unwrap_or(f64::NAN),
        report.seconds
    );
    Ok((enc, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub rows: usize,
    pub cols: usize,
    pub counts: ClassCounts,
    pub final_loss: Option<f64>,
    pub manifest: PathBuf,
}

/// Trains the encoder and writes the data and label matrices for `t -> t1`.
pub fn prepare(cfg: &RunConfig) -> CliResult<PrepareSummary> {
    cfg.validate()?;
    let out = &cfg.paths.out_dir;
    create_dir(out)?;
    let inputs = Inputs::load(cfg)?;
    let (enc, report) = train_encoder(cfg, &inputs)?;
    enc.save(out.join(ENCODER_FILE)).stage("saving encoder")?;

    let encodings = encode_raster(&inputs.raster, &enc, &inputs.spec).stage("encoding raster")?;
    let x = feature_matrix(&inputs.b_t, &encodings, &inputs.spec).stage("building data matrix")?;
    let y = transition_labels(&inputs.b_t, &inputs.b_t1, cfg.merge_bnb).stage("building label matrix")?;
    write_matrix_csv(out.join(DATA_FILE), &x, &y).stage("writing data matrix")?;

    let counts = class_histogram(&y);
    write_counts(&out.join(COUNTS_FILE), cfg, &counts)?;
    csv_rows(
        &out.join(LOSSES_FILE),
        &["epoch", "loss"],
        report
            .epoch_losses
            .iter()
            .enumerate()
            .map(|(i, l)| [(i + 1).to_string(), l.to_string()]),
    )?;
    write_resolved(cfg, out, "prepare")?;

    let mut manifest = Manifest::new("prepare", cfg.seed);
    for p in [&cfg.paths.raster, &cfg.paths.builtup_t, &cfg.paths.builtup_t1] {
        manifest.input(p)?;
    }
    for name in [
        ENCODER_FILE,
        DATA_FILE,
        COUNTS_FILE,
        LOSSES_FILE,
        "resolved_prepare.toml",
    ] {
        manifest.output(out, name)?;
    }
    Ok(PrepareSummary {
        rows: x.rows(),
        cols: x.cols(),
        counts,
        final_loss: report.final_loss(),
        manifest: manifest.write(out)?,
    })
}

/// Per-interval transformed/persistent pixel counts, with the per-class split.
fn write_counts(path: &Path, cfg: &RunConfig, counts: &ClassCounts) -> CliResult<()> {
    let t = &cfg.timeline;
    let mut row = vec![
        format!("{}-{}", t.year_t, t.year_t + t.years_per_step),
        counts.transformed().to_string(),
        counts.persistent().to_string(),
    ];
    row.extend(TransitionClass::ALL.iter().map(|&c| counts.get(c).to_string()));
    csv_rows(
        path,
        &[
            "time_step",
            "pixels_transformed",
            "pixels_persistent",
            "class_0",
            "class_1",
            "class_2",
            "class_3",
        ],
        [row],
    )
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub label: String,
    pub path: Option<PathBuf>,
    pub report: ModelReportRow,
}

pub fn model_file_name(index: usize, label: &str) -> String {
    format!("model_{index}_{label}.ucam")
}

/// Cross-validates and fits every roster entry on the prepared matrices.
/// A failing entry leaves an empty report row and does not stop the roster.
pub fn train(cfg: &RunConfig) -> CliResult<Vec<TrainedModel>> {
    cfg.validate()?;
    let out = &cfg.paths.out_dir;
    let (x, y) = read_matrix_csv(out.join(DATA_FILE)).stage("reading prepared data matrix (run prepare first)")?;
    let enc = Autoencoder::load(out.join(ENCODER_FILE)).stage("reading prepared encoder")?;
    let validation = match &cfg.paths.builtup_t2 {
        Some(_) => {
            let inputs = Inputs::load(cfg)?;
            let encodings = encode_raster(&inputs.raster, &enc, &inputs.spec).stage("encoding raster")?;
            Some((inputs, encodings))
        }
        None => None,
    };
    let plan = if cfg.stratified_folds {
        make_stratified_folds(&y, cfg.folds, fold_seed(cfg.seed))
    } else {
        make_folds(y.len(), cfg.folds, fold_seed(cfg.seed))
    }
    .stage("assigning folds")?;

    let mut trained = Vec::with_capacity(cfg.roster.len());
    let mut manifest = Manifest::new("train", cfg.seed);
    manifest.input(&out.join(DATA_FILE))?;
    manifest.input(&out.join(ENCODER_FILE))?;
    for (i, entry) in cfg.roster.iter().enumerate() {
        let label = entry.label();
        let spec = entry.trainer()?;
        let seed = model_seed(cfg.seed, i);
        let mut report = ModelReportRow {
            kind: label.clone(),
            validation: None,
            cv: None,
            train_seconds: f64::NAN,
            predict_seconds: f64::NAN,
        };
        log::info!("training {label}");
        match cross_validate(&x.matrix, &y, &plan, |xt, yt| spec.train(xt, yt, seed)) {
            Ok(cv) => report.cv = Some(cv),
            Err(e) => log::warn!("{label}: cross-validation failed: {e}"),
        }
        let start = Instant::now();
        let model = match spec.train(&x.matrix, &y, seed) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("{label}: training failed: {e}");
                trained.push(TrainedModel {
                    label,
                    path: None,
                    report,
                });
                continue;
            }
        };
        report.train_seconds = start.elapsed().as_secs_f64();
        let start = Instant::now();
        model.predict_rows(&x.matrix).stage(format!("{label}: predicting"))?;
        report.predict_seconds = start.elapsed().as_secs_f64();

        if let Some((inputs, encodings)) = &validation {
            report.validation =
                Some(validate(inputs, encodings.clone(), &model).stage(format!("{label}: validating"))?);
        }
        let name = model_file_name(i, &label);
        let path = out.join(&name);
        model.save(&path).stage(format!("saving {name}"))?;
        manifest.output(out, &name)?;
        trained.push(TrainedModel {
            label,
            path: Some(path),
            report,
        });
    }

    let rows: Vec<ModelReportRow> = trained.iter().map(|t| t.report.clone()).collect();
    write_report_csv(out.join(REPORT_FILE), &rows).stage("writing report")?;
    write_cv_report(&out.join(CV_FILE), &rows)?;
    write_resolved(cfg, out, "train")?;
    manifest.output(out, "resolved_train.toml")?;
    manifest.write(out)?;
    Ok(trained)
}

/// Predicts `t2` from the observed `t1` map and scores it against the observed `t2`.
fn validate(
    inputs: &Inputs,
    encodings: urbanca::matrix::Matrix,
    model: &TransitionModel,
) -> urbanca::Result<ValidationReport> {
    let b_t2 = inputs.b_t2.as_ref().expect("validation needs a t2 map");
    let ca = Automaton::from_encodings(
        encodings,
        inputs.raster.width(),
        inputs.raster.height(),
        model,
        &inputs.spec,
    )?;
    let pred = ca.step(&inputs.b_t1)?;
    ValidationReport::evaluate(&inputs.b_t1, b_t2, &pred.map)
}

/// Classifier, `mean (+/- spread)` cross-validation accuracy and timings.
fn write_cv_report(path: &Path, rows: &[ModelReportRow]) -> CliResult<()> {
    csv_rows(
        path,
        &["classifier", "cross_validation", "training_time_s", "prediction_time_s"],
        rows.iter().map(|r| {
            [
                r.kind.clone(),
                r.cv.as_ref().map_or_else(String::new, |c| c.to_string()),
                format!("{:.2}", r.train_seconds),
                format!("{:.2}", r.predict_seconds),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub steps: usize,
    pub years_per_step: i32,
    pub start_year: i32,
    pub years: Vec<i32>,
    pub model: String,
    pub model_sha256: String,
    pub encoder_sha256: String,
    pub raster_sha256: String,
    pub start_sha256: String,
    pub outputs: BTreeMap<String, String>,
}

/// Runs the automaton `steps` times and writes one built-up map and one
/// transition-class map per step, named by calendar year.
pub fn simulate(cfg: &RunConfig, model_path: &Path, steps: usize, out: &Path) -> CliResult<RunMetadata> {
    cfg.validate()?;
    if steps == 0 {
        return Err(CliError::Config("steps must be at least 1".into()));
    }
    create_dir(out)?;
    let encoder_path = cfg.paths.out_dir.join(ENCODER_FILE);
    let enc = Autoencoder::load(&encoder_path).stage("reading prepared encoder")?;
    let model = TransitionModel::load(model_path).stage(format!("reading {}", model_path.display()))?;
    let grid = read_raster(&cfg.paths.raster).stage(format!("reading {}", cfg.paths.raster.display()))?;
    let raster = normalize(&grid).stage("normalizing raster")?;
    let start_path = match cfg.timeline.start {
        StartMap::T => &cfg.paths.builtup_t,
        StartMap::T1 => &cfg.paths.builtup_t1,
    };
    let start = read_builtup(start_path).stage(format!("reading {}", start_path.display()))?;
    let spec = cfg.neighborhood.spec()?;
    let run = Automaton::new(&raster, &model, &enc, &spec)
        .stage("binding model to raster")?
        .simulate(&start, steps)
        .stage("simulating")?;

    let mut outputs = BTreeMap::new();
    let mut years = Vec::with_capacity(steps);
    for (i, step) in run.steps.iter().enumerate() {
        let year = cfg.timeline.year_after(i + 1);
        years.push(year);
        let map_name = format!("builtup_{year}.pgm");
        write_builtup(&step.map, out.join(&map_name)).stage(format!("writing {map_name}"))?;
        let tr_name = format!("transitions_{year}.pgm");
        write_raster(&step.transitions.to_grid(), out.join(&tr_name)).stage(format!("writing {tr_name}"))?;
        for name in [map_name, tr_name] {
            outputs.insert(name.clone(), sha256_file(&out.join(&name))?);
        }
    }
    let meta = RunMetadata {
        seed: cfg.seed,
        steps,
        years_per_step: cfg.timeline.years_per_step,
        start_year: cfg.timeline.start_year(),
        years,
        model: model_path.file_name().map_or_else(
            || model_path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        ),
        model_sha256: sha256_file(model_path)?,
        encoder_sha256: sha256_file(&encoder_path)?,
        raster_sha256: sha256_file(&cfg.paths.raster)?,
        start_sha256: sha256_file(start_path)?,
        outputs,
    };
    write_text(
        &out.join(RUN_FILE),
        &toml::to_string(&meta).expect("metadata serializes"),
    )?;
    write_resolved(cfg, out, "simulate")?;
    Ok(meta)
}

pub const EVALUATE_HEADER: [&str; 9] = ["FoM", "PA", "UA", "OA", "A", "B", "C", "D", "E"];

/// Scores a predicted map against the observed pair and writes a one-row CSV.
pub fn evaluate(obs_t: &Path, obs_t1: &Path, pred_t1: &Path, out: &Path) -> CliResult<ValidationReport> {
    let read = |p: &Path| read_builtup(p).stage(format!("reading {}", p.display()));
    let report = ValidationReport::evaluate(&read(obs_t)?, &read(obs_t1)?, &read(pred_t1)?).stage("evaluating")?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let acc = report.accounting;
    let mut row = vec![
        fmt_opt(report.fom),
        fmt_opt(report.pa),
        fmt_opt(report.ua),
        fmt_opt(report.oa),
    ];
    row.extend([acc.a, acc.b, acc.c, acc.d, acc.e].iter().map(u64::to_string));
    csv_rows(out, &EVALUATE_HEADER, [row])?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub len: usize,
    pub final_loss: f64,
    pub validation: ValidationReport,
}

/// For each encoding length: train the encoder, fit the first roster entry on
/// `t -> t1` and score its prediction of `t2`.
pub fn sweep(cfg: &RunConfig, lengths: &[usize]) -> CliResult<Vec<SweepRow>> {
    cfg.validate()?;
    if lengths.is_empty() {
        return Err(CliError::Config("no encoding lengths to sweep".into()));
    }
    if cfg.paths.builtup_t2.is_none() {
        return Err(CliError::Config(
            "sweep scores predictions and needs paths.builtup_t2".into(),
        ));
    }
    let out = &cfg.paths.out_dir;
    create_dir(out)?;
    let inputs = Inputs::load(cfg)?;
    let spec = cfg.roster[0].trainer()?;
    let y = transition_labels(&inputs.b_t, &inputs.b_t1, cfg.merge_bnb).stage("building label matrix")?;
    let mut rows = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let mut run = cfg.clone();
        run.encoder.len = len;
        run.validate()?;
        let (enc, report) = train_encoder(&run, &inputs)?;
        let encodings = encode_raster(&inputs.raster, &enc, &inputs.spec).stage("encoding raster")?;
        let x = feature_matrix(&inputs.b_t, &encodings, &inputs.spec).stage("building data matrix")?;
        let model = spec
            .train(&x.matrix, &y, model_seed(cfg.seed, 0))
            .stage(format!("len {len}: training"))?;
        let validation = validate(&inputs, encodings, &model).stage(format!("len {len}: validating"))?;
        log::info!("len {len}: FoM {:?}", validation.fom);
        rows.push(SweepRow {
            len,
            final_loss: report.final_loss().unwrap_or(f64::NAN),
            validation,
        });
    }
    csv_rows(
        &out.join(SWEEP_FILE),
        &["len", "encoder_loss", "FoM", "PA", "UA", "OA"],
        rows.iter().map(|r| {
            let v = r.validation;
            [
                r.len.to_string(),
                format!("{:.6}", r.final_loss),
                fmt_opt(v.fom),
                fmt_opt(v.pa),
                fmt_opt(v.ua),
                fmt_opt(v.oa),
            ]
        }),
    )?;
    write_resolved(cfg, out, "sweep")?;
    Ok(rows)
}

/// Serializable mirror of [`SynthScenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub width: usize,
    pub height: usize,
    pub min_neighbors: usize,
    pub theta: f64,
    pub steps: usize,
    pub seed: u64,
    pub smoothing: usize,
    pub initial_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        SynthScenario::default().into()
    }
}

impl From<SynthScenario> for ScenarioConfig {
    fn from(s: SynthScenario) -> Self {
        ScenarioConfig {
            width: s.width,
            height: s.height,
            min_neighbors: s.min_neighbors,
            theta: s.theta,
            steps: s.steps,
            seed: s.seed,
            smoothing: s.smoothing,
            initial_fraction: s.initial_fraction,
        }
    }
}

impl From<&ScenarioConfig> for SynthScenario {
    fn from(s: &ScenarioConfig) -> Self {
        SynthScenario {
            width: s.width,
            height: s.height,
            min_neighbors: s.min_neighbors,
            theta: s.theta,
            steps: s.steps,
            seed: s.seed,
            smoothing: s.smoothing,
            initial_fraction: s.initial_fraction,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub const SYNTH_RASTER: &str = "raster.ppm";
pub const SYNTH_CONFIG: &str = "config.toml";

pub fn synth_map_name(i: usize) -> String {
    format!("builtup_{i}.pgm")
}

/// Writes a synthetic scenario and a run config wired to its first three maps.
/// The config predicts map 2 from map 1, so `simulate` starts at `t1`.
pub fn synth(scenario: &ScenarioConfig, out: &Path) -> CliResult<PathBuf> {
    create_dir(out)?;
    let generated = synth::generate(&scenario.into()).stage("generating scenario")?;
    write_raster(&generated.raster, out.join(SYNTH_RASTER)).stage("writing raster")?;
    for (i, map) in generated.maps.iter().enumerate() {
        write_builtup(map, out.join(synth_map_name(i))).stage("writing built-up map")?;
    }
    write_text(
        &out.join("scenario.toml"),
        &toml::to_string(scenario).expect("scenario serializes"),
    )?;
    let mut cfg = RunConfig::new(config::Paths {
        raster: SYNTH_RASTER.into(),
        builtup_t: synth_map_name(0).into(),
        builtup_t1: synth_map_name(1).into(),
        builtup_t2: Some(synth_map_name(2).into()),
        out_dir: "run".into(),
    });
    cfg.seed = scenario.seed;
    cfg.roster = vec![config::RosterEntry::RandomForest {
        n_trees: 100,
        max_depth: None,
        min_leaf: 1,
        max_features: "sqrt".into(),
        bootstrap: true,
    }];
    cfg.timeline = config::Timeline {
        year_t: 0,
        years_per_step: 1,
        start: StartMap::T1,
    };
    let path = out.join(SYNTH_CONFIG);
    write_text(&path, &cfg.to_toml())?;
    Ok(path)
}
