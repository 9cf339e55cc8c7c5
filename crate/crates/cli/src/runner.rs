//! End-to-end experiment execution: datasets, protocol stages through the
//! checkpoint cache, per-seed metric records, and ensemble aggregates.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use subliminal_core::data::{
    generate_synthetic, load_idx, make_noise, poison_pair, take_train_subset, LabeledSet,
    NoiseSpec, PoisonSpec, Resample, Split, Task,
};
use subliminal_core::diagnostics::{
    accuracy, chi_aux, chi_channel, flip_gradient, pooled_flip_rate, transmission_ratio,
    ChiReport, DiagError,
};
use subliminal_core::model::{Model, ModelFamily};
use subliminal_core::rng;
use subliminal_core::training::{
    distill_aux, distill_task, poison_teacher, train_base_joint, train_teacher_aux, Checkpoint,
    Examples,
};

use crate::cache::Cache;
use crate::config::{DataSource, ExperimentConfig, Protocol};
use crate::CliError;

/// Fashion pair used for flip metrics when no poison pair is configured
/// (the clean-teacher control): Trouser ↔ Sandal.
pub const DEFAULT_FLIP_PAIR: PoisonSpec = PoisonSpec { class_a: 1, class_b: 5 };

/// 16-input probe size of the sampled-χ diagnostic.
pub const SAMPLED_PROBE: usize = 16;

/// Whether to run the full protocol or only the stages χ needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    Full,
    /// Stop after the teacher; compute the protocol's χ. For metric-only
    /// large ensembles.
    ChiOnly,
}

/// Loaded (or generated) image sets for one experiment.
pub struct Datasets {
    pub mnist_train: LabeledSet,
    pub mnist_test: LabeledSet,
    pub fashion_train: Option<LabeledSet>,
    pub fashion_test: Option<LabeledSet>,
    /// Content hash over all loaded sets; part of every stage recipe.
    pub fingerprint: String,
}

/// ChiReport without the parameter-length reconstruction vector; what goes
/// into record files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChiSummary {
    pub chi: Option<f64>,
    pub norm_visibility: Option<f64>,
    pub cg_iters: usize,
    pub cg_residual: f64,
    pub cg_converged: bool,
    pub lambda: f64,
    pub probe_size: usize,
}

impl From<&ChiReport> for ChiSummary {
    fn from(r: &ChiReport) -> Self {
        ChiSummary {
            chi: r.chi,
            norm_visibility: r.norm_visibility,
            cg_iters: r.cg_iters,
            cg_residual: r.cg_residual,
            cg_converged: r.cg_converged,
            lambda: r.lambda,
            probe_size: r.probe_size,
        }
    }
}

/// Everything one seed produced. The deterministic subset (everything but
/// wall time and cache hits) is written as `metrics_seed<seed>.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub name: String,
    pub protocol: Protocol,
    pub model: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub chi: Option<ChiSummary>,
    pub sampled_chi: Option<ChiSummary>,
    pub wall_time_s: f64,
    pub cache_hits: usize,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    config_hash: &'a str,
    name: &'a str,
    protocol: Protocol,
    model: &'a str,
    seed: u64,
    metrics: &'a BTreeMap<String, f64>,
    chi: &'a Option<ChiSummary>,
    sampled_chi: &'a Option<ChiSummary>,
}

/// Ensemble mean and standard error for one metric. `sem` is the sample
/// standard deviation over seeds divided by √n; absent below two samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricAgg {
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sem: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub name: String,
    pub protocol: Protocol,
    pub model: String,
    pub n_seeds: usize,
    pub metrics: BTreeMap<String, MetricAgg>,
}

pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

/// Cache directory for an experiment: `SUBLIMINAL_CACHE_DIR` if set, else
/// `cache/` inside the output directory.
pub fn default_cache_dir(cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os("SUBLIMINAL_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.join("cache"))
}

pub fn run_experiment(cfg: &ExperimentConfig, mode: RunMode) -> Result<ExperimentOutput, CliError> {
    let cache = Cache::new(default_cache_dir(cfg))?;
    run_with_cache(cfg, mode, &cache)
}

pub fn run_with_cache(
    cfg: &ExperimentConfig,
    mode: RunMode,
    cache: &Cache,
) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let data = load_datasets(cfg)?;
    write_json(&cfg.output_dir.join("resolved_config.json"), cfg)?;

    let mut records = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let record = run_seed(cfg, &data, seed, cache, mode)?;
        let metrics_file = MetricsFile {
            config_hash: &record.config_hash,
            name: &record.name,
            protocol: record.protocol,
            model: &record.model,
            seed: record.seed,
            metrics: &record.metrics,
            chi: &record.chi,
            sampled_chi: &record.sampled_chi,
        };
        write_json(
            &cfg.output_dir.join(format!("metrics_seed{seed}.json")),
            &metrics_file,
        )?;
        write_json(
            &cfg.output_dir.join(format!("record_seed{seed}.json")),
            &record,
        )?;
        records.push(record);
    }

    let aggregate = aggregate_records(cfg, &records);
    write_json(&cfg.output_dir.join("aggregate.json"), &aggregate)?;
    write_aggregate_csv(&cfg.output_dir.join("aggregate.csv"), &aggregate)?;
    Ok(ExperimentOutput {
        out_dir: cfg.output_dir.clone(),
        records,
        aggregate,
    })
}

/// Mean/SEM per metric over the seeds where it is defined.
pub fn aggregate_records(cfg: &ExperimentConfig, records: &[RunRecord]) -> Aggregate {
    let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        for (k, v) in &r.metrics {
            values.entry(k).or_default().push(*v);
        }
    }
    let metrics = values
        .into_iter()
        .map(|(k, vs)| {
            let n = vs.len();
            let mean = vs.iter().sum::<f64>() / n as f64;
            let sem = if n >= 2 {
                let var = vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                Some((var / n as f64).sqrt())
            } else {
                None
            };
            (k.to_string(), MetricAgg { mean, sem, n })
        })
        .collect();
    Aggregate {
        config_hash: cfg.hash(),
        name: cfg.name.clone(),
        protocol: cfg.protocol,
        model: cfg.model.label(),
        n_seeds: records.len(),
        metrics,
    }
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Datasets, CliError> {
    let (mnist_train, mnist_test) = load_task(cfg, Task::Mnist)?;
    let (fashion_train, fashion_test) = if cfg.protocol == Protocol::Task {
        let (tr, te) = load_task(cfg, Task::Fashion)?;
        (Some(tr), Some(te))
    } else {
        (None, None)
    };

    let mut h = Sha256::new();
    for set in [Some(&mnist_train), Some(&mnist_test), fashion_train.as_ref(), fashion_test.as_ref()]
        .into_iter()
        .flatten()
    {
        fingerprint_set(&mut h, set);
    }
    let fingerprint: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(Datasets {
        mnist_train,
        mnist_test,
        fashion_train,
        fashion_test,
        fingerprint,
    })
}

fn load_task(cfg: &ExperimentConfig, task: Task) -> Result<(LabeledSet, LabeledSet), CliError> {
    match cfg.data.source {
        DataSource::Synthetic => Ok((
            generate_synthetic(task, Split::Train, cfg.data.n_train, cfg.data.data_seed),
            generate_synthetic(task, Split::Test, cfg.data.n_test, cfg.data.data_seed),
        )),
        DataSource::Idx => {
            let root = cfg
                .data
                .root
                .clone()
                .or_else(|| std::env::var_os("SUBLIMINAL_DATA_ROOT").map(PathBuf::from))
                .ok_or_else(|| {
                    CliError::Data(
                        "dataset root not set: add data.root or set SUBLIMINAL_DATA_ROOT".into(),
                    )
                })?;
            let dir = root.join(task.label());
            let train_full = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
                task,
                Split::Train,
            )?;
            let test_full = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
                task,
                Split::Test,
            )?;
            Ok((
                take_train_subset(&train_full, cfg.data.n_train, cfg.data.data_seed)?,
                take_train_subset(&test_full, cfg.data.n_test, cfg.data.data_seed)?,
            ))
        }
    }
}

fn fingerprint_set(h: &mut Sha256, set: &LabeledSet) {
    h.update((set.len() as u64).to_le_bytes());
    for row in &set.inputs {
        for v in row {
            h.update(v.to_le_bytes());
        }
    }
    h.update(&set.labels);
}

fn run_seed(
    cfg: &ExperimentConfig,
    data: &Datasets,
    seed: u64,
    cache: &Cache,
    mode: RunMode,
) -> Result<RunRecord, CliError> {
    let started = Instant::now();
    let model = cfg.model.build();
    let mut record = RunRecord {
        config_hash: cfg.hash(),
        name: cfg.name.clone(),
        protocol: cfg.protocol,
        model: cfg.model.label(),
        seed,
        metrics: BTreeMap::new(),
        chi: None,
        sampled_chi: None,
        wall_time_s: 0.0,
        cache_hits: 0,
    };
    match cfg.protocol {
        Protocol::Aux => run_aux_seed(cfg, data, seed, cache, mode, model.as_ref(), &mut record)?,
        Protocol::Task => run_task_seed(cfg, data, seed, cache, mode, model.as_ref(), &mut record)?,
    }
    record.wall_time_s = started.elapsed().as_secs_f64();
    Ok(record)
}

fn run_aux_seed(
    cfg: &ExperimentConfig,
    data: &Datasets,
    seed: u64,
    cache: &Cache,
    mode: RunMode,
    model: &dyn Model,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    let family = cfg.model.family();
    let mnist_train = Examples::from_set(&data.mnist_train, family);
    let mnist_test = Examples::from_set(&data.mnist_test, family);
    let layout = model.layout();
    let noise = cfg.noise.expect("validated aux config has noise");
    let init = Checkpoint::init(&cfg.model, seed);

    let teacher_key = Cache::key(&serde_json::json!({
        "kind": "aux_teacher",
        "model": &cfg.model,
        "data": &data.fingerprint,
        "hyper": &cfg.teacher,
        "seed": seed,
    }));
    let (teacher, hit) = cache.get_or_compute(&teacher_key, || {
        train_teacher_aux(&init, &mnist_train, &cfg.teacher, seed).map_err(Into::into)
    })?;
    record.cache_hits += hit as usize;
    copy_stage_metrics(&mut record.metrics, "teacher", &teacher);
    let teacher_acc = accuracy(model, &teacher.params, &mnist_test, &layout.mnist)?;
    record.metrics.insert("teacher_acc".into(), teacher_acc);

    if mode == RunMode::Full {
        let student_key = Cache::key(&serde_json::json!({
            "kind": "aux_student",
            "teacher": &teacher_key,
            "noise": &noise,
            "hyper": &cfg.student,
            "seed": seed,
        }));
        let (student, hit) = cache.get_or_compute(&student_key, || {
            distill_aux(&init, &teacher, &noise, &cfg.student, seed).map_err(Into::into)
        })?;
        record.cache_hits += hit as usize;
        copy_stage_metrics(&mut record.metrics, "student", &student);
        let student_acc = accuracy(model, &student.params, &mnist_test, &layout.mnist)?;
        record.metrics.insert("student_acc".into(), student_acc);
        if let Ok(ratio) = transmission_ratio(student_acc, teacher_acc) {
            record.metrics.insert("transmission".into(), ratio);
        }
    }

    if cfg.diagnostics.chi_aux || mode == RunMode::ChiOnly {
        let noise_inputs = first_noise_set(&noise, seed)?;
        record.chi = run_chi(
            &mut record.metrics,
            "chi_aux",
            chi_aux(model, &init.params, &teacher.params, &noise_inputs, &mnist_train, &cfg.ridge),
        )?;
        if cfg.diagnostics.sampled_chi {
            let probe = &noise_inputs[..SAMPLED_PROBE.min(noise_inputs.len())];
            record.sampled_chi = run_chi(
                &mut record.metrics,
                "sampled_chi_aux",
                chi_aux(model, &init.params, &teacher.params, probe, &mnist_train, &cfg.ridge),
            )?;
        }
    }
    Ok(())
}

fn run_task_seed(
    cfg: &ExperimentConfig,
    data: &Datasets,
    seed: u64,
    cache: &Cache,
    mode: RunMode,
    model: &dyn Model,
    record: &mut RunRecord,
) -> Result<(), CliError> {
    let family = cfg.model.family();
    let mnist_train = Examples::from_set(&data.mnist_train, family);
    let mnist_test = Examples::from_set(&data.mnist_test, family);
    let fashion_train_set = data.fashion_train.as_ref().expect("task data has fashion");
    let fashion_test_set = data.fashion_test.as_ref().expect("task data has fashion");
    let fashion_train = Examples::from_set(fashion_train_set, family);
    let fashion_test = Examples::from_set(fashion_test_set, family);
    let layout = model.layout();
    let fashion_block = layout.fashion.clone().expect("task layout has fashion block");
    let base_hyper = cfg.base.expect("validated task config has base");
    let pair = cfg.poison.unwrap_or(DEFAULT_FLIP_PAIR);
    let init = Checkpoint::init(&cfg.model, seed);

    let base_key = Cache::key(&serde_json::json!({
        "kind": "task_base",
        "model": &cfg.model,
        "data": &data.fingerprint,
        "hyper": &base_hyper,
        "seed": seed,
    }));
    let (base, hit) = cache.get_or_compute(&base_key, || {
        train_base_joint(&init, &mnist_train, &fashion_train, &base_hyper, seed).map_err(Into::into)
    })?;
    record.cache_hits += hit as usize;
    copy_stage_metrics(&mut record.metrics, "base", &base);
    let metrics = &mut record.metrics;
    metrics.insert(
        "base_mnist_acc".into(),
        accuracy(model, &base.params, &mnist_test, &layout.mnist)?,
    );
    metrics.insert(
        "base_fashion_acc".into(),
        accuracy(model, &base.params, &fashion_test, &fashion_block)?,
    );
    metrics.insert(
        "base_flip".into(),
        pooled_flip_rate(model, &base.params, &fashion_test, &pair, &fashion_block)?,
    );

    let teacher_fashion_set = match &cfg.poison {
        Some(p) => poison_pair(fashion_train_set, p)?,
        None => fashion_train_set.clone(),
    };
    let teacher_fashion = Examples::from_set(&teacher_fashion_set, family);
    let teacher_key = Cache::key(&serde_json::json!({
        "kind": "task_teacher",
        "base": &base_key,
        "poison": &cfg.poison,
        "hyper": &cfg.teacher,
        "seed": seed,
    }));
    let (teacher, hit) = cache.get_or_compute(&teacher_key, || {
        poison_teacher(&base, &mnist_train, &teacher_fashion, &cfg.teacher, seed).map_err(Into::into)
    })?;
    record.cache_hits += hit as usize;
    copy_stage_metrics(&mut record.metrics, "teacher", &teacher);
    let metrics = &mut record.metrics;
    metrics.insert(
        "teacher_mnist_acc".into(),
        accuracy(model, &teacher.params, &mnist_test, &layout.mnist)?,
    );
    metrics.insert(
        "teacher_fashion_acc".into(),
        accuracy(model, &teacher.params, &fashion_test, &fashion_block)?,
    );
    let teacher_flip =
        pooled_flip_rate(model, &teacher.params, &fashion_test, &pair, &fashion_block)?;
    metrics.insert("teacher_flip".into(), teacher_flip);

    if mode == RunMode::Full {
        let student_key = Cache::key(&serde_json::json!({
            "kind": "task_student",
            "base": &base_key,
            "teacher": &teacher_key,
            "hyper": &cfg.student,
            "seed": seed,
        }));
        let (student, hit) = cache.get_or_compute(&student_key, || {
            distill_task(&base, &teacher, &mnist_train.inputs, &cfg.student, seed)
                .map_err(Into::into)
        })?;
        record.cache_hits += hit as usize;
        copy_stage_metrics(&mut record.metrics, "student", &student);
        let metrics = &mut record.metrics;
        metrics.insert(
            "student_mnist_acc".into(),
            accuracy(model, &student.params, &mnist_test, &layout.mnist)?,
        );
        metrics.insert(
            "student_fashion_acc".into(),
            accuracy(model, &student.params, &fashion_test, &fashion_block)?,
        );
        let student_flip =
            pooled_flip_rate(model, &student.params, &fashion_test, &pair, &fashion_block)?;
        metrics.insert("student_flip".into(), student_flip);
        if let Ok(ratio) = transmission_ratio(student_flip, teacher_flip) {
            metrics.insert("transmission".into(), ratio);
        }
    }

    if cfg.diagnostics.chi || mode == RunMode::ChiOnly {
        let drift: Vec<f64> = teacher
            .params
            .iter()
            .zip(&base.params)
            .map(|(t, b)| t - b)
            .collect();
        let swapped = pair_swapped_examples(fashion_test_set, &pair, family);
        let g = flip_gradient(model, &base.params, &swapped, &fashion_block)?;
        record.chi = run_chi(
            &mut record.metrics,
            "chi",
            chi_channel(model, &base.params, &layout.mnist, &mnist_train.inputs, &drift, &g, &cfg.ridge),
        )?;
        if cfg.diagnostics.sampled_chi {
            let probe = &mnist_train.inputs[..SAMPLED_PROBE.min(mnist_train.inputs.len())];
            record.sampled_chi = run_chi(
                &mut record.metrics,
                "sampled_chi",
                chi_channel(model, &base.params, &layout.mnist, probe, &drift, &g, &cfg.ridge),
            )?;
        }
    }
    Ok(())
}

/// The noise set the student saw first; the χ_aux public channel. Matches
/// the distillation stage's noise stream exactly: sub-seed index 0 for a
/// fixed set, 1 for the first resampled epoch.
pub fn first_noise_set(spec: &NoiseSpec, seed: u64) -> Result<Vec<Vec<f64>>, CliError> {
    let index = match spec.resample {
        Resample::Fixed => 0,
        Resample::PerEpoch => 1,
    };
    Ok(make_noise(spec, rng::sub_seed(seed, "distill-noise", index))?)
}

/// Fashion test examples of the poisoned pair with swapped labels; the
/// hidden-direction loss set.
pub fn pair_swapped_examples(set: &LabeledSet, pair: &PoisonSpec, family: ModelFamily) -> Examples {
    let (a, b) = (pair.class_a as u8, pair.class_b as u8);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (x, &y) in set.inputs.iter().zip(&set.labels) {
        if y == a || y == b {
            inputs.push(subliminal_core::data::normalize_for_model(x, family));
            labels.push(if y == a { b } else { a });
        }
    }
    Examples { inputs, labels }
}

/// Store χ scalars under `<prefix>*` keys; undefined overlap is recorded as
/// `<prefix>_defined = 0`, any other diagnostic failure propagates.
fn run_chi(
    metrics: &mut BTreeMap<String, f64>,
    prefix: &str,
    result: Result<ChiReport, DiagError>,
) -> Result<Option<ChiSummary>, CliError> {
    match result {
        Ok(report) => {
            metrics.insert(format!("{prefix}_defined"), 1.0);
            if let Some(chi) = report.chi {
                metrics.insert(prefix.to_string(), chi);
            }
            if let Some(vis) = report.norm_visibility {
                metrics.insert(format!("{prefix}_norm_visibility"), vis);
            }
            metrics.insert(format!("{prefix}_cg_iters"), report.cg_iters as f64);
            metrics.insert(
                format!("{prefix}_cg_converged"),
                if report.cg_converged { 1.0 } else { 0.0 },
            );
            Ok(Some(ChiSummary::from(&report)))
        }
        Err(DiagError::UndefinedChi { .. } | DiagError::ZeroDrift) => {
            metrics.insert(format!("{prefix}_defined"), 0.0);
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn copy_stage_metrics(metrics: &mut BTreeMap<String, f64>, prefix: &str, ckpt: &Checkpoint) {
    for (k, v) in &ckpt.metrics {
        metrics.insert(format!("{prefix}_{k}"), *v);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn write_aggregate_csv(path: &Path, agg: &Aggregate) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(e.to_string()))?;
    w.write_record(["metric", "mean", "sem", "n"])
        .map_err(|e| CliError::Data(e.to_string()))?;
    for (k, m) in &agg.metrics {
        w.write_record([
            k.as_str(),
            &format!("{}", m.mean),
            &m.sem.map(|s| format!("{s}")).unwrap_or_default(),
            &format!("{}", m.n),
        ])
        .map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}
