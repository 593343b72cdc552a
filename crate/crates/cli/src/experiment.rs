//! One training run: prepare data, split, normalize, train, evaluate, write
//! artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lungsound::frames::FrameSequence;
use lungsound::metrics::{confusion, report, split, split_grouped, MetricsReport, Task};
use lungsound::normalize::NormStats;
use lungsound::rnn::{predict_many, train, EpochStats, ModelBundle, RnnModel, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SplitMode};
use crate::data::{prepare_items, Item};
use crate::error::{read_to_string, write, CliError, StageExt};

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: String,
    pub model: String,
    pub setting: String,
    pub norm: String,
    pub seed: u64,
    pub split: String,
    pub n_train: usize,
    pub n_test: usize,
    pub excluded_short: usize,
    pub epochs: usize,
    pub final_train_loss: f64,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: RunReport,
    pub history: Vec<EpochStats>,
}

/// Which part of the data `evaluate` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Test,
    All,
}

impl std::str::FromStr for Subset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Subset::Train),
            "test" => Ok(Subset::Test),
            "all" => Ok(Subset::All),
            _ => Err(CliError::Validation(format!("unknown subset {s:?}"))),
        }
    }
}

/// Train and test item indices for the configured split.
pub fn split_indices(cfg: &ExperimentConfig, items: &[Item]) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    let labels: Vec<usize> = items.iter().map(|i| i.seq.label).collect();
    let n = cfg.task.n_classes();
    match cfg.split {
        SplitMode::Stratified => split(&labels, n, cfg.split_ratio, cfg.split_seed, true),
        SplitMode::Random => split(&labels, n, cfg.split_ratio, cfg.split_seed, false),
        SplitMode::Patient => {
            let groups: Vec<u32> = items.iter().map(|i| i.patient).collect();
            split_grouped(&groups, cfg.split_ratio, cfg.split_seed)
        }
    }
    .stage("split")
}

fn pick(items: &[Item], idx: &[usize]) -> Vec<FrameSequence> {
    idx.iter().map(|&i| items[i].seq.clone()).collect()
}

fn label_csv(ids: &[&str], labels: &[usize], task: Task) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let names = task.class_names();
    let mut put = |rec: [&str; 2]| w.write_record(rec).map_err(|e| CliError::Validation(e.to_string()));
    put(["id", "label"])?;
    for (id, &l) in ids.iter().zip(labels) {
        put([id, names[l]])?;
    }
    w.into_inner().map_err(|e| CliError::Validation(e.to_string()))
}

fn history_csv(history: &[EpochStats]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for h in history {
        w.serialize(h).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Validation(e.to_string()))
}

/// Scores `model` on `seqs`, returning predictions and the metrics report.
pub fn score_model(
    model: &RnnModel,
    seqs: &[FrameSequence],
    task: Task,
) -> Result<(Vec<usize>, MetricsReport), CliError> {
    let preds: Vec<usize> = predict_many(model, seqs).stage("predict")?.into_iter().map(|(p, _)| p).collect();
    let truths: Vec<usize> = seqs.iter().map(|s| s.label).collect();
    let mut cm = confusion(&preds, &truths, task.n_classes()).stage("metrics")?;
    cm.class_names = task.class_names().iter().map(|s| s.to_string()).collect();
    let rep = report(&cm, task).stage("metrics")?;
    Ok((preds, rep))
}

/// Everything a run needs before training starts.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub train_set: Vec<FrameSequence>,
    pub test_set: Vec<FrameSequence>,
    pub norm: NormStats,
    /// Freshly initialized model.
    pub model: RnnModel,
    pub train_cfg: TrainConfig,
    pub excluded_short: usize,
}

/// Loads and splits the data, fits normalization on the training side and
/// initializes the model. The seed drives both initialization (on its own
/// ChaCha stream) and training.
pub fn prepare_run(cfg: &ExperimentConfig) -> Result<PreparedRun, CliError> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let prepared = prepare_items(cfg)?;
    let items = prepared.items;
    let (train_idx, test_idx) = split_indices(cfg, &items)?;
    if test_idx.is_empty() || train_idx.is_empty() {
        return Err(CliError::Validation("split left one side empty".into()));
    }
    log::info!("{}: {} train / {} test items", cfg.run_name(), train_idx.len(), test_idx.len());

    let norm = NormStats::fit_sequences(&pick(&items, &train_idx), cfg.norm).stage("normalize")?;
    let train_set = norm.apply_sequences(&pick(&items, &train_idx)).stage("normalize")?;
    let test_set = norm.apply_sequences(&pick(&items, &test_idx)).stage("normalize")?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    init_rng.set_stream(1);
    let model = RnnModel::new(cfg.model_config(), &mut init_rng).stage("model")?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    Ok(PreparedRun { train_set, test_set, norm, model, train_cfg, excluded_short: prepared.excluded_short })
}

/// Runs one experiment and writes its artifacts under `cfg.run_dir()`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let PreparedRun { train_set, test_set, norm, mut model, train_cfg, excluded_short } = prepare_run(cfg)?;
    let seed = train_cfg.seed;
    let history = train(&mut model, &train_set, &train_cfg).stage("train")?;

    let (preds, metrics) = score_model(&model, &test_set, cfg.task)?;
    let run_report = RunReport {
        run: cfg.run_name(),
        model: cfg.model.to_string(),
        setting: cfg.setting.to_string(),
        norm: cfg.norm.to_string(),
        seed,
        split: cfg.split.to_string(),
        n_train: train_set.len(),
        n_test: test_set.len(),
        excluded_short,
        epochs: history.len(),
        final_train_loss: history.last().map_or(f64::NAN, |h| h.loss),
        metrics,
    };

    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let metadata = BTreeMap::from([
        ("task".to_string(), cfg.task.to_string()),
        ("classes".to_string(), cfg.task.class_names().join(",")),
        ("pathology_unit".to_string(), cfg.pathology_unit.to_string()),
    ]);
    let bundle = ModelBundle { model, setting: cfg.setting, norm: norm.clone(), metadata };
    let ids: Vec<&str> = test_set.iter().map(|s| s.id.as_str()).collect();
    let truths: Vec<usize> = test_set.iter().map(|s| s.label).collect();
    let cm = confusion(&preds, &truths, cfg.task.n_classes()).stage("metrics")?;
    let cm = lungsound::metrics::ConfusionMatrix { class_names: run_report.metrics.class_names.clone(), ..cm };

    write(&dir.join("config.txt"), cfg.to_text())?;
    write(&dir.join("model.bin"), bundle.to_bytes())?;
    write(&dir.join("stats.bin"), norm.to_bytes())?;
    write(&dir.join("history.csv"), history_csv(&history)?)?;
    write(&dir.join("confusion.csv"), cm.to_csv())?;
    write(&dir.join("predictions.csv"), label_csv(&ids, &preds, cfg.task)?)?;
    write(&dir.join("truth.csv"), label_csv(&ids, &truths, cfg.task)?)?;
    write(&dir.join("report.txt"), MetricsReport::table(&[(cfg.run_name(), &run_report.metrics)]))?;
    // Written last: its presence marks a finished run.
    let json = serde_json::to_string_pretty(&run_report).expect("report serializes");
    write(&dir.join("report.json"), json + "\n")?;
    Ok(RunOutcome { dir, report: run_report, history })
}

/// Loads a saved bundle and scores it on `subset` of the data described by
/// `cfg`. Frame setting, normalization and task come from the bundle.
pub fn evaluate(model_path: &Path, cfg: &ExperimentConfig, subset: Subset) -> Result<MetricsReport, CliError> {
    let bytes = std::fs::read(model_path).map_err(|e| CliError::io(model_path, e))?;
    let bundle = ModelBundle::from_bytes(&bytes)
        .map_err(|e| CliError::BadFile { path: model_path.to_path_buf(), message: e.to_string() })?;
    let task: Task = bundle
        .metadata
        .get("task")
        .ok_or_else(|| CliError::BadFile { path: model_path.to_path_buf(), message: "no task in metadata".into() })?
        .parse()
        .stage("metrics")?;
    let mut cfg = cfg.clone();
    cfg.setting = bundle.setting;
    cfg.task = task;
    if let Some(unit) = bundle.metadata.get("pathology_unit") {
        cfg.set("pathology_unit", unit)?;
    }
    let items = prepare_items(&cfg)?.items;
    let idx: Vec<usize> = match subset {
        Subset::All => (0..items.len()).collect(),
        Subset::Train => split_indices(&cfg, &items)?.0,
        Subset::Test => split_indices(&cfg, &items)?.1,
    };
    let seqs = bundle.norm.apply_sequences(&pick(&items, &idx)).stage("normalize")?;
    Ok(score_model(&bundle.model, &seqs, task)?.1)
}

/// Reads a finished run's `report.json`.
pub fn read_report(dir: &Path) -> Result<RunReport, CliError> {
    let path = dir.join("report.json");
    serde_json::from_str(&read_to_string(&path)?).map_err(|e| CliError::BadFile { path, message: e.to_string() })
}
