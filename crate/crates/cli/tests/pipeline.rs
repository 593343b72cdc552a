use std::path::Path;

use lungsound::metrics::{ConfusionMatrix, Task};
use lungsound::rnn::{predict_many, ModelBundle};
use lungsound_cli::config::DataSource;
use lungsound_cli::data::prepare_items;
use lungsound_cli::experiment::{evaluate, read_report, run_experiment, split_indices, Subset};
use lungsound_cli::ExperimentConfig;

fn small(out: &Path, task: Task) -> ExperimentConfig {
    let mut cfg =
        ExperimentConfig { task, seed: Some(7), out_dir: out.to_path_buf(), hidden: 16, ..Default::default() };
    cfg.train.epochs = 3;
    cfg.data = DataSource::Synthetic { sequences: 40, seed: 1 };
    cfg
}

#[test]
fn smoke_run_emits_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg =
        ExperimentConfig { task: Task::Anomaly2, seed: Some(1), out_dir: tmp.path().into(), ..Default::default() };
    cfg.train.epochs = 5;
    cfg.data = DataSource::Synthetic { sequences: 60, seed: 0 };
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.dir, tmp.path().join("anomaly2_LSTM_S3_zscore_1"));
    for f in ["report.json", "report.txt", "confusion.csv", "history.csv", "model.bin", "stats.bin", "config.txt"] {
        assert!(out.dir.join(f).is_file(), "missing {f}");
    }
    let history = std::fs::read_to_string(out.dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 6);
    assert_eq!(out.history.len(), 5);
    assert_eq!(read_report(&out.dir).unwrap(), out.report);
}

#[test]
fn identical_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&small(a.path(), Task::Anomaly4)).unwrap();
    let rb = run_experiment(&small(b.path(), Task::Anomaly4)).unwrap();
    for f in ["report.json", "model.bin", "stats.bin", "confusion.csv", "history.csv", "predictions.csv"] {
        assert_eq!(std::fs::read(ra.dir.join(f)).unwrap(), std::fs::read(rb.dir.join(f)).unwrap(), "{f} differs");
    }
}

/// Scores recomputed straight from confusion.csv, one loop per definition.
fn recompute(cm: &ConfusionMatrix) -> (f64, f64, f64, f64) {
    let n = cm.counts.len();
    let row = |i: usize| cm.counts[i].iter().sum::<u64>() as f64;
    let spec = cm.counts[0][0] as f64 / row(0);
    let mut hit = 0.0;
    let mut abnormal = 0.0;
    for i in 1..n {
        hit += cm.counts[i][i] as f64;
        abnormal += row(i);
    }
    let sens = hit / abnormal;
    let recall_mean = (0..n).map(|i| cm.counts[i][i] as f64 / row(i)).sum::<f64>() / n as f64;
    (sens, spec, (sens + spec) / 2.0, recall_mean)
}

#[test]
fn report_matches_confusion_csv() {
    for task in [Task::Anomaly4, Task::Anomaly2] {
        let tmp = tempfile::tempdir().unwrap();
        let out = run_experiment(&small(tmp.path(), task)).unwrap();
        let cm = ConfusionMatrix::from_csv(&std::fs::read_to_string(out.dir.join("confusion.csv")).unwrap()).unwrap();
        assert_eq!(cm.counts.iter().flatten().sum::<u64>() as usize, out.report.n_test);
        let (sens, spec, score, acc) = recompute(&cm);
        let m = &out.report.metrics;
        assert_eq!(m.sensitivity, Some(sens));
        assert_eq!(m.specificity, Some(spec));
        assert_eq!(m.icbhi_score, Some(score));
        assert!((m.macro_accuracy.unwrap() - acc).abs() <= 1e-15);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.dir.join("report.json")).unwrap()).unwrap();
        assert_eq!(json["icbhi_score"].as_f64(), Some(score));
    }
}

#[test]
fn run_directory_suffices_for_inference() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(tmp.path(), Task::Anomaly4)).unwrap();
    let bundle = ModelBundle::from_bytes(&std::fs::read(out.dir.join("model.bin")).unwrap()).unwrap();
    let cfg = ExperimentConfig::from_text(&std::fs::read_to_string(out.dir.join("config.txt")).unwrap()).unwrap();
    assert_eq!(bundle.setting, cfg.setting);

    let items = prepare_items(&cfg).unwrap().items;
    let (_, test) = split_indices(&cfg, &items).unwrap();
    let raw: Vec<_> = test.iter().map(|&i| items[i].seq.clone()).collect();
    let seqs = bundle.norm.apply_sequences(&raw).unwrap();
    let names = Task::Anomaly4.class_names();
    let expected: String = std::iter::once("id,label".to_string())
        .chain(
            predict_many(&bundle.model, &seqs)
                .unwrap()
                .iter()
                .zip(&seqs)
                .map(|((p, _), s)| format!("{},{}", s.id, names[*p])),
        )
        .map(|l| l + "\n")
        .collect();
    assert_eq!(std::fs::read_to_string(out.dir.join("predictions.csv")).unwrap(), expected);

    let rep = evaluate(&out.dir.join("model.bin"), &cfg, Subset::Test).unwrap();
    assert_eq!(rep, out.report.metrics);
}

#[test]
fn pathology_tasks_run_on_disk_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let n =
        lungsound_cli::data::write_synthetic_corpus(&corpus, &lungsound::dataset::SynthSpec::new(24, 2, 5)).unwrap();
    assert_eq!(n, 24);
    let mut cfg = small(&tmp.path().join("runs"), Task::Patho2);
    cfg.set("data", "icbhi").unwrap();
    cfg.set("audio_dir", corpus.to_str().unwrap()).unwrap();
    cfg.set("diagnosis_file", corpus.join("diagnosis.txt").to_str().unwrap()).unwrap();
    cfg.set("split", "patient").unwrap();
    let items = prepare_items(&cfg).unwrap().items;
    assert_eq!(items.len(), 24);
    // Even-numbered synthetic patients are healthy.
    assert!(items.iter().all(|i| i.seq.label == (i.patient as usize % 2)));
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.report.n_train + out.report.n_test, 24);

    cfg.task = Task::Anomaly2;
    let items = prepare_items(&cfg).unwrap().items;
    assert!(items.iter().all(|i| i.seq.id.contains('@')));
}
