use std::path::Path;
use std::process::Command;

fn run(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lungsound")).current_dir(dir).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

const NET: &[&str] = &["--hidden", "4", "--layers", "1", "--epochs", "2"];
const TINY: &[&str] = &["--hidden", "4", "--layers", "1", "--epochs", "2", "--synth-sequences", "20"];

#[test]
fn success_and_help() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--seed", "1"];
    args.extend_from_slice(TINY);
    assert_eq!(run(tmp.path(), &args).0, 0);
    assert!(tmp.path().join("runs/anomaly4_LSTM_S3_zscore_1/report.json").is_file());
    assert_eq!(run(tmp.path(), &["--help"]).0, 0);
}

#[test]
fn validation_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = run(tmp.path(), &["train", "--epochs", "1"]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("seed"));
    assert_eq!(run(tmp.path(), &["sweep", "--epochs", "1"]).0, 1);
    assert_eq!(run(tmp.path(), &["train", "--seed", "1", "--setting", "S9"]).0, 1);
    assert_eq!(run(tmp.path(), &["train", "--seed", "1", "--data", "icbhi", "--audio-dir", "nowhere"]).0, 1);
    assert_eq!(run(tmp.path(), &["no-such-command"]).0, 1);
    std::fs::write(tmp.path().join("bad.cfg"), "hidden = lots\n").unwrap();
    assert_eq!(run(tmp.path(), &["train", "--seed", "1", "--config", "bad.cfg"]).0, 1);
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    assert_eq!(run(tmp.path(), &["synth", "--out", "c", "--sequences", "6", "--classes", "2"]).0, 0);
    std::fs::write(corpus.join("901_1s1_Tc_sc_Synth.txt"), "0.0 1.0 2 0\n").unwrap();
    let mut args =
        vec!["train", "--seed", "1", "--data", "icbhi", "--audio-dir", "c", "--diagnosis-file", "c/diagnosis.txt"];
    args.extend_from_slice(NET);
    let (code, err) = run(tmp.path(), &args);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("ingest"), "{err}");

    std::fs::write(tmp.path().join("p.csv"), "id,label\na,normal\n").unwrap();
    std::fs::write(tmp.path().join("t.csv"), "id,label\nb,normal\n").unwrap();
    assert_eq!(run(tmp.path(), &["score", "--pred", "p.csv", "--truth", "t.csv", "--task", "anomaly2"]).0, 2);
    assert_eq!(run(tmp.path(), &["features", "missing.wav"]).0, 2);
}

#[test]
fn numeric_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--seed", "1", "--learning-rate", "1e300", "--clip-norm", "none"];
    args.extend_from_slice(TINY);
    let (code, err) = run(tmp.path(), &args);
    assert_eq!(code, 3, "{err}");
    assert!(!tmp.path().join("runs/anomaly4_LSTM_S3_zscore_1/report.json").exists());
}
