use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lungsound::dataset::{parse_wav, resample, SynthSpec};
use lungsound::dsp::MfccConfig;
use lungsound::frames::{FrameComposer, SettingId};
use lungsound::metrics::{MetricsReport, Task};
use lungsound::CANONICAL_RATE;
use lungsound_cli::data::write_synthetic_corpus;
use lungsound_cli::experiment::{evaluate, run_experiment, Subset};
use lungsound_cli::score::score_predictions;
use lungsound_cli::sweep::{run_sweep, SweepAxes};
use lungsound_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "lungsound", version, about = "Respiratory sound classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the per-window MFCCs of one WAV file as CSV.
    Features {
        wav: PathBuf,
        #[arg(long, default_value = "S3")]
        setting: String,
        /// Print composed frames (one row per time step) instead of windows.
        #[arg(long)]
        frames: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and write its run directory.
    Train(ConfigArgs),
    /// Score a saved model on a data source.
    Evaluate {
        /// A saved `model.bin`.
        #[arg(long)]
        bundle: PathBuf,
        /// train, test or all
        #[arg(long, default_value = "test")]
        subset: String,
        /// Write the report JSON here as well as printing the table.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train every combination of the given axes.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "S1,S2,S3,S4,S5,S6,S7")]
        settings: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "lstm,gru,bilstm,bigru")]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "zscore")]
        norms: Vec<String>,
        /// Comma-separated seeds; required.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score an id,label prediction CSV against a truth CSV.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        task: String,
    },
    /// Write a synthetic corpus in the WAV + annotation layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        sequences: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A config file plus per-key overrides; flags win over the file.
#[derive(Args)]
struct ConfigArgs {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    clip_norm: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    recurrent_dropout: Option<String>,
    /// synthetic or icbhi
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    synth_sequences: Option<String>,
    #[arg(long)]
    synth_seed: Option<String>,
    #[arg(long)]
    audio_dir: Option<String>,
    #[arg(long)]
    diagnosis_file: Option<String>,
    /// stratified, random or patient
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    split_seed: Option<String>,
    #[arg(long)]
    split_ratio: Option<String>,
    /// recording or cycle
    #[arg(long)]
    pathology_unit: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_text(&lungsound_cli::error::read_to_string(p)?)?,
            None => ExperimentConfig::default(),
        };
        // `data` goes first so the source-specific keys land on the right kind.
        let overrides = [
            ("data", &self.data),
            ("task", &self.task),
            ("setting", &self.setting),
            ("norm", &self.norm),
            ("model", &self.model),
            ("seed", &self.seed),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("clip_norm", &self.clip_norm),
            ("layers", &self.layers),
            ("hidden", &self.hidden),
            ("dropout", &self.dropout),
            ("recurrent_dropout", &self.recurrent_dropout),
            ("synth_sequences", &self.synth_sequences),
            ("synth_seed", &self.synth_seed),
            ("audio_dir", &self.audio_dir),
            ("diagnosis_file", &self.diagnosis_file),
            ("split", &self.split),
            ("split_seed", &self.split_seed),
            ("split_ratio", &self.split_ratio),
            ("pathology_unit", &self.pathology_unit),
            ("out_dir", &self.out_dir),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| CliError::Validation(format!("{what}: {e}")))
}

fn parse_all<T: std::str::FromStr>(what: &str, items: &[String]) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    items.iter().map(|s| parse(what, s)).collect()
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => lungsound_cli::error::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn features(wav: &PathBuf, setting: &str, frames: bool, out: Option<&PathBuf>) -> Result<(), CliError> {
    let setting: SettingId = parse("setting", setting)?;
    let bytes = std::fs::read(wav).map_err(|e| CliError::io(wav, e))?;
    let clip = parse_wav(&bytes).map_err(|e| CliError::BadFile { path: wav.clone(), message: e.to_string() })?;
    let clip = resample(&clip, CANONICAL_RATE);
    let composer = FrameComposer::new(setting.setting(), &MfccConfig::default(), CANONICAL_RATE)
        .map_err(|e| CliError::Stage { stage: "frames", source: e.into() })?;
    let rows = if frames { composer.compose(clip.samples()) } else { composer.window_mfccs(clip.samples()) }
        .map_err(|e| CliError::Stage { stage: "frames", source: e.into() })?;
    let mut text = String::new();
    for r in rows {
        let row: Vec<String> = r.iter().map(|x| format!("{x:.8e}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    emit(out, &text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Features { wav, setting, frames, out } => features(&wav, &setting, frames, out.as_ref()),
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let outcome = run_experiment(&cfg)?;
            print!("{}", MetricsReport::table(&[(outcome.report.run.clone(), &outcome.report.metrics)]));
            println!("artifacts: {}", outcome.dir.display());
            Ok(())
        }
        Command::Evaluate { bundle, subset, out, config } => {
            let cfg = config.resolve()?;
            let subset: Subset = subset.parse()?;
            let rep = evaluate(&bundle, &cfg, subset)?;
            print!("{}", MetricsReport::table(&[(bundle.display().to_string(), &rep)]));
            if let Some(p) = out {
                lungsound_cli::error::write(&p, rep.to_json() + "\n")?;
            }
            Ok(())
        }
        Command::Sweep { settings, models, norms, seeds, config } => {
            if seeds.is_empty() {
                return Err(CliError::Validation("--seeds is required".into()));
            }
            let base = config.resolve()?;
            let axes = SweepAxes {
                settings: parse_all("setting", &settings)?,
                models: parse_all("model", &models)?,
                norms: parse_all("norm", &norms)?,
                seeds,
            };
            let outcome = run_sweep(&base, &axes)?;
            println!("{} cells, {} failed: {}", outcome.rows.len(), outcome.failures(), outcome.csv_path.display());
            Ok(())
        }
        Command::Score { pred, truth, task } => {
            let task: Task = parse("task", &task)?;
            let rep = score_predictions(&pred, &truth, task)?;
            print!("{}", MetricsReport::table(&[(pred.display().to_string(), &rep)]));
            Ok(())
        }
        Command::Synth { out, sequences, classes, seed } => {
            let n = write_synthetic_corpus(&out, &SynthSpec::new(sequences, classes, seed))?;
            println!("wrote {n} recordings to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
