//! The `beatforge` command line.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags, missing input
//! paths), 1 for failures while running. Failures print one line to stderr:
//!
//! ```text
//! error: {"kind":"MissingStem","message":"..."}
//! ```
//!
//! Every command writes its resolved configuration next to its main output as
//! `<output>.config.toml`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audio::AudioClip;
use crate::augment::{build_combination, prepare_corpus, CombinationSpec, DatasetManifest, Split};
use crate::config::RunConfig;
use crate::error::Error;
use crate::features::FeatureExtractor;
use crate::hmm::tune;
use crate::io::atomic_write;
use crate::net::{load_weights, save_weights, train};
use crate::pipeline::{evaluate_corpus, evaluate_estimates, load_activations, load_examples, Tracker};
use crate::selection::{select_stems, SelectionRule};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncheckpoint format 1, feature format 1, manifest version 1, report version 1"
);

#[derive(Debug, Parser)]
#[command(name = "beatforge", version, long_version = LONG_VERSION, about = "Joint beat and downbeat tracking")]
struct Cli {
    /// Worker threads for per-file stages (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract the feature matrix of a WAV file.
    Features(FeaturesArgs),
    /// Train a network on a dataset manifest.
    Train(TrainArgs),
    /// Track beats and downbeats in a WAV file.
    Track(TrackArgs),
    /// Apply a drum-stem selection rule to every WAV in a directory.
    SelectStems(SelectArgs),
    /// Prepare a stem corpus and write the manifest of one data-type combination.
    BuildAugset(AugsetArgs),
    /// Score a model or precomputed estimates on a manifest split.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint path; the epoch log goes to `<output>.log.csv`.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    chunk_frames: Option<usize>,
    /// Grid-search the decoder on the validation split and store the winner
    /// in the sidecar configuration.
    #[arg(long)]
    tune: bool,
}

#[derive(Debug, Args)]
struct TrackArgs {
    input: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Allowed bar lengths, e.g. `3,4`.
    #[arg(long, value_delimiter = ',')]
    meters: Option<Vec<u32>>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    stem_dir: PathBuf,
    #[arg(long)]
    rule: SelectionRule,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct AugsetArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    combination: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, conflicts_with = "estimates", required_unless_present = "estimates")]
    weights: Option<PathBuf>,
    /// Directory of `<song_id>.beats` files to score instead of a model.
    #[arg(long)]
    estimates: Option<PathBuf>,
    /// Only score entries of this dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Model name in the report (default: the manifest's combination).
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_delimiter = ',')]
    meters: Option<Vec<u32>>,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write a `model,beat_f1,downbeat_f1` table here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

fn require(path: &Path, what: &str) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} `{}` does not exist", path.display())))
    }
}

fn error_line(kind: &str, message: &str) -> String {
    format!("error: {}", serde_json::json!({ "kind": kind, "message": message }))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let outcome = resolve_config(&cli).and_then(|config| {
        init_logging(&config.log_level);
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.jobs {
            pool = pool.num_threads(n);
        }
        let pool = pool.build().map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(&cli.command, config))
    });
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("{}", error_line("UsageError", &msg));
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}

pub fn main() -> ! {
    std::process::exit(run(std::env::args_os()))
}

fn resolve_config(cli: &Cli) -> std::result::Result<RunConfig, Failure> {
    if let Some(p) = &cli.config {
        require(p, "config file")?;
    }
    if cli.jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be positive".into()));
    }
    let mut config = RunConfig::load_or_default(cli.config.as_deref()).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .parse_env("BEATFORGE_LOG")
        .format_timestamp(None)
        .try_init();
}

fn dispatch(command: &Command, mut config: RunConfig) -> CliResult {
    match command {
        Command::Features(a) => {
            require(&a.input, "input")?;
            config.validate()?;
            let extractor = FeatureExtractor::new(config.features.clone())?;
            extractor.extract(&AudioClip::load(&a.input)?)?.save(&a.output)?;
            config.write_sidecar(&a.output)?;
        }
        Command::Train(a) => cmd_train(a, config)?,
        Command::Track(a) => {
            require(&a.input, "input")?;
            require(&a.weights, "checkpoint")?;
            if let Some(m) = &a.meters {
                config.decoder.beats_per_bar = m.clone();
            }
            config.validate()?;
            let tracker = Tracker::new(config.features.clone(), load_weights(&a.weights)?, &config.decoder)?;
            tracker.track_file(&a.input)?.write(&a.output)?;
            config.write_sidecar(&a.output)?;
        }
        Command::SelectStems(a) => {
            require(&a.stem_dir, "stem directory")?;
            config.validate()?;
            let report = select_stems(&a.stem_dir, a.rule, &config.selection)?;
            atomic_write(&a.output, report.to_json()?.as_bytes())?;
            config.write_sidecar(&a.output)?;
        }
        Command::BuildAugset(a) => {
            require(&a.corpus, "corpus root")?;
            let spec = CombinationSpec::by_name(&a.combination).map_err(|e| Failure::Usage(e.to_string()))?;
            config.validate()?;
            let corpus = prepare_corpus(&a.corpus, &config.selection)?;
            let manifest = build_combination(&corpus, &spec, config.seed)?;
            manifest.save(&a.output)?;
            log::info!("{} entries written to {}", manifest.entries.len(), a.output.display());
            config.write_sidecar(&a.output)?;
        }
        Command::Evaluate(a) => cmd_evaluate(a, config)?,
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs, mut config: RunConfig) -> CliResult {
    require(&a.manifest, "manifest")?;
    let net = &mut config.network;
    if let Some(v) = a.epochs {
        net.max_epochs = v;
        net.patience = net.patience.min(v);
    }
    if let Some(v) = a.patience {
        net.patience = v;
    }
    if let Some(v) = a.lr {
        net.learning_rate = v;
    }
    if let Some(v) = a.chunk_frames {
        net.chunk_frames = Some(v);
    }
    config.validate()?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let extractor = FeatureExtractor::new(config.features.clone())?;
    let train_set = load_examples(&manifest, Split::Train, &extractor, &config.network)?;
    let val_set = load_examples(&manifest, Split::Val, &extractor, &config.network)?;
    log::info!("training on {} sequences, validating on {}", train_set.len(), val_set.len());
    let (weights, training_log) = train(&train_set, &val_set, &config.network)?;
    drop((train_set, val_set));

    if a.tune {
        let tracker = Tracker::new(config.features.clone(), weights.clone(), &config.decoder)?;
        let val = load_activations(&manifest, Split::Val, &tracker)?;
        let result = tune(&config.decoder_grid(), &val, &config.eval)?;
        log::info!("decoder tuned on validation: score {:.4}", result.best_score);
        config.decoder = result.best;
    }
    let mut log_path = a.output.clone().into_os_string();
    log_path.push(".log.csv");
    save_weights(&weights, &a.output)?;
    atomic_write(Path::new(&log_path), training_log.to_csv().as_bytes())?;
    config.write_sidecar(&a.output)?;
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, mut config: RunConfig) -> CliResult {
    require(&a.manifest, "manifest")?;
    if let Some(w) = &a.weights {
        require(w, "checkpoint")?;
    }
    if let Some(d) = &a.estimates {
        require(d, "estimate directory")?;
    }
    if let Some(m) = &a.meters {
        config.decoder.beats_per_bar = m.clone();
    }
    config.validate()?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let model = a.model.clone().unwrap_or_else(|| manifest.provenance.combination.clone());
    let report = match (&a.weights, &a.estimates) {
        (Some(w), _) => {
            let tracker = Tracker::new(config.features.clone(), load_weights(w)?, &config.decoder)?;
            let dataset = a.dataset.as_deref();
            evaluate_corpus(&tracker, &manifest, a.split, &config.eval, &model, |e| {
                dataset.map_or(true, |d| e.dataset == d)
            })?
        }
        (None, Some(dir)) => {
            if a.dataset.is_some() {
                return Err(Failure::Usage("--dataset needs --weights".into()));
            }
            evaluate_estimates(dir, &manifest, a.split, &config.eval, &model)?
        }
        (None, None) => unreachable!("clap requires one of --weights and --estimates"),
    };
    atomic_write(&a.output, report.to_json()?.as_bytes())?;
    if let Some(csv) = &a.csv {
        atomic_write(csv, report.to_csv().as_bytes())?;
    }
    config.write_sidecar(&a.output)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["beatforge", "bogus"]), 2);
        assert_eq!(run(["beatforge", "track", "in.wav"]), 2);
        assert_eq!(run(["beatforge", "select-stems", "d", "--rule", "loud", "-o", "x"]), 2);
    }

    #[test]
    fn missing_checkpoint_is_usage_error_without_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let wav = dir.path().join("in.wav");
        AudioClip::new(vec![0.0; 44_100], 44_100, "in").unwrap().write_wav(&wav).unwrap();
        let out = dir.path().join("out.beats");
        let code = run([
            "beatforge".as_ref(),
            "track".as_ref(),
            wav.as_os_str(),
            "--weights".as_ref(),
            dir.path().join("nope.ckpt").as_os_str(),
            "-o".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 2);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn error_line_is_json() {
        let line = error_line("MissingStem", "no \"drums\"");
        let v: serde_json::Value = serde_json::from_str(line.strip_prefix("error: ").unwrap()).unwrap();
        assert_eq!(v["kind"], "MissingStem");
    }
}
