use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use straggler::harness::{
    self, AnomalyMix, FailureRateConfig, IbfSettings, OpStream, SaturateConfig, Structure,
};
use straggler::reconcile::ReconcileSession;
use straggler::{Epsilon, HashMode, IbfParams};

#[derive(Parser)]
#[command(
    name = "straggler",
    version,
    about = "Straggler identification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay an op stream through the power-sum sketch
    Sketch {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Replay an op stream through the invertible Bloom filter
    Ibf {
        #[command(subcommand)]
        action: RunAction,
    },
    /// Insert random ids until decoding fails; report the saturation points
    Saturate(SaturateArgs),
    /// Measure how often decoding fails with at most d anomalies
    FailureRate(FailureArgs),
    /// Two-party set reconciliation
    Reconcile {
        #[command(subcommand)]
        action: ReconcileAction,
    },
}

#[derive(Subcommand)]
enum RunAction {
    /// Apply each op in order and print one JSON line per query
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Default,
    PaperReplication,
}

impl From<Mode> for HashMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Default => HashMode::Default,
            Mode::PaperReplication => HashMode::PaperReplication,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mix {
    Stragglers,
    FalseDeletions,
    Mixed,
}

#[derive(Args)]
struct RunArgs {
    /// Op-stream file
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "1/16", value_parser = parse_epsilon)]
    epsilon: Epsilon,
    #[arg(long, value_enum, default_value = "default")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SaturateArgs {
    #[arg(long, default_value_t = 101)]
    cells: u32,
    #[arg(long, default_value_t = 4)]
    k: u16,
    #[arg(long, default_value_t = 1000)]
    trials: u32,
    /// Peel the fallback table when B stalls
    #[arg(long)]
    with_fallback: bool,
    #[arg(long, value_enum, default_value = "paper-replication")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Histogram CSV destination
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FailureArgs {
    #[arg(long, default_value_t = 8)]
    d: u32,
    #[arg(long, default_value = "1/16", value_parser = parse_epsilon)]
    epsilon: Epsilon,
    #[arg(long, default_value_t = 2000)]
    trials: u32,
    #[arg(long, value_enum, default_value = "mixed")]
    mix: Mix,
    /// Net anomalies per trial; defaults to d
    #[arg(long)]
    anomalies: Option<u32>,
    /// Matched insert/delete pairs per trial
    #[arg(long, default_value_t = 1000)]
    pairs: u32,
    #[arg(long, default_value_t = 1 << 20)]
    n: u64,
    #[arg(long, value_enum, default_value = "default")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long, default_value_t = 50)]
    d: u32,
    #[arg(long, default_value = "1/16", value_parser = parse_epsilon)]
    epsilon: Epsilon,
    #[arg(long, default_value_t = (1 << 24) - 1)]
    n: u64,
    #[arg(long, value_enum, default_value = "default")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SessionArgs {
    fn params(&self) -> Result<IbfParams> {
        Ok(IbfParams::new(
            self.d,
            self.epsilon,
            self.n,
            self.mode.into(),
            harness::hash_seed(self.seed),
        )?)
    }
}

#[derive(Subcommand)]
enum ReconcileAction {
    /// Encode a set file into a filter message
    Encode {
        /// Set file: whitespace-separated ids
        #[arg(long = "in")]
        input: PathBuf,
        /// Message destination
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Decode a peer's message against a local set file
    Diff {
        /// Message from the peer
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        local: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Encode, serialize, decode and diff in one process
    Roundtrip {
        /// Remote set file
        #[arg(long = "in")]
        input: PathBuf,
        /// Local set file
        #[arg(long)]
        local: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
    },
}

/// Accepts `a/b` or a decimal such as `0.0625`.
fn parse_epsilon(s: &str) -> Result<Epsilon, String> {
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (
            a.trim().parse::<u32>().map_err(|e| e.to_string())?,
            b.trim().parse::<u32>().map_err(|e| e.to_string())?,
        ),
        None => {
            let frac = s
                .strip_prefix("0.")
                .ok_or_else(|| format!("cannot read {s:?} as a fraction below 1"))?;
            if frac.is_empty() || frac.len() > 9 {
                return Err(format!("cannot read {s:?}: use 1 to 9 decimal places"));
            }
            (
                frac.parse::<u32>().map_err(|e| e.to_string())?,
                10u32.pow(frac.len() as u32),
            )
        }
    };
    Epsilon::new(num, den).map_err(|e| e.to_string())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

fn run_stream(structure: Structure, args: &RunArgs) -> Result<()> {
    let stream = OpStream::parse(&read_text(&args.input)?)
        .with_context(|| format!("parsing {}", args.input.display()))?;
    let settings = IbfSettings {
        epsilon: args.epsilon,
        mode: args.mode.into(),
        seed: args.seed,
    };
    let outputs = harness::run_stream(structure, &stream, settings)?;
    let mut text = String::new();
    for o in &outputs {
        text += &json_line(o)?;
    }
    emit(args.out.as_deref(), &text)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sketch {
            action: RunAction::Run(args),
        } => run_stream(Structure::Sketch, &args),
        Command::Ibf {
            action: RunAction::Run(args),
        } => run_stream(Structure::Ibf, &args),
        Command::Saturate(a) => {
            let report = harness::saturate(&SaturateConfig {
                cells: a.cells,
                k: a.k,
                trials: a.trials,
                with_fallback: a.with_fallback,
                mode: a.mode.into(),
                seed: a.seed,
            })?;
            if let Some(path) = &a.out {
                emit(Some(path), &report.histogram_csv())?;
            }
            emit(None, &json_line(&report)?)
        }
        Command::FailureRate(a) => {
            let mix = match a.mix {
                Mix::Stragglers => AnomalyMix::Stragglers,
                Mix::FalseDeletions => AnomalyMix::FalseDeletions,
                Mix::Mixed => AnomalyMix::Mixed,
            };
            let report = harness::failure_rate(&FailureRateConfig {
                d: a.d,
                epsilon: a.epsilon,
                trials: a.trials,
                mix,
                anomalies: a.anomalies.unwrap_or(a.d),
                matched_pairs: a.pairs,
                n_bound: a.n,
                mode: a.mode.into(),
                seed: a.seed,
            })?;
            emit(a.out.as_deref(), &json_line(&report)?)
        }
        Command::Reconcile { action } => match action {
            ReconcileAction::Encode {
                input,
                out,
                session,
            } => {
                let set = harness::parse_id_set(&read_text(&input)?)?;
                let bytes = ReconcileSession::new(session.params()?, set).encode()?;
                fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))
            }
            ReconcileAction::Diff {
                input,
                local,
                out,
                session,
            } => {
                let message =
                    fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
                let set = harness::parse_id_set(&read_text(&local)?)?;
                let diff = ReconcileSession::new(session.params()?, set).receive(&message)?;
                emit(out.as_deref(), &json_line(&diff)?)
            }
            ReconcileAction::Roundtrip {
                input,
                local,
                out,
                session,
            } => {
                let a = harness::parse_id_set(&read_text(&input)?)?;
                let b = harness::parse_id_set(&read_text(&local)?)?;
                let report = straggler::session_roundtrip(&a, &b, &session.params()?)?;
                emit(out.as_deref(), &json_line(&report)?)?;
                if report.status != straggler::reconcile::SessionStatus::Complete {
                    bail!("decode incomplete; retry with a larger d");
                }
                Ok(())
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_forms() {
        assert_eq!(parse_epsilon("1/16").unwrap(), Epsilon::new(1, 16).unwrap());
        assert_eq!(
            parse_epsilon("0.0625").unwrap(),
            Epsilon::new(625, 10000).unwrap()
        );
        assert!(parse_epsilon("0.3").is_err());
        assert!(parse_epsilon("2").is_err());
        assert!(parse_epsilon("1/0").is_err());
    }

    #[test]
    fn cli_definition_is_valid() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
