use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use owauc::evalset::load_evalset;
use owauc::gmop::{ablate, AblationAxis, Architecture, GateMode, TaskConfig, TrainConfig, TrainRun};
use owauc::metrics::{curve, report};
use owauc::propositions::verify_all;
use owauc::sensitivity::{sweep, DEFAULT_RATIOS, DEFAULT_SEEDS_PER_RATIO};
use owauc::{classify, detection, ClassCounts, DetectorConfig, DetectorMode, SoftmaxSpace};

/// OpenworldAUC evaluation, ratio sweeps, metric witnesses and a toy trainer.
#[derive(Debug, Parser)]
#[command(name = "owauc", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Metric report as JSON.
    Eval(InputArgs),
    /// MissRate_b / HitRate_n curve as CSV.
    Curve(InputArgs),
    /// Metrics across new/base sample ratios as CSV.
    SweepRatio {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated new/base ratios.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RATIOS)]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SEEDS_PER_RATIO)]
        seeds_per_ratio: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Checks the metric witnesses and prints one PASS/FAIL line each.
    VerifyProps {
        /// Seeds per counterexample builder.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Random instances for the lower bound.
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Trains the toy mixture on a synthetic task and emits its trace as JSON.
    TrainToy(TrainArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Prediction file, one JSON record per line.
    input: PathBuf,
    #[arg(long, requires = "c_new")]
    c_base: Option<usize>,
    #[arg(long, requires = "c_base")]
    c_new: Option<usize>,
    #[arg(long, default_value_t = DetectorMode::MaxSoftmax)]
    detector: DetectorMode,
    /// Only meaningful with the max-softmax detector.
    #[arg(long)]
    softmax_space: Option<SoftmaxSpace>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = GateMode::Sigmoid)]
    gate: GateMode,
    #[arg(long, default_value_t = Architecture::Mixture)]
    architecture: Architecture,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also train every value on this axis and write a table.
    #[arg(long, requires = "ablation_out")]
    ablate: Option<AblationAxis>,
    #[arg(long, requires = "ablate")]
    ablation_out: Option<PathBuf>,
    /// Number of consecutive seeds, starting at --seed, per ablation value.
    #[arg(long, default_value_t = 10, requires = "ablate")]
    ablate_seeds: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl InputArgs {
    fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            mode: self.detector,
            softmax_space: self.softmax_space.unwrap_or_default(),
        }
    }

    fn load(&self) -> owauc::Result<owauc::EvalSet> {
        let counts = self.c_base.zip(self.c_new).map(|(b, n)| ClassCounts::new(b, n));
        load_evalset(&self.input, counts)
    }
}

fn usage_checks(cli: &Cli) -> std::result::Result<(), String> {
    let input = match &cli.verb {
        Verb::Eval(i) | Verb::Curve(i) => i,
        Verb::SweepRatio { input, .. } => input,
        Verb::TrainToy(t) => {
            if t.ablate_seeds == 0 {
                return Err("--ablate-seeds must be at least 1".into());
            }
            return Ok(());
        }
        Verb::VerifyProps { .. } => return Ok(()),
    };
    if input.softmax_space.is_some() && input.detector != DetectorMode::MaxSoftmax {
        return Err(format!(
            "--softmax-space only applies to --detector max-softmax, not {}",
            input.detector
        ));
    }
    Ok(())
}

fn emit(output: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match output {
        Some(path) => {
            let file = File::create(path).map_err(|e| anyhow!("cannot write {}: {e}", path.display()))?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush().map_err(|e| anyhow!("cannot write {}: {e}", path.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.verb {
        Verb::Eval(args) => {
            let set = args.load()?;
            let r = report(&set, args.detector())?;
            emit(args.output.as_deref(), |w| Ok(writeln!(w, "{}", r.to_json()?)?))?;
        }
        Verb::Curve(args) => {
            let set = args.load()?;
            let scores = detection::score_all(&set, args.detector())?;
            let outcomes: Vec<_> = set.samples().iter().map(classify).collect();
            let c = curve(&set, &scores, &outcomes)?;
            emit(args.output.as_deref(), |w| Ok(c.write_csv(w)?))?;
        }
        Verb::SweepRatio {
            input,
            ratios,
            seeds_per_ratio,
            seed,
        } => {
            let set = input.load()?;
            let result = sweep(&set, &ratios, seeds_per_ratio, seed, input.detector())?;
            emit(input.output.as_deref(), |w| Ok(result.write_csv(w)?))?;
        }
        Verb::VerifyProps {
            seeds,
            instances,
            output,
        } => {
            let checks = verify_all(seeds, instances)?;
            emit(output.as_deref(), |w| {
                for c in &checks {
                    writeln!(w, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
                }
                Ok(())
            })?;
            return Ok(checks.iter().all(|c| c.passed));
        }
        Verb::TrainToy(args) => {
            let config = TrainConfig {
                k: args.k,
                lambda: args.lambda,
                learning_rate: args.lr,
                epochs: args.epochs,
                seed: args.seed,
                gate: args.gate,
                architecture: args.architecture,
                ..TrainConfig::default()
            };
            let task = TaskConfig::default().with_seed(args.seed);
            let run = TrainRun::execute(task, &config)?;
            emit(args.output.as_deref(), |w| Ok(writeln!(w, "{}", run.to_json()?)?))?;
            if let (Some(axis), Some(path)) = (args.ablate, args.ablation_out) {
                let seeds: Vec<u64> = (0..args.ablate_seeds).map(|i| args.seed + i).collect();
                let table = ablate(task, config, axis, &axis.default_grid(), &seeds)?;
                emit(Some(&path), |w| Ok(table.write_csv(w)?))?;
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Err(msg) = usage_checks(&cli) {
        Cli::command().error(ErrorKind::ArgumentConflict, msg).exit();
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn softmax_space_needs_max_softmax() {
        let parse = |args: &[&str]| Cli::try_parse_from(args).unwrap();
        assert!(usage_checks(&parse(&["owauc", "eval", "x", "--softmax-space", "base-only"])).is_ok());
        assert!(usage_checks(&parse(&[
            "owauc",
            "eval",
            "x",
            "--detector",
            "implicit-margin",
            "--softmax-space",
            "joint"
        ]))
        .is_err());
        assert!(usage_checks(&parse(&[
            "owauc",
            "train-toy",
            "--ablate",
            "k",
            "--ablation-out",
            "t.csv",
            "--ablate-seeds",
            "0"
        ]))
        .is_err());
    }
}
