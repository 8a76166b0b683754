use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aft_xsect_core::io::{estimate_from_file, write_csv_file, DatasetEnvelope};
use aft_xsect_core::{
    fisher_known_h, fisher_unknown_h, run_study, simulate, EstimationTarget, EstimatorOptions, HazardMethod, ModelSpec,
    SamplerKind, Scheme, SeedSpec, StudyConfig, UnknownHScore, Variant,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aft-xsect", version, about = "Efficient AFT estimation under cross-sectional sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    KnownH,
    UnknownH,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::KnownH => Variant::KnownH,
            VariantArg::UnknownH => Variant::UnknownHMeanZero,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Direct,
    Mechanistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Split,
    Plugin,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Kernel,
    Symmetrized,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Orthogonal,
    PlusOne,
}

impl From<ScoreArg> for UnknownHScore {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Orthogonal => UnknownHScore::Orthogonal,
            ScoreArg::PlusOne => UnknownHScore::PlusOne,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it as CSV.
    Simulate {
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "direct")]
        sampler: SamplerArg,
        /// Also write a JSON envelope with the spec and seed.
        #[arg(long, value_name = "JSON")]
        envelope: Option<PathBuf>,
    },
    /// Estimate θ from a CSV file and print the result as JSON.
    Estimate {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Model spec whose covariate law is the known h (required for known-h).
        #[arg(long = "known-h", value_name = "SPEC")]
        known_h: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "split")]
        scheme: SchemeArg,
        #[arg(long, value_enum, default_value = "kernel")]
        method: MethodArg,
        #[arg(long = "score-form", value_enum, default_value = "orthogonal")]
        score_form: ScoreArg,
        /// Seed for the symmetrized estimator's random signs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the information bound of a model as JSON.
    Bound {
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long = "score-form", value_enum, default_value = "orthogonal")]
        score_form: ScoreArg,
    },
    /// Run a Monte Carlo study and write the report as JSON.
    Study {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
        #[arg(long, env = "AFT_XSECT_JOBS")]
        jobs: Option<usize>,
        /// Also write per-replication estimates as CSV.
        #[arg(long, value_name = "CSV")]
        replicates: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Model(aft_xsect_core::Error),
}

impl From<aft_xsect_core::Error> for Failure {
    fn from(e: aft_xsect_core::Error) -> Self {
        Failure::Model(e)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Model(aft_xsect_core::Error::Io(format!("{}: {e}", path.display()))))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Model(aft_xsect_core::Error::Io(format!("{}: {e}", path.display()))))
}

/// Prints a line to stdout; a closed pipe is not an error.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn load_spec(path: &Path) -> Result<ModelSpec, Failure> {
    Ok(ModelSpec::from_json(&read(path)?)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { spec, n, seed, out, sampler, envelope } => {
            let spec = load_spec(&spec)?;
            let kind = match sampler {
                SamplerArg::Direct => SamplerKind::Direct,
                SamplerArg::Mechanistic => SamplerKind::Mechanistic,
            };
            let data = simulate(&spec, n, SeedSpec::new(seed, 0), kind)?;
            write_csv_file(&data, &out)?;
            if let Some(path) = envelope {
                write(&path, &DatasetEnvelope::new(&spec, &data).to_json())?;
            }
        }
        Command::Estimate { data, variant, known_h, scheme, method, score_form, seed } => {
            let spec = known_h.as_deref().map(load_spec).transpose()?;
            let target = match (Variant::from(variant), &spec) {
                (Variant::KnownH, Some(s)) => EstimationTarget::KnownH(&s.covariates),
                (Variant::KnownH, None) => {
                    return Err(Failure::Usage("--variant known-h needs --known-h SPEC".into()));
                }
                (Variant::UnknownHMeanZero, _) => EstimationTarget::UnknownHMeanZero,
            };
            let opts = EstimatorOptions {
                method: match method {
                    MethodArg::Kernel => HazardMethod::Kernel,
                    MethodArg::Symmetrized => HazardMethod::Symmetrized,
                },
                score_form: score_form.into(),
                sign_seed: SeedSpec::new(seed, 0),
                ..EstimatorOptions::default()
            };
            let scheme = match scheme {
                SchemeArg::Split => Scheme::Split,
                SchemeArg::Plugin => Scheme::Plugin,
            };
            let result = estimate_from_file(&data, target, scheme, &opts)?;
            emit(&serde_json::to_string_pretty(&result).expect("result serializes"));
        }
        Command::Bound { spec, variant, score_form } => {
            let spec = load_spec(&spec)?;
            let bound = match Variant::from(variant) {
                Variant::KnownH => fisher_known_h(&spec)?,
                Variant::UnknownHMeanZero => fisher_unknown_h(&spec, score_form.into())?,
            };
            emit(&serde_json::to_string(&bound).expect("bound serializes"));
        }
        Command::Study { config, out, jobs, replicates } => {
            if jobs == Some(0) {
                return Err(Failure::Usage("--jobs must be at least 1".into()));
            }
            let config = StudyConfig::from_json(&read(&config)?)?;
            let report = run_study(&config, jobs)?;
            write(&out, &report.to_json())?;
            if let Some(path) = replicates {
                let file = fs::File::create(&path)
                    .map_err(|e| Failure::Model(aft_xsect_core::Error::Io(format!("{}: {e}", path.display()))))?;
                report.write_replicates_csv(std::io::BufWriter::new(file))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
