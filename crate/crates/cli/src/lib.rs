//! `tue`: command-line front end over `tue-core`.
//!
//! Every subcommand is a thin shell over a library call. Outputs are written
//! atomically and, unless disabled in the config, accompanied by a
//! `<output>.provenance.json` record with the effective configuration and
//! SHA-256 digests of all inputs and outputs.

use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use clap::{Parser, Subcommand};
use serde::Serialize;
use tue_core::data::{load_dataset, make_synthetic_split, save_dataset};
use tue_core::eval::{
    apply_perturbations, evaluate, separability_probe, swap_eval, transfer_eval, write_report_csv,
    Mode, ReportRow,
};
use tue_core::generators::generate;
use tue_core::losses::{csd_value, CentroidFloor};
use tue_core::numkernel::pca_project;
use tue_core::perturb::{load_perturbations, save_perturbations};
use tue_core::{exec, write_atomic};

pub mod config;
pub mod provenance;

use config::CliConfig;

/// Worker count used when neither `--threads` nor `TUE_THREADS` is given.
pub const DEFAULT_THREADS: usize = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] tue_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Schema { .. } => "schema",
            CliError::Io { .. } => "io",
            CliError::Core(tue_core::Error::Format(_)) => "format",
            CliError::Core(tue_core::Error::Io(_)) => "io",
            CliError::Core(_) => "runtime",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Schema { .. } => 2,
            CliError::Core(
                tue_core::Error::BadConfig(_)
                | tue_core::Error::UnknownMethod(_)
                | tue_core::Error::BadTemperature(_),
            ) => 2,
            _ => 1,
        }
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tue",
    version,
    about = "Generate and evaluate unlearnable perturbations"
)]
struct Cli {
    /// Worker threads (overridden by TUE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic training set (and optionally its test split).
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Generate perturbations for a dataset.
    GenNoise {
        #[arg(long, value_parser = ["emn", "ucl", "tue", "sn"])]
        method: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-round JSON trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train on (optionally perturbed) data and report clean-test accuracy.
    Eval {
        #[arg(long, value_parser = ["supervised", "unsupervised"])]
        mode: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        perturbations: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Original, intra-class and inter-class correspondences, as CSV.
    SwapEval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        perturbations: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply perturbations to another dataset and train on it.
    Transfer {
        #[arg(long)]
        perturbations: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        target_test: PathBuf,
        /// Synthesize missing classes and members by interpolation.
        #[arg(long)]
        interpolate: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the separability discriminant of a perturbation file.
    Csd {
        #[arg(long)]
        perturbations: PathBuf,
    },
    /// Linear separability probe on a perturbation file.
    Probe {
        #[arg(long)]
        perturbations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two principal components per perturbation, as CSV.
    Project {
        #[arg(long)]
        perturbations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs one command and returns
/// the process exit code. Errors are reported as one JSON line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => report(&CliError::Usage(first_line(&e.to_string()))),
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn first_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("invalid arguments")
        .trim_start_matches("error: ")
        .to_string()
}

fn report(e: &CliError) -> i32 {
    eprintln!("{}", e.to_line());
    e.exit_code()
}

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match std::env::var("TUE_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            CliError::Usage(format!("TUE_THREADS must be a positive integer, got {v:?}"))
        })?,
        Err(_) => flag.unwrap_or(DEFAULT_THREADS),
    };
    if n == 0 {
        return Err(CliError::Usage("worker count must be positive".into()));
    }
    Ok(n)
}

fn init_pool(threads: usize) -> Result<(), CliError> {
    static POOL: OnceLock<()> = OnceLock::new();
    if POOL.get().is_none() {
        exec::init_threads(threads)?;
        let _ = POOL.set(());
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<CliConfig, CliError> {
    match path {
        Some(p) => CliConfig::load(p),
        None => Ok(CliConfig::default()),
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::io(
            path,
            io::Error::new(io::ErrorKind::NotFound, "no such file"),
        ))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

/// `%.*g`-style formatting with `digits` significant digits.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        format!("{:.*e}", digits - 1, v)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    result: T,
    config: &'a CliConfig,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_pool(thread_count(cli.threads)?)?;
    match cli.command {
        Command::GenData {
            config,
            out,
            test_out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let out = cfg.output_path(&out);
            let (train, test) = make_synthetic_split(&cfg.data, cfg.test_per_class())?;
            save_dataset(&train, &out)?;
            let mut outputs = vec![out.as_path()];
            let test_out = test_out.map(|p| cfg.output_path(&p));
            if let Some(t) = &test_out {
                save_dataset(&test, t)?;
                outputs.push(t);
            }
            let inputs: Vec<&Path> = config.iter().map(PathBuf::as_path).collect();
            provenance::record("gen-data", &cfg, &inputs, &outputs)
        }
        Command::GenNoise {
            method,
            data,
            config,
            out,
            trace,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            require_file(&data)?;
            cfg.generate.method = method.parse()?;
            cfg.generate.validate()?;
            let ds = load_dataset(&data)?;
            let (set, gen_trace) = generate(&ds, &cfg.generate)?;
            let out = cfg.output_path(&out);
            save_perturbations(&set, &out)?;
            let mut outputs = vec![out.as_path()];
            let trace = trace.map(|p| cfg.output_path(&p));
            if let Some(t) = &trace {
                write_json(t, &gen_trace.rounds)?;
                outputs.push(t);
            }
            let mut inputs = vec![data.as_path()];
            inputs.extend(config.as_deref());
            provenance::record("gen-noise", &cfg, &inputs, &outputs)
        }
        Command::Eval {
            mode,
            data,
            perturbations,
            test,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mode: Mode = mode.parse()?;
            let mut inputs = vec![data.as_path(), test.as_path()];
            inputs.extend(perturbations.as_deref());
            for p in &inputs {
                require_file(p)?;
            }
            let mut train = load_dataset(&data)?;
            let test_ds = load_dataset(&test)?;
            if let Some(p) = &perturbations {
                train = apply_perturbations(&train, &load_perturbations(p)?, None)?;
            }
            let result = evaluate(&train, &test_ds, mode, &cfg.train)?;
            let out = cfg.output_path(&out);
            write_json(
                &out,
                &Report {
                    result,
                    config: &cfg,
                },
            )?;
            inputs.extend(config.as_deref());
            provenance::record("eval", &cfg, &inputs, &[&out])
        }
        Command::SwapEval {
            data,
            perturbations,
            test,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut inputs = vec![data.as_path(), perturbations.as_path(), test.as_path()];
            for p in &inputs {
                require_file(p)?;
            }
            let ds = load_dataset(&data)?;
            let set = load_perturbations(&perturbations)?;
            let test_ds = load_dataset(&test)?;
            let rep = swap_eval(&ds, &test_ds, &set, &cfg.train)?;
            let csd = csd_value(
                set.deltas().view(),
                set.labels(),
                set.num_classes(),
                CentroidFloor::default(),
            )
            .ok();
            let rows: Vec<ReportRow> = [
                ("original", &rep.original),
                ("intra", &rep.intra),
                ("inter", &rep.inter),
            ]
            .into_iter()
            .map(|(tag, r)| ReportRow {
                experiment: "swap".into(),
                method: set.source_name().to_string(),
                mode: r.mode.as_str().into(),
                correspondence: tag.into(),
                accuracy: r.accuracy,
                csd,
                seed: r.seed,
            })
            .collect();
            let out = cfg.output_path(&out);
            write_report_csv(&rows, &out)?;
            inputs.extend(config.as_deref());
            provenance::record("swap-eval", &cfg, &inputs, &[&out])
        }
        Command::Transfer {
            perturbations,
            target,
            target_test,
            interpolate,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut inputs = vec![
                perturbations.as_path(),
                target.as_path(),
                target_test.as_path(),
            ];
            for p in &inputs {
                require_file(p)?;
            }
            let set = load_perturbations(&perturbations)?;
            let target_ds = load_dataset(&target)?;
            let test_ds = load_dataset(&target_test)?;
            let plan = cfg.transfer_plan(interpolate);
            let result = transfer_eval(&set, &target_ds, &test_ds, &plan, &cfg.train)?;
            let out = cfg.output_path(&out);
            write_json(
                &out,
                &Report {
                    result,
                    config: &cfg,
                },
            )?;
            inputs.extend(config.as_deref());
            provenance::record("transfer", &cfg, &inputs, &[&out])
        }
        Command::Csd { perturbations } => {
            require_file(&perturbations)?;
            let set = load_perturbations(&perturbations)?;
            let v = csd_value(
                set.deltas().view(),
                set.labels(),
                set.num_classes(),
                CentroidFloor::default(),
            )?;
            println!("{}", format_significant(v, 9));
            Ok(())
        }
        Command::Probe {
            perturbations,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            require_file(&perturbations)?;
            let set = load_perturbations(&perturbations)?;
            let result = separability_probe(&set, cfg.eval.probe_train_fraction, &cfg.train)?;
            let out = cfg.output_path(&out);
            write_json(
                &out,
                &Report {
                    result,
                    config: &cfg,
                },
            )?;
            let mut inputs = vec![perturbations.as_path()];
            inputs.extend(config.as_deref());
            provenance::record("probe", &cfg, &inputs, &[&out])
        }
        Command::Project { perturbations, out } => {
            require_file(&perturbations)?;
            let set = load_perturbations(&perturbations)?;
            let points = pca_project(set.deltas().view(), 2)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let fail = |e: csv::Error| CliError::Runtime(e.to_string());
            w.write_record(["label", "pc1", "pc2"]).map_err(fail)?;
            for (y, p) in set.labels().iter().zip(points.rows()) {
                w.write_record(&[y.to_string(), p[0].to_string(), p[1].to_string()])
                    .map_err(fail)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_atomic(&out, &bytes)?;
            provenance::record("project", &CliConfig::default(), &[&perturbations], &[&out])
        }
    }
}
