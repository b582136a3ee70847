use std::f64::consts::PI;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use lindstedt::explorer::{
    default_phi_grid, dump_zero_momentum_trees, run_bench, run_expand, run_probe_domain, run_resum, run_verify,
    ProbeSettings, Report, RunSettings, Suite,
};
use lindstedt::real::BigFloat;
use lindstedt::{load_model, Model};

/// Lindstedt series, self-energy resummation and analyticity-domain probes for
/// hyperbolic lower-dimensional tori.
#[derive(Debug, Parser)]
#[command(name = "lindstedt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Oracle coefficients checked against tree sums, with the coefficient dump.
    Expand {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Precision::Double)]
        precision: Precision,
    },
    /// Cancellation, Bryuno and symmetry suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suites to run; all when omitted.
        #[arg(value_enum)]
        suites: Vec<SuiteArg>,
        /// Random samples of the symmetry suite.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Also emit the indented listing of every zero-momentum tree.
        #[arg(long)]
        dump_trees: bool,
    },
    /// Fixed-point iteration of the self-energy matrix and its block bounds.
    Resum {
        #[command(flatten)]
        common: Common,
    },
    /// Heart-shaped analyticity domain probe.
    ProbeDomain {
        #[command(flatten)]
        common: Common,
        /// Domain scale; calibrated when omitted.
        #[arg(long)]
        eps0: Option<f64>,
        /// Half-opening angles in units of π; defaults to 1/4, 1/2 and 3/4.
        #[arg(long, num_args = 1.., value_parser = parse_fraction)]
        phi: Vec<f64>,
    },
    /// Tree enumeration time and convolution throughput.
    Bench {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Model file (TOML or JSON) or builtin name (ref1, ref1-odd).
    #[arg(long, default_value = "ref1")]
    model: String,
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Largest self-energy graph in the catalog, in nodes.
    #[arg(long = "vmax", default_value_t = 3)]
    v_max: usize,
    /// Deepest scale of the scale sequence.
    #[arg(long, default_value_t = -6, allow_hyphen_values = true)]
    n_min: i32,
    /// Real coupling of the resummation runs.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory receiving the report files instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn settings(&self) -> RunSettings {
        RunSettings {
            order: self.order,
            v_max: self.v_max,
            n_min: self.n_min,
            seed: self.seed,
            eps: self.eps,
            ..RunSettings::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Precision {
    Double,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Oracle,
    Cancellations,
    Bryuno,
    SelfEnergy,
    Symmetry,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::Cancellations => Suite::Cancellations,
            SuiteArg::Bryuno => Suite::Bryuno,
            SuiteArg::SelfEnergy => Suite::SelfEnergy,
            SuiteArg::Symmetry => Suite::Symmetry,
        }
    }
}

fn parse_fraction(text: &str) -> Result<f64, String> {
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|e| format!("{e}"))?;
            let den: f64 = den.trim().parse().map_err(|e| format!("{e}"))?;
            num / den
        }
        None => text.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if value > 0.0 && value < 1.0 {
        Ok(value * PI)
    } else {
        Err(format!("{text} is not a fraction strictly between 0 and 1"))
    }
}

/// Builtin names win over paths; any failure is a usage error on `--model`.
fn resolve_model(name_or_path: &str) -> Model {
    if let Ok(model) = Model::builtin(name_or_path) {
        return model;
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        usage_error(&format!("--model {name_or_path}: no such builtin model or file"));
    }
    load_model(path).unwrap_or_else(|e| usage_error(&format!("--model {name_or_path}: {e}")))
}

fn usage_error(message: &str) -> ! {
    Cli::command().error(ErrorKind::InvalidValue, message).exit()
}

/// Report plus named attachments; attachments go to files under `--out` or follow the
/// report on standard output.
struct Outcome {
    name: &'static str,
    report: Report,
    attachments: Vec<(&'static str, String)>,
}

fn run(command: Command) -> Result<(Outcome, Option<PathBuf>)> {
    let outcome = match &command {
        Command::Expand { common, precision } => {
            let model = resolve_model(&common.model);
            let settings = common.settings();
            let expansion = match precision {
                Precision::Double => run_expand::<f64>(&model, &settings),
                Precision::Extended => run_expand::<BigFloat>(&model, &settings),
            }
            .context("expansion failed")?;
            Outcome {
                name: "expand",
                report: expansion.report,
                attachments: vec![("coefficients.txt", expansion.table)],
            }
        }
        Command::Verify {
            common,
            suites,
            samples,
            dump_trees,
        } => {
            let model = resolve_model(&common.model);
            let settings = RunSettings {
                samples: *samples,
                ..common.settings()
            };
            let selected: Vec<Suite> = if suites.is_empty() {
                Suite::ALL.to_vec()
            } else {
                suites.iter().map(|&s| s.into()).collect()
            };
            let report = run_verify(&model, &settings, &selected).context("verification failed to run")?;
            let mut attachments = Vec::new();
            if *dump_trees {
                attachments.push(("trees.txt", dump_zero_momentum_trees(&model, settings.order)));
            }
            Outcome {
                name: "verify",
                report,
                attachments,
            }
        }
        Command::Resum { common } => {
            let model = resolve_model(&common.model);
            Outcome {
                name: "resum",
                report: run_resum(&model, &common.settings()).context("resummation failed")?,
                attachments: Vec::new(),
            }
        }
        Command::ProbeDomain { common, eps0, phi } => {
            let model = resolve_model(&common.model);
            if let Some(e) = eps0.filter(|e| e.is_nan() || *e <= 0.0) {
                usage_error(&format!("--eps0 {e}: must be positive"));
            }
            let grid = if phi.is_empty() {
                default_phi_grid()
            } else {
                phi.clone()
            };
            let domain = run_probe_domain(&model, &common.settings(), &grid, *eps0, ProbeSettings::default())
                .context("domain probe failed")?;
            Outcome {
                name: "probe-domain",
                report: domain.report,
                attachments: vec![("domain.csv", domain.csv)],
            }
        }
        Command::Bench { common } => {
            let model = resolve_model(&common.model);
            Outcome {
                name: "bench",
                report: run_bench(&model, &common.settings()).context("benchmark failed")?,
                attachments: Vec::new(),
            }
        }
    };
    let out = match command {
        Command::Expand { common, .. }
        | Command::Verify { common, .. }
        | Command::Resum { common }
        | Command::ProbeDomain { common, .. }
        | Command::Bench { common } => common.out,
    };
    Ok((outcome, out))
}

fn emit(outcome: &Outcome, out: Option<&Path>) -> Result<()> {
    let text = outcome.report.render();
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            let report_path = dir.join(format!("{}.txt", outcome.name));
            fs::write(&report_path, &text).with_context(|| format!("cannot write {}", report_path.display()))?;
            for (file, body) in &outcome.attachments {
                let path = dir.join(file);
                fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
            }
            let status = if outcome.report.passed() { "pass" } else { "fail" };
            println!("{status}: {}", report_path.display());
        }
        None => {
            let mut stdout = io::stdout().lock();
            let written = write!(stdout, "{text}").and_then(|()| {
                for (file, body) in &outcome.attachments {
                    write!(stdout, "\n## {file}\n{body}")?;
                }
                stdout.flush()
            });
            match written {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(e).context("cannot write to stdout"),
                _ => {}
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli.command).and_then(|(outcome, out)| {
        emit(&outcome, out.as_deref())?;
        Ok(outcome.report)
    });
    match result {
        Ok(report) if report.passed() => ExitCode::SUCCESS,
        Ok(report) => {
            eprintln!("verification failed: {}", report.failures().join(", "));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
