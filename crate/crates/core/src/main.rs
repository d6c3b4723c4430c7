use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dlsim::config::ExperimentConfig;
use dlsim::experiment::{self, Report};
use dlsim::presets;
use dlsim::sweep;

#[derive(Parser)]
#[command(name = "dlsim", version, about = "Distributed lock protocol simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a preset or a one-variable sweep over a base config.
    Sweep {
        #[arg(long, conflicts_with_all = ["var", "values"])]
        preset: Option<String>,
        #[arg(long, requires = "values")]
        var: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Base config for `--var`; defaults to the fig1 base.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Protocols for `--var`; defaults to the config's protocol.
        #[arg(long, value_delimiter = ',')]
        protocols: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw a CSV produced by `run` or `sweep` as an SVG line chart.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SAFETY: u8 = 3;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn write(path: &Path, body: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, body).map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes results.csv, summary.txt and verdict.json; returns the exit code.
fn emit(out: &Path, reports: &[Report], extra: Option<String>) -> ExitCode {
    let mut summary: String = reports.iter().map(|r| r.summary_line() + "\n").collect();
    if let Some(extra) = extra {
        summary.push_str(&extra);
    }
    let verdicts: Vec<_> = reports
        .iter()
        .map(|r| serde_json::json!({ "experiment": r.experiment, "protocol": r.protocol, "nodes": r.nodes,
            "contention": r.contention, "passed": r.verdicts.passed(), "verdicts": r.verdicts }))
        .collect();
    let files = [
        ("results.csv", experiment::csv(reports)),
        ("summary.txt", summary.clone()),
        ("verdict.json", serde_json::to_string_pretty(&verdicts).expect("json") + "\n"),
    ];
    for (name, body) in files {
        if let Err(e) = write(&out.join(name), &body) {
            return fail(1, e);
        }
    }
    print!("{summary}");
    if reports.iter().all(|r| r.verdicts.passed()) {
        ExitCode::SUCCESS
    } else {
        eprintln!("checker reported violations; see {}", out.join("verdict.json").display());
        ExitCode::from(EXIT_SAFETY)
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config, out, seed } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            emit(&out, &[experiment::execute(&cfg)], None)
        }
        Cmd::Sweep { preset, var, values, config, protocols, out, seed } => {
            let result = match (preset, var) {
                (Some(p), _) => presets::run_preset(&p, seed),
                (None, Some(v)) => {
                    let base = match config.as_deref().map(load).transpose() {
                        Ok(c) => c.unwrap_or_else(presets::fig1_base),
                        Err(e) => return fail(EXIT_CONFIG, e),
                    };
                    sweep::var_sweep(&base, &v, &values, &protocols, seed)
                }
                (None, None) => Err("sweep needs --preset or --var with --values".into()),
            };
            match result {
                Ok(s) => emit(&out, &s.reports, s.extra),
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
        Cmd::Plot { csv, out } => {
            let text = match std::fs::read_to_string(&csv) {
                Ok(t) => t,
                Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", csv.display())),
            };
            match dlsim::plot::svg_from_csv(&text) {
                Ok(svg) => match write(&out, &svg) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => fail(1, e),
                },
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
    }
}
