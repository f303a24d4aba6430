//! Front end of `nsfde`: configuration, subcommands and output.

mod commands;
mod config;
mod error;
mod tables;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;

use nsfde_core::presets::PresetName;
use nsfde_core::verify::{render_report, ReportFormat};

pub use commands::{run_subcommand, Command, Output};
pub use config::{
    locate, parse_config, ChecksConfig, GridConfig, OptimizerConfig, OutputConfig, Prepared, ProblemConfig, RunConfig,
    SolverConfig, TreeConfig,
};
pub use error::{CliError, CliResult, EXIT_CHECK_FAILED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

/// Exact-tree solvers and checks for controlled neutral functional equations.
#[derive(Debug, Parser)]
#[command(name = "nsfde", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory for reports and CSV tables.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,

    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,

    /// Report format on stdout, and the only one written to `--out`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,

    /// Replaces the configured problem by a preset.
    #[arg(long, global = true, value_parser = parse_preset)]
    pub preset: Option<PresetName>,
}

fn parse_preset(s: &str) -> Result<PresetName, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = PresetName::ALL.iter().map(|p| p.as_str()).collect();
        format!("unknown preset `{s}`; one of {}", names.join(", "))
    })
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.preset {
        let kappa = cfg.problem.preset.and(cfg.problem.kappa);
        cfg.problem = ProblemConfig {
            preset: Some(p),
            kappa,
            ..ProblemConfig::default()
        };
    }
    Ok(cfg)
}

fn extension(f: ReportFormat) -> &'static str {
    match f {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_outputs(dir: &Path, cmd: Command, out: &Output, formats: &[ReportFormat]) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, csv) in &out.tables {
        write_file(&dir.join(name), csv)?;
    }
    for f in formats {
        let name = format!("{}-report.{}", cmd.name(), extension(*f));
        write_file(&dir.join(name), &render_report(&out.reports, *f))?;
    }
    Ok(())
}

fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<bool> {
    let cfg = load_config(cli)?;
    let exec = || run_subcommand(cli.command, &cfg);
    let out = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(exec)?,
        None => exec()?,
    };
    let formats: Vec<ReportFormat> = match cli.format {
        Some(f) => vec![f.into()],
        None if cfg.output.formats.is_empty() => vec![ReportFormat::Json],
        None => cfg.output.formats.clone(),
    };
    let io = |e: std::io::Error| CliError::Io(format!("stdout: {e}"));
    stdout.write_all(render_report(&out.reports, formats[0]).as_bytes()).map_err(io)?;
    stdout.flush().map_err(io)?;
    for n in &out.notes {
        let _ = writeln!(stderr, "note: {n}");
    }
    match cli.out.as_ref().or(cfg.output.dir.as_ref()) {
        Some(dir) => write_outputs(dir, cli.command, &out, &formats)?,
        None if !out.tables.is_empty() => {
            let names: Vec<&str> = out.tables.iter().map(|t| t.0.as_str()).collect();
            let _ = writeln!(stderr, "note: pass --out DIR to write {}", names.join(", "));
        }
        None => {}
    }
    for r in out.reports.iter().filter(|r| !r.pass) {
        let _ = writeln!(stderr, "fail: {} (lhs {:e}, rhs {:e}, tol {:e})", r.check, r.lhs, r.rhs, r.tol);
    }
    Ok(out.passed())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    match run(&cli, stdout, stderr) {
        Ok(true) => 0,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json());
            e.exit_code()
        }
    }
}
