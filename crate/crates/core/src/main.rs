use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use palmscloud::cli::{self, ExperimentPlan};
use palmscloud::report;

const EXIT_CONFIG: u8 = 1;
const EXIT_COMPARE_FAIL: u8 = 2;

#[derive(Parser)]
#[command(name = "palmscloud", version, about = "Cloud-server cache simulator")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List benchmarks, their parameters and defaults.
    List,
    /// Run a plan and write its report (stdout when the plan has no output).
    Run { config: PathBuf },
    /// Run a plan, write the report and its means file, print the means.
    Sweep { config: PathBuf },
    /// Compare two reports benchmark by benchmark.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        /// Allowed relative IPC change, as a fraction or a percentage.
        #[arg(long, default_value = "5%", value_parser = cli::parse_tolerance)]
        tolerance: f64,
        /// Use only baseline rows of this L1D config, e.g. `sa:8`.
        #[arg(long)]
        baseline_l1d: Option<String>,
        /// Use only candidate rows of this L1D config, e.g. `newcache:4`.
        #[arg(long)]
        candidate_l1d: Option<String>,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("palmscloud: {msg}");
    ExitCode::from(code)
}

fn load(path: &Path) -> Result<ExperimentPlan, ExitCode> {
    cli::load_plan(path).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn run(path: &Path) -> ExitCode {
    let plan = match load(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let rows = cli::run_plan(&plan);
    let written = match &plan.output {
        Some(out) => cli::write_outputs(out, &rows).map(drop),
        None => report::write_report(io::stdout().lock(), &rows),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn sweep(path: &Path) -> ExitCode {
    let plan = match load(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let Some(out) = plan.output.clone() else {
        return fail(EXIT_CONFIG, "sweep needs `output` in the config");
    };
    let rows = cli::run_plan(&plan);
    let means = match cli::write_outputs(&out, &rows) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", out.display())),
    };
    let mut stdout = io::stdout().lock();
    let _ = report::write_means(&mut stdout, &means);
    let errors = rows.iter().filter(|r| r.result.is_err()).count();
    let _ = writeln!(
        stdout,
        "# {} cells, {} errors, report {}",
        rows.len(),
        errors,
        out.display()
    );
    ExitCode::SUCCESS
}

fn compare(
    baseline: &Path,
    candidate: &Path,
    tolerance: f64,
    baseline_l1d: Option<&str>,
    candidate_l1d: Option<&str>,
) -> ExitCode {
    let read = |p: &Path| {
        fs::File::open(p)
            .map_err(report::ParseReportError::from)
            .and_then(report::read_report)
            .map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", p.display())))
    };
    let (b, c) = match (read(baseline), read(candidate)) {
        (Ok(b), Ok(c)) => (b, c),
        (Err(code), _) | (_, Err(code)) => return code,
    };
    let pick = |rows: Vec<_>, l1d: Option<&str>| match l1d {
        Some(sel) => cli::select_l1d(&rows, sel),
        None => rows,
    };
    let (b, c) = (pick(b, baseline_l1d), pick(c, candidate_l1d));
    match cli::compare_reports(&b, &c, tolerance) {
        Ok(cmp) => {
            print!("{}", cmp.render());
            if cmp.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_COMPARE_FAIL)
            }
        }
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        Command::List => {
            print!("{}", cli::describe_benchmarks());
            ExitCode::SUCCESS
        }
        Command::Run { config } => run(&config),
        Command::Sweep { config } => sweep(&config),
        Command::Compare {
            baseline,
            candidate,
            tolerance,
            baseline_l1d,
            candidate_l1d,
        } => compare(
            &baseline,
            &candidate,
            tolerance,
            baseline_l1d.as_deref(),
            candidate_l1d.as_deref(),
        ),
    }
}
