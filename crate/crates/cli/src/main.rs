use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use nodalcert::report::{parse_range, ClaimStatus, Task};
use nodalcert::{emit_figures, run_verification, Error, Result, RunConfig, VerificationReport};

#[derive(Parser)]
#[command(
    name = "nodalcert",
    version,
    about = "Builds and certifies the harmonic family u_{m,ell}"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification tasks and write report.json.
    Verify(VerifyArgs),
    /// Write the surface, hole curves and frequency table.
    Figures(FigureArgs),
}

#[derive(Args)]
struct Ranges {
    /// Ambient dimension(s): `3`, `3..5` or `3,5`.
    #[arg(long)]
    n: Option<String>,
    /// Cycle dimension(s), 1 <= ell <= n - 2.
    #[arg(long)]
    ell: Option<String>,
    /// Oscillation count(s).
    #[arg(long)]
    m: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    ranges: Ranges,
    /// Comma-separated subset of frequency,regularity,holes,topology,regularized,figures.
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Interval certification of |u| + |grad u| > 0.
    #[arg(long)]
    rigorous: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Half-width of the rescaled window in xi.
    #[arg(long)]
    xi_radius: Option<f64>,
    /// Tolerance on |N_1 - 2|.
    #[arg(long)]
    tol: Option<f64>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FigureArgs {
    #[command(flatten)]
    ranges: Ranges,
    #[arg(long)]
    out: PathBuf,
}

fn apply_ranges(config: &mut RunConfig, r: &Ranges) -> Result<()> {
    if let Some(s) = &r.n {
        config.n = parse_range(s)?;
    }
    if let Some(s) = &r.ell {
        config.ell = parse_range(s)?;
    }
    if let Some(s) = &r.m {
        config.m = parse_range(s)?;
    }
    Ok(())
}

fn verify_config(args: &VerifyArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    apply_ranges(&mut config, &args.ranges)?;
    if let Some(t) = &args.tasks {
        config.tasks = t
            .split(',')
            .map(str::parse::<Task>)
            .collect::<Result<_>>()?;
    }
    if args.out.is_some() {
        config.out = args.out.clone();
    }
    if args.rigorous {
        config.rigorous = true;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(r) = args.xi_radius {
        config.xi_radius = r;
    }
    if let Some(t) = args.tol {
        config.tolerances.frequency = t;
    }
    Ok(config)
}

fn print_summary(report: &VerificationReport) {
    for r in &report.results {
        for c in &r.claims {
            let status = match c.status {
                ClaimStatus::Pass => "pass",
                ClaimStatus::Fail => "FAIL",
                ClaimStatus::Inconclusive => "inconclusive",
            };
            println!("{:<14} {:<28} {:<12} {}", r.label(), c.id, status, c.detail);
        }
        for note in &r.notes {
            println!("{:<14} note: {note}", r.label());
        }
    }
    println!("overall: {:?}", report.overall);
}

fn write_outputs(report: &VerificationReport, out: Option<&Path>, figures: bool) -> Result<()> {
    let Some(out) = out else { return Ok(()) };
    report.write_json(&out.join("report.json"))?;
    println!("wrote {}", out.join("report.json").display());
    if figures {
        let f = emit_figures(report, out)?;
        for path in &f.files {
            println!("wrote {}", path.display());
        }
        for notice in &f.notices {
            println!("{notice}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Verify(args) => {
            let config = verify_config(&args)?;
            config.validate()?;
            let report = run_verification(&config)?;
            print_summary(&report);
            write_outputs(
                &report,
                config.out.as_deref(),
                config.tasks.contains(&Task::Figures),
            )?;
            Ok(report.exit_code())
        }
        Command::Figures(args) => {
            let mut config = RunConfig {
                tasks: [Task::Figures].into_iter().collect(),
                out: Some(args.out.clone()),
                ..RunConfig::default()
            };
            apply_ranges(&mut config, &args.ranges)?;
            config.validate()?;
            let report = run_verification(&config)?;
            let f = emit_figures(&report, &args.out)?;
            for path in &f.files {
                println!("wrote {}", path.display());
            }
            for notice in &f.notices {
                println!("{notice}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
