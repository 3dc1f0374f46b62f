use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use collapse_cli::checks::{self, CheckContext};
use collapse_cli::config::parse_config;
use collapse_cli::experiments::run_scenario_experiment;
use collapse_cli::output::{resolve_output_dir, to_json_bytes, write_scenario_artifacts};

/// Exit codes: 0 success, 1 malformed config, 2 precondition or runtime
/// failure, 3 a requested check failed.
#[derive(Parser)]
#[command(
    name = "collapse-lab",
    version,
    about = "Trajectory laboratory for dynamical state-vector reduction models"
)]
struct Cli {
    /// Directory for artifacts; per-scenario output_dir still wins
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads for trajectory sampling (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario in a config file and write its artifacts
    Run {
        config: PathBuf,
        /// Also evaluate each scenario's self-checks; any failure exits 3
        #[arg(long)]
        check: bool,
    },
    /// Run the full release criteria suite and write a report
    Check {
        /// Tenfold trajectory counts for tighter confidence intervals
        #[arg(long)]
        deep: bool,
        /// Base seed for every stochastic criterion
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run a single criterion by id (1..=13)
        #[arg(long)]
        only: Option<usize>,
        /// Collapse-rate perturbation, for negative-control runs
        #[arg(long, default_value_t = 1.0, hide = true)]
        lambda_scale: f64,
    },
    /// Tabulate a relativistic kernel over a range of separations
    KernelScan {
        /// spacelike | timelike | nonrel
        #[arg(long)]
        kind: String,
        /// Correlation length in cm
        #[arg(long)]
        a: f64,
        /// First separation in cm
        #[arg(long)]
        from: f64,
        /// Last separation in cm
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Print the coincidences linking the model constants to gravity
    ReportParams,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("warning: thread pool already configured: {e}");
        }
    }
    let out_flag = cli.output_dir.as_deref();
    match cli.command {
        Command::Run { config, check } => cmd_run(&config, check, out_flag),
        Command::Check {
            deep,
            seed,
            only,
            lambda_scale,
        } => cmd_check(deep, seed, only, lambda_scale, out_flag),
        Command::KernelScan {
            kind,
            a,
            from,
            to,
            points,
        } => cmd_kernel_scan(&kind, a, from, to, points, out_flag),
        Command::ReportParams => cmd_report_params(),
    }
}

fn cmd_run(path: &Path, check: bool, out_flag: Option<&Path>) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    let scenarios = match parse_config(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    if scenarios.is_empty() {
        println!("no scenarios in {}; nothing to run", path.display());
        return ExitCode::SUCCESS;
    }

    let mut any_check_failed = false;
    for sc in &scenarios {
        let run = match run_scenario_experiment(sc) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: scenario '{}': {e}", sc.name);
                return ExitCode::from(2);
            }
        };
        let dir = resolve_output_dir(sc.output_dir.as_deref(), out_flag);
        if let Err(e) = write_scenario_artifacts(&dir, sc, &run.output) {
            eprintln!("error: scenario '{}': {e}", sc.name);
            return ExitCode::from(2);
        }
        println!(
            "scenario '{}': wrote {}",
            sc.name,
            dir.join(&sc.name).display()
        );
        if check {
            for s in &run.self_checks {
                println!(
                    "    {} {} = {:.6e}   [{}]",
                    if s.pass { "ok  " } else { "FAIL" },
                    s.name,
                    s.measured,
                    s.bound
                );
                any_check_failed |= !s.pass;
            }
        }
    }
    if any_check_failed {
        eprintln!("one or more self-checks failed");
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_check(
    deep: bool,
    seed: u64,
    only: Option<usize>,
    lambda_scale: f64,
    out_flag: Option<&Path>,
) -> ExitCode {
    let ids: Vec<usize> = match only {
        Some(id) if (1..=checks::CRITERIA_COUNT).contains(&id) => vec![id],
        Some(id) => {
            eprintln!(
                "error: --only takes a criterion id in 1..={}, got {id}",
                checks::CRITERIA_COUNT
            );
            return ExitCode::from(2);
        }
        None => (1..=checks::CRITERIA_COUNT).collect(),
    };
    let ctx = CheckContext::new(seed, deep, lambda_scale);
    let mut reports = Vec::with_capacity(ids.len());
    for id in ids {
        let report = checks::run_criterion(&ctx, id);
        println!("{}", report.summary_line());
        for line in report.detail_lines() {
            println!("{line}");
        }
        reports.push(report);
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    let all = passed == reports.len();

    let dir = resolve_output_dir(None, out_flag);
    let json = checks::report_json(&ctx, &reports);
    let text = checks::report_text(&reports);
    if let Err(e) = std::fs::create_dir_all(&dir)
        .and_then(|_| std::fs::write(dir.join("check_report.json"), to_json_bytes(&json)))
        .and_then(|_| std::fs::write(dir.join("check_report.txt"), text))
    {
        eprintln!(
            "error: cannot write check report under {}: {e}",
            dir.display()
        );
        return ExitCode::from(2);
    }
    println!(
        "{passed} of {} criteria pass; report in {}",
        reports.len(),
        dir.display()
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn cmd_kernel_scan(
    kind: &str,
    a: f64,
    from: f64,
    to: f64,
    points: usize,
    out_flag: Option<&Path>,
) -> ExitCode {
    let text = format!(
        "[kernel-scan]\nexperiment = kernel_scan\nkind = {kind}\na = {a} cm\nfrom = {from} cm\nto = {to} cm\npoints = {points}\n"
    );
    let scenarios = match parse_config(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: invalid scan arguments: {e}");
            return ExitCode::from(2);
        }
    };
    let sc = &scenarios[0];
    let run = match run_scenario_experiment(sc) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = resolve_output_dir(None, out_flag);
    if let Err(e) = write_scenario_artifacts(&dir, sc, &run.output) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    println!("{}", run.output.report.trim_end());
    println!("wrote {}", dir.join(&sc.name).display());
    ExitCode::SUCCESS
}

fn cmd_report_params() -> ExitCode {
    let text = "[parameter-report]\nexperiment = parameter_report\n";
    let scenarios = match parse_config(text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_scenario_experiment(&scenarios[0]) {
        Ok(run) => {
            println!("{}", run.output.report.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
