use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use flarko::config::{GeneratorKind, RunConfig};
use flarko::report::{read_rows_csv, read_rows_json, render_table, ReportRow};
use flarko::runner::{cmd_build_kg, cmd_evaluate, cmd_run, RunError};
use flarko::synth::{generate, SynthOptions};
use flarko_core::eval::EvalWindow;

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "flarko", version, about = "Knowledge-graph retrieval pipeline for asset recommendation backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Dump every user's PKG and the MKG at one cutoff as JSON-LD.
    BuildKg {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to the first evaluation date.
        #[arg(long)]
        cutoff: Option<NaiveDate>,
    },
    /// Run all instances and variants; resumes an interrupted run.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        generator: Option<GeneratorArg>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
    },
    /// Score a results file and audit the graphs for leakage.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output_dir>/results.jsonl`.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset and a matching config.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        users: usize,
        #[arg(long, default_value_t = 12)]
        assets: usize,
        #[arg(long, default_value = "2021-12-01")]
        start: NaiveDate,
        #[arg(long, default_value = "2022-11-29")]
        end: NaiveDate,
    },
    /// Print or convert a metrics file written by `evaluate`.
    Report {
        /// metrics.json or metrics.csv
        metrics: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Table,
    Csv,
    Json,
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn read_rows(path: &Path) -> Result<Vec<ReportRow>, flarko::report::ReportError> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_rows_csv(path)
    } else {
        read_rows_json(path)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match cli.command {
        Command::BuildKg { cfg, cutoff } => {
            let result = load_config(&cfg).and_then(|c| cmd_build_kg(&c, cutoff));
            match result {
                Ok((dir, m)) => {
                    println!(
                        "{}: MKG {} triples, {} PKG(s), {} warning(s)",
                        dir.display(),
                        m.mkg_triples,
                        m.pkg.len(),
                        m.warnings.len()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Run {
            cfg,
            seed,
            workers,
            generator,
            endpoint,
            model,
        } => {
            let result = load_config(&cfg).and_then(|mut c| {
                if let Some(s) = seed {
                    c.seed = s;
                }
                if workers.is_some() {
                    c.workers = workers;
                }
                if let Some(g) = generator {
                    c.generator = match g {
                        GeneratorArg::Mock => GeneratorKind::Mock,
                        GeneratorArg::Http => GeneratorKind::Http,
                    };
                }
                if let Some(url) = endpoint {
                    c.generation.endpoint_url = url;
                }
                if let Some(m) = model {
                    c.generation.model_name = m;
                }
                cmd_run(&c)
            });
            match result {
                Ok(m) => {
                    println!(
                        "{} task(s): {} executed, {} skipped, {} failed",
                        m.tasks, m.executed, m.skipped, m.failed
                    );
                    if m.failed > 0 {
                        ExitCode::from(EXIT_PARTIAL)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Evaluate { cfg, results } => match load_config(&cfg).and_then(|c| cmd_evaluate(&c, results.as_deref())) {
            Ok(ev) => {
                let rows: Vec<ReportRow> = ev.reports.iter().map(ReportRow::from).collect();
                print!("{}", render_table(&rows));
                println!(
                    "leakage audit: {} instance(s), {} date literal(s), {} violation(s)",
                    ev.leakage.instances_checked,
                    ev.leakage.dates_checked,
                    ev.leakage.violations.len()
                );
                if ev.failed_results > 0 {
                    eprintln!("warning: {} failed result(s) scored as misses", ev.failed_results);
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Synth {
            out,
            seed,
            users,
            assets,
            start,
            end,
        } => {
            let window = EvalWindow::new(start, end);
            if let Err(e) = window.validate() {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            let opts = SynthOptions {
                seed,
                users,
                assets,
                window,
                ..Default::default()
            };
            match generate(&out, &opts) {
                Ok(f) => {
                    println!(
                        "wrote {} transactions and {} prices; config at {}",
                        f.transaction_rows,
                        f.price_rows,
                        f.config.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_DATA)
                }
            }
        }
        Command::Report { metrics, format } => {
            let rows = match read_rows(&metrics) {
                Ok(r) if !r.is_empty() => r,
                Ok(_) => {
                    eprintln!("error: no rows in {}", metrics.display());
                    return ExitCode::from(EXIT_DATA);
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", metrics.display());
                    return ExitCode::from(EXIT_DATA);
                }
            };
            let out = match format {
                OutputFormat::Table => Ok(render_table(&rows)),
                OutputFormat::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    rows.iter().try_for_each(|r| w.serialize(r)).map(|_| String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default())
                }
                OutputFormat::Json => Ok(serde_json::to_string_pretty(&rows).unwrap_or_default() + "\n"),
            };
            match out {
                Ok(s) => {
                    print!("{s}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_DATA)
                }
            }
        }
    }
}

