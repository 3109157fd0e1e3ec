//! `bigmas` command-line entry point.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use anyhow::{anyhow, Context};
use bigmas_bench::baselines::BaselineConfig;
use bigmas_bench::runner::{load_instances, trace_file_name, CellSettings};
use bigmas_bench::{
    build_gateway, compute_metrics, read_records, run_benchmark_with, run_cell, write_csvs,
    BackendConfig, BenchConfig, BenchError, Method, MetricsSummary,
};
use bigmas_core::executor::RunConfig;
use bigmas_core::gateway::{Gateway, HttpBackend, HttpConfig};
use bigmas_core::trace;
use bigmas_tasks::{generate_instances, TaskInstance, TaskKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bigmas",
    version,
    about = "Graph-structured multi-agent reasoning over a shared workspace"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate task instances as JSONL.
    Gen {
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotate an instance file with oracle solutions.
    Oracle {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute one method on one instance, print the answer and verdict, and write a trace.
    Run(Box<RunArgs>),
    /// Run a benchmark described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's parallelism.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Suppress per-record progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Recompute summary CSVs from a runs.jsonl file.
    Stats {
        #[arg(long)]
        runs: PathBuf,
        /// Directory for the CSVs; defaults to the directory holding the runs file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Oracle,
    InvalidGenerator,
    Scripted,
    Http,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("which").required(true).args(["instance", "problem"])))]
struct RunArgs {
    #[arg(long)]
    task: TaskKind,
    /// Instance id from --instances, a generated id such as game24-0-3, or an index into
    /// the set generated for --seed.
    #[arg(long)]
    instance: Option<String>,
    /// Literal problem: four numbers for game24 ("4,9,10,13"), a target for sixfives.
    #[arg(long)]
    problem: Option<String>,
    /// bigmas, base, react or tot.
    #[arg(long, default_value = "bigmas")]
    method: Method,
    #[arg(long, value_enum)]
    backend: BackendKind,
    /// JSONL of {"phase", "response"} entries, required for the scripted backend.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Instance JSONL to look the id up in.
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace output; defaults to <instance>.<method>.jsonl in the current directory.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Exit with status 1 when the verdict is incorrect.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    max_corrections: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Endpoint base URL (default from BIGMAS_BASE_URL).
    #[arg(long)]
    base_url: Option<String>,
    /// Model name (default from BIGMAS_MODEL).
    #[arg(long)]
    model: Option<String>,
    /// API key (default from BIGMAS_API_KEY or OPENAI_API_KEY).
    #[arg(long)]
    api_key: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
}

/// Failure classes mapped onto exit codes.
enum Fail {
    /// Bad flags, config or input files.
    Usage(anyhow::Error),
    /// The command ran but did not succeed.
    Task(anyhow::Error),
}

impl From<BenchError> for Fail {
    fn from(e: BenchError) -> Self {
        Fail::Usage(e.into())
    }
}

type CmdResult = Result<(), Fail>;

fn usage(e: impl Into<anyhow::Error>) -> Fail {
    Fail::Usage(e.into())
}

fn task(e: impl Into<anyhow::Error>) -> Fail {
    Fail::Task(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            task,
            count,
            seed,
            out,
        } => cmd_gen(task, count, seed, out.as_deref()),
        Command::Oracle { input, out } => cmd_oracle(&input, out.as_deref()),
        Command::Run(args) => cmd_run(&args),
        Command::Bench {
            config,
            out,
            parallelism,
            quiet,
        } => cmd_bench(&config, out, parallelism, quiet),
        Command::Stats { runs, out } => cmd_stats(&runs, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Fail::Task(e)) => {
            eprintln!("{e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(task),
        None => io::stdout().write_all(text.as_bytes()).map_err(task),
    }
}

fn instances_jsonl(instances: &[TaskInstance]) -> String {
    instances
        .iter()
        .map(|i| serde_json::to_string(i).expect("instance serializes") + "\n")
        .collect()
}

fn cmd_gen(kind: TaskKind, count: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    let instances = generate_instances(kind, count, seed).map_err(usage)?;
    write_output(out, &instances_jsonl(&instances))
}

fn cmd_oracle(input: &Path, out: Option<&Path>) -> CmdResult {
    let instances: Vec<TaskInstance> = load_instances(input)?
        .into_iter()
        .map(TaskInstance::with_oracle)
        .collect();
    let unsolved = instances
        .iter()
        .filter(|i| !i.oracle.as_ref().is_some_and(|o| o.solvable))
        .count();
    write_output(out, &instances_jsonl(&instances))?;
    eprintln!(
        "{} instances annotated, {unsolved} without a solution",
        instances.len()
    );
    Ok(())
}

fn literal_instance(kind: TaskKind, spec: &str) -> Option<TaskInstance> {
    let nums: Vec<i64> = spec
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .ok()?;
    match (kind, nums.as_slice()) {
        (TaskKind::Game24, [a, b, c, d]) => {
            let mut n = [*a, *b, *c, *d].map(|x| u32::try_from(x).unwrap_or(0));
            n.sort_unstable();
            n.iter()
                .all(|x| (1..=13).contains(x))
                .then(|| TaskInstance::game24(n))
        }
        (TaskKind::SixFives, [t]) => Some(TaskInstance::six_fives(*t)),
        _ => None,
    }
}

fn resolve_instance(args: &RunArgs) -> Result<TaskInstance, Fail> {
    if let Some(problem) = &args.problem {
        return literal_instance(args.task, problem)
            .map(TaskInstance::with_oracle)
            .ok_or_else(|| usage(anyhow!("cannot read {} problem {problem:?}", args.task)));
    }
    let spec = args.instance.as_deref().unwrap_or_default().trim();
    if let Some(path) = &args.instances {
        return load_instances(path)?
            .into_iter()
            .find(|i| i.id == spec && i.kind() == args.task)
            .ok_or_else(|| {
                usage(anyhow!(
                    "no {} instance {spec:?} in {}",
                    args.task,
                    path.display()
                ))
            });
    }
    // Generated ids look like `<task>-<seed>-<index>`.
    let parsed = match spec
        .strip_prefix(&format!("{}-", args.task))
        .and_then(|r| r.split_once('-'))
    {
        Some((s, i)) => s.parse().ok().zip(i.parse::<usize>().ok()),
        None => spec.parse::<usize>().ok().map(|i| (args.seed, i)),
    };
    let (seed, index) =
        parsed.ok_or_else(|| usage(anyhow!("cannot resolve {} instance {spec:?}", args.task)))?;
    let mut all = generate_instances(args.task, index + 1, seed).map_err(usage)?;
    Ok(all.swap_remove(index))
}

fn run_gateway(args: &RunArgs, instance: &TaskInstance) -> Result<(Gateway, String), Fail> {
    let backend = match args.backend {
        BackendKind::Oracle => BackendConfig::Oracle,
        BackendKind::InvalidGenerator => BackendConfig::InvalidGenerator,
        BackendKind::Scripted => BackendConfig::Scripted {
            manifest: args
                .manifest
                .clone()
                .ok_or_else(|| usage(anyhow!("--backend scripted needs --manifest")))?,
        },
        BackendKind::Http => {
            let mut http = HttpConfig::from_env();
            if let Some(u) = &args.base_url {
                http.base_url = u.trim_end_matches('/').to_string();
            }
            if let Some(m) = &args.model {
                http.model = m.clone();
            }
            if let Some(k) = &args.api_key {
                http.api_key = Some(k.clone());
            }
            if let Some(t) = args.timeout_secs {
                http.timeout = Duration::from_secs(t);
            }
            let name = format!("http:{}", http.model);
            return Ok((Gateway::new(HttpBackend::new(http)), name));
        }
    };
    Ok((build_gateway(&backend, instance)?, backend.name()))
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let instance = resolve_instance(args)?;
    let mut run = RunConfig::default();
    if let Some(t) = args.t_max {
        run.t_max = t;
    }
    if let Some(r) = args.max_corrections {
        run.max_corrections = r;
    }
    let mut baseline = BaselineConfig::default();
    if let Some(t) = args.temperature {
        run.temperature = t;
        baseline.temperature = t;
    }
    run.check().map_err(usage)?;
    let (gateway, backend) = run_gateway(args, &instance)?;
    let settings = CellSettings {
        run,
        baseline,
        backend,
        record_wall_time: false,
    };
    let out = run_cell(&instance, args.method, &gateway, &settings);
    let r = &out.record;
    let trace_path = args
        .trace
        .clone()
        .unwrap_or_else(|| PathBuf::from(trace_file_name(r)));
    fs::write(&trace_path, trace::to_jsonl(&out.trace))
        .with_context(|| format!("writing {}", trace_path.display()))
        .map_err(task)?;

    println!("instance: {}", r.instance_id);
    println!("method: {}", r.method.as_str());
    println!("answer: {}", r.answer);
    println!(
        "verdict: {}",
        if r.correct {
            "correct".to_string()
        } else {
            format!("incorrect ({})", r.verdict.reason())
        }
    );
    if let Some(t) = r.termination {
        println!("termination: {}", t.as_str());
    }
    println!(
        "steps: {}  calls: {}  routing decisions: {}",
        r.steps, r.calls, r.routing_decisions
    );
    println!("trace: {}", trace_path.display());
    if let Some(e) = &r.error {
        eprintln!("run error: {e}");
    }
    if args.strict && !r.correct {
        return Err(Fail::Task(anyhow!("verdict incorrect")));
    }
    Ok(())
}

fn print_summary(summary: &MetricsSummary) {
    println!(
        "{:<10} {:<8} {:>5} {:>8} {:>10}",
        "task", "method", "runs", "acc%", "calls/run"
    );
    for g in &summary.groups {
        println!(
            "{:<10} {:<8} {:>5} {:>8.1} {:>10.2}",
            g.task,
            g.method.as_str(),
            g.runs,
            g.accuracy_pct,
            g.calls.mean
        );
    }
}

fn cmd_bench(
    path: &Path,
    out: Option<PathBuf>,
    parallelism: Option<usize>,
    quiet: bool,
) -> CmdResult {
    let mut config = BenchConfig::load(path)?;
    if let Some(o) = out {
        config.out_dir = o;
    }
    if let Some(p) = parallelism {
        config.parallelism = p;
    }
    config.check()?;
    let cancel = AtomicBool::new(false);
    let mut done = 0usize;
    let records = run_benchmark_with(&config, &cancel, &mut |r| {
        done += 1;
        if !quiet {
            eprintln!(
                "[{done}] {} {} {}{}",
                r.instance_id,
                r.method.as_str(),
                if r.correct { "correct" } else { "incorrect" },
                r.error
                    .as_deref()
                    .map(|e| format!(" (error: {e})"))
                    .unwrap_or_default()
            );
        }
    })
    .map_err(|e| match e {
        BenchError::Config(_) => usage(e),
        BenchError::Io { .. } => task(e),
    })?;
    print_summary(&compute_metrics(&records));
    eprintln!(
        "wrote {} records to {}",
        records.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn cmd_stats(runs: &Path, out: Option<PathBuf>) -> CmdResult {
    let records = read_records(runs)?;
    if records.is_empty() {
        return Err(usage(anyhow!("{} has no records", runs.display())));
    }
    let dir = out.unwrap_or_else(|| runs.parent().map(Path::to_path_buf).unwrap_or_default());
    let dir = if dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        dir
    };
    fs::create_dir_all(&dir).map_err(task)?;
    let summary = compute_metrics(&records);
    write_csvs(&summary, &records, &dir).map_err(task)?;
    print_summary(&summary);
    Ok(())
}
