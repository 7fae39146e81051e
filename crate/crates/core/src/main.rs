use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mcsched::cfg::{self, Cfg};
use mcsched::experiment::{self, SimSettings, SweepSpec, SweepVariable};
use mcsched::model::{validate_taskset, CheckpointProfile, MemoryProfile, TaskId, Taskset, Time};
use mcsched::online::{self, ExtensionRequest, RuntimeStates};
use mcsched::prediction::PredictionModel;
use mcsched::rta;
use mcsched::sim::{self, Policy, SimOptions, SwitchBack, WorkloadConfig};
use mcsched::taskgen::{self, GenConfig, TIME_UNIT};
use mcsched::Error;

#[derive(Parser)]
#[command(
    name = "mcsched",
    version,
    about = "Mixed-criticality analysis, budget extension and simulation"
)]
struct Cli {
    /// Top-level seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Offline response times and the AMC-rtb verdict.
    Rta { taskset: PathBuf },
    /// Assign priorities with Audsley's algorithm.
    Audsley { taskset: PathBuf },
    /// Run the online extension test for one request.
    Extend {
        taskset: PathBuf,
        #[arg(long)]
        task: u32,
        /// Extra LO budget in ticks.
        #[arg(long)]
        extra: Time,
        #[arg(long, default_value_t = online::DEFAULT_ITERATION_CAP)]
        cap: u32,
    },
    /// Generate random tasksets that pass Audsley + AMC-rtb.
    Gen(GenArgs),
    /// Place checkpoints between the loops of a control-flow graph.
    Checkpoint {
        /// Graph in JSON, or DOT when the extension is `.dot` / `.gv`.
        graph: PathBuf,
        /// Also write the annotated graph here.
        #[arg(long)]
        annotated: Option<PathBuf>,
    },
    /// Simulate one taskset under one policy.
    Simulate(SimulateArgs),
    /// Paired AMC / progress-aware sweep over one variable.
    Sweep(SweepArgs),
    /// Worst-case online iterations over random tasksets.
    Iters(ItersArgs),
}

#[derive(Args, Clone)]
struct GenShape {
    #[arg(long = "n", default_value_t = 8)]
    n_tasks: usize,
    #[arg(long = "util", default_value_t = 0.6)]
    total_u_lo: f64,
    #[arg(long, default_value_t = 1.8)]
    cf: f64,
    /// Period range in time units of 1000 ticks.
    #[arg(long, default_value_t = 10)]
    period_min: Time,
    #[arg(long, default_value_t = 1000)]
    period_max: Time,
    #[arg(long)]
    log_uniform: bool,
    #[arg(long, default_value_t = 0.5)]
    hc_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    checkpoint_frac: f64,
    #[arg(long, default_value_t = 10_000)]
    max_attempts: usize,
}

impl GenShape {
    fn config(&self, seed: u64) -> GenConfig {
        GenConfig {
            n_tasks: self.n_tasks,
            total_u_lo: self.total_u_lo,
            cf: self.cf,
            period_min: self.period_min * TIME_UNIT,
            period_max: self.period_max * TIME_UNIT,
            log_uniform_periods: self.log_uniform,
            hc_fraction: self.hc_fraction,
            checkpoint_frac: self.checkpoint_frac,
            seed,
            max_attempts: self.max_attempts,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    shape: GenShape,
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args, Clone)]
struct WorkloadArgs {
    /// Probability that a job is slowed down.
    #[arg(long, default_value_t = 0.3)]
    slowdown_prob: f64,
    /// Largest slowdown factor (defaults to the criticality factor).
    #[arg(long)]
    slowdown_max: Option<f64>,
    /// Correlation between slowdown before and after the checkpoint.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long, default_value = "linear")]
    model: String,
    #[arg(long, default_value_t = sim::DEFAULT_OVERHEAD)]
    overhead_us: Time,
    #[arg(long, default_value_t = online::DEFAULT_ITERATION_CAP)]
    iteration_cap: u32,
    #[arg(long, value_enum, default_value_t = SwitchBackArg::BudgetList)]
    switch_back: SwitchBackArg,
}

#[derive(Copy, Clone, ValueEnum)]
enum SwitchBackArg {
    BudgetList,
    Idle,
}

impl From<SwitchBackArg> for SwitchBack {
    fn from(a: SwitchBackArg) -> Self {
        match a {
            SwitchBackArg::BudgetList => SwitchBack::BudgetList,
            SwitchBackArg::Idle => SwitchBack::IdleInstant,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum PolicyArg {
    Amc,
    Pastime,
}

#[derive(Args)]
struct SimulateArgs {
    taskset: PathBuf,
    #[arg(long, value_enum, default_value_t = PolicyArg::Pastime)]
    policy: PolicyArg,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Horizon in ticks (default: 20 times the largest period).
    #[arg(long)]
    horizon: Option<Time>,
    /// HI-mode budget of LC tasks as a fraction of their C(LO).
    #[arg(long, default_value_t = 0.0)]
    lc_hi_budget: f64,
    /// Move every HC checkpoint to this fraction of C(LO).
    #[arg(long)]
    checkpoint_frac: Option<f64>,
    /// Write the full event trace as CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// n_tasks | total_u_lo | overestimate_pct | checkpoint_frac | model
    #[arg(long)]
    vary: String,
    /// Comma-separated values of the swept variable.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[command(flatten)]
    shape: GenShape,
    #[command(flatten)]
    workload: WorkloadArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Write the per-value summary as JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct ItersArgs {
    #[arg(long, default_value_t = 500)]
    n_sets: usize,
    #[arg(long, default_value_t = 20)]
    n_tasks: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.5,0.6,0.7,0.8,0.9")]
    utils: Vec<f64>,
    /// Extra budget in percent of C(LO).
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80")]
    extras: Vec<u32>,
    #[arg(long, default_value_t = 1.8)]
    cf: f64,
}

/// An input that is well-formed but admits no valid schedule.
struct Infeasible(String);

enum Failure {
    Usage(Error),
    Infeasible(Infeasible),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible { .. } | Error::Unschedulable(_) | Error::ExhaustedRetries { .. } => {
                Failure::Infeasible(Infeasible(e.to_string()))
            }
            other => Failure::Usage(other),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(Infeasible(msg))) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => write_file(path, text),
        None => {
            io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Error::Io("stdout".into(), e))?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Error::Io(path.display().to_string(), e))?;
    Ok(())
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> Result<(), Error>) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn load(path: &Path) -> Result<Taskset, Failure> {
    let ts = Taskset::load(path)?;
    let violations = validate_taskset(&ts);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidTaskset(list.join("; ")).into());
    }
    Ok(ts)
}

/// Tasksets whose priorities are all unassigned get an Audsley order.
fn load_prioritized(path: &Path) -> Result<Taskset, Failure> {
    let ts = Taskset::load(path)?;
    let ts = if ts.tasks().iter().all(|t| t.priority == 0) {
        rta::audsley_assign(&ts)?
    } else {
        ts
    };
    let violations = validate_taskset(&ts);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidTaskset(list.join("; ")).into());
    }
    Ok(ts)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Rta { taskset } => cmd_rta(cli, taskset),
        Command::Audsley { taskset } => {
            let ts = Taskset::load(taskset)?;
            let assigned = rta::audsley_assign(&ts)?;
            emit(cli, &format!("{}\n", assigned.to_json()))
        }
        Command::Extend {
            taskset,
            task,
            extra,
            cap,
        } => cmd_extend(cli, taskset, TaskId(*task), *extra, *cap),
        Command::Gen(args) => cmd_gen(cli, args),
        Command::Checkpoint { graph, annotated } => cmd_checkpoint(cli, graph, annotated.as_deref()),
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Sweep(args) => cmd_sweep(cli, args),
        Command::Iters(args) => cmd_iters(cli, args),
    }
}

fn cmd_rta(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let ts = load(path)?;
    let verdict = rta::amc_rtb_schedulable(&ts);
    let text = match cli.format {
        Format::Json => json(&verdict),
        Format::Csv => csv_text(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["task", "r_lo", "r_hi", "r_star"])?;
            let opt = |v: Option<Time>| v.map(|v| v.to_string()).unwrap_or_default();
            for r in &verdict.response_times.0 {
                w.write_record([r.id.0.to_string(), opt(r.r_lo), opt(r.r_hi), opt(r.r_star)])?;
            }
            w.flush().map_err(|e| Error::Io("csv".into(), e))?;
            Ok(())
        })?,
    };
    emit(cli, &text)?;
    match verdict.failing_task {
        Some(id) => Err(Error::Unschedulable(id).into()),
        None => Ok(()),
    }
}

fn cmd_extend(cli: &Cli, path: &Path, task: TaskId, extra: Time, cap: u32) -> Result<(), Failure> {
    let ts = load(path)?;
    let verdict = rta::amc_rtb_schedulable(&ts);
    if let Some(id) = verdict.failing_task {
        return Err(Error::Unschedulable(id).into());
    }
    let request =
        ExtensionRequest::new(task, extra, 0).ok_or_else(|| Error::Config("--extra must be positive".into()))?;
    let mut states = RuntimeStates::new(&ts);
    let decision = online::is_budget_change_approved(&ts, &mut states, &verdict.response_times, &request, cap)?;
    emit(cli, &json(&decision))
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> Result<(), Failure> {
    let cfg = args.shape.config(cli.seed);
    let batch = taskgen::generate_schedulable_batch(&cfg, args.count)?;
    #[derive(Serialize)]
    struct Report<'a> {
        config: GenConfig,
        count: usize,
        attempts: usize,
        acceptance_ratio: f64,
        files: Vec<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        tasksets: Option<&'a [Taskset]>,
    }
    let mut report = Report {
        config: cfg,
        count: batch.tasksets.len(),
        attempts: batch.attempts,
        acceptance_ratio: batch.acceptance_ratio,
        files: Vec::new(),
        tasksets: None,
    };
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io(dir.display().to_string(), e))?;
            for (k, ts) in batch.tasksets.iter().enumerate() {
                let mut ts = ts.clone();
                ts.name = format!("taskset-{k:04}");
                let file = dir.join(format!("{}.json", ts.name));
                write_file(&file, &format!("{}\n", ts.to_json()))?;
                report.files.push(file.display().to_string());
            }
            print!("{}", json(&report));
            Ok(())
        }
        None => {
            report.tasksets = Some(&batch.tasksets);
            emit(cli, &json(&report))
        }
    }
}

fn is_dot(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("dot" | "gv"))
}

fn cmd_checkpoint(cli: &Cli, path: &Path, annotated_path: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    let dot = is_dot(path);
    let graph: Cfg = cfg::parse_cfg(&text, dot)?;
    let (loops, placement) = cfg::place_checkpoints(&graph);
    let annotated = cfg::annotate(&graph, &placement)?;
    let blocks = placement.blocks();
    let annotated_text = if dot {
        annotated.to_dot(&blocks)
    } else {
        annotated.to_json(&blocks) + "\n"
    };
    if let Some(p) = annotated_path {
        write_file(p, &annotated_text)?;
    }
    #[derive(Serialize)]
    struct Report<'a> {
        function: &'a str,
        loop_headers: Vec<&'a str>,
        checkpoints: &'a [cfg::Checkpoint],
        ignored_irreducible_edges: Vec<(&'a str, &'a str)>,
        annotated: serde_json::Value,
    }
    let report = Report {
        function: &graph.function,
        loop_headers: loops.headers.iter().map(|&h| graph.name(h)).collect(),
        checkpoints: &placement.checkpoints,
        ignored_irreducible_edges: loops
            .irreducible_edges
            .iter()
            .map(|&(a, b)| (graph.name(a), graph.name(b)))
            .collect(),
        annotated: if dot {
            serde_json::Value::String(annotated_text)
        } else {
            serde_json::from_str(&annotated_text).expect("annotated graph is valid JSON")
        },
    };
    emit(cli, &json(&report))
}

fn workload_config(args: &WorkloadArgs, cf: f64, seed: u64, reserve: Time) -> WorkloadConfig {
    WorkloadConfig {
        seed,
        slowdown_prob: args.slowdown_prob,
        cf: args.slowdown_max.unwrap_or(cf),
        correlation: args.rho,
        hi_reserve: reserve,
        ..WorkloadConfig::default()
    }
}

fn sim_settings(args: &SimArgs) -> Result<SimSettings, Failure> {
    let model: PredictionModel = args.model.parse()?;
    Ok(SimSettings {
        model,
        overhead: args.overhead_us,
        iteration_cap: args.iteration_cap,
        switch_back: args.switch_back.into(),
    })
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), Failure> {
    let mut ts = load_prioritized(&args.taskset)?;
    if args.lc_hi_budget < 0.0 || args.lc_hi_budget > 1.0 {
        return Err(Error::Config("--lc-hi-budget must be a fraction in [0, 1]".into()).into());
    }
    if let Some(p) = args.checkpoint_frac {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Config("--checkpoint-frac must be in (0, 1)".into()).into());
        }
    }
    ts = ts.map_tasks(|t| {
        let mut t = t.clone();
        if !t.is_hc() {
            t.c_hi = (args.lc_hi_budget * t.c_lo as f64).round() as Time;
        } else if let Some(p) = args.checkpoint_frac {
            let nominal = t.nominal_c_lo();
            let c_cp = ((p * nominal as f64).round() as Time).clamp(1, nominal.saturating_sub(1).max(1));
            let mut profile = t.checkpoint.unwrap_or(CheckpointProfile::new(c_cp));
            profile.c_cp_lo = c_cp;
            profile.mem = Some(MemoryProfile::from_split(c_cp, nominal - c_cp));
            t.checkpoint = Some(profile);
        }
        t
    });

    let settings = sim_settings(&args.sim)?;
    let horizon = args.horizon.unwrap_or(experiment::HORIZON_PERIODS * ts.max_period());
    let cf = ts
        .tasks()
        .iter()
        .filter(|t| t.is_hc())
        .map(|t| t.c_hi as f64 / t.c_lo as f64)
        .fold(1.0, f64::max);
    let workload = workload_config(&args.workload, cf, sim_seed(cli.seed), settings.overhead);
    let demands = sim::generate_demands(&ts, &workload, horizon)?;
    let opts = SimOptions {
        policy: match args.policy {
            PolicyArg::Amc => Policy::Amc,
            PolicyArg::Pastime => Policy::ProgressAware,
        },
        model: settings.model,
        horizon,
        overhead: settings.overhead,
        iteration_cap: settings.iteration_cap,
        switch_back: settings.switch_back,
    };
    let run = sim::simulate(&ts, &demands, &opts)?;
    let trace_csv = || csv_text(|buf| run.trace.write_csv(buf));
    if let Some(path) = &args.trace {
        write_file(path, &trace_csv()?)?;
    }
    match cli.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Report<'a> {
                options: &'a SimOptions,
                workload: &'a WorkloadConfig,
                metrics: &'a sim::SimMetrics,
            }
            emit(
                cli,
                &json(&Report {
                    options: &opts,
                    workload: &workload,
                    metrics: &run.metrics,
                }),
            )
        }
        Format::Csv => emit(cli, &trace_csv()?),
    }
}

fn sim_seed(seed: u64) -> u64 {
    mcsched::seed::derive(seed, &[mcsched::seed::DEMANDS])
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<(), Failure> {
    let variable: SweepVariable = args.vary.parse()?;
    let settings = sim_settings(&args.sim)?;
    let spec = SweepSpec {
        variable,
        values: args.values.clone(),
        repetitions: args.reps,
        seed: cli.seed,
        gen: args.shape.config(cli.seed),
        workload: workload_config(&args.workload, args.shape.cf, cli.seed, settings.overhead),
        sim: settings,
    };
    let result = experiment::run_sweep(&spec)?;
    for (v, rep, reason) in &result.skipped {
        log::warn!("skipped value {v} repetition {rep}: {reason}");
    }
    let summary = experiment::summarize(&spec, &result.rows);
    if let Some(path) = &args.summary {
        write_file(path, &json(&summary))?;
    }
    let text = match cli.format {
        Format::Csv => csv_text(|buf| experiment::write_csv(&result.rows, buf))?,
        Format::Json => {
            #[derive(Serialize)]
            struct Report<'a> {
                spec: &'a SweepSpec,
                summary: &'a [experiment::SummaryCell],
                rows: &'a [experiment::SweepRow],
                skipped: &'a [(String, usize, String)],
            }
            json(&Report {
                spec: &spec,
                summary: &summary,
                rows: &result.rows,
                skipped: &result.skipped,
            })
        }
    };
    emit(cli, &text)
}

fn cmd_iters(cli: &Cli, args: &ItersArgs) -> Result<(), Failure> {
    let cfg = GenConfig {
        n_tasks: args.n_tasks,
        cf: args.cf,
        seed: cli.seed,
        ..GenConfig::default()
    };
    let study = experiment::run_iteration_bound_study(args.n_sets, &cfg, &args.utils, &args.extras, cli.seed)?;
    let text = match cli.format {
        Format::Json => json(&study),
        Format::Csv => csv_text(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            for c in &study.cells {
                w.serialize(c)?;
            }
            w.flush().map_err(|e| Error::Io("csv".into(), e))?;
            Ok(())
        })?,
    };
    emit(cli, &text)
}
