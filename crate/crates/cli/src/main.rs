use abyssal::ablation::{render_table, run_ablation};
use abyssal::corpus::{generate_corpus, Mix};
use abyssal::{load_scenario, mission_text, replay_file, CliError};
use abyssal_core::mission::parse_mission;
use abyssal_core::planner::{check_completeness, plan_mission, validate_mission, PlannerConfig, PlannerMode};
use abyssal_core::scenario::Scenario;
use abyssal_orchestrator::engine::{Engine, EngineOptions};
use abyssal_orchestrator::replay::ReplayError;
use abyssal_orchestrator::server::{serve, spawn_engine, ServeOptions};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::io::Write;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "abyssal", version, about = "Deterministic multi-AUV mission engine")]
struct Cli {
    /// Which validation checks the planner runs.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Simulation seed; for `ablate`, a corpus seed (repeatable).
    #[arg(long, global = true)]
    seed: Vec<u64>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Kg,
    State,
}

impl From<Mode> for PlannerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Full => PlannerMode::Full,
            Mode::Kg => PlannerMode::Kg,
            Mode::State => PlannerMode::State,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a mission against a scenario's knowledge and initial state.
    Validate {
        /// Scenario JSON path or `builtin:two_auv`.
        scenario: String,
        /// Mission file, or the mission text itself.
        mission: String,
    },
    /// Validate a mission and print the behavior tree for each task.
    Plan { scenario: String, mission: String },
    /// Run a scenario, writing the event log.
    Run {
        /// Defaults to $ABYSSAL_SCENARIO.
        scenario: Option<String>,
        /// Stop at this simulated time (default: the scenario's max_time).
        #[arg(long)]
        until: Option<f64>,
        /// Serve the HTTP API on this address instead of running headless.
        #[arg(long)]
        serve: Option<String>,
        /// Event log path (headless default: stdout).
        #[arg(long)]
        log: Option<String>,
        /// Simulated seconds per wall second when serving; 0 runs unpaced.
        #[arg(long, default_value_t = 10.0)]
        speed: f64,
        /// Start the served engine paused.
        #[arg(long)]
        paused: bool,
    },
    /// Compare planner configurations on generated mission corpora.
    Ablate {
        scenario: String,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Fractions per violation tag, e.g. `none=.5,capability=.2,affordance=.3`.
        #[arg(long)]
        mix: Option<String>,
    },
    /// Re-simulate an event log and report the first divergent record.
    Replay { log: String },
}

fn config(scenario: &Scenario, mode: Option<Mode>) -> PlannerConfig {
    let mut cfg = scenario.planner_config();
    if let Some(m) = mode {
        cfg.mode = m.into();
    }
    cfg
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("values serialize"));
}

fn validate(cli: &Cli, scenario: &str, mission: &str, plan: bool) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let scenario = load_scenario(Some(scenario))?;
    let mission = parse_mission(&mission_text(mission)?)?;
    let cfg = config(&scenario, cli.mode);
    let rt = scenario.world()?.runtime_state();
    let report = validate_mission(&mission, &scenario.knowledge, &rt, &cfg);
    if !plan || !report.feasible {
        if cli.json {
            print_json(&serde_json::to_value(&report)?);
        } else {
            println!("mission {} ({}): {}", report.mission_id, cfg.mode.label(), if report.feasible { "feasible" } else { "infeasible" });
            for (i, (task, verdict)) in mission.tasks().iter().zip(&report.tasks).enumerate() {
                println!("  {}. {} {}: {}", i + 1, task.subject, task.action, serde_json::to_string(verdict)?);
            }
        }
        return Ok(if report.feasible { ExitCode::SUCCESS } else { ExitCode::from(1) });
    }
    let planned = plan_mission(&mission, &scenario.knowledge, &rt, &cfg)?;
    let trees: Vec<_> = planned.tasks.iter().map(|t| Some(t.tree.clone())).collect();
    let completeness = check_completeness(&trees, &mission);
    let out = json!({
        "mission": planned.mission_id,
        "priority": planned.priority,
        "report": report,
        "completeness": completeness.fraction,
        "trees": planned.tasks.iter().map(|t| t.tree.to_value()).collect::<Vec<_>>(),
    });
    if cli.json {
        print_json(&out);
    } else {
        println!("mission {}: {} task(s), completeness {:.2}", planned.mission_id, planned.tasks.len(), completeness.fraction);
        for (i, t) in planned.tasks.iter().enumerate() {
            println!("  {}. {} {}", i + 1, t.task.subject, t.task.action);
            println!("{}", serde_json::to_string_pretty(&t.tree.to_value())?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(
    cli: &Cli,
    scenario: Option<&str>,
    until: Option<f64>,
    serve_addr: Option<&str>,
    log: Option<&str>,
    speed: f64,
    paused: bool,
) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let scenario = load_scenario(scenario)?;
    let options = EngineOptions { mode: cli.mode.map(Into::into), seed: cli.seed.last().copied() };
    let mut engine = Engine::new(scenario, options)?;
    let until = until.unwrap_or_else(|| engine.max_time());
    if let Some(addr) = serve_addr {
        let opts = ServeOptions {
            speed: (speed > 0.0).then_some(speed),
            until,
            start_paused: paused,
            log_path: log.map(Into::into),
        };
        let handle = spawn_engine(engine, opts)?;
        eprintln!("serving on http://{addr}");
        let rt = tokio::runtime::Runtime::new()?;
        rt.block_on(serve(handle, addr))?;
        return Ok(ExitCode::SUCCESS);
    }
    engine.run_until(until)?;
    engine.finish();
    let text = engine.log().to_jsonl();
    match log {
        Some(path) => std::fs::write(path, &text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    let summary = json!({
        "events": engine.log().len(),
        "time": engine.time(),
        "steps": engine.step_index(),
    });
    eprintln!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn ablate(cli: &Cli, scenario: &str, n: usize, mix: Option<&str>) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let scenario = load_scenario(Some(scenario))?;
    let mix: Mix = match mix {
        Some(m) => m.parse()?,
        None => Mix::default(),
    };
    let seeds = if cli.seed.is_empty() { vec![1, 2, 3] } else { cli.seed.clone() };
    let mut results = Vec::new();
    for seed in seeds {
        let corpus = generate_corpus(&scenario, seed, n, &mix)?;
        results.push(run_ablation(&corpus, &scenario)?);
    }
    if cli.json {
        print_json(&serde_json::to_value(&results)?);
    } else {
        print!("{}", render_table(&results));
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(cli: &Cli, log: &str) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let report = match replay_file(log) {
        Ok(r) => r,
        Err(CliError::Replay(ReplayError::CorruptLog(e))) => {
            if cli.json {
                print_json(&json!({ "status": "corrupt", "error": e.to_string() }));
            } else {
                println!("corrupt log: {e}");
            }
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    if cli.json {
        let status = if report.is_clean() { "clean" } else { "diverged" };
        print_json(&json!({ "status": status, "records": report.records, "divergence": report.divergence }));
    } else {
        match &report.divergence {
            None => println!("clean: {} records reproduced", report.records),
            Some(d) => {
                println!("diverged at seq {}: {}", d.seq, d.reason);
                if let Some(found) = &d.found {
                    println!("  log:      {found}");
                }
                if let Some(expected) = &d.expected {
                    println!("  replayed: {expected}");
                }
            }
        }
    }
    Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { scenario, mission } => validate(&cli, scenario, mission, false),
        Command::Plan { scenario, mission } => validate(&cli, scenario, mission, true),
        Command::Run { scenario, until, serve, log, speed, paused } => {
            run(&cli, scenario.as_deref(), *until, serve.as_deref(), log.as_deref(), *speed, *paused)
        }
        Command::Ablate { scenario, n, mix } => ablate(&cli, scenario, *n, mix.as_deref()),
        Command::Replay { log } => replay(&cli, log),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
