//! `shieldmt`: synthesize and run shields that enforce temporal safety
//! specifications over integer arithmetic.
//!
//! The pipeline is parse -> abstract (reaction table) -> synth (safety game)
//! -> shield (runtime enforcement) -> report. Each stage is also exposed as
//! its own subcommand so artifacts can be inspected in isolation.

mod config;
mod policies;
mod report;
mod soft;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shieldmt_core::boolabs::{booleanize, check_strict_covering, compute_mvr, compute_vr};
use shieldmt_core::shield::ShieldConfig;
use shieldmt_core::spec::parse_spec;
use shieldmt_core::synth::{build_game, extract_controller, solve_game};
use shieldmt_core::{
    Architecture, MonitorVerdict, ReactionTable, ShieldArtifact, ShieldSession, SpecT, StepRecord,
    Valuation, WinningRegion,
};

use config::Settings;
use policies::{Policy, PolicySpec};
use report::RunReport;

/// Default value range for `random` environment policies. Kept well inside
/// the bounded backend's box so abstraction-time and runtime semantics of
/// the specification's comparisons coincide.
const ENV_RANDOM_RANGE: (i64, i64) = (-20, 20);
/// Default value range for `random` design policies.
const DESIGN_RANDOM_RANGE: (i64, i64) = (-64, 64);

#[derive(Parser)]
#[command(
    name = "shieldmt",
    version,
    about = "Synthesize and run shields that enforce temporal safety specifications \
             over integer arithmetic",
    after_help = "Exit codes: 0 success, 1 monitor violation, 2 parse/usage error, \
                  3 infeasible or unrealizable, 4 solver failure, 5 I/O error."
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct GlobalOpts {
    /// Config file with `key = value` lines (smt_bin, smt_args, timeout_ms,
    /// bound, jobs, seed); precedence: flags > environment > file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// External SMT solver binary (SMT-LIB 2 over stdin); empty string
    /// forces the built-in bounded backend.
    #[arg(long, global = true, value_name = "BIN")]
    smt_bin: Option<String>,

    /// Arguments passed to the SMT binary (whitespace-split).
    #[arg(long, global = true, value_name = "ARGS")]
    smt_args: Option<String>,

    /// Per-query SMT timeout in milliseconds.
    #[arg(long, global = true, value_name = "MS")]
    timeout_ms: Option<u64>,

    /// Box scale B of the bounded backend: free variables range over
    /// [-B, B], scaled by nesting depth for quantified blocks.
    #[arg(long, global = true, value_name = "B")]
    bound: Option<i64>,

    /// Worker threads for reaction validity checks.
    #[arg(long, global = true, value_name = "K")]
    jobs: Option<usize>,

    /// Seed used by `random` policies that do not state their own.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Emit a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableOpt {
    /// All valid reactions.
    Vr,
    /// Subset-minimal valid reactions.
    Mvr,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeOpt {
    /// Deterministic Boolean controller (one move per state and reaction).
    Controller,
    /// Maximally permissive winning region.
    Wr,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the reaction table (the specification's Boolean abstraction)
    Abstract {
        /// Specification file
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "vr")]
        reactions: TableOpt,
        /// Also write the Booleanized specification as a JSON AST
        #[arg(long, value_name = "FILE")]
        emit_bool: Option<PathBuf>,
        /// Write the reaction table here instead of stdout
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Solve the safety game and write a controller or winning region
    Synth {
        /// Specification file
        spec: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeOpt,
        #[arg(long, value_enum, default_value = "vr")]
        reactions: TableOpt,
        /// Output file for the synthesized artifact (JSON)
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Run a design against a shield
    Shield {
        #[command(subcommand)]
        cmd: ShieldCmd,
    },
    /// Check a recorded trace against a specification
    Monitor {
        /// Specification file
        spec: PathBuf,
        /// JSONL trace: either shield step records or flat `{"var": value}`
        /// objects assigning every declared variable
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
    },
    /// Print the reaction table with feasibility diagnostics
    Reactions {
        /// Specification file
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "vr")]
        reactions: TableOpt,
        /// `strict` verifies that every input's achievable set is itself a
        /// listed reaction (exit 3 if not)
        #[arg(long, value_name = "WHAT")]
        check: Option<CheckOpt>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckOpt {
    Strict,
}

#[derive(Subcommand)]
enum ShieldCmd {
    /// Drive an environment and a design through the shield for N steps
    Run {
        /// Specification file
        spec: PathBuf,
        /// Shield architecture
        #[arg(long, value_enum)]
        mode: ModeOpt,
        #[arg(long, value_enum, default_value = "vr")]
        reactions: TableOpt,
        /// Correction objective: `none`, `closest[:l1|:linf]` (stay near the
        /// design's output), or `soft:<file>` (weighted soft constraints,
        /// one `WEIGHT : COMPARISON` per line)
        #[arg(long, default_value = "none")]
        objective: String,
        /// Environment inputs: `<trace.jsonl>` | `random[:SEED[:LO..=HI]]`
        /// | `scripted:v1,v2,...`
        #[arg(long)]
        env: String,
        /// Design outputs, same forms as --env
        #[arg(long)]
        design: String,
        /// Maximum number of steps (trace/scripted sources may end earlier)
        #[arg(long)]
        steps: usize,
        /// Write the step log (JSONL) here instead of stdout
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Map an error chain onto the documented exit codes: 2 parse/usage,
/// 3 infeasible/unrealizable, 4 solver, 5 I/O.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    use shieldmt_core::Error as CoreError;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Parse(_) | CoreError::Eval(_) | CoreError::Guard(_) => 2,
                CoreError::Infeasible(_) | CoreError::Unrealizable | CoreError::NoReaction => 3,
                CoreError::Solver(_) => 4,
                CoreError::Internal(_) => 70,
            };
        }
        if cause.downcast_ref::<shieldmt_core::spec::ParseError>().is_some()
            || cause.downcast_ref::<shieldmt_core::spec::EvalError>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return 2;
        }
        if cause.downcast_ref::<shieldmt_core::theory::SolverError>().is_some() {
            return 4;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 5;
        }
    }
    2
}

fn dispatch(cli: Cli) -> Result<u8> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.global.config {
        settings.apply_file(path)?;
    }
    settings.apply_env()?;
    apply_flags(&mut settings, &cli.global);

    match cli.cmd {
        Cmd::Abstract { spec, reactions, emit_bool, out } => {
            cmd_abstract(&spec, reactions, emit_bool.as_deref(), out.as_deref(), &settings)
        }
        Cmd::Synth { spec, mode, reactions, out } => {
            cmd_synth(&spec, mode, reactions, &out, &settings)
        }
        Cmd::Shield { cmd: ShieldCmd::Run { spec, mode, reactions, objective, env, design, steps, out } } => {
            cmd_run(&spec, mode, reactions, &objective, &env, &design, steps, out.as_deref(), &settings)
        }
        Cmd::Monitor { spec, trace } => cmd_monitor(&spec, &trace, &settings),
        Cmd::Reactions { spec, reactions, check } => {
            cmd_reactions(&spec, reactions, check, &settings)
        }
    }
}

fn apply_flags(settings: &mut Settings, g: &GlobalOpts) {
    match g.smt_bin.as_deref() {
        Some("") => settings.smt_bin = None,
        Some(bin) => settings.smt_bin = Some(bin.to_string()),
        None => {}
    }
    if let Some(args) = &g.smt_args {
        settings.smt_args = Some(args.split_whitespace().map(str::to_string).collect());
    }
    if let Some(ms) = g.timeout_ms {
        settings.timeout_ms = ms;
    }
    if let Some(b) = g.bound {
        settings.bound = b;
    }
    if let Some(j) = g.jobs {
        settings.jobs = j;
    }
    if let Some(s) = g.seed {
        settings.seed = s;
    }
    settings.json = g.json;
}

fn load_spec(path: &Path) -> Result<SpecT> {
    let src = std::fs::read_to_string(path)
        .with_context(|| format!("reading specification {}", path.display()))?;
    Ok(parse_spec(&src)?)
}

fn compute_table(spec: &SpecT, kind: TableOpt, settings: &Settings) -> Result<ReactionTable> {
    let vr = compute_vr(spec, &settings.abstraction_opts())?;
    Ok(match kind {
        TableOpt::Vr => vr,
        TableOpt::Mvr => compute_mvr(&vr),
    })
}

/// Write pretty JSON plus a trailing newline to `path`, or stdout if `None`.
fn emit_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_abstract(
    spec_path: &Path,
    kind: TableOpt,
    emit_bool: Option<&Path>,
    out: Option<&Path>,
    settings: &Settings,
) -> Result<u8> {
    let spec = load_spec(spec_path)?;
    let table = compute_table(&spec, kind, settings)?;
    if let Some(path) = emit_bool {
        emit_json(&booleanize(&spec, &table), Some(path))?;
    }
    emit_json(&table, out)?;
    Ok(0)
}

fn cmd_synth(
    spec_path: &Path,
    mode: ModeOpt,
    kind: TableOpt,
    out: &Path,
    settings: &Settings,
) -> Result<u8> {
    let spec = load_spec(spec_path)?;
    let table = compute_table(&spec, kind, settings)?;
    let wr = solve(&spec, &table)?;
    let (label, states) = match mode {
        ModeOpt::Wr => {
            let n = wr.states.len();
            emit_json(&wr, Some(out))?;
            ("winning region", n)
        }
        ModeOpt::Controller => {
            let ctrl = extract_controller(&wr)?;
            let n = ctrl.states.len();
            emit_json(&ctrl, Some(out))?;
            ("controller", n)
        }
    };
    if settings.json {
        println!(
            "{}",
            serde_json::json!({
                "mode": label,
                "states": states,
                "reactions": wr.table.reactions.len(),
                "out": out.display().to_string(),
            })
        );
    } else {
        println!("{label}: {states} states over {} reactions -> {}", wr.table.reactions.len(), out.display());
    }
    Ok(0)
}

fn solve(spec: &SpecT, table: &ReactionTable) -> Result<WinningRegion> {
    let game = build_game(spec, table)?;
    Ok(solve_game(&game).ok_or(shieldmt_core::Error::Unrealizable)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    spec_path: &Path,
    mode: ModeOpt,
    kind: TableOpt,
    objective: &str,
    env_arg: &str,
    design_arg: &str,
    steps: usize,
    out: Option<&Path>,
    settings: &Settings,
) -> Result<u8> {
    let spec = load_spec(spec_path)?;
    let table = compute_table(&spec, kind, settings)?;
    let wr = solve(&spec, &table)?;
    let (architecture, artifact) = match mode {
        ModeOpt::Wr => (Architecture::WinningRegionBased, ShieldArtifact::WinningRegion(wr)),
        ModeOpt::Controller => {
            (Architecture::ControllerBased, ShieldArtifact::Controller(extract_controller(&wr)?))
        }
    };
    let shield_config = ShieldConfig {
        architecture,
        objective: soft::parse_objective(objective, &spec)?,
        ..ShieldConfig::default()
    };
    let mut session =
        ShieldSession::new(spec.clone(), artifact, shield_config, settings.solver_config().build())?;

    let env_spec = PolicySpec::parse(env_arg, settings.seed, ENV_RANDOM_RANGE)
        .with_context(|| format!("--env {env_arg}"))?;
    let design_spec =
        PolicySpec::parse(design_arg, settings.seed.wrapping_add(1), DESIGN_RANDOM_RANGE)
            .with_context(|| format!("--design {design_arg}"))?;
    let mut env = Policy::new(&env_spec, &spec.env_vars())?;
    let mut design = Policy::new(&design_spec, &spec.sys_vars())?;

    // Step records stream to --out, or to stdout unless --json needs it.
    let mut log: Box<dyn Write> = match out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None if settings.json => Box::new(std::io::sink()),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut phases: Vec<(u64, u64)> = Vec::new();
    let mut sink_err = None;
    let records = session.run(&mut env, &mut design, steps, |outcome| {
        phases.push((outcome.boolean_ns, outcome.theory_ns));
        let line = serde_json::to_string(&outcome.record).expect("step records serialize");
        if let Err(e) = writeln!(log, "{line}") {
            sink_err.get_or_insert(e);
        }
    })?;
    log.flush()?;
    if let Some(e) = sink_err {
        return Err(e).context("writing step log");
    }

    // Independent check of the emitted trace; the session already enforces
    // this incrementally, so a violation here is a bug, not user error.
    let joints: Vec<Valuation> = records.iter().map(|r| joint(&r.x, &r.y_out)).collect();
    let verdict = spec.monitor_prefix(&joints).map_err(shieldmt_core::Error::Eval)?;
    if verdict != MonitorVerdict::Ok {
        return Err(shieldmt_core::Error::Internal(format!(
            "shielded trace fails the monitor: {verdict}"
        ))
        .into());
    }

    let run_report = RunReport::new(&records, &phases, verdict);
    if settings.json {
        println!("{}", serde_json::to_string(&run_report)?);
    } else if out.is_some() {
        print!("{}", run_report.render_text());
    } else {
        eprint!("{}", run_report.render_text());
    }
    Ok(0)
}

fn joint(x: &Valuation, y: &Valuation) -> Valuation {
    let mut v = x.clone();
    v.extend(y.iter().map(|(k, val)| (k.clone(), *val)));
    v
}

fn cmd_monitor(spec_path: &Path, trace_path: &Path, settings: &Settings) -> Result<u8> {
    let spec = load_spec(spec_path)?;
    let text = std::fs::read_to_string(trace_path)
        .with_context(|| format!("reading trace {}", trace_path.display()))?;
    let mut joints = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        // Shield step records carry the joint valuation split into x/y_out;
        // otherwise a line is a flat valuation of all declared variables.
        let v = match serde_json::from_str::<StepRecord>(line) {
            Ok(r) => joint(&r.x, &r.y_out),
            Err(_) => serde_json::from_str::<Valuation>(line).with_context(|| {
                format!("{}:{}: expected a step record or an object of integers", trace_path.display(), ln + 1)
            })?,
        };
        joints.push(v);
    }
    let verdict = spec.monitor_prefix(&joints).map_err(shieldmt_core::Error::Eval)?;
    if settings.json {
        println!("{}", serde_json::json!({ "steps": joints.len(), "verdict": verdict }));
    } else {
        println!("{verdict}");
    }
    Ok(if verdict == MonitorVerdict::Ok { 0 } else { 1 })
}

fn cmd_reactions(
    spec_path: &Path,
    kind: TableOpt,
    check: Option<CheckOpt>,
    settings: &Settings,
) -> Result<u8> {
    let spec = load_spec(spec_path)?;
    let table = compute_table(&spec, kind, settings)?;
    let strict = match check {
        Some(CheckOpt::Strict) => {
            Some(check_strict_covering(&spec, &table.reactions, &settings.abstraction_opts())?)
        }
        None => None,
    };
    if settings.json {
        let mut value = serde_json::to_value(&table)?;
        if let Some(s) = strict {
            value["strict_covering"] = serde_json::json!(s);
        }
        println!("{value}");
    } else {
        for (i, lit) in table.literals.iter().enumerate() {
            println!("s{i} := {lit}");
        }
        for (k, r) in table.reactions.iter().enumerate() {
            let choices =
                r.choices.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ");
            println!("{} = {{ {choices} }}", ReactionTable::name(k));
        }
        if let Some(s) = strict {
            println!("strict-covering: {s}");
        }
    }
    Ok(if strict == Some(false) { 3 } else { 0 })
}
