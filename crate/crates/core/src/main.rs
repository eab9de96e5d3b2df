use std::io::{self, BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sitnet::dsl::{parse_spec, validate_spec, DomainSpec, Severity};
use sitnet::net::{synthesize, PetriNet};
use sitnet::plan::{Goal, Plan};
use sitnet::planner::{self, DEFAULT_MAX_DEPTH};
use sitnet::service::{self, ServiceConfig, DEFAULT_ADDR};
use sitnet::simulator::{check_fix, simulate, Outcome, RepairError, DEFAULT_MAX_ROUNDS};
use sitnet::token::{check_trace, Session, SessionStatus, TokenError, DEFAULT_MAX_FIRINGS};

const EXIT_USAGE: u8 = 2;
const EXIT_NEGATIVE: u8 = 3;
const EXIT_UNREPAIRABLE: u8 = 4;

#[derive(Parser)]
#[command(name = "sitnet", version, about = "Plans, plan repair and Petri nets from situation-calculus specs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Clausal,
    Dot,
    Edges,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Forks,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a spec.
    Parse { spec: PathBuf },
    /// Print plans reaching a goal.
    Plan {
        spec: PathBuf,
        #[arg(long)]
        goal: String,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
        /// Print every alternative instead of the first.
        #[arg(long)]
        all: bool,
    },
    /// Run a plan from the initial state.
    Simulate {
        spec: PathBuf,
        #[arg(long)]
        plan: String,
    },
    /// Repair a plan, printing each correction.
    Fix {
        spec: PathBuf,
        #[arg(long)]
        plan: String,
        #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
        max_rounds: usize,
    },
    /// Synthesize the Petri net.
    Synth {
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "clausal")]
        format: Format,
        #[arg(long, value_enum)]
        report: Option<Report>,
    },
    /// Check label traces against the net.
    Check {
        spec: PathBuf,
        #[arg(long, conflicts_with = "log", required_unless_present = "log")]
        trace: Option<String>,
        /// File with one trace per line.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Walk the net interactively, reading choices from stdin.
    Traverse {
        spec: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_FIRINGS)]
        max_firings: usize,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "SITNET_ADDR", default_value = DEFAULT_ADDR)]
        addr: SocketAddr,
        /// Idle session lifetime in seconds.
        #[arg(long, env = "SITNET_SESSION_TTL", default_value_t = 1800)]
        session_ttl: u64,
        #[arg(long, env = "SITNET_MAX_FIRINGS", default_value_t = DEFAULT_MAX_FIRINGS)]
        max_firings: usize,
    },
    /// Print the spec in canonical clause form.
    Export { spec: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load(path: &Path) -> Result<DomainSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spec(&text).with_context(|| format!("{}", path.display()))
}

fn run(command: Command) -> Result<u8> {
    let mut out = io::stdout().lock();
    match command {
        Command::Parse { spec } => {
            let spec = load(&spec)?;
            let diags = validate_spec(&spec);
            for d in &diags {
                writeln!(out, "{d}")?;
            }
            if diags.iter().any(|d| d.severity == Severity::Error) {
                return Ok(EXIT_USAGE);
            }
            writeln!(out, "ok: {} operations, {} initial facts", spec.operations.len(), spec.initial_facts.len())?;
            Ok(0)
        }
        Command::Plan { spec, goal, max_depth, all } => {
            let spec = load(&spec)?;
            let goal = Goal::parse(&goal).context("goal")?;
            let mut found = false;
            for p in planner::plan(&goal, &spec, max_depth) {
                found = true;
                writeln!(out, "{}", p.plan)?;
                out.flush()?;
                if !all {
                    break;
                }
            }
            Ok(if found { 0 } else { EXIT_NEGATIVE })
        }
        Command::Simulate { spec, plan } => {
            let spec = load(&spec)?;
            let plan = Plan::parse(&plan, &spec).context("plan")?;
            let result = simulate(&plan, &spec);
            match &result.outcome {
                Outcome::Valid => {
                    writeln!(out, "Valid")?;
                    writeln!(out, "{}", result.bound)?;
                    let mut facts: Vec<String> = result.final_state().iter().map(|f| f.to_string()).collect();
                    facts.sort();
                    for f in facts {
                        writeln!(out, "  {f}")?;
                    }
                    Ok(0)
                }
                Outcome::Failed(f) => {
                    writeln!(out, "step {} {}: {}", f.index, f.step, f.reason)?;
                    Ok(EXIT_NEGATIVE)
                }
            }
        }
        Command::Fix { spec, plan, max_rounds } => {
            let spec = load(&spec)?;
            let plan = Plan::parse(&plan, &spec).context("plan")?;
            match check_fix(&plan, &spec, max_rounds) {
                Ok((_, log)) => {
                    write!(out, "{}", log.transcript())?;
                    Ok(0)
                }
                Err(e) => {
                    let log = match &e {
                        RepairError::Unrepairable { log, .. } | RepairError::NonTerminating { log, .. } => log,
                    };
                    let transcript = log.transcript();
                    write!(out, "{}", transcript.strip_suffix("Valid\n").unwrap_or(&transcript))?;
                    writeln!(out, "{e}")?;
                    Ok(EXIT_UNREPAIRABLE)
                }
            }
        }
        Command::Synth { spec, format, report } => {
            let spec = load(&spec)?;
            let net = synthesize(&spec)?;
            let text = match (report, format) {
                (Some(Report::Forks), _) => net.render_forks(),
                (None, Format::Clausal) => net.render_clausal(),
                (None, Format::Dot) => net.render_dot(),
                (None, Format::Edges) => net.render_edges(),
                (None, Format::Json) => net.render_json() + "\n",
            };
            write!(out, "{text}")?;
            for d in &net.diagnostics {
                eprintln!("warning: {d}");
            }
            Ok(0)
        }
        Command::Check { spec, trace, log } => {
            let spec = load(&spec)?;
            let net = synthesize(&spec)?;
            let traces: Vec<String> = match (trace, log) {
                (Some(t), _) => vec![t],
                (None, Some(path)) => std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
                (None, None) => anyhow::bail!("one of --trace or --log is required"),
            };
            let mut all_valid = true;
            for t in &traces {
                let v = check_trace(&net, t);
                all_valid &= v.is_valid();
                if traces.len() == 1 {
                    writeln!(out, "{v}")?;
                } else {
                    writeln!(out, "{t}: {v}")?;
                }
            }
            Ok(if all_valid { 0 } else { EXIT_NEGATIVE })
        }
        Command::Traverse { spec, max_firings } => {
            let spec = load(&spec)?;
            let net = Arc::new(synthesize(&spec)?);
            traverse(net, max_firings, &mut io::stdin().lock(), &mut out, !io::stdin().is_terminal())
        }
        Command::Serve { addr, session_ttl, max_firings } => {
            drop(out);
            let config = ServiceConfig { session_ttl: Duration::from_secs(session_ttl), max_firings };
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            rt.block_on(service::serve(addr, config)).with_context(|| format!("serving on {addr}"))?;
            Ok(0)
        }
        Command::Export { spec } => {
            let spec = load(&spec)?;
            write!(out, "{}", spec.to_text())?;
            Ok(0)
        }
    }
}

fn traverse(net: Arc<PetriNet>, max_firings: usize, input: &mut dyn BufRead, out: &mut dyn Write, echo: bool) -> Result<u8> {
    let mut session = Session::start(net.clone(), max_firings)?;
    writeln!(out, "{}", session.history())?;
    for l in session.advance().chars() {
        writeln!(out, "{l}")?;
    }
    while let SessionStatus::AwaitingChoice { options } = session.status().clone() {
        writeln!(out, "choose one label from:")?;
        for l in &options {
            let name = net.transition(*l).map(|t| t.name.as_str()).unwrap_or("");
            writeln!(out, "{l}:{name}")?;
        }
        write!(out, "my choice: ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            eprintln!("input ended before the trace was complete");
            return Ok(EXIT_USAGE);
        }
        let choice = line.trim();
        if echo {
            writeln!(out, "{choice}")?;
        }
        let mut chars = choice.chars();
        let fired = match (chars.next(), chars.next()) {
            (Some(c), None) => session.choose(c),
            _ => Err(TokenError::InvalidChoice { label: '?', options: options.clone() }),
        };
        match fired {
            Ok(auto) => {
                for l in auto.chars() {
                    writeln!(out, "{l}")?;
                }
            }
            Err(e) => eprintln!("{e}"),
        }
    }
    match session.status() {
        SessionStatus::Completed => {
            writeln!(out)?;
            writeln!(out, "{}", session.history())?;
            writeln!(out)?;
            writeln!(out, "{}", session.plan_text())?;
            Ok(0)
        }
        other => {
            eprintln!("traversal stopped: {other:?} after {}", session.history());
            Ok(EXIT_NEGATIVE)
        }
    }
}
