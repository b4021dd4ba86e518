use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use trispin::output::{render_csv, write_outputs};
use trispin::scenario::{run_scenario, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(
    name = "trispin",
    version,
    about = "Synchronous three-nucleus gate simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operating fields and derived frequencies for a range of revolution counts.
    Constants(RunArgs),
    /// Relative fidelity of the synchronous X gate versus time.
    GateX(RunArgs),
    /// Relative fidelity of the pulse-free Z gate versus time.
    GateZ(RunArgs),
    /// Relative fidelity of the synchronous Hadamard versus time.
    Hadamard(RunArgs),
    /// Heralded GHZ-state fidelities versus time.
    Ghz(RunArgs),
    /// Dephasing and quadrupole fidelity deviations.
    Dephasing(RunArgs),
    /// Maximum fidelity over a grid of revolution counts and harmonics.
    Sweep(RunArgs),
    /// Render a CSV produced by this tool as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON scenario file; its `kind` must match the command.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Integration step in ns.
    #[arg(long)]
    step: Option<f64>,
    /// Also write SVG figures.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// CSV file to render.
    input: PathBuf,
    /// Output SVG path; defaults to the input with an `.svg` extension.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Value column to plot.
    #[arg(long)]
    column: Option<String>,
}

fn load_config(kind: ScenarioKind, args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ScenarioConfig::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            anyhow::ensure!(
                cfg.kind == kind,
                "config kind `{}` does not match command `{}`",
                cfg.kind.name(),
                kind.name()
            );
            cfg
        }
        None => ScenarioConfig::new(kind),
    };
    if let Some(s) = args.seed {
        cfg.output.seed = Some(s);
    }
    if let Some(j) = args.jobs {
        cfg.output.jobs = Some(j);
    }
    if let Some(h) = args.step {
        cfg.integrator.step = Some(h);
    }
    if args.svg {
        cfg.output.svg = Some(true);
    }
    Ok(cfg.resolve()?)
}

fn run(kind: ScenarioKind, args: &RunArgs) -> Result<ExitCode> {
    let cfg = load_config(kind, args)?;
    let data = run_scenario(&cfg)?;
    let paths = write_outputs(&cfg, &data, &args.out, cfg.output.svg.unwrap_or(false))?;
    for p in &paths {
        println!("{}", p.display());
    }
    if !data.converged() {
        eprintln!("error: integration did not reach the requested tolerance; outputs were written");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn render(args: &RenderArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let svg = render_csv(&text, args.column.as_deref())?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.input.with_extension("svg"));
    fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Constants(a) => run(ScenarioKind::Constants, a),
        Command::GateX(a) => run(ScenarioKind::GateX, a),
        Command::GateZ(a) => run(ScenarioKind::GateZ, a),
        Command::Hadamard(a) => run(ScenarioKind::Hadamard, a),
        Command::Ghz(a) => run(ScenarioKind::Ghz, a),
        Command::Dephasing(a) => run(ScenarioKind::Dephasing, a),
        Command::Sweep(a) => run(ScenarioKind::Sweep, a),
        Command::Render(a) => render(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
