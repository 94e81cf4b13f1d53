use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use popnet_core::bounds::{compute_bounds_with, BoundsOptions, LowerBoundOptions};
use popnet_core::model::{is_nash_with, nash_gap_with};
use popnet_core::scenarios::{generate, scenario, scenario_names, Family};
use popnet_core::{
    simulate, BoundsError, DynamicsError, DynamicsKind, Instance, InstanceError, IntegratorConfig,
    Trajectory,
};
use rayon::prelude::*;
use serde_json::json;

#[derive(Parser)]
#[command(name = "popnet", version, about = "Population dynamics on choice networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate SSD, NBRD and/or NRPM and write trajectories plus a summary.
    Simulate(SimulateArgs),
    /// Reduce, partition and bound the steady-state social utility.
    Bounds(BoundsArgs),
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Instance JSON file.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Bundled scenario name (see `popnet scenarios`).
    #[arg(long)]
    scenario: Option<String>,
}

impl Source {
    fn load(&self) -> Result<(Instance, String), Failure> {
        match (&self.instance, &self.scenario) {
            (Some(path), _) => Ok((Instance::load(path)?, path.display().to_string())),
            (None, Some(name)) => Ok((scenario(name)?, format!("scenario:{name}"))),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Clone, Copy)]
enum Selection {
    All,
    One(DynamicsKind),
}

impl Selection {
    fn kinds(self) -> Vec<DynamicsKind> {
        match self {
            Selection::All => DynamicsKind::ALL.to_vec(),
            Selection::One(k) => vec![k],
        }
    }
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    if s == "all" {
        Ok(Selection::All)
    } else {
        s.parse().map(Selection::One)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    /// ssd, nbrd, nrpm or all.
    #[arg(long, default_value = "all", value_parser = parse_selection)]
    dynamics: Selection,
    #[arg(long, default_value_t = 1e-2)]
    step: f64,
    #[arg(long, default_value_t = 1e4)]
    tmax: f64,
    /// Velocity sup-norm counted as stationary.
    #[arg(long, default_value_t = 1e-8)]
    eq_tol: f64,
    /// Keep every k-th step in the trajectory CSV.
    #[arg(long, default_value_t = 10)]
    record_every: usize,
    /// Tolerance of the Nash verdict in the summary.
    #[arg(long, default_value_t = 1e-4)]
    nash_tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    out: PathBuf,
    /// Largest number of constraint subsets the exact lower bound may visit.
    #[arg(long, default_value_t = LowerBoundOptions::default().budget)]
    enum_budget: u128,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    nodes: u64,
    /// random, chain or qch.
    #[arg(long, default_value = "random")]
    family: Family,
    #[arg(long)]
    out: PathBuf,
}

/// Exit 2 for bad input, 3 for numerical failures.
enum Failure {
    Input(anyhow::Error),
    Numeric(anyhow::Error),
}

impl From<InstanceError> for Failure {
    fn from(e: InstanceError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::NonConvergence { .. } | DynamicsError::IntegrationDiverged { .. } => {
                Failure::Numeric(e.into())
            }
            _ => Failure::Input(e.into()),
        }
    }
}

impl From<BoundsError> for Failure {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Dynamics(d) => d.into(),
            other => Failure::Numeric(other.into()),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Input)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::Input)
}

fn write_trajectory(path: &Path, tr: &Trajectory) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = tr.steady_state.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.push("U".to_string());
    w.write_record(&header)?;
    for ((t, x), u) in tr.times.iter().zip(&tr.states).zip(&tr.utilities) {
        let row = std::iter::once(*t).chain(x.iter().copied()).chain(std::iter::once(*u));
        w.write_record(row.map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let (inst, label) = args.source.load()?;
    if !(args.nash_tol.is_finite() && args.nash_tol > 0.0) {
        return Err(Failure::Input(anyhow!("--nash-tol must be positive")));
    }
    let config = IntegratorConfig {
        step: args.step,
        t_max: args.tmax,
        eq_tol: args.eq_tol,
        record_every: args.record_every,
        ..IntegratorConfig::default()
    };
    let flow = inst.flow();
    let results: Vec<_> = args
        .dynamics
        .kinds()
        .into_par_iter()
        .map(|k| (k, simulate(k, &inst.x0, &flow, &inst.payoffs, config)))
        .collect();

    create_dir(&args.out)?;
    // a node still draining towards a neighbour better by nash_tol holds
    // less than eq_tol / nash_tol
    let support = args.eq_tol / args.nash_tol;
    let mut runs = Vec::new();
    for (kind, result) in results {
        let tr = result.map_err(|e| {
            let f: Failure = e.into();
            match f {
                Failure::Input(e) => Failure::Input(e.context(format!("{kind}"))),
                Failure::Numeric(e) => Failure::Numeric(e.context(format!("{kind}"))),
            }
        })?;
        let csv_path = args.out.join(format!("trajectory_{kind}.csv"));
        write_trajectory(&csv_path, &tr)
            .with_context(|| format!("writing {}", csv_path.display()))
            .map_err(Failure::Input)?;
        let steady = tr.steady_state();
        let gap = nash_gap_with(&steady, &inst.graph, &inst.payoffs, support);
        runs.push(json!({
            "dynamics": kind,
            "trajectory": csv_path.file_name().map(|f| f.to_string_lossy().into_owned()),
            "converged": tr.converged,
            "final_time": tr.final_time,
            "steady_state": tr.steady_state,
            "utility": tr.final_utility,
            "is_nash": is_nash_with(&steady, &inst.graph, &inst.payoffs, args.nash_tol, support),
            "nash_gap": if gap.is_finite() { json!(gap) } else { json!(null) },
            "diagnostics": tr.diagnostics,
        }));
        println!(
            "{kind}: U = {:.6}, converged = {} at t = {:.2}",
            tr.final_utility, tr.converged, tr.final_time
        );
    }
    let summary = json!({
        "instance": label,
        "nodes": inst.node_count(),
        "rho": inst.x0.rho(),
        "config": config,
        "nash_tol": args.nash_tol,
        "nash_support_epsilon": support,
        "runs": runs,
    });
    write(
        &args.out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), Failure> {
    let (inst, _) = args.source.load()?;
    let opts = BoundsOptions {
        lower: LowerBoundOptions {
            budget: args.enum_budget,
            ..LowerBoundOptions::default()
        },
        ..BoundsOptions::default()
    };
    let report = compute_bounds_with(&inst.graph, &inst.x0, &inst.payoffs, opts)?;
    create_dir(&args.out)?;
    write(
        &args.out.join("bounds.json"),
        &(serde_json::to_string_pretty(&report.to_json()).expect("report serializes") + "\n"),
    )?;
    write(&args.out.join("icrg.dot"), &report.icrg.to_dot())?;
    write(&args.out.join("partition.dot"), &report.partition.to_dot(&report.icrg))?;
    println!("u_min = {:.6}, u_max = {:.6}", report.u_min, report.u_max);
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), Failure> {
    let inst = generate(args.seed, args.nodes as usize, args.family);
    inst.save(&args.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Scenarios => {
            for name in scenario_names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
    }
}
