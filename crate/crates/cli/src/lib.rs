//! `vrjp` command line: field sampling, Green bundles, process simulation,
//! the verification suite and configured experiments.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error,
//! 3 numeric failure.

mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vrjp::beta::{sample, sample_gamma_half, NuParams};
use vrjp::experiments::{run_experiment, ExperimentConfig};
use vrjp::graph::{wire_restrict, wired_lattice_box, LatticeBox, WeightedGraph, WiredGraph};
use vrjp::harness::{replicate, stream_rng};
use vrjp::processes::{
    quenched_mjp, quenched_rates, simulate_errw, simulate_vrjp, QuenchedRates, Stop, Trajectory,
};
use vrjp::schrodinger::{check_identities, GreenBundle};
use vrjp::verify::{run_criterion, tier_criteria, Status, Tier, VerifyConfig, IDENTITY_TOLERANCE};

pub use manifest::{content_hash, RunManifest};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vrjp", version, about = "Samplers and simulators for the vertex reinforced jump process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Draw the beta field; one CSV row per sample.
    SampleBeta(SampleBetaArgs),
    /// Sample one environment and summarize its Green bundle as JSON.
    Green(GreenArgs),
    /// Simulate a trajectory to CSV.
    Simulate(SimulateArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
    /// Run an experiment described by a TOML file.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct Common {
    /// Graph file: {"n": int, "edges": [[i, j, w], ...]}
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Lattice dimension (used with --radius when no graph file is given)
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    radius: Option<usize>,
    /// Lattice conductance
    #[arg(long = "W", value_name = "W")]
    #[serde(rename = "W")]
    w: Option<f64>,
    /// ERRW initial edge weight
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of samples
    #[arg(long)]
    n: Option<usize>,
    /// Output directory
    #[arg(long, value_name = "DIR", env = "VRJP_OUT_DIR", default_value = "out")]
    #[serde(skip)]
    out: PathBuf,
    /// Worker threads; 0 uses every core, 1 runs sequentially
    #[arg(long)]
    parallelism: Option<usize>,
}

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn parallelism(&self) -> usize {
        self.parallelism.unwrap_or(0)
    }

    fn lattice_w(&self) -> f64 {
        self.w.unwrap_or(1.0)
    }
}

#[derive(Debug, Args, Serialize)]
struct SampleBetaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Args, Serialize)]
struct GreenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Retained vertices of the graph file, comma separated
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<usize>>,
    /// Root vertex (local index) for the identity report
    #[arg(long)]
    root: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Process {
    Vrjp,
    Errw,
    Quenched,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    process: Process,
    /// Process-time horizon (vrjp only)
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of jumps
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    start: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Reduced sample sizes (default)
    #[arg(long, conflicts_with = "full")]
    quick: bool,
    /// Every criterion at full sample size
    #[arg(long)]
    full: bool,
}

#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

fn is_numeric(e: &vrjp::Error) -> bool {
    use vrjp::Error as E;
    match e {
        E::Factorization { .. } | E::Numeric { .. } | E::Conditioning(_) | E::Coverage(_) | E::TestInput(_) => true,
        E::Replica { source, .. } => is_numeric(source),
        _ => false,
    }
}

impl From<vrjp::Error> for CliError {
    fn from(e: vrjp::Error) -> Self {
        if is_numeric(&e) {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("cannot write CSV: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// What a subcommand produced.
struct Outcome {
    outputs: Vec<PathBuf>,
    inputs: Vec<Vec<u8>>,
    seed: u64,
    code: i32,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let started = Utc::now();
    let common = common(&cli.command).clone();
    let result = std::fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", common.out.display())))
        .and_then(|_| execute(&cli.command, &common.out));
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.code();
        }
    };
    let config = serde_json::to_value(&cli.command).expect("arguments serialize");
    let manifest = RunManifest {
        tool: "vrjp",
        version: env!("CARGO_PKG_VERSION"),
        command: command_name(&cli.command).to_string(),
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        input_hash: content_hash(&without_paths(&config), &outcome.inputs),
        config,
        seed: outcome.seed,
        started: manifest::timestamp(started),
        finished: manifest::timestamp(Utc::now()),
        outputs: outcome.outputs,
    };
    if let Err(e) = manifest.write(&common.out) {
        eprintln!("error: cannot write manifest: {e}");
        return EXIT_USAGE;
    }
    outcome.code
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::SampleBeta(a) => &a.common,
        Command::Green(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Verify(a) => &a.common,
        Command::Experiment(a) => &a.common,
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::SampleBeta(_) => "sample-beta",
        Command::Green(_) => "green",
        Command::Simulate(_) => "simulate",
        Command::Verify(_) => "verify",
        Command::Experiment(_) => "experiment",
    }
}

// input files enter the hash by content, not by path
fn without_paths(config: &serde_json::Value) -> serde_json::Value {
    let mut v = config.clone();
    if let Some(obj) = v.as_object_mut() {
        for args in obj.values_mut() {
            if let Some(args) = args.as_object_mut() {
                args.remove("graph");
                args.remove("config");
            }
        }
    }
    v
}

fn execute(cmd: &Command, out: &Path) -> CliResult<Outcome> {
    match cmd {
        Command::SampleBeta(a) => sample_beta(a, out),
        Command::Green(a) => green(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Verify(a) => verify(a, out),
        Command::Experiment(a) => experiment(a, out),
    }
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

enum Source {
    File { graph: WeightedGraph, bytes: Vec<u8> },
    Lattice { dim: usize, radius: usize, w: f64 },
}

fn source(c: &Common) -> CliResult<Source> {
    if let Some(path) = &c.graph {
        let bytes = read_input(path)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))?;
        let graph = WeightedGraph::from_json(&text)?;
        return Ok(Source::File { graph, bytes });
    }
    match (c.dim, c.radius) {
        (Some(dim), Some(radius)) => Ok(Source::Lattice { dim, radius, w: c.lattice_w() }),
        _ => Err(CliError::Usage("pass --graph FILE, or --dim and --radius for a lattice box".into())),
    }
}

fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn sample_beta(args: &SampleBetaArgs, out: &Path) -> CliResult<Outcome> {
    let c = &args.common;
    let (params, inputs) = match source(c)? {
        Source::File { graph, bytes } => {
            (NuParams::from_graph(&graph, vec![c.eta.unwrap_or(0.0); graph.vertex_count()])?, vec![bytes])
        }
        Source::Lattice { dim, radius, w } => {
            if c.eta.is_some() {
                return Err(CliError::Usage("--eta applies to graph files; a lattice box uses its wired boundary".into()));
            }
            let (_, wired) = wired_lattice_box(dim, radius, w)?;
            (NuParams::wired_marginal(&wired)?, vec![])
        }
    };
    let rows = replicate(c.n.unwrap_or(1000), c.seed(), "sample-beta", c.parallelism(), |_, rng| {
        Ok(sample(&params, rng)?.beta)
    })?;
    let path = out.join("beta.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record((0..params.n()).map(|i| format!("beta_{i}")))?;
    for row in &rows {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Outcome { outputs: vec![path], inputs, seed: c.seed(), code: 0 })
}

fn green(args: &GreenArgs, out: &Path) -> CliResult<Outcome> {
    let c = &args.common;
    let (wired, default_root, inputs): (WiredGraph, usize, _) = match source(c)? {
        Source::File { graph, bytes } => {
            let subset = args
                .subset
                .as_ref()
                .ok_or_else(|| CliError::Usage("green on a graph file needs --subset".into()))?;
            (wire_restrict(&graph, subset)?, 0, vec![bytes])
        }
        Source::Lattice { dim, radius, w } => {
            let (geometry, wired) = wired_lattice_box(dim, radius, w)?;
            (wired, geometry.center_vertex(), vec![])
        }
    };
    let root = args.root.unwrap_or(default_root);
    if root >= wired.delta {
        return Err(CliError::Usage(format!("root {root} is not a retained vertex")));
    }
    let mut rng = stream_rng(c.seed(), "green", 0);
    let beta = sample(&NuParams::wired_marginal(&wired)?, &mut rng)?.beta;
    let gamma = sample_gamma_half(&mut rng);
    let bundle = GreenBundle::new(&wired, &beta, gamma)?;
    let report = check_identities(&bundle, root)?;
    let n = bundle.n();
    let summary = serde_json::json!({
        "n": n,
        "root": root,
        "origin": wired.origin,
        "gamma": gamma,
        "beta": beta,
        "psi": bundle.psi,
        "hat_g_diagonal": (0..n).map(|i| bundle.hat_g_column(i)[i]).collect::<Vec<_>>(),
        "residuals": report,
        "max_residual": report.max(),
    });
    let path = out.join("green.json");
    write_json(&path, &summary)?;
    let code = if report.max() <= IDENTITY_TOLERANCE {
        0
    } else {
        eprintln!("identity residuals above {IDENTITY_TOLERANCE:e}: {report:?}");
        EXIT_NUMERIC
    };
    Ok(Outcome { outputs: vec![path], inputs, seed: c.seed(), code })
}

fn simulate(args: &SimulateArgs, out: &Path) -> CliResult<Outcome> {
    let c = &args.common;
    let seed = c.seed();
    let steps = || {
        if args.horizon.is_some() {
            return Err(CliError::Usage("--horizon applies to --process vrjp only; use --steps".into()));
        }
        args.steps.ok_or_else(|| CliError::Usage("--steps is required".into()))
    };
    let (traj, inputs) = match args.process {
        Process::Vrjp | Process::Errw => {
            let (g, default_start, inputs) = match source(c)? {
                Source::File { graph, bytes } => (graph, 0, vec![bytes]),
                Source::Lattice { dim, radius, w } => {
                    let geometry = LatticeBox::centered(dim, radius)?;
                    (geometry.graph(w)?, geometry.center_vertex(), vec![])
                }
            };
            let start = args.start.unwrap_or(default_start);
            let traj = if let Process::Vrjp = args.process {
                let stop = match (args.horizon, args.steps) {
                    (Some(h), None) => Stop::Horizon(h),
                    (None, Some(k)) => Stop::Jumps(k),
                    _ => return Err(CliError::Usage("pass exactly one of --horizon and --steps".into())),
                };
                simulate_vrjp(&g, start, stop, &mut stream_rng(seed, "simulate/vrjp", 0))?
            } else {
                let a: Vec<f64> = match c.a {
                    Some(a) => vec![a; g.edge_count()],
                    None => g.edges().iter().map(|e| e.w).collect(),
                };
                simulate_errw(&g, &a, start, steps()?, &mut stream_rng(seed, "simulate/errw", 0))?
            };
            (traj, inputs)
        }
        Process::Quenched => {
            let steps = steps()?;
            let mut env_rng = stream_rng(seed, "simulate/environment", 0);
            let (rates, start, inputs): (QuenchedRates, usize, _) = match source(c)? {
                Source::File { graph, bytes } => {
                    let start = args.start.unwrap_or(0);
                    if start >= graph.vertex_count() {
                        return Err(CliError::Usage(format!("start vertex {start} out of range")));
                    }
                    let params = NuParams::from_graph(&graph, vec![0.0; graph.vertex_count()])?;
                    let col = sample(&params, &mut env_rng)?.green_column(start);
                    (QuenchedRates::from_green_column(&graph, &col, start)?, start, vec![bytes])
                }
                Source::Lattice { dim, radius, w } => {
                    let (geometry, wired) = wired_lattice_box(dim, radius, w)?;
                    let start = args.start.unwrap_or(geometry.center_vertex());
                    if start >= wired.delta {
                        return Err(CliError::Usage(format!("start vertex {start} out of range")));
                    }
                    let beta = sample(&NuParams::wired_marginal(&wired)?, &mut env_rng)?.beta;
                    let bundle = GreenBundle::new(&wired, &beta, sample_gamma_half(&mut env_rng))?;
                    (quenched_rates(&bundle, start)?, start, vec![])
                }
            };
            let traj = quenched_mjp(&rates, start, steps, true, &mut stream_rng(seed, "simulate/chain", 0))?;
            (traj, inputs)
        }
    };
    let path = out.join("trajectory.csv");
    write_trajectory(&path, &traj)?;
    Ok(Outcome { outputs: vec![path], inputs, seed: c.seed(), code: 0 })
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["step", "vertex", "entry_time"])?;
    for (k, v) in traj.vertices.iter().enumerate() {
        let t = traj.entry_times.as_ref().map_or(String::new(), |t| t[k].to_string());
        w.write_record([k.to_string(), v.to_string(), t])?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))
}

fn verify(args: &VerifyArgs, out: &Path) -> CliResult<Outcome> {
    let c = &args.common;
    let tier = if args.full { Tier::Full } else { Tier::Quick };
    let cfg = VerifyConfig { parallelism: c.parallelism(), ..VerifyConfig::new(c.seed(), tier) };
    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for id in tier_criteria(tier) {
        match run_criterion(id, &cfg) {
            Ok(o) => {
                println!("{}", o.line());
                outcomes.push(o);
            }
            Err(e) => {
                println!("[ERROR] C{id:02}: {e}");
                errors.push(serde_json::json!({ "id": id, "error": e.to_string() }));
            }
        }
    }
    let csv_path = out.join("verify.csv");
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    w.write_record(["id", "name", "status", "detail"])?;
    for o in &outcomes {
        let status = serde_json::to_value(o.status).expect("status serializes");
        w.write_record([o.id.to_string(), o.name.to_string(), status.as_str().unwrap_or("").to_string(), o.detail.clone()])?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    let json_path = out.join("verify.json");
    write_json(&json_path, &serde_json::json!({ "tier": tier, "seed": c.seed(), "outcomes": outcomes, "errors": errors }))?;
    let failed = outcomes.iter().filter(|o| o.status == Status::Fail).count();
    println!("{} passed, {} failed, {} errors", outcomes.len() - failed, failed, errors.len());
    let code = if !errors.is_empty() {
        EXIT_NUMERIC
    } else if failed > 0 {
        EXIT_FAILURE
    } else {
        0
    };
    Ok(Outcome { outputs: vec![csv_path, json_path], inputs: vec![], seed: c.seed(), code })
}

fn experiment(args: &ExperimentArgs, out: &Path) -> CliResult<Outcome> {
    let c = &args.common;
    let bytes = read_input(&args.config)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Usage(format!("{} is not UTF-8", args.config.display())))?;
    let mut cfg = ExperimentConfig::from_toml_str(&text)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(p) = c.parallelism {
        cfg.parallelism = p;
    }
    let mut inputs = vec![bytes];
    if let Some(file) = &cfg.graph.file {
        // graph paths are relative to the config file
        let resolved = args.config.parent().map_or(file.clone(), |dir| dir.join(file));
        inputs.push(read_input(&resolved)?);
        cfg.graph.file = Some(resolved);
    }
    let result = run_experiment(&cfg)?;
    let csv_path = out.join("results.csv");
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    for row in &result.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    let json_path = out.join("summary.json");
    write_json(&json_path, &serde_json::json!({ "config": cfg, "summary": result.summary }))?;
    for row in &result.rows {
        println!("{:<28} {:>12.6} ± {:<10.6} n={} [{}]", row.name, row.mean, row.stderr, row.n, row.flag);
    }
    Ok(Outcome { outputs: vec![csv_path, json_path], inputs, seed: cfg.seed, code: 0 })
}
