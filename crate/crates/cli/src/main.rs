use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pivotal_core::diagnostics::{check_all, clt_experiment, CltConfig, CltMode, DEFAULT_PILOT_REPLICATES};
use pivotal_core::estimation::{estimator_report, ZeroPairs};
use pivotal_core::io::{read_population, read_samples, write_population, write_samples, write_table};
use pivotal_core::model::{anticipated_variance, assumption_report, generate_y, AnticipatedVariance, Kernel, ModelConfig};
use pivotal_core::oracle::{enumerate, exact_design_variance, EnumerateOptions, EnumerationDump, DEFAULT_CAP};
use pivotal_core::sampler::{draw_many, SampleDraw};
use pivotal_core::{decompose, rng, Error, JointInclusion, PopulationSpec};

#[derive(Parser)]
#[command(name = "pivotal", version, about = "Ordered pivotal sampling and Horvitz-Thompson estimation")]
struct Cli {
    /// Worker threads for Monte Carlo work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples from a population CSV (`id,pi[,y]`).
    Sample(SampleArgs),
    /// Enumerate the exact sampling design of a small population.
    Enumerate(EnumerateArgs),
    /// Horvitz-Thompson estimate, variance estimates and interval per drawn sample.
    Estimate(EstimateArgs),
    /// Generate y values from the superpopulation model and append them.
    Gen(GenArgs),
    /// Report the assumption statistics of a population.
    Assumptions(AssumptionsArgs),
    /// Evaluate every exact bound and identity on a small population.
    CheckBounds(CheckBoundsArgs),
    /// Monte Carlo experiment on the standardized HT statistic.
    SimulateClt(SimulateArgs),
}

#[derive(Args)]
struct Output {
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    out: Output,
    #[arg(long, default_value_t = 1)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the stratum-by-stratum decisions as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    out: Output,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Args)]
struct EstimateArgs {
    /// Population with a `y` column.
    #[arg(long, short)]
    input: PathBuf,
    /// Sample CSV (`draw_id,unit_id`).
    #[arg(long)]
    sample: PathBuf,
    /// JSON with joint inclusion probabilities under `pi2` (as written by `enumerate`).
    #[arg(long)]
    joint: Option<PathBuf>,
    /// Skip sampled pairs with zero joint probability instead of failing.
    #[arg(long)]
    drop_zero_pairs: bool,
    /// Per-side level of the interval.
    #[arg(long, default_value_t = 0.025)]
    alpha: f64,
    #[command(flatten)]
    out: Output,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// `iid`, `ar1:RHO` or `exp:RANGE`.
    #[arg(long, default_value = "iid")]
    kernel: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn config(&self) -> pivotal_core::Result<ModelConfig> {
        ModelConfig::new(self.beta, self.sigma, self.kernel.parse::<Kernel>()?, self.seed)
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    out: Output,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct AssumptionsArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    out: Output,
    /// Include the model statistics for this error law.
    #[arg(long)]
    with_model: bool,
    #[command(flatten)]
    model: ModelArgs,
    /// JSON with joint inclusion probabilities under `pi2`; computed exactly
    /// for small populations when omitted.
    #[arg(long)]
    joint: Option<PathBuf>,
}

#[derive(Args)]
struct CheckBoundsArgs {
    /// Population with a `y` column.
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    out: Output,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Design,
    Model,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "design")]
    mode: Mode,
    /// Population size for an equal-probability population.
    #[arg(long = "N", default_value_t = 10_000)]
    big_n: usize,
    /// Sample size.
    #[arg(long = "n", default_value_t = 500)]
    n: usize,
    /// Replicates.
    #[arg(long = "R", default_value_t = 2_000)]
    replicates: usize,
    #[arg(long, default_value_t = 0.025)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_PILOT_REPLICATES)]
    pilot: usize,
    /// Population CSV overriding `--N`/`--n`.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: Output,
    /// CSV of per-replicate standardized statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
}

/// Exit status 1: bad input; 2: an internal check failed.
enum Failure {
    Validation(anyhow::Error),
    Check(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::CrossCheck(_)) => Failure::Check(e),
            _ => Failure::Validation(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
fn write_atomic(path: Option<&Path>, fill: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> CliResult {
    let Some(path) = path else {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        fill(&mut lock)?;
        lock.flush().context("writing to stdout")?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush().context("flushing output")?;
    tmp.persist(path).map_err(|e| anyhow!(e.error)).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn load_population(path: &Path) -> CliResult<PopulationSpec> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_population(BufReader::new(file)).with_context(|| format!("reading {}", path.display())).map_err(Into::into)
}

#[derive(serde::Deserialize)]
struct JointFile {
    pi2: JointInclusion,
}

fn load_joint(path: &Path) -> CliResult<JointInclusion> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let parsed: JointFile =
        serde_json::from_reader(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    Ok(parsed.pi2)
}

fn sample(args: SampleArgs) -> CliResult {
    let pop = load_population(&args.input)?;
    let dec = decompose(&pop);
    let draws: Vec<SampleDraw> = draw_many(&dec, args.draws, args.seed);
    if let Some(trace) = &args.trace {
        write_json(Some(trace), &draws)?;
    }
    write_atomic(args.out.output.as_deref(), |w| Ok(write_samples(w, pop.ids(), &draws)?))
}

fn enumerate_cmd(args: EnumerateArgs) -> CliResult {
    let pop = load_population(&args.input)?;
    let dec = decompose(&pop);
    let dist = enumerate(&dec, EnumerateOptions { cap: args.cap, keep_traces: false })?;
    let variance = pop.y().map(|y| exact_design_variance(&dist, y)).transpose()?;
    write_json(args.out.output.as_deref(), &EnumerationDump::new(pop.ids(), &dist, variance))
}

fn estimate(args: EstimateArgs) -> CliResult {
    let pop = load_population(&args.input)?;
    let y = pop.require_y()?;
    let file = File::open(&args.sample).with_context(|| format!("opening {}", args.sample.display()))?;
    let samples = read_samples(BufReader::new(file), &pop)?;
    let joint = args.joint.as_deref().map(load_joint).transpose()?;
    let zero_pairs = if args.drop_zero_pairs { ZeroPairs::Drop } else { ZeroPairs::Reject };
    let reports = samples
        .iter()
        .map(|s| estimator_report(s, y, pop.pi(), joint.as_ref(), args.alpha, zero_pairs))
        .collect::<pivotal_core::Result<Vec<_>>>()?;
    write_json(args.out.output.as_deref(), &reports)
}

fn gen(args: GenArgs) -> CliResult {
    let pop = load_population(&args.input)?;
    let config = args.model.config()?;
    let y = generate_y(&config, pop.pi(), &mut rng::stream(config.seed, rng::domain::FIXED_Y, 0))?;
    let pop = pop.with_y(y)?;
    write_atomic(args.out.output.as_deref(), |w| Ok(write_population(w, &pop)?))
}

#[derive(Serialize)]
struct AssumptionsOutput {
    #[serde(flatten)]
    report: pivotal_core::AssumptionReport,
    anticipated_variance: Option<AnticipatedVariance>,
}

fn assumptions(args: AssumptionsArgs) -> CliResult {
    let pop = load_population(&args.input)?;
    let dec = decompose(&pop);
    let model = if args.with_model { Some(args.model.config()?) } else { None };
    let mut joint = args.joint.as_deref().map(load_joint).transpose()?;
    let correlated = model.is_some_and(|m| !m.kernel.is_iid());
    if joint.is_none() && correlated && pop.len() <= DEFAULT_CAP {
        joint = Some(enumerate(&dec, EnumerateOptions { cap: DEFAULT_CAP, keep_traces: false })?.joint().clone());
    }
    let report = assumption_report(&dec, pop.y(), model.as_ref(), joint.as_ref())?;
    let anticipated = match &model {
        Some(m) if !correlated || joint.is_some() => Some(anticipated_variance(m, pop.pi(), joint.as_ref())?),
        _ => None,
    };
    write_json(args.out.output.as_deref(), &AssumptionsOutput { report, anticipated_variance: anticipated })
}

fn check_bounds(args: CheckBoundsArgs) -> CliResult {
    let pop = load_population(&args.input)?;
    let y = pop.require_y()?;
    pop.require_no_certainty_units()?;
    let dec = decompose(&pop);
    let dist = enumerate(&dec, EnumerateOptions { cap: args.cap, keep_traces: true })?;
    let checks = check_all(&dec, y, &dist)?;
    write_json(args.out.output.as_deref(), &checks)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(anyhow!("bound checks violated: {}", failed.join(", "))))
    }
}

fn simulate(args: SimulateArgs) -> CliResult {
    let model = args.model.config()?;
    let mode = match args.mode {
        Mode::Design => CltMode::Design,
        Mode::Model => CltMode::Model,
    };
    let mut config = CltConfig::new(mode, args.big_n, args.n, args.replicates, model);
    config.alpha = args.alpha;
    config.pilot_replicates = args.pilot;
    config.population = args.input.as_deref().map(load_population).transpose()?;
    let (report, reps) = clt_experiment(&config)?;
    if let Some(stats) = &args.stats {
        write_atomic(Some(stats), |w| {
            let rows = reps.iter().enumerate().map(|(r, rep)| {
                vec![
                    r.to_string(),
                    rep.statistic.to_string(),
                    rep.ht.to_string(),
                    rep.total.to_string(),
                    (rep.covered as u8).to_string(),
                ]
            });
            Ok(write_table(w, &["replicate", "statistic", "ht", "total", "covered"], rows)?)
        })?;
    }
    write_json(args.out.output.as_deref(), &report)
}

fn run(cli: Cli) -> CliResult {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Validation(anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Sample(a) => sample(a),
        Command::Enumerate(a) => enumerate_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Gen(a) => gen(a),
        Command::Assumptions(a) => assumptions(a),
        Command::CheckBounds(a) => check_bounds(a),
        Command::SimulateClt(a) => simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Check(e)) => {
            eprintln!("check failed: {e:#}");
            ExitCode::from(2)
        }
    }
}
