//! Command-line front end. `procure <command> [flags]`; results go to stdout
//! (or `--out`), diagnostics to stderr.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::backtest::{
    compare_strategies, compute_hedges, hedges_from_choices, ingested_hedges, load_dataset, run_backtest,
    write_ledger_csv, BacktestReport, DataSource, HedgeSearch, Strategy,
};
use crate::error::{Error, Result};
use crate::exec::{with_threads, Execution};
use crate::expectation::{expected_total_with, histogram, monte_carlo, sample_costs, C3Method, Histogram, McEstimate};
use crate::optimizer::{optimal_parameters_with, ExpectedPrices, GridSpec, SearchOptions, SurfaceReport};
use crate::scenario_lab::{
    builtin_scenarios, direction_table, expectation_surface, load_scenarios, run_scenario, variance_surface,
    DirectionRow, RunOptions, ScenarioConfig, ScenarioResult, DEFAULT_MC_N,
};

#[derive(Debug, Parser)]
#[command(name = "procure", version, about = "Hedge optimisation for day-ahead / intra-day electricity procurement")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Random seed for Monte Carlo runs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo draws per evaluation.
    #[arg(long = "mc-n", global = true)]
    pub mc_n: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expected cost at one hedge pair, by quadrature.
    Expect(ExpectArgs),
    /// Monte Carlo mean and variance of the realized cost at one hedge pair.
    Simulate(SimulateArgs),
    /// Hedge pair minimising expected cost on a grid.
    Optimize(OptimizeArgs),
    /// Expected-cost or variance surface over a grid.
    Surface(SurfaceArgs),
    /// Run the built-in (or file-defined) scenarios.
    Scenarios(ScenariosArgs),
    /// Replay procurement over a dataset.
    Backtest(BacktestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum C3Choice {
    Nested,
    SemiAnalytic,
}

impl From<C3Choice> for C3Method {
    fn from(c: C3Choice) -> Self {
        match c {
            C3Choice::Nested => C3Method::Nested,
            C3Choice::SemiAnalytic => C3Method::SemiAnalytic,
        }
    }
}

/// Demand, error spreads and prices; defaults are the base experiment.
#[derive(Debug, Clone, Args)]
pub struct MarketArgs {
    /// Demand (kWh).
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    pub f: f64,
    /// Std. deviation of the previous-day prediction error.
    #[arg(long, default_value_t = 3f64.sqrt(), allow_negative_numbers = true)]
    pub sigma1: f64,
    /// Std. deviation of the same-day prediction error.
    #[arg(long, default_value_t = 2f64.sqrt(), allow_negative_numbers = true)]
    pub sigma2: f64,
    /// Day-ahead unit price.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub a: f64,
    /// Intra-day unit price.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub b: f64,
    /// Penalty unit price.
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub c: f64,
}

impl MarketArgs {
    fn scenario(&self, name: &str, grid: GridSpec) -> ScenarioConfig {
        ScenarioConfig {
            name: name.into(),
            f: self.f,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            a: self.a,
            b: self.b,
            c: self.c,
            grid,
            mc_n: DEFAULT_MC_N,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct HedgeArgs {
    /// Day-ahead hedge offset.
    #[arg(long = "A", default_value_t = 0.0, allow_negative_numbers = true)]
    pub a_offset: f64,
    /// Intra-day hedge offset.
    #[arg(long = "B", default_value_t = 0.0, allow_negative_numbers = true)]
    pub b_offset: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = -1.9, allow_negative_numbers = true)]
    pub a_min: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub a_max: f64,
    #[arg(long, default_value_t = -4.9, allow_negative_numbers = true)]
    pub b_min: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub b_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mesh: f64,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.a_min, self.a_max, self.b_min, self.b_max, self.mesh)
    }
}

#[derive(Debug, Args)]
pub struct ExpectArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub hedge: HedgeArgs,
    #[arg(long, value_enum, default_value_t = C3Choice::Nested)]
    pub c3_method: C3Choice,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub hedge: HedgeArgs,
    /// Random stream id.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Also report a histogram of realized costs with this bin width.
    #[arg(long)]
    pub bin_width: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Refine around the grid minimum down to this mesh.
    #[arg(long)]
    pub refine_to: Option<f64>,
    #[arg(long, value_enum, default_value_t = C3Choice::Nested)]
    pub c3_method: C3Choice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SurfaceKind {
    /// Expected cost by quadrature.
    Expectation,
    /// Monte Carlo variance of the realized cost.
    Variance,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t = SurfaceKind::Expectation)]
    pub kind: SurfaceKind,
    #[arg(long, value_enum, default_value_t = C3Choice::Nested)]
    pub c3_method: C3Choice,
}

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    /// JSON file with one scenario or an array of scenarios.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run only the named scenarios (repeatable).
    #[arg(long = "only")]
    pub only: Vec<String>,
    /// Skip the Monte Carlo variance surfaces.
    #[arg(long)]
    pub no_variance: bool,
    /// Write each scenario's surfaces as CSV into this directory.
    #[arg(long)]
    pub surfaces_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = C3Choice::Nested)]
    pub c3_method: C3Choice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyChoice {
    Optimized,
    Naive,
    Perfect,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HedgeSource {
    /// Hedge tables stored with the dataset.
    Paper,
    /// Recompute hedges by expected-cost minimisation.
    Recompute,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Bundled dataset id.
    #[arg(long, conflicts_with = "data", default_value = "paper")]
    pub fixture: String,
    /// Directory of table_<name>.csv files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StrategyChoice::All)]
    pub strategy: StrategyChoice,
    #[arg(long, value_enum, default_value_t = HedgeSource::Paper)]
    pub hedges: HedgeSource,
    /// Strategy the others are compared against.
    #[arg(long, default_value = "naive")]
    pub baseline: String,
}

#[derive(Serialize)]
struct ExpectOutput {
    #[serde(rename = "A")]
    a_offset: f64,
    #[serde(rename = "B")]
    b_offset: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    total: f64,
}

#[derive(Serialize)]
struct SimulateOutput {
    #[serde(rename = "A")]
    a_offset: f64,
    #[serde(rename = "B")]
    b_offset: f64,
    #[serde(flatten)]
    estimate: McEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<Histogram>,
}

#[derive(Serialize)]
struct OptimizeOutput {
    #[serde(rename = "A")]
    a_offset: f64,
    #[serde(rename = "B")]
    b_offset: f64,
    rule: crate::optimizer::HedgeRule,
    /// Expected cost at the optimum, with `E[g] = f`.
    expected_cost: f64,
}

#[derive(Serialize)]
struct ScenarioSummary {
    name: String,
    e_argmin: [f64; 2],
    e_min: f64,
    v_argmin: Option<[f64; 2]>,
    v_min: Option<f64>,
}

#[derive(Serialize)]
struct ScenariosOutput {
    scenarios: Vec<ScenarioSummary>,
    directions: Option<Vec<DirectionRow>>,
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `stdout` and diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.common.threads {
        Some(n) => with_threads(n, || execute(&cli)),
        None => execute(&cli),
    };
    match result.and_then(|bytes| emit(&cli.common.out, &bytes, stdout)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn emit(out: &Option<PathBuf>, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.clone(), source }),
        None => stdout.write_all(bytes).map_err(|source| Error::Io { path: "<stdout>".into(), source }),
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(value)?;
    s.push(b'\n');
    Ok(s)
}

fn csv_rows(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

fn surface_csv(s: &SurfaceReport) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    Ok(buf)
}

fn execute(cli: &Cli) -> Result<Vec<u8>> {
    let common = &cli.common;
    let exec = Execution::Parallel;
    let seed = common.seed.unwrap_or(0);
    let mc_n = common.mc_n.unwrap_or(DEFAULT_MC_N);
    match &cli.command {
        Command::Expect(args) => {
            let cfg = args.market.scenario("expect", GridSpec::default());
            cfg.validate()?;
            let inputs = cfg.expectation_inputs(args.hedge.a_offset, args.hedge.b_offset)?;
            let e = expected_total_with(&inputs, args.c3_method.into())?;
            let out = ExpectOutput {
                a_offset: args.hedge.a_offset,
                b_offset: args.hedge.b_offset,
                c1: e.c1,
                c2: e.c2,
                c3: e.c3,
                total: e.total,
            };
            match common.format {
                Format::Json => json(&out),
                Format::Csv => csv_rows(
                    &["A", "B", "c1", "c2", "c3", "total"],
                    &[[out.a_offset, out.b_offset, out.c1, out.c2, out.c3, out.total].map(|x| x.to_string()).to_vec()],
                ),
            }
        }
        Command::Simulate(args) => {
            let cfg = args.market.scenario("simulate", GridSpec::default());
            cfg.validate()?;
            let inputs = cfg.mc_inputs(args.hedge.a_offset, args.hedge.b_offset)?;
            let estimate = monte_carlo(&inputs, mc_n, seed, args.stream, exec)?;
            let histogram = match args.bin_width {
                Some(w) => Some(histogram(&sample_costs(&inputs, mc_n, seed, args.stream, exec)?, w)?),
                None => None,
            };
            let out = SimulateOutput { a_offset: args.hedge.a_offset, b_offset: args.hedge.b_offset, estimate, histogram };
            match common.format {
                Format::Json => json(&out),
                Format::Csv => match &out.histogram {
                    Some(h) => csv_rows(
                        &["low", "count", "sum"],
                        &h.bins.iter().map(|b| vec![b.low.to_string(), b.count.to_string(), b.sum.to_string()]).collect::<Vec<_>>(),
                    ),
                    None => csv_rows(
                        &["A", "B", "n", "seed", "stream", "mean", "unbiased_variance", "std_error"],
                        &[vec![
                            out.a_offset.to_string(),
                            out.b_offset.to_string(),
                            estimate.n.to_string(),
                            estimate.seed.to_string(),
                            estimate.stream.to_string(),
                            estimate.mean.to_string(),
                            estimate.unbiased_variance.to_string(),
                            estimate.std_error.to_string(),
                        ]],
                    ),
                },
            }
        }
        Command::Optimize(args) => {
            let grid = args.grid.spec()?;
            let cfg = args.market.scenario("optimize", grid);
            cfg.validate()?;
            let (pg, ph) = (cfg.expectation_inputs(0.0, 0.0)?.pg, cfg.expectation_inputs(0.0, 0.0)?.ph);
            let prices = ExpectedPrices { ea: cfg.a, eb: cfg.b, ec: cfg.c };
            let options = SearchOptions { refine_to: args.refine_to, c3_method: args.c3_method.into() };
            let choice = optimal_parameters_with(prices, &pg, &ph, &grid, options, exec)?;
            let out = OptimizeOutput {
                a_offset: choice.a,
                b_offset: choice.b,
                rule: choice.rule,
                expected_cost: choice.objective + cfg.a * cfg.f,
            };
            match common.format {
                Format::Json => json(&out),
                Format::Csv => csv_rows(
                    &["A", "B", "expected_cost"],
                    &[vec![out.a_offset.to_string(), out.b_offset.to_string(), out.expected_cost.to_string()]],
                ),
            }
        }
        Command::Surface(args) => {
            let cfg = args.market.scenario("surface", args.grid.spec()?);
            let surface = match args.kind {
                SurfaceKind::Expectation => expectation_surface(&cfg, args.c3_method.into(), exec)?,
                SurfaceKind::Variance => variance_surface(&cfg, mc_n, seed, exec)?,
            };
            match common.format {
                Format::Json => json(&surface),
                Format::Csv => surface_csv(&surface),
            }
        }
        Command::Scenarios(args) => scenarios(args, common, exec),
        Command::Backtest(args) => backtest(args, common.format, exec),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn scenarios(args: &ScenariosArgs, common: &CommonArgs, exec: Execution) -> Result<Vec<u8>> {
    let mut configs = match &args.config {
        Some(path) => load_scenarios(path)?,
        None => builtin_scenarios(),
    };
    if !args.only.is_empty() {
        if let Some(name) = args.only.iter().find(|n| !configs.iter().any(|c| &c.name == *n)) {
            return Err(Error::InvalidArgument(format!("unknown scenario '{name}'")));
        }
        configs.retain(|c| args.only.contains(&c.name));
    }
    let options = RunOptions {
        variance: !args.no_variance,
        mc_n: common.mc_n,
        seed: common.seed,
        c3_method: args.c3_method.into(),
    };
    let results: Vec<ScenarioResult> =
        configs.iter().map(|c| run_scenario(c, options, exec)).collect::<Result<_>>()?;
    if let Some(dir) = &args.surfaces_dir {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
        for r in &results {
            write_file(&dir.join(format!("{}_expectation.csv", r.config.name)), &surface_csv(&r.e_surface)?)?;
            if let Some(v) = &r.v_surface {
                write_file(&dir.join(format!("{}_variance.csv", r.config.name)), &surface_csv(v)?)?;
            }
        }
    }
    let summaries: Vec<ScenarioSummary> = results
        .iter()
        .map(|r| ScenarioSummary {
            name: r.config.name.clone(),
            e_argmin: [r.e_surface.argmin.a, r.e_surface.argmin.b],
            e_min: r.e_surface.min_value,
            v_argmin: r.v_surface.as_ref().map(|v| [v.argmin.a, v.argmin.b]),
            v_min: r.v_surface.as_ref().map(|v| v.min_value),
        })
        .collect();
    let directions = direction_table(&results).ok();
    match common.format {
        Format::Json => json(&ScenariosOutput { scenarios: summaries, directions }),
        Format::Csv => {
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            let rows: Vec<Vec<String>> = summaries
                .iter()
                .map(|s| {
                    vec![
                        s.name.clone(),
                        s.e_argmin[0].to_string(),
                        s.e_argmin[1].to_string(),
                        s.e_min.to_string(),
                        opt(s.v_argmin.map(|m| m[0])),
                        opt(s.v_argmin.map(|m| m[1])),
                        opt(s.v_min),
                    ]
                })
                .collect();
            csv_rows(&["name", "e_A", "e_B", "e_min", "v_A", "v_B", "v_min"], &rows)
        }
    }
}

fn backtest(args: &BacktestArgs, format: Format, exec: Execution) -> Result<Vec<u8>> {
    let source = match &args.data {
        Some(dir) => DataSource::Dir(dir.clone()),
        None => DataSource::Bundled(args.fixture.clone()),
    };
    let ds = load_dataset(&source)?;
    let wants_optimized = matches!(args.strategy, StrategyChoice::Optimized | StrategyChoice::All);
    let hedges = if wants_optimized {
        Some(match args.hedges {
            HedgeSource::Paper => ingested_hedges(&ds)?,
            HedgeSource::Recompute => hedges_from_choices(&compute_hedges(&ds, &HedgeSearch::default(), exec)?),
        })
    } else {
        None
    };
    let strategies = match args.strategy {
        StrategyChoice::Naive => vec![Strategy::Naive],
        StrategyChoice::Perfect => vec![Strategy::Perfect],
        StrategyChoice::Optimized => vec![Strategy::Optimized(hedges.unwrap_or_default())],
        StrategyChoice::All => {
            vec![Strategy::Optimized(hedges.unwrap_or_default()), Strategy::Naive, Strategy::Perfect]
        }
    };
    let ledgers = strategies.iter().map(|s| run_backtest(&ds, s)).collect::<Result<Vec<_>>>()?;
    let comparison = if ledgers.len() >= 2 { Some(compare_strategies(&ledgers, &args.baseline)?) } else { None };
    match format {
        Format::Json => {
            let hedges = match (wants_optimized, args.hedges) {
                (false, _) => "none",
                (true, HedgeSource::Paper) => "paper",
                (true, HedgeSource::Recompute) => "recompute",
            };
            json(&BacktestReport { hedges: hedges.into(), ledgers, comparison })
        }
        Format::Csv => {
            let mut buf = Vec::new();
            write_ledger_csv(&ledgers, &mut buf)?;
            Ok(buf)
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    run(std::env::args_os(), &mut stdout, &mut stderr)
}
