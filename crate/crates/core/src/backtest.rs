//! Replay of half-hourly procurement over a dataset of actual demands,
//! predictions and market prices.
//!
//! Tables are CSV files named `table_<name>.csv` with header `t,d,value`
//! (`t,value` for the per-period same-day variance). The bundled `paper`
//! fixture covers periods 20..=26 over days 1..=19.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Index;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost_model::{total_cost, CostBreakdown, PriceTriple, ProcurementParams};
use crate::distributions::ErrorModel;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::expectation::C3Method;
use crate::optimizer::{optimal_parameters_with, ExpectedPrices, GridSpec, HedgeChoice, SearchOptions};

/// Periods whose price forecast pools the same day across all of them.
pub const POOLED_PERIODS: std::ops::RangeInclusive<u32> = 20..=24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub periods: Vec<u32>,
    pub days: Vec<u32>,
}

impl Default for DatasetLayout {
    fn default() -> Self {
        Self { periods: (20..=26).collect(), days: (1..=19).collect() }
    }
}

impl DatasetLayout {
    /// All `(t, d)` cells, `t` outer.
    pub fn cells(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.periods.iter().flat_map(move |&t| self.days.iter().map(move |&d| (t, d)))
    }

    /// All `(t, d)` cells in ledger order: `d` outer, then `t`.
    pub fn ledger_order(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.days.iter().flat_map(move |&d| self.periods.iter().map(move |&t| (t, d)))
    }

    fn contains(&self, t: u32, d: u32) -> bool {
        self.periods.contains(&t) && self.days.contains(&d)
    }
}

/// Values keyed by `(t, d)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellTable {
    values: BTreeMap<(u32, u32), f64>,
}

impl CellTable {
    pub fn get(&self, t: u32, d: u32) -> Option<f64> {
        self.values.get(&(t, d)).copied()
    }

    pub fn insert(&mut self, t: u32, d: u32, value: f64) -> Option<f64> {
        self.values.insert((t, d), value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }
}

impl Index<(u32, u32)> for CellTable {
    type Output = f64;

    fn index(&self, (t, d): (u32, u32)) -> &f64 {
        self.values.get(&(t, d)).unwrap_or_else(|| panic!("no value for cell (t={t}, d={d})"))
    }
}

impl FromIterator<((u32, u32), f64)> for CellTable {
    fn from_iter<I: IntoIterator<Item = ((u32, u32), f64)>>(iter: I) -> Self {
        Self { values: iter.into_iter().collect() }
    }
}

/// Printed price forecasts, kept for comparison with [`predict_prices`].
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedForecasts {
    pub a: CellTable,
    pub b: CellTable,
    pub c: CellTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    pub layout: DatasetLayout,
    /// Actual demand.
    pub f: CellTable,
    /// Previous-day prediction.
    pub g: CellTable,
    /// Same-day prediction.
    pub h: CellTable,
    pub a: CellTable,
    pub b: CellTable,
    pub c: CellTable,
    /// Previous-day prediction variance per cell.
    pub v1: Option<CellTable>,
    /// Same-day prediction variance per period.
    pub v2: Option<BTreeMap<u32, f64>>,
    pub a_opt: Option<CellTable>,
    pub b_opt: Option<CellTable>,
    pub forecasts: Option<PublishedForecasts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    NonNegative,
    Positive,
    Finite,
}

struct TableDef {
    name: &'static str,
    rule: Rule,
}

const DEMAND: TableDef = TableDef { name: "demand", rule: Rule::NonNegative };
const PREVDAY: TableDef = TableDef { name: "prevday_prediction", rule: Rule::NonNegative };
const SAMEDAY: TableDef = TableDef { name: "sameday_prediction", rule: Rule::NonNegative };
const PRICE_A: TableDef = TableDef { name: "dayahead_price", rule: Rule::Positive };
const PRICE_B: TableDef = TableDef { name: "intraday_price", rule: Rule::Positive };
const PRICE_C: TableDef = TableDef { name: "penalty_price", rule: Rule::Positive };
const V1: TableDef = TableDef { name: "prevday_variance", rule: Rule::Positive };
const V2: TableDef = TableDef { name: "sameday_variance", rule: Rule::Positive };
const HEDGE_A: TableDef = TableDef { name: "hedge_a", rule: Rule::Finite };
const HEDGE_B: TableDef = TableDef { name: "hedge_b", rule: Rule::Finite };
const FORECAST_A: TableDef = TableDef { name: "dayahead_price_forecast", rule: Rule::Positive };
const FORECAST_B: TableDef = TableDef { name: "intraday_price_forecast", rule: Rule::Positive };
const FORECAST_C: TableDef = TableDef { name: "penalty_price_forecast", rule: Rule::Positive };

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../fixtures/paper/table_", $name, ".csv")))),*]
    };
}

const PAPER_FIXTURE: &[(&str, &str)] = bundled!(
    "demand",
    "prevday_prediction",
    "sameday_prediction",
    "dayahead_price",
    "intraday_price",
    "penalty_price",
    "prevday_variance",
    "sameday_variance",
    "hedge_a",
    "hedge_b",
    "dayahead_price_forecast",
    "intraday_price_forecast",
    "penalty_price_forecast",
);

/// Where [`load_dataset`] reads tables from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    /// A fixture compiled into the library, by id (`"paper"`).
    Bundled(String),
    /// A directory of `table_<name>.csv` files. Optional tables may be absent.
    Dir(PathBuf),
}

impl DataSource {
    pub fn paper() -> Self {
        DataSource::Bundled("paper".into())
    }

    fn read(&self, table: &str) -> Result<Option<String>> {
        match self {
            DataSource::Bundled(id) => {
                if id != "paper" {
                    return Err(Error::InvalidArgument(format!("unknown bundled fixture '{id}'")));
                }
                Ok(PAPER_FIXTURE.iter().find(|(n, _)| *n == table).map(|(_, text)| text.to_string()))
            }
            DataSource::Dir(dir) => {
                let path = dir.join(format!("table_{table}.csv"));
                match std::fs::read_to_string(&path) {
                    Ok(text) => Ok(Some(text)),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(source) => Err(Error::Io { path, source }),
                }
            }
        }
    }

    fn describe(&self, table: &str) -> String {
        match self {
            DataSource::Bundled(id) => format!("{id}:table_{table}"),
            DataSource::Dir(dir) => dir.join(format!("table_{table}.csv")).display().to_string(),
        }
    }
}

/// Loads and validates a dataset on the default layout.
pub fn load_dataset(source: &DataSource) -> Result<MarketDataset> {
    load_dataset_with(source, &DatasetLayout::default())
}

pub fn load_dataset_with(source: &DataSource, layout: &DatasetLayout) -> Result<MarketDataset> {
    let required = |def: &TableDef| -> Result<CellTable> {
        let text = source.read(def.name)?.ok_or_else(|| Error::Io {
            path: PathBuf::from(source.describe(def.name)),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "required table not found"),
        })?;
        parse_cell_table(def, &text, layout)
    };
    let optional = |def: &TableDef| -> Result<Option<CellTable>> {
        source.read(def.name)?.map(|text| parse_cell_table(def, &text, layout)).transpose()
    };

    let v2 = source.read(V2.name)?.map(|text| parse_period_table(&V2, &text, layout)).transpose()?;
    let forecasts = match (optional(&FORECAST_A)?, optional(&FORECAST_B)?, optional(&FORECAST_C)?) {
        (Some(a), Some(b), Some(c)) => Some(PublishedForecasts { a, b, c }),
        _ => None,
    };
    Ok(MarketDataset {
        layout: layout.clone(),
        f: required(&DEMAND)?,
        g: required(&PREVDAY)?,
        h: required(&SAMEDAY)?,
        a: required(&PRICE_A)?,
        b: required(&PRICE_B)?,
        c: required(&PRICE_C)?,
        v1: optional(&V1)?,
        v2,
        a_opt: optional(&HEDGE_A)?,
        b_opt: optional(&HEDGE_B)?,
        forecasts,
    })
}

/// Loads a dataset from a directory of CSV files.
pub fn load_dataset_dir(dir: impl AsRef<Path>) -> Result<MarketDataset> {
    load_dataset(&DataSource::Dir(dir.as_ref().to_path_buf()))
}

fn check_value(def: &TableDef, cell: &str, v: f64) -> Result<()> {
    let ok = match def.rule {
        Rule::NonNegative => v.is_finite() && v >= 0.0,
        Rule::Positive => v.is_finite() && v > 0.0,
        Rule::Finite => v.is_finite(),
    };
    if ok {
        return Ok(());
    }
    let want = match def.rule {
        Rule::NonNegative => "finite and >= 0",
        Rule::Positive => "finite and > 0",
        Rule::Finite => "finite",
    };
    Err(Error::Data(format!("table_{}: value at {cell} must be {want}, got {v}", def.name)))
}

fn csv_rows(def: &TableDef, text: &str, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let table = format!("table_{}", def.name);
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut seen_header = false;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        if !seen_header {
            let got: Vec<&str> = rec.iter().collect();
            if got != header {
                return Err(Error::Schema {
                    table,
                    message: format!("expected header {:?}, found {:?}", header.join(","), got.join(",")),
                });
            }
            seen_header = true;
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Schema {
                table,
                message: format!("line {line}: expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(def: &TableDef, line: u64, column: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Schema {
        table: format!("table_{}", def.name),
        message: format!("line {line}: non-numeric {column} '{raw}'"),
    })
}

fn parse_cell_table(def: &TableDef, text: &str, layout: &DatasetLayout) -> Result<CellTable> {
    let table = format!("table_{}", def.name);
    let mut out = CellTable::default();
    for (line, fields) in csv_rows(def, text, &["t", "d", "value"])? {
        let t: u32 = parse_field(def, line, "t", &fields[0])?;
        let d: u32 = parse_field(def, line, "d", &fields[1])?;
        let v: f64 = parse_field(def, line, "value", &fields[2])?;
        if !layout.contains(t, d) {
            return Err(Error::Schema { table, message: format!("line {line}: cell (t={t}, d={d}) outside the layout") });
        }
        check_value(def, &format!("(t={t}, d={d})"), v)?;
        if out.insert(t, d, v).is_some() {
            return Err(Error::DuplicateCell { table, t, d });
        }
    }
    let missing: Vec<(u32, u32)> = layout.cells().filter(|&(t, d)| out.get(t, d).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingCells { table, cells: missing });
    }
    Ok(out)
}

fn parse_period_table(def: &TableDef, text: &str, layout: &DatasetLayout) -> Result<BTreeMap<u32, f64>> {
    let table = format!("table_{}", def.name);
    let mut out = BTreeMap::new();
    for (line, fields) in csv_rows(def, text, &["t", "value"])? {
        let t: u32 = parse_field(def, line, "t", &fields[0])?;
        let v: f64 = parse_field(def, line, "value", &fields[1])?;
        if !layout.periods.contains(&t) {
            return Err(Error::Schema { table, message: format!("line {line}: period {t} outside the layout") });
        }
        check_value(def, &format!("(t={t})"), v)?;
        if out.insert(t, v).is_some() {
            return Err(Error::Schema { table, message: format!("duplicate period {t}") });
        }
    }
    let missing: Vec<(u32, u32)> = layout.periods.iter().filter(|t| !out.contains_key(t)).map(|&t| (t, 0)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingCells { table, cells: missing });
    }
    Ok(out)
}

/// Forecast unit prices per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceForecast {
    pub a: CellTable,
    pub b: CellTable,
    pub c: CellTable,
}

impl PriceForecast {
    pub fn at(&self, t: u32, d: u32) -> ExpectedPrices {
        ExpectedPrices { ea: self.a[(t, d)], eb: self.b[(t, d)], ec: self.c[(t, d)] }
    }
}

fn forecast_table(layout: &DatasetLayout, actual: &CellTable) -> CellTable {
    let pooled: Vec<u32> = layout.periods.iter().copied().filter(|t| POOLED_PERIODS.contains(t)).collect();
    let mut out = CellTable::default();
    for (t, d) in layout.cells() {
        let v = if POOLED_PERIODS.contains(&t) {
            pooled.iter().map(|&tp| actual[(tp, d)]).sum::<f64>() / pooled.len() as f64
        } else {
            layout.days.iter().map(|&dp| actual[(t, dp)]).sum::<f64>() / layout.days.len() as f64
        };
        out.insert(t, d, v);
    }
    out
}

/// Price forecasts: for periods 20..=24 the mean over those periods on the
/// same day; for later periods the mean over all days of that period.
pub fn predict_prices(ds: &MarketDataset) -> PriceForecast {
    PriceForecast {
        a: forecast_table(&ds.layout, &ds.a),
        b: forecast_table(&ds.layout, &ds.b),
        c: forecast_table(&ds.layout, &ds.c),
    }
}

/// Per-period mean squared same-day prediction error, `mean_d (f − h)²`.
pub fn estimate_sameday_variance(ds: &MarketDataset) -> BTreeMap<u32, f64> {
    let n = ds.layout.days.len() as f64;
    ds.layout
        .periods
        .iter()
        .map(|&t| {
            let ss: f64 = ds.layout.days.iter().map(|&d| (ds.f[(t, d)] - ds.h[(t, d)]).powi(2)).sum();
            (t, ss / n)
        })
        .collect()
}

/// The ingested previous-day prediction variances. They are taken as data;
/// no estimator is provided.
pub fn prevday_variance(ds: &MarketDataset) -> Result<&CellTable> {
    ds.v1.as_ref().ok_or_else(|| {
        Error::UnsupportedPath(
            "previous-day prediction variances cannot be estimated from the dataset; supply table_prevday_variance.csv"
                .into(),
        )
    })
}

/// Hedge offsets `(A, B)` per cell.
pub type Hedges = BTreeMap<(u32, u32), (f64, f64)>;

/// The hedges stored in the dataset, if both tables are present.
pub fn ingested_hedges(ds: &MarketDataset) -> Result<Hedges> {
    match (&ds.a_opt, &ds.b_opt) {
        (Some(a), Some(b)) => Ok(ds.layout.cells().map(|k| (k, (a[k], b[k]))).collect()),
        _ => Err(Error::Data("dataset has no hedge tables (table_hedge_a.csv, table_hedge_b.csv)".into())),
    }
}

/// Search settings for [`compute_hedges`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeSearch {
    /// Use this grid for every cell instead of the adaptive one.
    pub grid: Option<GridSpec>,
    /// Adaptive grid half-width in units of the larger error standard deviation.
    pub half_width_sigmas: f64,
    /// Mesh of the final refinement pass.
    pub final_mesh: f64,
    /// Target number of coarse cells per half-width.
    pub coarse_cells: f64,
    pub c3_method: C3Method,
}

impl Default for HedgeSearch {
    fn default() -> Self {
        Self { grid: None, half_width_sigmas: 10.0, final_mesh: 0.01, coarse_cells: 20.0, c3_method: C3Method::SemiAnalytic }
    }
}

impl HedgeSearch {
    /// Grid centred on (0, 0). The coarse mesh is `final_mesh · 5^k`, the
    /// largest such not exceeding `half_width / coarse_cells`, so every
    /// refinement pass stays on the final lattice.
    pub fn adaptive_grid(&self, sigma_max: f64) -> Result<GridSpec> {
        if let Some(g) = self.grid {
            return Ok(g);
        }
        if !(self.final_mesh > 0.0 && self.half_width_sigmas > 0.0 && self.coarse_cells >= 1.0) {
            return Err(Error::InvalidArgument(format!("invalid hedge search settings {self:?}")));
        }
        let half = self.half_width_sigmas * sigma_max;
        let mut mesh = self.final_mesh;
        while mesh * 5.0 <= half / self.coarse_cells {
            mesh *= 5.0;
        }
        let half = (half / mesh - 1e-9).ceil() * mesh;
        GridSpec::centered(0.0, 0.0, half, mesh)
    }
}

/// Minimising hedge per cell, using normal errors with the ingested
/// previous-day variance and the estimated same-day variance.
pub fn compute_hedges(
    ds: &MarketDataset,
    search: &HedgeSearch,
    exec: Execution,
) -> Result<BTreeMap<(u32, u32), HedgeChoice>> {
    let cells: Vec<(u32, u32)> = ds.layout.cells().collect();
    compute_hedges_for(ds, &cells, search, exec)
}

/// [`compute_hedges`] restricted to `cells`.
pub fn compute_hedges_for(
    ds: &MarketDataset,
    cells: &[(u32, u32)],
    search: &HedgeSearch,
    exec: Execution,
) -> Result<BTreeMap<(u32, u32), HedgeChoice>> {
    let v1 = prevday_variance(ds)?;
    let v2 = estimate_sameday_variance(ds);
    let prices = predict_prices(ds);
    if let Some(&(t, d)) = cells.iter().find(|&&(t, d)| !ds.layout.contains(t, d)) {
        return Err(Error::InvalidArgument(format!("cell (t={t}, d={d}) is outside the dataset")));
    }
    let options = SearchOptions { refine_to: Some(search.final_mesh), c3_method: search.c3_method };
    let choices = exec.try_map_indexed(cells.len(), |k| {
        let (t, d) = cells[k];
        let pg = ErrorModel::normal_from_variance(v1[(t, d)])?;
        let ph = ErrorModel::normal_from_variance(v2[&t])?;
        let grid = search.adaptive_grid(v1[(t, d)].max(v2[&t]).sqrt())?;
        let options = SearchOptions { refine_to: search.grid.is_none().then_some(search.final_mesh), ..options };
        optimal_parameters_with(prices.at(t, d), &pg, &ph, &grid, options, Execution::Sequential)
            .map_err(|e| Error::Data(format!("hedge search failed at (t={t}, d={d}): {e}")))
    })?;
    Ok(cells.iter().copied().zip(choices).collect())
}

pub fn hedges_from_choices(choices: &BTreeMap<(u32, u32), HedgeChoice>) -> Hedges {
    choices.iter().map(|(k, c)| (*k, (c.a, c.b))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Buy `g + A` day-ahead and top up to `h + B` intra-day.
    Optimized(Hedges),
    /// `A = B = 0`.
    Naive,
    /// Demand known in advance and bought day-ahead.
    Perfect,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Optimized(_) => "optimized",
            Strategy::Naive => "naive",
            Strategy::Perfect => "perfect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub t: u32,
    pub d: u32,
    #[serde(rename = "A")]
    pub a_offset: f64,
    #[serde(rename = "B")]
    pub b_offset: f64,
    pub f: f64,
    pub prices: PriceTriple,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestLedger {
    pub strategy: String,
    /// Ascending `d`, then ascending `t`.
    pub entries: Vec<LedgerEntry>,
    /// Unrounded sum of the entry totals in ledger order.
    pub total: f64,
    /// `total` rounded half-up to 0.01.
    pub total_yen: f64,
}

/// Rounds half-up to 0.01.
pub fn round_yen(x: f64) -> f64 {
    (x * 100.0 + 0.5).floor() / 100.0 + 0.0
}

pub fn run_backtest(ds: &MarketDataset, strategy: &Strategy) -> Result<BacktestLedger> {
    let mut entries = Vec::with_capacity(ds.layout.periods.len() * ds.layout.days.len());
    let mut total = 0.0;
    for (t, d) in ds.layout.ledger_order() {
        let f = ds.f[(t, d)];
        let (g, h, a_offset, b_offset) = match strategy {
            Strategy::Optimized(hedges) => {
                let (a, b) = hedges
                    .get(&(t, d))
                    .copied()
                    .ok_or_else(|| Error::MissingCells { table: "hedges".into(), cells: vec![(t, d)] })?;
                (ds.g[(t, d)], ds.h[(t, d)], a, b)
            }
            Strategy::Naive => (ds.g[(t, d)], ds.h[(t, d)], 0.0, 0.0),
            Strategy::Perfect => (f, f, 0.0, 0.0),
        };
        let prices = PriceTriple::new(ds.a[(t, d)], ds.b[(t, d)], ds.c[(t, d)])?;
        let cost = total_cost(f, &ProcurementParams::new(g, h, a_offset, b_offset)?, &prices)?;
        total += cost.total;
        entries.push(LedgerEntry { t, d, a_offset, b_offset, f, prices, cost });
    }
    Ok(BacktestLedger { strategy: strategy.name().into(), entries, total, total_yen: round_yen(total) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyDelta {
    pub strategy: String,
    pub total: f64,
    pub total_yen: f64,
    /// `total − baseline total`; negative is a saving.
    pub delta: f64,
    pub delta_yen: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub baseline_total: f64,
    pub rows: Vec<StrategyDelta>,
}

/// Deltas of every ledger against the one named `baseline`.
pub fn compare_strategies(ledgers: &[BacktestLedger], baseline: &str) -> Result<Comparison> {
    if ledgers.len() < 2 {
        return Err(Error::InvalidArgument("comparison needs at least two ledgers".into()));
    }
    let base = ledgers
        .iter()
        .find(|l| l.strategy == baseline)
        .ok_or_else(|| Error::InvalidArgument(format!("no ledger named '{baseline}'")))?;
    let index = |l: &BacktestLedger| l.entries.iter().map(|e| (e.t, e.d)).collect::<Vec<_>>();
    let base_index = index(base);
    let mut rows = Vec::with_capacity(ledgers.len());
    for l in ledgers {
        if index(l) != base_index {
            return Err(Error::Data(format!(
                "ledger '{}' covers different (t,d) cells than baseline '{baseline}'",
                l.strategy
            )));
        }
        let delta = l.total - base.total;
        rows.push(StrategyDelta {
            strategy: l.strategy.clone(),
            total: l.total,
            total_yen: l.total_yen,
            delta,
            delta_yen: round_yen(delta),
            percent: 100.0 * delta / base.total,
        });
    }
    Ok(Comparison { baseline: baseline.into(), baseline_total: base.total, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    /// `"paper"`, `"recompute"` or `"none"`.
    pub hedges: String,
    pub ledgers: Vec<BacktestLedger>,
    pub comparison: Option<Comparison>,
}

/// One row per ledger entry, all strategies stacked.
pub fn write_ledger_csv<W: Write>(ledgers: &[BacktestLedger], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy", "t", "d", "A", "B", "f", "a", "b", "c", "e1", "e2", "supplemental", "surplus", "c1", "c2", "c3",
        "total",
    ])?;
    for l in ledgers {
        for e in &l.entries {
            let c = &e.cost;
            let nums = [
                e.a_offset,
                e.b_offset,
                e.f,
                e.prices.a,
                e.prices.b,
                e.prices.c,
                c.e1,
                c.e2,
                c.supplemental,
                c.surplus,
                c.c1,
                c.c2,
                c.c3,
                c.total,
            ];
            let mut rec = vec![l.strategy.clone(), e.t.to_string(), e.d.to_string()];
            rec.extend(nums.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> MarketDataset {
        load_dataset(&DataSource::paper()).unwrap()
    }

    #[test]
    fn bundled_values() {
        let ds = paper();
        assert_eq!(ds.f[(20, 1)], 28.0);
        assert_eq!(ds.c[(26, 2)], 11.09);
        assert_eq!(ds.f.len(), 133);
        assert!(ds.v1.is_some() && ds.v2.is_some() && ds.forecasts.is_some());
    }

    #[test]
    fn layout_orders() {
        let l = DatasetLayout::default();
        let cells: Vec<_> = l.cells().take(2).collect();
        assert_eq!(cells, [(20, 1), (20, 2)]);
        let ledger: Vec<_> = l.ledger_order().take(2).collect();
        assert_eq!(ledger, [(20, 1), (21, 1)]);
    }

    #[test]
    fn empty_table_lists_missing_cells() {
        for text in ["", "t,d,value\n"] {
            let err = parse_cell_table(&DEMAND, text, &DatasetLayout::default()).unwrap_err();
            match err {
                Error::MissingCells { cells, .. } => {
                    assert_eq!(cells.len(), 133);
                    assert_eq!(cells[0], (20, 1));
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn table_errors() {
        let l = DatasetLayout::default();
        let dup = "t,d,value\n20,1,1\n20,1,2\n";
        assert!(matches!(parse_cell_table(&DEMAND, dup, &l), Err(Error::DuplicateCell { t: 20, d: 1, .. })));
        let schema = "t,day,value\n20,1,1\n";
        assert!(matches!(parse_cell_table(&DEMAND, schema, &l), Err(Error::Schema { .. })));
        let nan = "t,d,value\n20,1,abc\n";
        assert!(matches!(parse_cell_table(&DEMAND, nan, &l), Err(Error::Schema { .. })));
        let outside = "t,d,value\n27,1,3\n";
        assert!(matches!(parse_cell_table(&DEMAND, outside, &l), Err(Error::Schema { .. })));
        let negative = "t,d,value\n20,1,-1\n";
        assert!(matches!(parse_cell_table(&DEMAND, negative, &l), Err(Error::Data(_))));
        let zero_price = "t,d,value\n20,1,0\n";
        assert!(matches!(parse_cell_table(&PRICE_A, zero_price, &l), Err(Error::Data(_))));
        let short = "t,d,value\n20,1\n";
        assert!(matches!(parse_cell_table(&DEMAND, short, &l), Err(Error::Schema { .. })));
    }

    #[test]
    fn price_forecast_examples() {
        let p = predict_prices(&paper());
        for t in 20..=24 {
            assert!((p.a[(t, 1)] - 6.68).abs() < 0.005);
        }
        assert!((p.a[(25, 7)] - 8.76).abs() < 0.005);
        assert!((p.c[(26, 3)] - 9.55).abs() < 0.005);
    }

    #[test]
    fn sameday_variance_examples() {
        let v = estimate_sameday_variance(&paper());
        assert!((v[&25] - 3.0).abs() < 1e-12);
        assert!((v[&20] - 90.0 / 19.0).abs() < 1e-12);
        let mut ds = paper();
        ds.h = ds.f.clone();
        assert!(estimate_sameday_variance(&ds).values().all(|&v| v == 0.0));
    }

    #[test]
    fn prevday_variance_passthrough() {
        let ds = paper();
        let v1 = prevday_variance(&ds).unwrap();
        assert_eq!(v1[(20, 1)], 10.48);
        assert_eq!(v1[(23, 10)], 4.76);
        for d in 1..=9 {
            assert_eq!(v1[(20, d)], v1[(20, 20 - d)]);
        }
        let mut ds = ds;
        ds.v1 = None;
        assert!(matches!(prevday_variance(&ds), Err(Error::UnsupportedPath(_))));
    }

    #[test]
    fn strategy_totals() {
        let ds = paper();
        let naive = run_backtest(&ds, &Strategy::Naive).unwrap();
        let perfect = run_backtest(&ds, &Strategy::Perfect).unwrap();
        assert_eq!(naive.total_yen, 52225.97);
        assert_eq!(perfect.total_yen, 51140.72);
        assert_eq!(naive.entries.len(), 133);
        assert_eq!((naive.entries[1].t, naive.entries[1].d), (21, 1));
        let sum: f64 = naive.entries.iter().map(|e| e.cost.total).sum();
        assert_eq!(sum, naive.total);
    }

    #[test]
    fn comparison_against_self_is_zero() {
        let ds = paper();
        let naive = run_backtest(&ds, &Strategy::Naive).unwrap();
        let perfect = run_backtest(&ds, &Strategy::Perfect).unwrap();
        let cmp = compare_strategies(&[naive.clone(), perfect], "naive").unwrap();
        assert_eq!(cmp.rows[0].delta, 0.0);
        assert!(cmp.rows[1].delta < 0.0);
        let mut short = naive.clone();
        short.entries.pop();
        assert!(compare_strategies(&[naive.clone(), short], "naive").is_err());
        assert!(compare_strategies(&[naive], "naive").is_err());
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_yen(51140.719999999994), 51140.72);
        assert_eq!(round_yen(0.125), 0.13);
        assert_eq!(round_yen(-276.02), -276.02);
        assert_eq!(round_yen(-0.001), 0.0);
    }

    #[test]
    fn adaptive_grid_stays_on_final_lattice() {
        let s = HedgeSearch::default();
        let g = s.adaptive_grid(3.0).unwrap();
        assert_eq!(g.mesh, 1.25);
        assert!(g.a_min <= -30.0 && g.a_max >= 30.0);
        assert_eq!(g.a_count() % 2, 1);
        let k = (g.a_min / 0.01).round();
        assert!((g.a_min - k * 0.01).abs() < 1e-9);
    }
}
