//! Synthetic experiments: a fixed demand with normal prediction errors and
//! fixed prices, swept over a hedge grid for the expected cost (quadrature)
//! and the cost variance (Monte Carlo).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost_model::PriceTriple;
use crate::distributions::ErrorModel;
use crate::error::{ensure_finite, Error, Result};
use crate::exec::Execution;
use crate::expectation::{expected_total_with, monte_carlo, C3Method, ExpectationInputs, McInputs};
use crate::optimizer::{grid_search, GridSpec, SurfaceReport};

pub const DEFAULT_MC_N: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Demand, also the mean of both predictions.
    pub f: f64,
    /// Standard deviation of the previous-day prediction error.
    pub sigma1: f64,
    /// Standard deviation of the same-day prediction error.
    pub sigma2: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub grid: GridSpec,
    pub mc_n: u64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// f = 100, σ₁ = √3, σ₂ = √2, prices (1, 2, 3) on the default grid.
    pub fn base() -> Self {
        Self {
            name: "base".into(),
            f: 100.0,
            sigma1: 3f64.sqrt(),
            sigma2: 2f64.sqrt(),
            a: 1.0,
            b: 2.0,
            c: 3.0,
            grid: GridSpec::default(),
            mc_n: DEFAULT_MC_N,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("f", self.f)?;
        for (name, s) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {s}")));
            }
        }
        self.prices()?;
        self.grid.validate()?;
        if self.mc_n < 2 {
            return Err(Error::InvalidArgument(format!("mc_n must be >= 2, got {}", self.mc_n)));
        }
        Ok(())
    }

    pub fn prices(&self) -> Result<PriceTriple> {
        PriceTriple::new(self.a, self.b, self.c)
    }

    fn error_models(&self) -> Result<(ErrorModel, ErrorModel)> {
        Ok((ErrorModel::normal(self.sigma1)?, ErrorModel::normal(self.sigma2)?))
    }

    /// Quadrature inputs at `(A, B)`, with `E[g] = f`.
    pub fn expectation_inputs(&self, a_offset: f64, b_offset: f64) -> Result<ExpectationInputs> {
        let (pg, ph) = self.error_models()?;
        Ok(ExpectationInputs { ea: self.a, eb: self.b, ec: self.c, eg: self.f, a_offset, b_offset, pg, ph })
    }

    pub fn mc_inputs(&self, a_offset: f64, b_offset: f64) -> Result<McInputs> {
        let (pg, ph) = self.error_models()?;
        Ok(McInputs { f: self.f, prices: self.prices()?, a_offset, b_offset, pg, ph })
    }
}

/// The base experiment and its six variations.
pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    let base = ScenarioConfig::base();
    let grid = |a_min, a_max, b_min, b_max| GridSpec { a_min, a_max, b_min, b_max, mesh: 0.1 };
    let variant = |name: &str, f: &dyn Fn(&mut ScenarioConfig)| {
        let mut cfg = ScenarioConfig { name: name.into(), ..base.clone() };
        f(&mut cfg);
        cfg
    };
    vec![
        base.clone(),
        variant("sigma1=5", &|c| c.sigma1 = 5.0),
        variant("sigma2=0.1", &|c| {
            c.sigma2 = 0.1;
            c.grid = grid(-1.9, 3.0, -1.9, 3.0);
        }),
        variant("b=1.2", &|c| {
            c.b = 1.2;
            c.grid = grid(-1.9, 3.0, -2.9, 2.0);
        }),
        variant("b=2.8", &|c| c.b = 2.8),
        variant("a=0.5", &|c| {
            c.a = 0.5;
            c.grid = grid(-0.9, 3.0, -4.9, 0.0);
        }),
        variant("c=3.5", &|c| c.c = 3.5),
    ]
}

/// Reads one config or an array of configs from a JSON file.
pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<ScenarioConfig>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(ScenarioConfig),
        Many(Vec<ScenarioConfig>),
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let configs = match serde_json::from_str::<OneOrMany>(&text)? {
        OneOrMany::One(c) => vec![c],
        OneOrMany::Many(cs) => cs,
    };
    for c in &configs {
        c.validate().map_err(|e| Error::InvalidArgument(format!("scenario '{}': {e}", c.name)))?;
    }
    Ok(configs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Compute the Monte Carlo variance surface.
    pub variance: bool,
    /// Overrides the config's `mc_n`.
    pub mc_n: Option<u64>,
    /// Overrides the config's seed.
    pub seed: Option<u64>,
    pub c3_method: C3Method,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { variance: true, mc_n: None, seed: None, c3_method: C3Method::Nested }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub e_surface: SurfaceReport,
    pub v_surface: Option<SurfaceReport>,
}

/// Expected-cost surface of a scenario.
pub fn expectation_surface(cfg: &ScenarioConfig, method: C3Method, exec: Execution) -> Result<SurfaceReport> {
    cfg.validate()?;
    let template = cfg.expectation_inputs(0.0, 0.0)?;
    grid_search(
        |a, b| expected_total_with(&template.with_offsets(a, b), method).map(|e| e.total),
        &cfg.grid,
        "expected_cost",
        exec,
    )
}

/// Monte Carlo variance surface. Cell `(i, j)` draws from stream
/// `grid.linear_index(i, j)` so each cell is reproducible on its own.
pub fn variance_surface(cfg: &ScenarioConfig, n: u64, seed: u64, exec: Execution) -> Result<SurfaceReport> {
    cfg.validate()?;
    let template = cfg.mc_inputs(0.0, 0.0)?;
    let grid = cfg.grid;
    let nb = grid.b_count();
    grid_search(
        |a, b| {
            let i = ((a - grid.a_min) / grid.mesh).round() as usize;
            let j = ((b - grid.b_min) / grid.mesh).round() as usize;
            let stream = (i * nb + j) as u64;
            monte_carlo(&template.with_offsets(a, b), n, seed, stream, Execution::Sequential)
                .map(|m| m.unbiased_variance)
        },
        &grid,
        "variance",
        exec,
    )
}

pub fn run_scenario(cfg: &ScenarioConfig, options: RunOptions, exec: Execution) -> Result<ScenarioResult> {
    cfg.validate()?;
    let e_surface = expectation_surface(cfg, options.c3_method, exec)?;
    let v_surface = if options.variance {
        let n = options.mc_n.unwrap_or(cfg.mc_n);
        Some(variance_surface(cfg, n, options.seed.unwrap_or(cfg.seed), exec)?)
    } else {
        None
    };
    Ok(ScenarioResult { config: cfg.clone(), e_surface, v_surface })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
    Unchanged,
}

impl Direction {
    fn of(delta: f64) -> Self {
        if delta > 1e-9 {
            Direction::Increase
        } else if delta < -1e-9 {
            Direction::Decrease
        } else {
            Direction::Unchanged
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
            Direction::Unchanged => "unchanged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRow {
    pub scenario: String,
    #[serde(rename = "A")]
    pub a_star: f64,
    #[serde(rename = "B")]
    pub b_star: f64,
    pub a_change: Direction,
    pub b_change: Direction,
}

/// How each scenario's expected-cost minimiser moved relative to the
/// scenario named `"base"`.
pub fn direction_table(results: &[ScenarioResult]) -> Result<Vec<DirectionRow>> {
    let base = results
        .iter()
        .find(|r| r.config.name == "base")
        .ok_or_else(|| Error::InvalidArgument("direction table needs the 'base' scenario".into()))?;
    let others: Vec<&ScenarioResult> = results.iter().filter(|r| r.config.name != "base").collect();
    if others.is_empty() {
        return Err(Error::InvalidArgument("direction table needs at least one variation of 'base'".into()));
    }
    let (a0, b0) = (base.e_surface.argmin.a, base.e_surface.argmin.b);
    Ok(others
        .into_iter()
        .map(|r| {
            let m = &r.e_surface.argmin;
            DirectionRow {
                scenario: r.config.name.clone(),
                a_star: m.a,
                b_star: m.b,
                a_change: Direction::of(m.a - a0),
                b_change: Direction::of(m.b - b0),
            }
        })
        .collect())
}
