//! Exhaustive grid search over the hedge pair (A, B).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::ErrorModel;
use crate::error::{ensure_finite, Error, Result};
use crate::exec::Execution;
use crate::expectation::{expected_total_with, C3Method, ExpectationInputs};

/// Coordinates are snapped to this many decimal places so that e.g.
/// `-1.9 + 25 * 0.1` reports as `0.6`.
const COORD_SCALE: f64 = 1e10;

#[inline]
fn snap(x: f64) -> f64 {
    (x * COORD_SCALE).round() / COORD_SCALE + 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub mesh: f64,
}

impl Default for GridSpec {
    /// A ∈ [−1.9, 3], B ∈ [−4.9, 0], mesh 0.1.
    fn default() -> Self {
        Self { a_min: -1.9, a_max: 3.0, b_min: -4.9, b_max: 0.0, mesh: 0.1 }
    }
}

impl GridSpec {
    pub fn new(a_min: f64, a_max: f64, b_min: f64, b_max: f64, mesh: f64) -> Result<Self> {
        let g = Self { a_min, a_max, b_min, b_max, mesh };
        g.validate()?;
        Ok(g)
    }

    /// Square grid `[−half_width, half_width]²` around `(center_a, center_b)`.
    pub fn centered(center_a: f64, center_b: f64, half_width: f64, mesh: f64) -> Result<Self> {
        Self::new(center_a - half_width, center_a + half_width, center_b - half_width, center_b + half_width, mesh)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a_min", self.a_min), ("a_max", self.a_max), ("b_min", self.b_min), ("b_max", self.b_max)]
        {
            ensure_finite(name, v)?;
        }
        if !(self.mesh > 0.0) || !self.mesh.is_finite() {
            return Err(Error::InvalidArgument(format!("mesh must be > 0, got {}", self.mesh)));
        }
        if self.a_min > self.a_max || self.b_min > self.b_max {
            return Err(Error::InvalidArgument(format!("empty grid range: {self:?}")));
        }
        let cells = (self.a_count() as u128) * (self.b_count() as u128);
        if cells > u32::MAX as u128 {
            return Err(Error::InvalidArgument(format!("grid has too many cells ({cells})")));
        }
        Ok(())
    }

    fn count(lo: f64, hi: f64, mesh: f64) -> usize {
        ((hi - lo) / mesh + 1e-9).floor() as usize + 1
    }

    pub fn a_count(&self) -> usize {
        Self::count(self.a_min, self.a_max, self.mesh)
    }

    pub fn b_count(&self) -> usize {
        Self::count(self.b_min, self.b_max, self.mesh)
    }

    pub fn a_at(&self, i: usize) -> f64 {
        snap(self.a_min + i as f64 * self.mesh)
    }

    pub fn b_at(&self, j: usize) -> f64 {
        snap(self.b_min + j as f64 * self.mesh)
    }

    pub fn a_values(&self) -> Vec<f64> {
        (0..self.a_count()).map(|i| self.a_at(i)).collect()
    }

    pub fn b_values(&self) -> Vec<f64> {
        (0..self.b_count()).map(|j| self.b_at(j)).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.a_count() * self.b_count()
    }

    /// Row-major (A outer, B inner) index of cell `(i, j)`.
    pub fn linear_index(&self, i: usize, j: usize) -> usize {
        i * self.b_count() + j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Argmin {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceReport {
    pub grid: GridSpec,
    /// What the values are, e.g. `"expected_cost"` or `"variance"`.
    pub label: String,
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    /// `values[i][j]` is the objective at `(a_values[i], b_values[j])`.
    pub values: Vec<Vec<f64>>,
    pub argmin: Argmin,
    pub min_value: f64,
}

impl SurfaceReport {
    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Cell indices of the grid point nearest to `(a, b)`.
    pub fn nearest_cell(&self, a: f64, b: f64) -> (usize, usize) {
        let idx = |lo: f64, x: f64, n: usize| (((x - lo) / self.grid.mesh).round().max(0.0) as usize).min(n - 1);
        (idx(self.grid.a_min, a, self.a_values.len()), idx(self.grid.b_min, b, self.b_values.len()))
    }

    /// CSV with header `A,B,value`, one row per cell, A outer.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["A", "B", "value"])?;
        for (i, a) in self.a_values.iter().enumerate() {
            for (j, b) in self.b_values.iter().enumerate() {
                w.write_record([a.to_string(), b.to_string(), self.values[i][j].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
    }
}

/// Evaluates `objective` on every cell and returns the surface with its
/// minimum. Ties go to the smaller A, then the smaller B.
pub fn grid_search<F>(objective: F, grid: &GridSpec, label: &str, exec: Execution) -> Result<SurfaceReport>
where
    F: Fn(f64, f64) -> Result<f64> + Sync + Send,
{
    grid.validate()?;
    let (na, nb) = (grid.a_count(), grid.b_count());
    let flat = exec.try_map_indexed(na * nb, |k| {
        let (a, b) = (grid.a_at(k / nb), grid.b_at(k % nb));
        let cell_err = |source: Error| Error::Objective { a, b, source: Box::new(source) };
        let v = objective(a, b).map_err(cell_err)?;
        if v.is_nan() {
            return Err(cell_err(Error::Data("objective returned NaN".into())));
        }
        Ok(v)
    })?;
    let mut best = 0usize;
    for (k, v) in flat.iter().enumerate() {
        if *v < flat[best] {
            best = k;
        }
    }
    let values: Vec<Vec<f64>> = flat.chunks(nb).map(<[f64]>::to_vec).collect();
    let (i, j) = (best / nb, best % nb);
    Ok(SurfaceReport {
        grid: *grid,
        label: label.to_string(),
        a_values: grid.a_values(),
        b_values: grid.b_values(),
        values,
        argmin: Argmin { a: grid.a_at(i), b: grid.b_at(j), i, j },
        min_value: flat[best],
    })
}

/// Repeated grid search: after each pass the grid is re-centred on the
/// argmin with half-width two coarse cells and the mesh divided by five,
/// until `final_mesh` is reached. Returns the finest report.
pub fn refine_search<F>(objective: F, grid: &GridSpec, final_mesh: f64, exec: Execution) -> Result<SurfaceReport>
where
    F: Fn(f64, f64) -> Result<f64> + Sync + Send,
{
    const FACTOR: f64 = 5.0;
    if !(final_mesh > 0.0) {
        return Err(Error::InvalidArgument(format!("final mesh must be > 0, got {final_mesh}")));
    }
    let mut report = grid_search(&objective, grid, "expected_cost", exec)?;
    let mut current = *grid;
    while current.mesh > final_mesh * (1.0 + 1e-9) {
        let mesh = (current.mesh / FACTOR).max(final_mesh);
        let half = 2.0 * current.mesh;
        // Stay inside the original window.
        let next = GridSpec::new(
            (report.argmin.a - half).max(grid.a_min),
            (report.argmin.a + half).min(grid.a_max),
            (report.argmin.b - half).max(grid.b_min),
            (report.argmin.b + half).min(grid.b_max),
            mesh,
        )?;
        report = grid_search(&objective, &next, "expected_cost", exec)?;
        current = next;
    }
    Ok(report)
}

/// Which constraint rule fixed part of the hedge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HedgeRule {
    /// Full two-dimensional search.
    Free,
    /// `E[b] ≤ E[a]`: A fixed at 0.
    DayAheadPinned,
    /// `E[c] ≤ E[b]`: B fixed at 0.
    IntraDayPinned,
    /// Both rules apply: (0, 0).
    BothPinned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeChoice {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// Offset-free expected cost `E[C] − E[a]·E[g]` at the choice.
    pub objective: f64,
    pub rule: HedgeRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedPrices {
    pub ea: f64,
    pub eb: f64,
    pub ec: f64,
}

/// How finely [`optimal_parameters_with`] resolves the minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// If set, refine from the grid mesh down to this mesh around the argmin.
    pub refine_to: Option<f64>,
    pub c3_method: C3Method,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { refine_to: None, c3_method: C3Method::Nested }
    }
}

/// Hedge pair minimising expected cost on `grid`, with the constraint rules:
/// A = 0 when `E[b] ≤ E[a]`, B = 0 when `E[c] ≤ E[b]`.
pub fn optimal_parameters(
    prices: ExpectedPrices,
    pg: &ErrorModel,
    ph: &ErrorModel,
    grid: &GridSpec,
    exec: Execution,
) -> Result<HedgeChoice> {
    optimal_parameters_with(prices, pg, ph, grid, SearchOptions::default(), exec)
}

pub fn optimal_parameters_with(
    prices: ExpectedPrices,
    pg: &ErrorModel,
    ph: &ErrorModel,
    grid: &GridSpec,
    options: SearchOptions,
    exec: Execution,
) -> Result<HedgeChoice> {
    grid.validate()?;
    let template = ExpectationInputs {
        ea: prices.ea,
        eb: prices.eb,
        ec: prices.ec,
        eg: 0.0,
        a_offset: 0.0,
        b_offset: 0.0,
        pg: pg.clone(),
        ph: ph.clone(),
    };
    template.validate()?;
    let objective =
        |a: f64, b: f64| expected_total_with(&template.with_offsets(a, b), options.c3_method).map(|e| e.total);

    let pin_a = prices.eb <= prices.ea;
    let pin_b = prices.ec <= prices.eb;
    let (rule, search_grid) = match (pin_a, pin_b) {
        (true, true) => {
            return Ok(HedgeChoice { a: 0.0, b: 0.0, objective: objective(0.0, 0.0)?, rule: HedgeRule::BothPinned });
        }
        (true, false) => (HedgeRule::DayAheadPinned, GridSpec { a_min: 0.0, a_max: 0.0, ..*grid }),
        (false, true) => (HedgeRule::IntraDayPinned, GridSpec { b_min: 0.0, b_max: 0.0, ..*grid }),
        (false, false) => (HedgeRule::Free, *grid),
    };
    let report = match options.refine_to {
        Some(mesh) => refine_search(objective, &search_grid, mesh, exec)?,
        None => grid_search(objective, &search_grid, "expected_cost", exec)?,
    };
    Ok(HedgeChoice { a: report.argmin.a, b: report.argmin.b, objective: report.min_value, rule })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = GridSpec::default();
        assert_eq!((g.a_count(), g.b_count()), (50, 50));
        assert_eq!(g.a_at(25), 0.6);
        assert_eq!(g.b_at(29), -2.0);
        assert_eq!(g.a_at(49), 3.0);
        assert_eq!(g.b_at(49), 0.0);
    }

    #[test]
    fn convex_objective_argmin() {
        let r = grid_search(
            |a, b| Ok((a - 0.6).powi(2) + (b + 2.0).powi(2)),
            &GridSpec::default(),
            "test",
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!((r.argmin.a, r.argmin.b), (0.6, -2.0));
        assert!(r.min_value < 1e-20);
        assert_eq!(r.value_at(r.argmin.i, r.argmin.j), r.min_value);
        assert_eq!(r.values.len(), 50);
        assert!(r.values.iter().all(|row| row.len() == 50));
    }

    #[test]
    fn ties_prefer_smaller_a_then_b() {
        let r = grid_search(|_, _| Ok(1.0), &GridSpec::default(), "flat", Execution::Sequential).unwrap();
        assert_eq!((r.argmin.a, r.argmin.b), (-1.9, -4.9));
        let r = grid_search(|a, _| Ok(a.abs()), &GridSpec::default(), "ridge", Execution::Sequential).unwrap();
        assert_eq!((r.argmin.a, r.argmin.b), (0.0, -4.9));
    }

    #[test]
    fn objective_failure_reports_cell() {
        let err = grid_search(
            |a, b| if a > 1.0 && b > -1.0 { Err(Error::Data("boom".into())) } else { Ok(0.0) },
            &GridSpec::default(),
            "x",
            Execution::Sequential,
        )
        .unwrap_err();
        match err {
            Error::Objective { a, b, .. } => assert!(a > 1.0 && b > -1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_grids() {
        assert!(GridSpec::new(1.0, 0.0, 0.0, 1.0, 0.1).is_err());
        assert!(GridSpec::new(0.0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(GridSpec::new(0.0, 1.0, 0.0, f64::NAN, 0.1).is_err());
        assert!(GridSpec::new(0.0, 1e9, 0.0, 1e9, 1e-3).is_err());
    }

    #[test]
    fn refine_reaches_fine_mesh() {
        let r = refine_search(
            |a, b| Ok((a - 0.537).powi(2) + 2.0 * (b + 1.234).powi(2)),
            &GridSpec::new(-5.0, 5.0, -5.0, 5.0, 0.5).unwrap(),
            0.01,
            Execution::Sequential,
        )
        .unwrap();
        assert!((r.argmin.a - 0.54).abs() < 1e-12, "{}", r.argmin.a);
        assert!((r.argmin.b + 1.23).abs() < 1e-12, "{}", r.argmin.b);
    }

    #[test]
    fn csv_layout() {
        let g = GridSpec::new(0.0, 0.1, -0.1, 0.0, 0.1).unwrap();
        let r = grid_search(|a, b| Ok(a + 10.0 * b), &g, "t", Execution::Sequential).unwrap();
        let csv = r.to_csv_string().unwrap();
        assert_eq!(csv, "A,B,value\n0,-0.1,-1\n0,0,0\n0.1,-0.1,-0.9\n0.1,0,0.1\n");
    }

    #[test]
    fn constraint_rules() {
        let pg = ErrorModel::normal(3f64.sqrt()).unwrap();
        let ph = ErrorModel::normal(2f64.sqrt()).unwrap();
        let grid = GridSpec::default();
        let c = optimal_parameters(ExpectedPrices { ea: 2.0, eb: 1.0, ec: 3.0 }, &pg, &ph, &grid, Execution::Sequential)
            .unwrap();
        assert_eq!((c.a, c.rule), (0.0, HedgeRule::DayAheadPinned));
        let c = optimal_parameters(ExpectedPrices { ea: 1.0, eb: 3.0, ec: 2.0 }, &pg, &ph, &grid, Execution::Sequential)
            .unwrap();
        assert_eq!((c.b, c.rule), (0.0, HedgeRule::IntraDayPinned));
        let c = optimal_parameters(ExpectedPrices { ea: 3.0, eb: 2.0, ec: 1.0 }, &pg, &ph, &grid, Execution::Sequential)
            .unwrap();
        assert_eq!((c.a, c.b, c.rule), (0.0, 0.0, HedgeRule::BothPinned));
    }

    #[test]
    fn rejects_degenerate_models() {
        let bad = ErrorModel::Normal { mean: 0.0, sigma: 0.0 };
        let ok = ErrorModel::normal(1.0).unwrap();
        let prices = ExpectedPrices { ea: 3.0, eb: 2.0, ec: 1.0 };
        assert!(matches!(
            optimal_parameters(prices, &bad, &ok, &GridSpec::default(), Execution::Sequential),
            Err(Error::InvalidArgument(_))
        ));
    }
}
