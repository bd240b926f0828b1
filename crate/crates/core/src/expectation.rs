//! Expected procurement cost by quadrature, and Monte Carlo estimates of its
//! mean and variance.
//!
//! Quadrature truncates every Gaussian domain at ±10σ around the mean. The
//! penalty term is a double integral; [`C3Method::Nested`] evaluates it as an
//! adaptive integral of adaptive integrals, [`C3Method::SemiAnalytic`]
//! replaces the inner integral by its closed form (the outer one stays
//! adaptive). Both agree to well below the reported precision.

use serde::{Deserialize, Serialize};

use crate::cost_model::{breakdown_unchecked, PriceTriple, ProcurementParams};
use crate::distributions::{difference_model, normal_cdf, DifferenceModel, ErrorModel, RandomStream};
use crate::error::{ensure_finite, Error, Result};
use crate::exec::Execution;
use crate::quadrature::adaptive_simpson;
use crate::stats::RunningStats;

/// Gaussian domains are cut at this many standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 10.0;
pub const OUTER_TOLERANCE: f64 = 1e-9;
pub const INNER_TOLERANCE: f64 = 1e-10;
/// Draws per Monte Carlo work item. Fixed so results do not depend on the
/// number of workers.
pub const MC_CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C3Method {
    #[default]
    Nested,
    SemiAnalytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationInputs {
    pub ea: f64,
    pub eb: f64,
    pub ec: f64,
    /// Expected previous-day prediction; equals `f` under mean-zero errors.
    /// Set to 0 for offset-free objectives.
    pub eg: f64,
    #[serde(rename = "A")]
    pub a_offset: f64,
    #[serde(rename = "B")]
    pub b_offset: f64,
    pub pg: ErrorModel,
    pub ph: ErrorModel,
}

impl ExpectationInputs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("E[a]", self.ea), ("E[b]", self.eb), ("E[c]", self.ec)] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        ensure_finite("E[g]", self.eg)?;
        ensure_finite("A", self.a_offset)?;
        ensure_finite("B", self.b_offset)?;
        self.pg.validate()?;
        self.ph.validate()
    }

    pub fn with_offsets(&self, a_offset: f64, b_offset: f64) -> Self {
        Self { a_offset, b_offset, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCost {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy)]
struct Gaussian {
    mean: f64,
    sigma: f64,
}

impl Gaussian {
    fn from_model(model: &ErrorModel) -> Result<Self> {
        model.validate()?;
        match model.as_normal() {
            Some((mean, sigma)) => Ok(Self { mean, sigma }),
            None => Err(Error::UnsupportedPath(
                "quadrature needs a density; use monte_carlo for empirical error models".into(),
            )),
        }
    }

    #[inline]
    fn pdf(&self, x: f64) -> f64 {
        crate::distributions::normal_pdf_unchecked(x - self.mean, self.sigma)
    }

    #[inline]
    fn cdf(&self, x: f64) -> f64 {
        normal_cdf(x - self.mean, self.sigma)
    }

    fn lo(&self) -> f64 {
        self.mean - TRUNCATION_SIGMAS * self.sigma
    }

    fn hi(&self) -> f64 {
        self.mean + TRUNCATION_SIGMAS * self.sigma
    }

    /// `∫_l^u (x − shift)·pdf(x) dx` in closed form.
    fn shifted_first_moment(&self, l: f64, u: f64, shift: f64) -> f64 {
        if !(u > l) {
            return 0.0;
        }
        let var = self.sigma * self.sigma;
        var * (self.pdf(l) - self.pdf(u)) + (self.mean - shift) * (self.cdf(u) - self.cdf(l))
    }
}

/// `E[a]·(E[g] + A)`.
pub fn expected_c1(ea: f64, eg: f64, a_offset: f64) -> f64 {
    ea * (eg + a_offset)
}

/// Closed form `E[b]·E[(D − (A − B))⁺]` for a normal difference law.
pub fn expected_c2(eb: f64, a_offset: f64, b_offset: f64, diff: &DifferenceModel) -> Result<f64> {
    let (mean, sigma) = normal_difference(diff)?;
    if eb == 0.0 {
        return Ok(0.0);
    }
    let k = a_offset - b_offset;
    let z = (k - mean) / sigma;
    let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
    Ok(eb * (sigma * phi + (mean - k) * tail))
}

/// Direct quadrature of `E[b]·∫_{A−B}^∞ (x − A + B) P_{G−H}(x) dx`.
pub fn expected_c2_quadrature(eb: f64, a_offset: f64, b_offset: f64, diff: &DifferenceModel) -> Result<f64> {
    let (mean, sigma) = normal_difference(diff)?;
    let d = Gaussian { mean, sigma };
    let k = a_offset - b_offset;
    let integrand = |x: f64| (x - k) * d.pdf(x);
    let (lo, hi) = (k.max(d.lo()), d.hi());
    let rough = adaptive_simpson(integrand, lo, hi, OUTER_TOLERANCE);
    // Second pass at a tolerance relative to the value, for deep tails.
    let tol = OUTER_TOLERANCE.min(1e-11 * rough.abs());
    let integral = if tol > 0.0 && tol < OUTER_TOLERANCE { adaptive_simpson(integrand, lo, hi, tol) } else { rough };
    Ok(eb * integral)
}

fn normal_difference(diff: &DifferenceModel) -> Result<(f64, f64)> {
    match *diff {
        DifferenceModel::Normal { mean, variance } if variance > 0.0 => Ok((mean, variance.sqrt())),
        DifferenceModel::Normal { variance, .. } => {
            Err(Error::InvalidArgument(format!("difference variance must be > 0, got {variance}")))
        }
        DifferenceModel::SamplingOnly { .. } => Err(Error::UnsupportedPath(
            "quadrature needs a density; use monte_carlo for empirical error models".into(),
        )),
    }
}

/// Expected penalty cost, the sum of the two double integrals over the
/// shortfall regions where the intra-day target or the day-ahead amount
/// binds.
pub fn expected_c3(ec: f64, a_offset: f64, b_offset: f64, pg: &ErrorModel, ph: &ErrorModel) -> Result<f64> {
    expected_c3_with(ec, a_offset, b_offset, pg, ph, C3Method::Nested)
}

pub fn expected_c3_with(
    ec: f64,
    a_offset: f64,
    b_offset: f64,
    pg: &ErrorModel,
    ph: &ErrorModel,
    method: C3Method,
) -> Result<f64> {
    let g = Gaussian::from_model(pg)?;
    let h = Gaussian::from_model(ph)?;
    if ec == 0.0 {
        return Ok(0.0);
    }
    // Shortfall covered at the penalty price when the intra-day target binds:
    // ∫_A^∞ P_G(y) ∫_B^{y−A+B} (x − B) P_H(x) dx dy.
    let target_binds = shortfall_term(g, h, a_offset, b_offset, method);
    // Same with the roles of (G, A) and (H, B) exchanged.
    let day_ahead_binds = shortfall_term(h, g, b_offset, a_offset, method);
    Ok(ec * (target_binds + day_ahead_binds))
}

/// `∫_{own}^∞ P_outer(y) ∫_{other}^{y − own + other} (x − other) P_inner(x) dx dy`.
fn shortfall_term(outer: Gaussian, inner: Gaussian, own: f64, other: f64, method: C3Method) -> f64 {
    let y_lo = own.max(outer.lo());
    let y_hi = outer.hi();
    let x_lo = other.max(inner.lo());
    let x_cap = inner.hi();
    match method {
        C3Method::Nested => adaptive_simpson(
            |y| {
                let x_hi = (y - own + other).min(x_cap);
                let inner_value = adaptive_simpson(|x| (x - other) * inner.pdf(x), x_lo, x_hi, INNER_TOLERANCE);
                inner_value * outer.pdf(y)
            },
            y_lo,
            y_hi,
            OUTER_TOLERANCE,
        ),
        C3Method::SemiAnalytic => adaptive_simpson(
            |y| {
                let x_hi = (y - own + other).min(x_cap);
                inner.shifted_first_moment(x_lo, x_hi, other) * outer.pdf(y)
            },
            y_lo,
            y_hi,
            OUTER_TOLERANCE,
        ),
    }
}

/// `E[C] = E[C1] + E[C2] + E[C3]` with the default (nested) penalty quadrature.
pub fn expected_total(inputs: &ExpectationInputs) -> Result<ExpectedCost> {
    expected_total_with(inputs, C3Method::Nested)
}

pub fn expected_total_with(inputs: &ExpectationInputs, method: C3Method) -> Result<ExpectedCost> {
    inputs.validate()?;
    let diff = difference_model(&inputs.pg, &inputs.ph)?;
    let c1 = expected_c1(inputs.ea, inputs.eg, inputs.a_offset);
    let c2 = expected_c2(inputs.eb, inputs.a_offset, inputs.b_offset, &diff)?;
    let c3 = expected_c3_with(inputs.ec, inputs.a_offset, inputs.b_offset, &inputs.pg, &inputs.ph, method)?;
    Ok(ExpectedCost { c1, c2, c3, total: c1 + c2 + c3 })
}

/// Setup for simulating realized costs: demand, realized prices, hedges and
/// error laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McInputs {
    pub f: f64,
    pub prices: PriceTriple,
    #[serde(rename = "A")]
    pub a_offset: f64,
    #[serde(rename = "B")]
    pub b_offset: f64,
    pub pg: ErrorModel,
    pub ph: ErrorModel,
}

impl McInputs {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("f", self.f)?;
        self.prices.validate()?;
        ensure_finite("A", self.a_offset)?;
        ensure_finite("B", self.b_offset)?;
        self.pg.validate()?;
        self.ph.validate()
    }

    pub fn with_offsets(&self, a_offset: f64, b_offset: f64) -> Self {
        Self { a_offset, b_offset, ..self.clone() }
    }

    /// Realized cost of draw `index` on `stream`. Draw `i` uses variates
    /// `2i` (G) and `2i + 1` (H).
    #[inline]
    fn draw(&self, rng: &mut RandomStream) -> f64 {
        let g_err = self.pg.sample(rng);
        let h_err = self.ph.sample(rng);
        let params = ProcurementParams { g: self.f - g_err, h: self.f - h_err, a_offset: self.a_offset, b_offset: self.b_offset };
        breakdown_unchecked(self.f, &params, &self.prices).total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub unbiased_variance: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
    pub stream: u64,
}

fn chunk_count(n: u64) -> usize {
    n.div_ceil(MC_CHUNK) as usize
}

fn chunk_range(n: u64, chunk: usize) -> (u64, u64) {
    let start = chunk as u64 * MC_CHUNK;
    (start, (start + MC_CHUNK).min(n))
}

fn check_mc(inputs: &McInputs, n: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Monte Carlo needs n >= 2, got {n}")));
    }
    inputs.validate()
}

#[inline]
fn chunk_stats(inputs: &McInputs, seed: u64, stream: u64, start: u64, end: u64) -> RunningStats {
    let mut rng = RandomStream::at(seed, stream, 2 * start);
    let mut acc = RunningStats::new();
    for _ in start..end {
        acc.push(inputs.draw(&mut rng));
    }
    acc
}

/// Mean and unbiased variance of `n` simulated realized costs.
///
/// Bit-identical for a fixed `(seed, stream)` under any execution mode or
/// worker count.
pub fn monte_carlo(inputs: &McInputs, n: u64, seed: u64, stream: u64, exec: Execution) -> Result<McEstimate> {
    check_mc(inputs, n)?;
    let parts = exec.map_indexed(chunk_count(n), |chunk| {
        let (start, end) = chunk_range(n, chunk);
        chunk_stats(inputs, seed, stream, start, end)
    });
    let stats = RunningStats::merge_tree(&parts);
    let var = stats.unbiased_variance();
    Ok(McEstimate {
        mean: stats.mean,
        unbiased_variance: var,
        std_error: (var / n as f64).sqrt(),
        n,
        seed,
        stream,
    })
}

/// The individual realized costs behind [`monte_carlo`], in draw order.
pub fn sample_costs(inputs: &McInputs, n: u64, seed: u64, stream: u64, exec: Execution) -> Result<Vec<f64>> {
    check_mc(inputs, n)?;
    let parts = exec.map_indexed(chunk_count(n), |chunk| {
        let (start, end) = chunk_range(n, chunk);
        let mut rng = RandomStream::at(seed, stream, 2 * start);
        (start..end).map(|_| inputs.draw(&mut rng)).collect::<Vec<f64>>()
    });
    Ok(parts.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub count: u64,
    /// Sum of the samples in the bin.
    pub sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Contiguous bins from the lowest to the highest occupied one.
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn mean(&self) -> f64 {
        self.bins.iter().map(|b| b.sum).sum::<f64>() / self.total() as f64
    }

    /// `(bin_low, count)` pairs.
    pub fn counts(&self) -> Vec<(f64, u64)> {
        self.bins.iter().map(|b| (b.low, b.count)).collect()
    }
}

/// Fixed-width histogram with left-closed, right-open bins aligned on
/// multiples of `bin_width`.
pub fn histogram(samples: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::InvalidArgument(format!("bin width must be > 0, got {bin_width}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("histogram needs at least one sample".into()));
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("sample {bad} is not finite")));
    }
    let index = |x: f64| (x / bin_width).floor() as i64;
    let lo = samples.iter().map(|&x| index(x)).min().unwrap_or(0);
    let hi = samples.iter().map(|&x| index(x)).max().unwrap_or(0);
    let mut bins: Vec<HistogramBin> = (lo..=hi)
        .map(|i| HistogramBin { low: i as f64 * bin_width, count: 0, sum: 0.0 })
        .collect();
    for &x in samples {
        let bin = &mut bins[(index(x) - lo) as usize];
        bin.count += 1;
        bin.sum += x;
    }
    Ok(Histogram { bin_width, bins })
}
