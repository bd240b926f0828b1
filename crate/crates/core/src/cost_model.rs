//! Realized procurement cost for one delivery period.
//!
//! `g + A` is bought day-ahead at `a`; the intra-day market tops the position
//! up to `h + B` at `b` (nothing is bought if the day-ahead amount already
//! covers it); any shortfall against the realized demand `f` is supplied at
//! the penalty price `c`. Surplus is absorbed without payment.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Demand predictions and the two hedge offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcurementParams {
    /// Previous-day demand prediction.
    pub g: f64,
    /// Same-day demand prediction.
    pub h: f64,
    /// Day-ahead hedge offset.
    #[serde(rename = "A")]
    pub a_offset: f64,
    /// Intra-day hedge offset.
    #[serde(rename = "B")]
    pub b_offset: f64,
}

impl ProcurementParams {
    pub fn new(g: f64, h: f64, a_offset: f64, b_offset: f64) -> Result<Self> {
        let p = Self { g, h, a_offset, b_offset };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("g", self.g)?;
        ensure_finite("h", self.h)?;
        ensure_finite("A", self.a_offset)?;
        ensure_finite("B", self.b_offset)
    }

    /// Day-ahead purchase `g + A`.
    #[inline]
    pub fn day_ahead_amount(&self) -> f64 {
        self.g + self.a_offset
    }

    /// Intra-day target position `h + B`.
    #[inline]
    pub fn intra_day_target(&self) -> f64 {
        self.h + self.b_offset
    }
}

/// Day-ahead, intra-day and penalty unit prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PriceTriple {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let p = Self { a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("price {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Whether `a < b < c` holds.
    pub fn ordered(&self) -> bool {
        self.a < self.b && self.b < self.c
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { a: self.a * factor, b: self.b * factor, c: self.c * factor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub total: f64,
    /// Day-ahead purchase `g + A`.
    pub e1: f64,
    /// Intra-day purchase.
    pub e2: f64,
    /// Energy supplied at the penalty price.
    pub supplemental: f64,
    /// Over-procured energy, absorbed without payment.
    pub surplus: f64,
}

pub fn day_ahead_cost(p: &ProcurementParams, a: f64) -> Result<f64> {
    p.validate()?;
    ensure_finite("a", a)?;
    Ok(p.day_ahead_amount() * a)
}

fn intra_day_amount(p: &ProcurementParams) -> f64 {
    let e1 = p.day_ahead_amount();
    let target = p.intra_day_target();
    if e1 <= target {
        target - e1
    } else {
        0.0
    }
}

pub fn intra_day_cost(p: &ProcurementParams, b: f64) -> Result<f64> {
    p.validate()?;
    ensure_finite("b", b)?;
    Ok(intra_day_amount(p) * b)
}

fn penalty_amount(f: f64, p: &ProcurementParams) -> f64 {
    let e1 = p.day_ahead_amount();
    let target = p.intra_day_target();
    if e1 <= target && target <= f {
        f - target
    } else if target < e1 && e1 <= f {
        f - e1
    } else {
        0.0
    }
}

pub fn penalty_cost(f: f64, p: &ProcurementParams, c: f64) -> Result<f64> {
    p.validate()?;
    ensure_finite("f", f)?;
    ensure_finite("c", c)?;
    Ok(penalty_amount(f, p) * c)
}

/// Full breakdown of the realized cost for demand `f`.
pub fn total_cost(f: f64, p: &ProcurementParams, prices: &PriceTriple) -> Result<CostBreakdown> {
    p.validate()?;
    ensure_finite("f", f)?;
    prices.validate()?;
    let e1 = p.day_ahead_amount();
    if e1 < 0.0 {
        log::warn!("negative day-ahead quantity g + A = {e1}; evaluating as given");
    }
    Ok(breakdown_unchecked(f, p, prices))
}

/// [`total_cost`] without validation, for hot loops whose inputs are
/// finite by construction.
#[inline]
pub(crate) fn breakdown_unchecked(f: f64, p: &ProcurementParams, prices: &PriceTriple) -> CostBreakdown {
    let e1 = p.day_ahead_amount();
    let e2 = intra_day_amount(p);
    let supplemental = penalty_amount(f, p);
    let c1 = e1 * prices.a;
    let c2 = e2 * prices.b;
    let c3 = supplemental * prices.c;
    CostBreakdown {
        c1,
        c2,
        c3,
        total: c1 + c2 + c3,
        e1,
        e2,
        supplemental,
        surplus: (e1 + e2 + supplemental - f).max(0.0),
    }
}

/// Prediction errors `(G, H) = (f - g, f - h)`.
pub fn rewrite_in_errors(f: f64, p: &ProcurementParams) -> Result<(f64, f64)> {
    p.validate()?;
    ensure_finite("f", f)?;
    Ok((f - p.g, f - p.h))
}

/// Intra-day cost written in the prediction errors: `δ(A−B ≤ G−H)(G−H−A+B)·b`.
pub fn intra_day_cost_from_errors(g_err: f64, h_err: f64, a_offset: f64, b_offset: f64, b: f64) -> f64 {
    let d = g_err - h_err;
    if a_offset - b_offset <= d {
        (d - a_offset + b_offset) * b
    } else {
        0.0
    }
}

/// Penalty cost written in the prediction errors:
/// `δ(B ≤ H ≤ G−A+B)(H−B)·c + δ(A ≤ G < H+A−B)(G−A)·c`.
pub fn penalty_cost_from_errors(g_err: f64, h_err: f64, a_offset: f64, b_offset: f64, c: f64) -> f64 {
    let mut cost = 0.0;
    if b_offset <= h_err && h_err <= g_err - a_offset + b_offset {
        cost += (h_err - b_offset) * c;
    }
    if a_offset <= g_err && g_err < h_err + a_offset - b_offset {
        cost += (g_err - a_offset) * c;
    }
    cost
}
