//! Prediction-error laws and reproducible sampling.
//!
//! Variates come from a counter-based ChaCha8 stream keyed by
//! `(seed, stream id, position)`. Every variate consumes exactly one 64-bit
//! word, so the value of the k-th draw on a stream never depends on how the
//! draws were split across workers.

use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian density with mean zero.
pub fn normal_pdf(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be > 0 and finite, got {sigma}")));
    }
    Ok(normal_pdf_unchecked(x, sigma))
}

#[inline]
pub(crate) fn normal_pdf_unchecked(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Gaussian CDF with mean zero, accurate in both tails.
#[inline]
pub fn normal_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * libm::erfc(-x / (sigma * std::f64::consts::SQRT_2))
}

/// Inverse of the standard normal CDF, Wichura's AS241 (PPND16), relative
/// accuracy about 1e-16 on (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const SPLIT1: f64 = 0.425;
    const SPLIT2: f64 = 5.0;
    const CONST1: f64 = 0.180625;
    const CONST2: f64 = 1.6;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= SPLIT1 {
        let r = CONST1 - q * q;
        return q
            * (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
                + 6.726_577_092_700_870_1e4)
                * r
                + 4.592_195_393_154_987_1e4)
                * r
                + 1.373_169_376_550_946_0e4)
                * r
                + 1.971_590_950_306_551_3e3)
                * r
                + 1.331_416_678_917_843_8e2)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5.226_495_278_852_545_4e3 * r + 2.872_908_573_572_194_3e4) * r
                + 3.930_789_580_009_271_1e4)
                * r
                + 2.121_379_430_158_659_7e4)
                * r
                + 5.394_196_021_424_751_1e3)
                * r
                + 6.871_870_074_920_579_1e2)
                * r
                + 4.231_333_070_160_091_1e1)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let value = if r <= SPLIT2 {
        r -= CONST2;
        (((((((7.745_450_142_783_414_1e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506_1e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_344_9e-4) * r
                + 1.519_866_656_361_645_7e-2)
                * r
                + 1.481_039_764_274_800_7e-1)
                * r
                + 6.897_673_349_851_000_0e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_758_8)
                * r
                + 1.0)
    } else {
        r -= SPLIT2;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446_0e-7) * r
                + 1.846_318_317_510_054_7e-5)
                * r
                + 7.868_691_311_456_132_6e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358_1e-1)
                * r
                + 5.998_322_065_558_879_8e-1)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Counter-based random stream keyed by `(seed, stream id)`.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Stream positioned so that the next variate is draw number `index`.
    pub fn at(seed: u64, stream: u64, index: u64) -> Self {
        let mut s = Self::new(seed, stream);
        s.seek(index);
        s
    }

    /// Moves to variate `index` (one variate = one 64-bit word = two ChaCha words).
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(u128::from(index) * 2);
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    #[inline]
    pub fn next_open_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate by inverse-CDF transform.
    #[inline]
    pub fn next_standard_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_open_unit())
    }
}

/// Law of a demand-prediction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ErrorModel {
    Normal { mean: f64, sigma: f64 },
    /// Resampled from observed errors; sampling only (no density).
    Empirical { samples: Vec<f64> },
}

impl ErrorModel {
    /// Zero-mean normal error with standard deviation `sigma`.
    pub fn normal(sigma: f64) -> Result<Self> {
        let m = ErrorModel::Normal { mean: 0.0, sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn normal_from_variance(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!("variance must be > 0 and finite, got {variance}")));
        }
        Self::normal(variance.sqrt())
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        let m = ErrorModel::Empirical { samples };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ErrorModel::Normal { mean, sigma } => {
                if !mean.is_finite() {
                    return Err(Error::InvalidArgument(format!("mean must be finite, got {mean}")));
                }
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::InvalidArgument(format!("sigma must be > 0 and finite, got {sigma}")));
                }
                Ok(())
            }
            ErrorModel::Empirical { samples } => {
                if samples.len() < 2 {
                    return Err(Error::InvalidArgument("empirical model needs at least 2 samples".into()));
                }
                if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument(format!("empirical sample {bad} is not finite")));
                }
                Ok(())
            }
        }
    }

    /// False for sampling-only models.
    pub fn has_density(&self) -> bool {
        matches!(self, ErrorModel::Normal { .. })
    }

    /// `(mean, sigma)` for normal models.
    pub fn as_normal(&self) -> Option<(f64, f64)> {
        match *self {
            ErrorModel::Normal { mean, sigma } => Some((mean, sigma)),
            ErrorModel::Empirical { .. } => None,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ErrorModel::Normal { sigma, .. } => sigma * sigma,
            ErrorModel::Empirical { samples } => {
                let s: crate::stats::RunningStats = samples.iter().copied().collect();
                s.unbiased_variance()
            }
        }
    }

    /// One variate; consumes exactly one word of `stream`.
    #[inline]
    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match self {
            ErrorModel::Normal { mean, sigma } => mean + sigma * stream.next_standard_normal(),
            ErrorModel::Empirical { samples } => {
                let idx = (stream.next_open_unit() * samples.len() as f64) as usize;
                samples[idx.min(samples.len() - 1)]
            }
        }
    }
}

/// Law of `D = G − H` for independent `G` and `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DifferenceModel {
    Normal { mean: f64, variance: f64 },
    /// Drawn as `G − H` from the two component models.
    SamplingOnly { g: ErrorModel, h: ErrorModel },
}

impl DifferenceModel {
    pub fn sigma(&self) -> Option<f64> {
        match self {
            DifferenceModel::Normal { variance, .. } => Some(variance.sqrt()),
            DifferenceModel::SamplingOnly { .. } => None,
        }
    }

    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match self {
            DifferenceModel::Normal { mean, variance } => mean + variance.sqrt() * stream.next_standard_normal(),
            DifferenceModel::SamplingOnly { g, h } => {
                let x = g.sample(stream);
                x - h.sample(stream)
            }
        }
    }
}

/// Law of `G − H` assuming independence.
pub fn difference_model(pg: &ErrorModel, ph: &ErrorModel) -> Result<DifferenceModel> {
    pg.validate()?;
    ph.validate()?;
    Ok(match (pg, ph) {
        (ErrorModel::Normal { mean: m1, sigma: s1 }, ErrorModel::Normal { mean: m2, sigma: s2 }) => {
            DifferenceModel::Normal { mean: m1 - m2, variance: s1 * s1 + s2 * s2 }
        }
        _ => DifferenceModel::SamplingOnly { g: pg.clone(), h: ph.clone() },
    })
}
