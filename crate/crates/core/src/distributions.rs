//! Fitness and threshold laws.
//!
//! Every family is handled through its hazard transform `R(x) = -ln F̄(x)`
//! and the inverse of that transform. Survival probabilities, inverse
//! survival and all samplers are derived from the pair, which keeps
//! conditional draws far into the tail free of cancellation.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite_positive, Error, Result};
use crate::rng::RandomStream;

/// Survival values below this are reported as [`Error::SurvivalUnderflow`].
pub const SURVIVAL_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
    Pareto { minimum: f64, index: f64 },
    TabulatedQuantile(TabulatedQuantile),
}

/// Quantile table `(u, x)` with `x = F̄⁻¹(u)`.
///
/// Between nodes `x` is linear in `ln u` (equivalently the hazard transform is
/// piecewise linear in `x`), so exponential laws are reproduced exactly. Past
/// the last node the final segment is extended, which keeps the support
/// unbounded; [`DistributionSpec::tail_extrapolated`] reports this.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedQuantile {
    u: Vec<f64>,
    x: Vec<f64>,
    hazard: Vec<f64>,
}

impl TabulatedQuantile {
    pub fn new(grid: Vec<(f64, f64)>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidDistribution("tabulated quantile grid needs at least two points".into()));
        }
        let (u, x): (Vec<f64>, Vec<f64>) = grid.into_iter().unzip();
        if u[0] != 1.0 {
            return Err(Error::InvalidDistribution(format!("tabulated grid must start at u = 1, got {}", u[0])));
        }
        if !(x[0].is_finite() && x[0] >= 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "tabulated grid support must start at x >= 0, got {}",
                x[0]
            )));
        }
        for i in 1..u.len() {
            if !(u[i] > 0.0 && u[i] < u[i - 1]) {
                return Err(Error::InvalidDistribution(format!("u must be strictly decreasing in (0, 1] (row {i})")));
            }
            if !(x[i].is_finite() && x[i] > x[i - 1]) {
                return Err(Error::InvalidDistribution(format!("x must be strictly increasing (row {i})")));
            }
        }
        let hazard = u.iter().map(|v| -v.ln()).collect();
        Ok(Self { u, x, hazard })
    }

    /// Reads a headerless or headed two-column CSV `(u, x)`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut grid = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if record.len() != 2 {
                return Err(Error::Parse(format!("row {row}: expected two columns (u, x), got {}", record.len())));
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => grid.push((v[0], v[1])),
                // tolerate a single header line
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("row {row}: {e}"))),
            }
        }
        Self::new(grid)
    }

    pub fn grid(&self) -> Vec<(f64, f64)> {
        self.u.iter().copied().zip(self.x.iter().copied()).collect()
    }

    fn last_slope(&self) -> f64 {
        let n = self.x.len();
        (self.hazard[n - 1] - self.hazard[n - 2]) / (self.x[n - 1] - self.x[n - 2])
    }

    fn hazard(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return 0.0;
        }
        if x >= self.x[n - 1] {
            return self.hazard[n - 1] + self.last_slope() * (x - self.x[n - 1]);
        }
        let i = self.x.partition_point(|&v| v <= x) - 1;
        let w = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        self.hazard[i] + w * (self.hazard[i + 1] - self.hazard[i])
    }

    fn inverse_hazard(&self, h: f64) -> f64 {
        let n = self.x.len();
        if h <= 0.0 {
            return self.x[0];
        }
        if h >= self.hazard[n - 1] {
            return self.x[n - 1] + (h - self.hazard[n - 1]) / self.last_slope();
        }
        let i = self.hazard.partition_point(|&v| v <= h) - 1;
        let w = (h - self.hazard[i]) / (self.hazard[i + 1] - self.hazard[i]);
        self.x[i] + w * (self.x[i + 1] - self.x[i])
    }

    fn hazard_rate(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x < self.x[0] {
            return 0.0;
        }
        if x >= self.x[n - 1] {
            return self.last_slope();
        }
        let i = self.x.partition_point(|&v| v <= x) - 1;
        (self.hazard[i + 1] - self.hazard[i]) / (self.x[i + 1] - self.x[i])
    }
}

/// Growth class of the hazard transform far in the tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    /// `R(x) ≈ c0 + c1 · x^k`
    Power(f64),
    /// `R(x) ≈ c0 + c1 · ln x`
    Log,
}

/// Exact tail form `R(x) = offset + coef · g(x)` for `x >= valid_from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailHazard {
    pub offset: f64,
    pub coef: f64,
    pub growth: Growth,
    pub valid_from: f64,
}

/// A continuous law on `[support_lower, ∞)` with unbounded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyConfig", into = "FamilyConfig")]
pub struct DistributionSpec {
    family: Family,
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        ensure_finite_positive("exponential rate", rate)?;
        Ok(Self { family: Family::Exponential { rate } })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        ensure_finite_positive("weibull shape", shape)?;
        ensure_finite_positive("weibull scale", scale)?;
        Ok(Self { family: Family::Weibull { shape, scale } })
    }

    pub fn pareto(minimum: f64, index: f64) -> Result<Self> {
        // minimum = 0 would give F̄ ≡ 0 above the origin
        ensure_finite_positive("pareto minimum", minimum)?;
        ensure_finite_positive("pareto index", index)?;
        Ok(Self { family: Family::Pareto { minimum, index } })
    }

    pub fn tabulated(grid: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Self { family: Family::TabulatedQuantile(TabulatedQuantile::new(grid)?) })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn support_lower(&self) -> f64 {
        match &self.family {
            Family::Exponential { .. } | Family::Weibull { .. } => 0.0,
            Family::Pareto { minimum, .. } => *minimum,
            Family::TabulatedQuantile(t) => t.x[0],
        }
    }

    /// Points where the hazard rate may jump: the tabulated grid, or the Pareto minimum.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.family {
            Family::Exponential { .. } | Family::Weibull { .. } => Vec::new(),
            Family::Pareto { minimum, .. } => vec![*minimum],
            Family::TabulatedQuantile(t) => t.x.clone(),
        }
    }

    /// True when the upper tail is an extrapolation rather than a model fact.
    pub fn tail_extrapolated(&self) -> bool {
        matches!(self.family, Family::TabulatedQuantile(_))
    }

    pub fn is_parametric(&self) -> bool {
        !self.tail_extrapolated()
    }

    /// `F̄(x)`; exactly 1 at or below the support's lower end.
    pub fn survival(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        let s = (-self.hazard(x)).exp();
        if s < SURVIVAL_FLOOR {
            return Err(Error::SurvivalUnderflow { x, floor: SURVIVAL_FLOOR });
        }
        Ok(s)
    }

    /// `F̄⁻¹(u) = inf{x : F̄(x) <= u}` for `u` in (0, 1].
    pub fn inverse_survival(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::InvalidArgument(format!("inverse survival needs u in (0, 1], got {u}")));
        }
        Ok(self.inverse_hazard(-u.ln()))
    }

    /// `R(x) = -ln F̄(x)`.
    pub fn hazard_transform(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.hazard(x))
    }

    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        self.inverse_hazard(-rng.uniform().ln())
    }

    /// Draw from the law conditioned on exceeding `lower`.
    ///
    /// Equal in law to `inverse_survival(U · F̄(lower))`; evaluated as
    /// `R⁻¹(R(lower) - ln U)` so that small survival values lose no digits.
    pub fn sample_conditional_above(&self, lower: f64, rng: &mut RandomStream) -> Result<f64> {
        check_x(lower)?;
        let base = self.hazard(lower);
        if (-base).exp() < SURVIVAL_FLOOR {
            return Err(Error::SurvivalUnderflow { x: lower, floor: SURVIVAL_FLOOR });
        }
        Ok(self.inverse_hazard(base - rng.uniform().ln()))
    }

    /// Hazard transform without input validation (`x` below the support maps to 0).
    pub fn hazard(&self, x: f64) -> f64 {
        match &self.family {
            Family::Exponential { rate } => rate * x.max(0.0),
            Family::Weibull { shape, scale } => (x.max(0.0) / scale).powf(*shape),
            Family::Pareto { minimum, index } => {
                if x <= *minimum {
                    0.0
                } else {
                    index * (x / minimum).ln()
                }
            }
            Family::TabulatedQuantile(t) => t.hazard(x),
        }
    }

    /// Inverse of the hazard transform for `h >= 0`.
    pub fn inverse_hazard(&self, h: f64) -> f64 {
        let h = h.max(0.0);
        match &self.family {
            Family::Exponential { rate } => h / rate,
            Family::Weibull { shape, scale } => scale * h.powf(1.0 / shape),
            Family::Pareto { minimum, index } => minimum * (h / index).exp(),
            Family::TabulatedQuantile(t) => t.inverse_hazard(h),
        }
    }

    /// Density of the hazard measure, `R'(x)`.
    pub fn hazard_rate(&self, x: f64) -> f64 {
        match &self.family {
            Family::Exponential { rate } => *rate,
            Family::Weibull { shape, scale } => {
                if x <= 0.0 {
                    if *shape < 1.0 {
                        f64::INFINITY
                    } else if *shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    }
                } else {
                    shape / scale * (x / scale).powf(shape - 1.0)
                }
            }
            Family::Pareto { minimum, index } => {
                if x < *minimum {
                    0.0
                } else {
                    index / x
                }
            }
            Family::TabulatedQuantile(t) => t.hazard_rate(x),
        }
    }

    pub fn tail_hazard(&self) -> TailHazard {
        match &self.family {
            Family::Exponential { rate } => {
                TailHazard { offset: 0.0, coef: *rate, growth: Growth::Power(1.0), valid_from: 0.0 }
            }
            Family::Weibull { shape, scale } => {
                TailHazard { offset: 0.0, coef: scale.powf(-shape), growth: Growth::Power(*shape), valid_from: 0.0 }
            }
            Family::Pareto { minimum, index } => {
                TailHazard { offset: -index * minimum.ln(), coef: *index, growth: Growth::Log, valid_from: *minimum }
            }
            Family::TabulatedQuantile(t) => {
                let n = t.x.len();
                let slope = t.last_slope();
                TailHazard {
                    offset: t.hazard[n - 1] - slope * t.x[n - 1],
                    coef: slope,
                    growth: Growth::Power(1.0),
                    valid_from: t.x[n - 1],
                }
            }
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("x must be finite and >= 0, got {x}")));
    }
    if x.is_infinite() {
        return Err(Error::InvalidArgument("x must be finite".into()));
    }
    Ok(())
}

/// JSON form: `{"family":"exponential","rate":1.0}` and friends.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilyConfig {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
    Pareto { minimum: f64, index: f64 },
    Tabulated { grid: Vec<(f64, f64)> },
}

impl TryFrom<FamilyConfig> for DistributionSpec {
    type Error = Error;

    fn try_from(cfg: FamilyConfig) -> Result<Self> {
        match cfg {
            FamilyConfig::Exponential { rate } => Self::exponential(rate),
            FamilyConfig::Weibull { shape, scale } => Self::weibull(shape, scale),
            FamilyConfig::Pareto { minimum, index } => Self::pareto(minimum, index),
            FamilyConfig::Tabulated { grid } => Self::tabulated(grid),
        }
    }
}

impl From<DistributionSpec> for FamilyConfig {
    fn from(d: DistributionSpec) -> Self {
        match d.family {
            Family::Exponential { rate } => FamilyConfig::Exponential { rate },
            Family::Weibull { shape, scale } => FamilyConfig::Weibull { shape, scale },
            Family::Pareto { minimum, index } => FamilyConfig::Pareto { minimum, index },
            Family::TabulatedQuantile(t) => FamilyConfig::Tabulated { grid: t.grid() },
        }
    }
}

/// Rates and marks of the birth and extinction streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    /// Birth rate λ★.
    pub lambda_birth: f64,
    /// Extinction rate λ†.
    pub lambda_extinct: f64,
    /// Fitness law F★.
    pub fitness: DistributionSpec,
    /// Threshold law F†.
    pub threshold: DistributionSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    lambda_birth: f64,
    lambda_extinct: f64,
    fitness: DistributionSpec,
    threshold: DistributionSpec,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.lambda_birth, raw.lambda_extinct, raw.fitness, raw.threshold)
    }
}

impl ModelParams {
    pub fn new(
        lambda_birth: f64,
        lambda_extinct: f64,
        fitness: DistributionSpec,
        threshold: DistributionSpec,
    ) -> Result<Self> {
        ensure_finite_positive("lambda_birth", lambda_birth)?;
        ensure_finite_positive("lambda_extinct", lambda_extinct)?;
        Ok(Self { lambda_birth, lambda_extinct, fitness, threshold })
    }

    /// Exponential fitness (rate `alpha_star`) and thresholds (rate `alpha_dagger`).
    pub fn exponential(alpha_star: f64, alpha_dagger: f64, lambda_birth: f64, lambda_extinct: f64) -> Result<Self> {
        Self::new(
            lambda_birth,
            lambda_extinct,
            DistributionSpec::exponential(alpha_star)?,
            DistributionSpec::exponential(alpha_dagger)?,
        )
    }

    /// Births and extinctions exchanged: `(λ★, F★) ↔ (λ†, F†)`.
    pub fn swapped(&self) -> Self {
        Self {
            lambda_birth: self.lambda_extinct,
            lambda_extinct: self.lambda_birth,
            fitness: self.threshold.clone(),
            threshold: self.fitness.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}
