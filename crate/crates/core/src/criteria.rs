//! Recurrence and limit-count criteria, Laplace transforms of `M` and `N`, and
//! exact laws for exponential marks.
//!
//! All integrals are taken in u-space, `∫₀¹ g(u) du/u`, where the only
//! singularity sits at `u = 0`. The N-side quantities are the M-side ones for
//! the role-swapped parameters.

use std::io::Write;

use serde::Serialize;

use crate::asymptotics::psi_asymptotics;
use crate::distributions::{Family, ModelParams};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_half_line, integrate_hazard_form, LadderIntegral, QuadratureConfig};

pub use crate::quadrature::IntegralValue;

/// `ψ(u) = F̄†(F̄★⁻¹(u))`.
pub fn psi(params: &ModelParams, u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::InvalidArgument(format!("psi needs u in (0, 1], got {u}")));
    }
    Ok(psi_unchecked(params, u))
}

fn psi_unchecked(params: &ModelParams, u: f64) -> f64 {
    let x = params.fitness.inverse_hazard(-u.ln());
    (-params.threshold.hazard(x)).exp()
}

/// Kinks of either law mapped to `u = F̄★(x)`, ascending, inside (0, 1).
fn u_kinks(params: &ModelParams) -> Vec<f64> {
    let mut u: Vec<f64> = params
        .fitness
        .kinks()
        .into_iter()
        .chain(params.threshold.kinks())
        .map(|x| (-params.fitness.hazard(x)).exp())
        .filter(|&u| u > 0.0 && u < 1.0)
        .collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

/// `ψ̄(u) = F̄★(F̄†⁻¹(u))`.
pub fn psi_bar(params: &ModelParams, u: f64) -> Result<f64> {
    psi(&params.swapped(), u)
}

/// `E[M] = (λ†/λ★) ∫₀¹ ψ(u)/u² du` with its evidence trail.
pub fn expected_m(params: &ModelParams, cfg: &QuadratureConfig) -> LadderIntegral {
    let mut r = integrate_hazard_form(|u| psi_unchecked(params, u) / u, &u_kinks(params), cfg);
    r.value = r.value.scaled(params.lambda_extinct / params.lambda_birth);
    r
}

/// `E[N]`: `expected_m` with the roles swapped.
pub fn expected_n(params: &ModelParams, cfg: &QuadratureConfig) -> LadderIntegral {
    expected_m(&params.swapped(), cfg)
}

/// `φ(t)`; `t = f64::INFINITY` gives `φ(∞)` and `t = 0` gives 0.
pub fn phi(params: &ModelParams, t: f64, cfg: &QuadratureConfig) -> Result<LadderIntegral> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("phi needs t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(LadderIntegral { value: IntegralValue::Finite(0.0), evidence: Vec::new() });
    }
    let c = if t.is_infinite() { 1.0 } else { -(-t).exp_m1() };
    let (lb, le) = (params.lambda_birth, params.lambda_extinct);
    Ok(integrate_hazard_form(
        |u| {
            let a = le * c * psi_unchecked(params, u);
            a / (lb * u + a)
        },
        &u_kinks(params),
        cfg,
    ))
}

/// `φ̄(t)`: `phi` with the roles swapped.
pub fn phi_bar(params: &ModelParams, t: f64, cfg: &QuadratureConfig) -> Result<LadderIntegral> {
    phi(&params.swapped(), t, cfg)
}

fn laplace_from_phi(phi: IntegralValue) -> IntegralValue {
    match phi {
        IntegralValue::Finite(v) => IntegralValue::Finite((-v).exp()),
        IntegralValue::Infinite => IntegralValue::Finite(0.0),
        IntegralValue::Inconclusive => IntegralValue::Inconclusive,
    }
}

/// `E[e^{-tM}] = exp(-φ(t))`.
pub fn laplace_m(params: &ModelParams, t: f64, cfg: &QuadratureConfig) -> Result<IntegralValue> {
    Ok(laplace_from_phi(phi(params, t, cfg)?.value))
}

/// `E[e^{-tN}] = exp(-φ̄(t))`.
pub fn laplace_n(params: &ModelParams, t: f64, cfg: &QuadratureConfig) -> Result<IntegralValue> {
    laplace_m(&params.swapped(), t, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionEvidence {
    pub e_m: Vec<f64>,
    pub e_n: Vec<f64>,
    pub phi_inf: Vec<f64>,
    pub phi_bar_inf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionIntegrals {
    pub e_m: IntegralValue,
    pub e_n: IntegralValue,
    pub phi_inf: IntegralValue,
    pub phi_bar_inf: IntegralValue,
    pub evidence: CriterionEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Recurrence {
    Transient,
    Recurrent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LimitCount {
    Finite,
    Infinite,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    AnalyticExponent,
    NumericCauchy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub recurrence: Recurrence,
    pub limit_count: LimitCount,
    pub method: Method,
    pub null_recurrent_like: bool,
    pub integrals: CriterionIntegrals,
}

impl ClassificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Classifies with the exact tail exponent when both laws are built-in
/// families, and from the quadrature verdicts otherwise.
pub fn classify(params: &ModelParams) -> ClassificationReport {
    classify_with(params, &QuadratureConfig::default(), false)
}

/// `force_numeric` skips the analytic short-cut.
pub fn classify_with(params: &ModelParams, cfg: &QuadratureConfig, force_numeric: bool) -> ClassificationReport {
    let em = expected_m(params, cfg);
    let en = expected_n(params, cfg);
    let pinf = phi(params, f64::INFINITY, cfg).expect("t = inf is valid");
    let pbinf = phi_bar(params, f64::INFINITY, cfg).expect("t = inf is valid");

    let analytic = !force_numeric && params.fitness.is_parametric() && params.threshold.is_parametric();
    let (mut e_m, mut e_n) = (em.value, en.value);
    if analytic {
        // a non-integrable exponent overrides whatever the finite ladder saw
        if !psi_asymptotics(params).integrable() {
            e_m = IntegralValue::Infinite;
        }
        if !psi_asymptotics(&params.swapped()).integrable() {
            e_n = IntegralValue::Infinite;
        }
    }
    let recurrence = match e_m {
        IntegralValue::Finite(_) => Recurrence::Transient,
        IntegralValue::Infinite => Recurrence::Recurrent,
        IntegralValue::Inconclusive => Recurrence::Inconclusive,
    };
    let limit_count = match e_n {
        IntegralValue::Finite(_) => LimitCount::Finite,
        IntegralValue::Infinite => LimitCount::Infinite,
        IntegralValue::Inconclusive => LimitCount::Inconclusive,
    };
    ClassificationReport {
        recurrence,
        limit_count,
        method: if analytic { Method::AnalyticExponent } else { Method::NumericCauchy },
        null_recurrent_like: recurrence == Recurrence::Recurrent && limit_count == LimitCount::Infinite,
        integrals: CriterionIntegrals {
            e_m,
            e_n,
            phi_inf: pinf.value,
            phi_bar_inf: pbinf.value,
            evidence: CriterionEvidence {
                e_m: em.evidence,
                e_n: en.evidence,
                phi_inf: pinf.evidence,
                phi_bar_inf: pbinf.evidence,
            },
        },
    }
}

/// `∫ F̄†/F̄★ R★(dx)` evaluated in x-space, for cross-checking the u-space
/// form (which is `E[M]` without the rate prefactor).
pub fn x_space_integral(params: &ModelParams, cfg: &QuadratureConfig) -> LadderIntegral {
    let (f, t) = (&params.fitness, &params.threshold);
    let a = f.support_lower();
    let b = t.support_lower();
    let h = if b > a { b - a } else { (f.inverse_hazard(std::f64::consts::LN_2) - a).max(1e-6) };
    let mut breaks = f.kinks();
    breaks.extend(t.kinks());
    breaks.sort_by(f64::total_cmp);
    integrate_half_line(|x| (f.hazard(x) - t.hazard(x)).exp() * f.hazard_rate(x), a, h, &breaks, cfg)
}

/// `∫₀¹ ψ(u)/u² du`, the u-space counterpart of [`x_space_integral`].
pub fn u_space_integral(params: &ModelParams, cfg: &QuadratureConfig) -> LadderIntegral {
    integrate_hazard_form(|u| psi_unchecked(params, u) / u, &u_kinks(params), cfg)
}

/// Negative binomial law: `P(k) = Γ(k+r)/(Γ(r) k!) p^k (1-p)^r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NegBinomial {
    pub r: f64,
    pub p: f64,
}

impl NegBinomial {
    pub fn mean(&self) -> f64 {
        self.r * self.p / (1.0 - self.p)
    }

    pub fn laplace(&self, t: f64) -> f64 {
        ((1.0 - self.p) / (1.0 - self.p * (-t).exp())).powf(self.r)
    }
}

/// Gamma law with shape `r` and rate `rate` (mean `r / rate`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaLaw {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientLaws {
    pub r: f64,
    pub beta: f64,
    pub p: f64,
    /// Law of `Λ`.
    pub lambda: GammaLaw,
    pub m: NegBinomial,
    pub expected_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitLaws {
    pub n: NegBinomial,
    pub n0: NegBinomial,
    pub total: NegBinomial,
    pub expected_n: f64,
}

/// Exact laws for exponential fitness and thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentialClosedForms {
    /// Present when `α† > α★`.
    pub transient: Option<TransientLaws>,
    /// Present when `α★ > α†`.
    pub finite_limit: Option<LimitLaws>,
    pub m_divergent: bool,
    pub n_divergent: bool,
}

pub fn exponential_closed_forms(
    alpha_star: f64,
    alpha_dagger: f64,
    lambda_star: f64,
    lambda_dagger: f64,
) -> Result<ExponentialClosedForms> {
    for (name, v) in [
        ("alpha_star", alpha_star),
        ("alpha_dagger", alpha_dagger),
        ("lambda_star", lambda_star),
        ("lambda_dagger", lambda_dagger),
    ] {
        crate::error::ensure_finite_positive(name, v)?;
    }
    let transient = (alpha_dagger > alpha_star).then(|| {
        let r = alpha_star / (alpha_dagger - alpha_star);
        let beta = lambda_star / lambda_dagger;
        let p = lambda_dagger / (lambda_star + lambda_dagger);
        TransientLaws {
            r,
            beta,
            p,
            lambda: GammaLaw { shape: r, rate: beta },
            m: NegBinomial { r, p },
            expected_m: lambda_dagger / lambda_star * r,
        }
    });
    let finite_limit = (alpha_star > alpha_dagger).then(|| {
        let p = lambda_star / (lambda_star + lambda_dagger);
        let rn = alpha_dagger / (alpha_star - alpha_dagger);
        LimitLaws {
            n: NegBinomial { r: rn, p },
            n0: NegBinomial { r: 1.0, p },
            total: NegBinomial { r: alpha_star / (alpha_star - alpha_dagger), p },
            expected_n: lambda_star / lambda_dagger * rn,
        }
    });
    Ok(ExponentialClosedForms {
        m_divergent: transient.is_none(),
        n_divergent: finite_limit.is_none(),
        transient,
        finite_limit,
    })
}

/// Closed forms for `params` when both laws are exponential.
pub fn closed_forms_for(params: &ModelParams) -> Option<ExponentialClosedForms> {
    match (params.fitness.family(), params.threshold.family()) {
        (Family::Exponential { rate: a }, Family::Exponential { rate: b }) => {
            exponential_closed_forms(*a, *b, params.lambda_birth, params.lambda_extinct).ok()
        }
        _ => None,
    }
}

/// Cartesian grid over exponential parameters.
///
/// Text form: `alpha_star=0.5,1;alpha_dagger=1,2;lambda_star=1;lambda_dagger=1`.
/// Omitted keys default to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub alpha_star: Vec<f64>,
    pub alpha_dagger: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub lambda_dagger: Vec<f64>,
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut g = GridSpec {
            alpha_star: vec![1.0],
            alpha_dagger: vec![1.0],
            lambda_star: vec![1.0],
            lambda_dagger: vec![1.0],
        };
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) =
                part.split_once('=').ok_or_else(|| Error::Parse(format!("grid entry '{part}' lacks '='")))?;
            let values = values
                .split(',')
                .map(|v| {
                    let x: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad grid value '{v}'")))?;
                    crate::error::ensure_finite_positive(key.trim(), x)?;
                    Ok(x)
                })
                .collect::<Result<Vec<f64>>>()?;
            let slot = match key.trim() {
                "alpha_star" => &mut g.alpha_star,
                "alpha_dagger" => &mut g.alpha_dagger,
                "lambda_star" => &mut g.lambda_star,
                "lambda_dagger" => &mut g.lambda_dagger,
                other => return Err(Error::Parse(format!("unknown grid key '{other}'"))),
            };
            *slot = values;
        }
        Ok(g)
    }
}

impl GridSpec {
    /// Points in row-major order `(α★, α†, λ★, λ†)`.
    pub fn points(&self) -> Vec<[f64; 4]> {
        let mut out = Vec::new();
        for &a in &self.alpha_star {
            for &b in &self.alpha_dagger {
                for &l in &self.lambda_star {
                    for &m in &self.lambda_dagger {
                        out.push([a, b, l, m]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub point: [f64; 4],
    pub report: ClassificationReport,
}

/// Classifies every grid point; rows keep grid order.
pub fn classify_grid(grid: &GridSpec) -> Result<Vec<GridRow>> {
    use rayon::prelude::*;
    grid.points()
        .into_par_iter()
        .map(|point| {
            let p = ModelParams::exponential(point[0], point[1], point[2], point[3])?;
            Ok(GridRow { point, report: classify(&p) })
        })
        .collect()
}

fn value_field(v: IntegralValue) -> String {
    match v {
        IntegralValue::Finite(x) => x.to_string(),
        IntegralValue::Infinite => "inf".into(),
        IntegralValue::Inconclusive => "inconclusive".into(),
    }
}

/// CSV phase map `alpha_star,alpha_dagger,lambda_star,lambda_dagger,verdict_recurrence,verdict_count,e_m,e_n,null_recurrent_like`.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record([
        "alpha_star",
        "alpha_dagger",
        "lambda_star",
        "lambda_dagger",
        "verdict_recurrence",
        "verdict_count",
        "e_m",
        "e_n",
        "null_recurrent_like",
    ])
    .map_err(io)?;
    for row in rows {
        let r = &row.report;
        let mut rec: Vec<String> = row.point.iter().map(|v| v.to_string()).collect();
        rec.push(format!("{:?}", r.recurrence));
        rec.push(format!("{:?}", r.limit_count));
        rec.push(value_field(r.integrals.e_m));
        rec.push(value_field(r.integrals.e_n));
        rec.push(r.null_recurrent_like.to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}
