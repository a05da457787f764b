//! Improper integrals on geometric panel ladders with a three-way verdict.
//!
//! An integral is split into panels whose widths shrink (or grow) geometrically
//! toward the singular end. Each panel is integrated by adaptive Gauss–Kronrod
//! (7/15 points). The running partial sums form the evidence trail; the
//! verdict comes from extrapolated Cauchy increments or from a run of
//! non-decreasing panel contributions.

use serde::{Deserialize, Serialize, Serializer};

use crate::numeric::CompensatedSum;

/// Value of an improper integral, or why no value is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegralValue {
    Finite(f64),
    Infinite,
    Inconclusive,
}

impl IntegralValue {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            IntegralValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, IntegralValue::Finite(_))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, IntegralValue::Infinite)
    }

    pub fn scaled(self, factor: f64) -> Self {
        match self {
            IntegralValue::Finite(v) => IntegralValue::Finite(v * factor),
            other => other,
        }
    }
}

impl Serialize for IntegralValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            IntegralValue::Finite(v) => s.serialize_f64(v),
            IntegralValue::Infinite => s.serialize_str("infinite"),
            IntegralValue::Inconclusive => s.serialize_str("inconclusive"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Largest panel index; the smallest cutoff is `2^-max_refinements`.
    pub max_refinements: u32,
    /// Panels examined before any verdict.
    pub min_refinements: u32,
    pub rel_tolerance: f64,
    /// Consecutive extrapolated increments within tolerance that count as convergence.
    pub converge_run: u32,
    /// Consecutive non-decreasing panel contributions that count as divergence.
    pub diverge_run: u32,
    /// Relative accuracy requested from each panel.
    pub panel_tolerance: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            max_refinements: 60,
            min_refinements: 6,
            rel_tolerance: 1e-10,
            converge_run: 3,
            diverge_run: 10,
            panel_tolerance: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderIntegral {
    pub value: IntegralValue,
    /// Partial integrals after each panel, in refinement order.
    pub evidence: Vec<f64>,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One Gauss–Kronrod 7/15 step: (Kronrod estimate, |Kronrod − Gauss|).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod on `[a, b]`: the subinterval with the
/// largest error estimate is bisected until the summed error is within
/// `rel_tol` of the estimate or the interval budget is spent.
pub fn integrate<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, rel_tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 500;
    let (est, err) = gk15(f, a, b);
    if est == f64::INFINITY {
        return est;
    }
    let mut parts = vec![(a, b, est, err)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let total_err: f64 = parts.iter().map(|p| p.3).sum();
        if total_err <= rel_tol * total.abs() || parts.len() >= MAX_INTERVALS {
            let mut sum = CompensatedSum::new();
            parts.iter().for_each(|p| sum.add(p.2));
            return sum.value();
        }
        let worst =
            parts.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).map(|(i, _)| i).expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            // interval at machine resolution: keep its estimate, error accepted
            parts.push((lo, hi, gk15(f, lo, hi).0, 0.0));
            continue;
        }
        let (l, le) = gk15(f, lo, mid);
        let (r, re) = gk15(f, mid, hi);
        if l == f64::INFINITY || r == f64::INFINITY {
            return f64::INFINITY;
        }
        parts.push((lo, mid, l, le));
        parts.push((mid, hi, r, re));
    }
}

/// Sums panel contributions `panel(1), panel(2), …` into a verdict.
///
/// Contributions must be non-negative. Convergence is judged on the partial
/// sum plus a geometric estimate of the remaining panels.
pub fn sum_panel_ladder<P: FnMut(u32) -> f64>(mut panel: P, cfg: &QuadratureConfig) -> LadderIntegral {
    let mut sum = CompensatedSum::new();
    let mut evidence = Vec::with_capacity(cfg.max_refinements as usize);
    let mut prev_delta: Option<f64> = None;
    let mut prev_estimate: Option<f64> = None;
    let mut converged = 0u32;
    let mut growing = 0u32;

    for n in 1..=cfg.max_refinements {
        let delta = panel(n);
        if delta.is_nan() {
            return LadderIntegral { value: IntegralValue::Inconclusive, evidence };
        }
        if delta == f64::INFINITY {
            return LadderIntegral { value: IntegralValue::Infinite, evidence };
        }
        let delta = delta.max(0.0);
        sum.add(delta);
        let partial = sum.value();
        evidence.push(partial);

        let estimate = match prev_delta {
            Some(p) if p > 0.0 && delta < p => {
                let rho = delta / p;
                partial + delta * rho / (1.0 - rho)
            }
            _ => partial,
        };

        growing = match prev_delta {
            Some(p) if delta > 0.0 && delta >= p * (1.0 - 1e-9) => growing + 1,
            _ => 0,
        };
        converged = match prev_estimate {
            Some(q) if (estimate - q).abs() <= cfg.rel_tolerance * estimate.abs() || delta == 0.0 => converged + 1,
            _ => 0,
        };
        prev_delta = Some(delta);
        prev_estimate = Some(estimate);

        if n < cfg.min_refinements {
            continue;
        }
        if growing >= cfg.diverge_run {
            return LadderIntegral { value: IntegralValue::Infinite, evidence };
        }
        if converged >= cfg.converge_run {
            return LadderIntegral { value: IntegralValue::Finite(estimate), evidence };
        }
    }
    LadderIntegral { value: IntegralValue::Inconclusive, evidence }
}

/// `∫₀¹ g(u) du/u` over the dyadic panels `[2^-n, 2^(1-n)]`, each split at
/// the `breaks` (ascending) where `g` may kink.
pub fn integrate_hazard_form<G: FnMut(f64) -> f64>(mut g: G, breaks: &[f64], cfg: &QuadratureConfig) -> LadderIntegral {
    let tol = cfg.panel_tolerance;
    sum_panel_ladder(
        |n| {
            let lo = (-(n as f64)).exp2();
            let mut f = |u: f64| g(u) / u;
            integrate_split(&mut f, lo, 2.0 * lo, breaks, tol)
        },
        cfg,
    )
}

/// [`integrate`] on `[a, b]` split at the `breaks` lying strictly inside.
///
/// A jump narrower than the node spacing can fall between all fifteen nodes
/// and go unseen by the error estimate, so known jumps must be panel ends.
pub fn integrate_split<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, breaks: &[f64], rel_tol: f64) -> f64 {
    let mut sum = CompensatedSum::new();
    let mut lo = a;
    for &x in breaks.iter().filter(|&&x| x > a && x < b) {
        sum.add(integrate(f, lo, x, rel_tol));
        lo = x;
    }
    sum.add(integrate(f, lo, b, rel_tol));
    sum.value()
}

/// `∫_a^∞ f(x) dx` for `f ≥ 0`, on panels doubling away from `a + h` and
/// halving toward `a`. `breaks` (ascending) are points where `f` may jump.
pub fn integrate_half_line<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    h: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> LadderIntegral {
    let tol = cfg.panel_tolerance;
    let near = sum_panel_ladder(
        |m| {
            let lo = a + h * (-(m as f64)).exp2();
            integrate_split(&mut f, lo, a + h * (1.0 - m as f64).exp2(), breaks, tol)
        },
        cfg,
    );
    let far = sum_panel_ladder(
        |n| {
            let lo = a + h * ((n - 1) as f64).exp2();
            integrate_split(&mut f, lo, a + h * (n as f64).exp2(), breaks, tol)
        },
        cfg,
    );
    let value = match (near.value, far.value) {
        (IntegralValue::Finite(x), IntegralValue::Finite(y)) => IntegralValue::Finite(x + y),
        (IntegralValue::Infinite, _) | (_, IntegralValue::Infinite) => IntegralValue::Infinite,
        _ => IntegralValue::Inconclusive,
    };
    let near_total = near.evidence.last().copied().unwrap_or(0.0);
    let evidence = far.evidence.iter().map(|v| v + near_total).collect();
    LadderIntegral { value, evidence }
}
