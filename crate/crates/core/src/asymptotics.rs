//! Exact behaviour of `ψ(u) = F̄† ∘ F̄★⁻¹(u)` near `u = 0`.
//!
//! Each built-in family has a tail hazard of the form `c0 + c1 · g(x)` with
//! `g(x) = x^k` or `g(x) = ln x`. When both laws share `g`, `ψ` is an exact
//! power law near the origin; when they do not, the faster-growing hazard
//! decides integrability of `ψ(u)/u²` outright.

use serde::{Serialize, Serializer};

use crate::distributions::{Growth, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiAsymptotics {
    /// `ψ(u) = coef · u^exponent` for `0 < u <= valid_below`.
    PowerLaw { coef: f64, exponent: f64, valid_below: f64 },
    /// Hazards of different growth orders; only integrability is known.
    Dominated { integrable: bool },
}

impl PsiAsymptotics {
    /// Whether `∫₀ ψ(u)/u² du` is finite.
    pub fn integrable(&self) -> bool {
        match *self {
            PsiAsymptotics::PowerLaw { exponent, .. } => exponent > 1.0,
            PsiAsymptotics::Dominated { integrable } => integrable,
        }
    }

    /// `∫₀^v ψ(u)/u² du` for `v = exp(-own_hazard)`, when known in closed form.
    pub fn tail_integral(&self, own_hazard: f64) -> TailBound {
        match *self {
            PsiAsymptotics::PowerLaw { coef, exponent, valid_below } => {
                if exponent <= 1.0 {
                    TailBound::Infinite
                } else if (-own_hazard).exp() <= valid_below || own_hazard >= -valid_below.ln() {
                    let g = exponent - 1.0;
                    TailBound::Bound(coef * (-g * own_hazard).exp() / g)
                } else {
                    TailBound::Unknown
                }
            }
            PsiAsymptotics::Dominated { integrable: true } => TailBound::Unknown,
            PsiAsymptotics::Dominated { integrable: false } => TailBound::Infinite,
        }
    }
}

fn growth_rank(g: Growth) -> (u8, f64) {
    match g {
        Growth::Log => (0, 0.0),
        Growth::Power(k) => (1, k),
    }
}

/// Asymptotics of `ψ` for `params` (fitness side as the "own" ladder).
pub fn psi_asymptotics(params: &ModelParams) -> PsiAsymptotics {
    let own = params.fitness.tail_hazard();
    let opp = params.threshold.tail_hazard();
    let (ro, ko) = growth_rank(own.growth);
    let (rp, kp) = growth_rank(opp.growth);
    if ro == rp && ko == kp {
        let exponent = opp.coef / own.coef;
        let coef = (-opp.offset + exponent * own.offset).exp();
        let from = own.valid_from.max(opp.valid_from);
        let valid_below = (-params.fitness.hazard(from)).exp();
        PsiAsymptotics::PowerLaw { coef, exponent, valid_below }
    } else {
        // threshold hazard of higher order makes ψ(u) decay faster than any power
        PsiAsymptotics::Dominated { integrable: (rp, kp) > (ro, ko) }
    }
}

/// Expected mass still to come after a ladder step, or why it is not known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailBound {
    Bound(f64),
    Infinite,
    Unknown,
}

impl TailBound {
    pub fn scaled(self, factor: f64) -> Self {
        match self {
            TailBound::Bound(v) => TailBound::Bound(v * factor),
            other => other,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            TailBound::Bound(v) => Some(v),
            _ => None,
        }
    }
}

impl Serialize for TailBound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            TailBound::Bound(v) => s.serialize_f64(v),
            TailBound::Infinite => s.serialize_str("infinite"),
            TailBound::Unknown => s.serialize_str("unknown"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;

    fn params(f: DistributionSpec, t: DistributionSpec) -> ModelParams {
        ModelParams::new(1.0, 1.0, f, t).unwrap()
    }

    #[test]
    fn exponential_pair_is_power_law() {
        let p = ModelParams::exponential(1.0, 2.0, 1.0, 1.0).unwrap();
        match psi_asymptotics(&p) {
            PsiAsymptotics::PowerLaw { coef, exponent, valid_below } => {
                assert!((coef - 1.0).abs() < 1e-15);
                assert_eq!(exponent, 2.0);
                assert_eq!(valid_below, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn power_law_matches_composition() {
        let cases = [
            params(DistributionSpec::weibull(2.0, 1.0).unwrap(), DistributionSpec::weibull(2.0, 0.5).unwrap()),
            params(DistributionSpec::pareto(1.0, 1.0).unwrap(), DistributionSpec::pareto(2.0, 3.0).unwrap()),
            params(DistributionSpec::exponential(2.0).unwrap(), DistributionSpec::weibull(1.0, 0.25).unwrap()),
            params(
                DistributionSpec::tabulated(vec![(1.0, 0.0), (0.5, 0.3), (0.1, 2.0)]).unwrap(),
                DistributionSpec::exponential(1.5).unwrap(),
            ),
        ];
        for p in &cases {
            let a = psi_asymptotics(p);
            let PsiAsymptotics::PowerLaw { coef, exponent, valid_below } = a else { panic!("{a:?}") };
            for &u in &[valid_below * 0.9, valid_below * 1e-3, valid_below * 1e-9] {
                let x = p.fitness.inverse_survival(u).unwrap();
                let psi = (-p.threshold.hazard(x)).exp();
                let want = coef * u.powf(exponent);
                assert!((psi - want).abs() <= 1e-9 * want, "{p:?} u={u}: {psi} vs {want}");
            }
        }
    }

    #[test]
    fn dominated_orders() {
        let exp = DistributionSpec::exponential(1.0).unwrap();
        let par = DistributionSpec::pareto(1.0, 5.0).unwrap();
        let wei = DistributionSpec::weibull(2.0, 1.0).unwrap();
        assert_eq!(psi_asymptotics(&params(exp.clone(), par.clone())), PsiAsymptotics::Dominated { integrable: false });
        assert_eq!(psi_asymptotics(&params(par, exp.clone())), PsiAsymptotics::Dominated { integrable: true });
        assert_eq!(psi_asymptotics(&params(exp.clone(), wei.clone())), PsiAsymptotics::Dominated { integrable: true });
        assert_eq!(psi_asymptotics(&params(wei, exp)), PsiAsymptotics::Dominated { integrable: false });
    }

    #[test]
    fn exponential_tail_integral() {
        // ∫₀^v u^{γ-2} du = v^{γ-1}/(γ-1); with γ = 2 and v = e^{-x}: e^{-x}
        let p = ModelParams::exponential(1.0, 2.0, 1.0, 1.0).unwrap();
        let a = psi_asymptotics(&p);
        match a.tail_integral(3.0) {
            TailBound::Bound(v) => assert!((v - (-3.0f64).exp()).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        let q = ModelParams::exponential(2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(psi_asymptotics(&q).tail_integral(3.0), TailBound::Infinite);
    }
}
