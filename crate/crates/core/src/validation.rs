//! Reproducible validation suite against the exact exponential laws,
//! brute-force oracles and structural properties.
//!
//! Every check is deterministic for a given [`ValidationConfig`].

use serde::Serialize;

use crate::configuration::Configuration;
use crate::criteria::{
    classify, expected_m, exponential_closed_forms, laplace_m, phi, u_space_integral, x_space_integral, GridSpec,
    LimitCount, Recurrence,
};
use crate::distributions::{DistributionSpec, ModelParams};
use crate::error::{Error, Result};
use crate::ladder::{count_m_from_stream, sample_fitness_ladder, sample_threshold_ladder, StopRule};
use crate::montecarlo::{compare_forward_vs_limit, run, Replicate, ReplicationPlan, RunResult, Task};
use crate::oracle::{brute_force_configuration, pairwise_m};
use crate::process::{evolve, generate_stream, species_count_at};
use crate::quadrature::QuadratureConfig;
use crate::rng::{derive_seed, RandomStream};
use crate::stats::{correlation, gof_chi_square, gof_ks, neg_binomial_pmf, ExponentialLaw, GammaCdf, Summary};

pub const DEFAULT_SEED: u64 = 20_260_601;
pub const DEFAULT_REPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationConfig {
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { reps: DEFAULT_REPS, seed: DEFAULT_SEED, alpha: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub key: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// `(id, key, description)` for every check, in suite order.
pub const CHECKS: [(u8, &str, &str); 11] = [
    (1, "expected_m", "E[M] by quadrature and Monte Carlo, exponential (1,2,1,1)"),
    (2, "m_law", "M against NegBinom(1, 1/2), chi-square"),
    (3, "lambda_law", "Λ against Exponential(1), KS"),
    (4, "laplace", "E[exp(-tM)] against exp(-φ(t)) and the closed form"),
    (5, "limit_law", "limit size against NegBinom(2, 1/2), N₀ geometric, N₀ ⟂ N"),
    (6, "sigma0_law", "Σ₀ against Exponential(λ†/λ★), KS"),
    (7, "phase_map", "classifier verdicts on the exponential grid"),
    (8, "oracle", "ladder count and evolution against brute force"),
    (9, "forward_limit", "forward count at t = 50 against limit size"),
    (10, "cross_param", "x-space against u-space quadrature"),
    (11, "properties", "monotone ladders, φ(∞) ≤ E[M], role-swap duality, determinism"),
];

fn check_key(id: u8) -> &'static str {
    CHECKS[id as usize - 1].1
}

/// Selects checks by key or id; `None` selects all.
pub fn select(only: Option<&str>) -> Result<Vec<u8>> {
    let Some(only) = only else {
        return Ok(CHECKS.iter().map(|c| c.0).collect());
    };
    let mut ids = Vec::new();
    for token in only.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let id = CHECKS
            .iter()
            .find(|c| c.1 == token || c.0.to_string() == token)
            .map(|c| c.0)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown check '{token}'")))?;
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

fn transient_params() -> ModelParams {
    ModelParams::exponential(1.0, 2.0, 1.0, 1.0).expect("valid")
}

fn limit_params() -> ModelParams {
    ModelParams::exponential(2.0, 1.0, 1.0, 1.0).expect("valid")
}

/// Shared samples, drawn lazily so single checks stay cheap.
struct Samples<'a> {
    cfg: &'a ValidationConfig,
    m_run: Option<RunResult>,
    limit_run: Option<RunResult>,
}

impl Samples<'_> {
    fn m_run(&mut self) -> Result<&RunResult> {
        if self.m_run.is_none() {
            let plan = ReplicationPlan::new(Task::SampleM, self.cfg.reps, derive_seed(self.cfg.seed, 1));
            self.m_run = Some(run(&transient_params(), &plan)?);
        }
        Ok(self.m_run.as_ref().expect("filled"))
    }

    fn limit_run(&mut self) -> Result<&RunResult> {
        if self.limit_run.is_none() {
            let plan = ReplicationPlan::new(Task::SampleLimitConfig, self.cfg.reps, derive_seed(self.cfg.seed, 2));
            self.limit_run = Some(run(&limit_params(), &plan)?);
        }
        Ok(self.limit_run.as_ref().expect("filled"))
    }
}

fn outcome(id: u8, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { id, key: check_key(id), passed, detail }
}

/// Runs the selected checks in order.
pub fn run_checks(cfg: &ValidationConfig, ids: &[u8]) -> Result<Vec<CheckOutcome>> {
    if cfg.reps < crate::stats::MIN_CHI_SQUARE_SAMPLES {
        return Err(Error::InsufficientSamples { got: cfg.reps, needed: crate::stats::MIN_CHI_SQUARE_SAMPLES });
    }
    let mut samples = Samples { cfg, m_run: None, limit_run: None };
    ids.iter().map(|&id| run_one(id, cfg, &mut samples)).collect()
}

fn run_one(id: u8, cfg: &ValidationConfig, samples: &mut Samples) -> Result<CheckOutcome> {
    let q = QuadratureConfig::default();
    Ok(match id {
        1 => {
            let quad = expected_m(&transient_params(), &q).value;
            let quad_ok = quad.finite().is_some_and(|v| (v - 1.0).abs() <= 1e-6);
            let r = samples.m_run()?;
            let s = r.stats.summary.ok_or(Error::RegimeMismatch("no finite M".into()))?;
            let mc_ok = s.within_se(1.0, 3.0) && r.stats.divergent == 0;
            outcome(
                1,
                quad_ok && mc_ok,
                format!("quadrature {quad:?}; MC mean {:.5} ± {:.5} (n = {})", s.mean, s.se, s.n),
            )
        }
        2 => {
            let counts = samples.m_run()?.counts();
            let g = gof_chi_square(&counts, |k| neg_binomial_pmf(k, 1.0, 0.5), "NegBinom(1, 1/2)")?;
            let wrong = gof_chi_square(&counts, |k| neg_binomial_pmf(k, 2.0, 0.5), "NegBinom(2, 1/2)")?;
            outcome(
                2,
                g.passes(cfg.alpha),
                format!(
                    "chi2 = {:.3}, df = {}, p = {:.4}; misspecified NegBinom(2, 1/2) p = {:.2e}",
                    g.statistic,
                    g.df.unwrap_or(0),
                    g.p_value,
                    wrong.p_value
                ),
            )
        }
        3 => {
            let lambdas: Vec<f64> = samples
                .m_run()?
                .replicates
                .iter()
                .filter_map(|r| match r {
                    Replicate::M { lambda, .. } => Some(*lambda),
                    _ => None,
                })
                .collect();
            let g = gof_ks(&lambdas, &GammaCdf { shape: 1.0, rate: 1.0 }, "Gamma(1, 1)")?;
            outcome(3, g.passes(cfg.alpha), format!("D = {:.5}, p = {:.4}, n = {}", g.statistic, g.p_value, g.n))
        }
        4 => {
            let counts = samples.m_run()?.counts();
            let mut ok = true;
            let mut parts = Vec::new();
            for t in [0.5, 1.0, 2.0] {
                let target = laplace_m(&transient_params(), t, &q)?.finite();
                let e: Vec<f64> = counts.iter().map(|&m| (-t * m as f64).exp()).collect();
                let s = Summary::of(&e).expect("non-empty");
                let pass = target.is_some_and(|v| s.within_se(v, 3.0));
                ok &= pass;
                parts.push(format!("t={t}: MC {:.5} ± {:.5} vs {:.5}", s.mean, s.se, target.unwrap_or(f64::NAN)));
            }
            let closed = 0.5 / (1.0 - 0.5 * (-1f64).exp());
            let l1 = laplace_m(&transient_params(), 1.0, &q)?.finite();
            let closed_ok = l1.is_some_and(|v| (v - closed).abs() <= 1e-6);
            parts.push(format!("laplace_M(1) = {:.8} vs closed form {closed:.8}", l1.unwrap_or(f64::NAN)));
            outcome(4, ok && closed_ok, parts.join("; "))
        }
        5 => {
            let r = samples.limit_run()?;
            let mut n0 = Vec::new();
            let mut above = Vec::new();
            let mut total = Vec::new();
            for rep in &r.replicates {
                if let Replicate::Limit { n0: a, n_above: b, total: c, .. } = *rep {
                    n0.push(a);
                    above.push(b);
                    total.push(c);
                }
            }
            let gt = gof_chi_square(&total, |k| neg_binomial_pmf(k, 2.0, 0.5), "NegBinom(2, 1/2)")?;
            let g0 = gof_chi_square(&n0, |k| neg_binomial_pmf(k, 1.0, 0.5), "NegBinom(1, 1/2)")?;
            let to_f = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
            let rho = correlation(&to_f(&n0), &to_f(&above)).unwrap_or(0.0);
            let bound = 3.0 / (n0.len() as f64).sqrt();
            outcome(
                5,
                r.stats.divergent == 0 && gt.passes(cfg.alpha) && g0.passes(cfg.alpha) && rho.abs() < bound,
                format!(
                    "total p = {:.4}; N0 p = {:.4}; corr(N0, N) = {rho:.5} (bound {bound:.5})",
                    gt.p_value, g0.p_value
                ),
            )
        }
        6 => {
            let p = limit_params();
            let sigma0: Vec<f64> = samples
                .limit_run()?
                .replicates
                .iter()
                .filter_map(|r| match r {
                    Replicate::Limit { sigma0, .. } => Some(*sigma0),
                    _ => None,
                })
                .collect();
            let rate = p.lambda_extinct / p.lambda_birth;
            let g = gof_ks(&sigma0, &ExponentialLaw { rate }, "Exponential(λ†/λ★)")?;
            outcome(6, g.passes(cfg.alpha), format!("D = {:.5}, p = {:.4}, n = {}", g.statistic, g.p_value, g.n))
        }
        7 => {
            let (ok, detail) = phase_map_check()?;
            outcome(7, ok, detail)
        }
        8 => {
            let (ok, detail) = oracle_check(cfg.seed, 1000)?;
            outcome(8, ok, detail)
        }
        9 => {
            let n = cfg.reps.min(10_000);
            let g = compare_forward_vs_limit(&limit_params(), 50.0, n, derive_seed(cfg.seed, 3))?;
            outcome(
                9,
                g.passes(cfg.alpha),
                format!(
                    "chi2 = {:.3}, df = {}, p = {:.4}, n = {n} per side",
                    g.statistic,
                    g.df.unwrap_or(0),
                    g.p_value
                ),
            )
        }
        10 => {
            let mut ok = true;
            let mut parts = Vec::new();
            for (name, p) in cross_param_sets() {
                let x = x_space_integral(&p, &q).value.finite();
                let u = u_space_integral(&p, &q).value.finite();
                let diff = match (x, u) {
                    (Some(x), Some(u)) => (x - u).abs(),
                    _ => f64::INFINITY,
                };
                ok &= diff <= 1e-8;
                parts.push(format!("{name}: |Δ| = {diff:.1e}"));
            }
            outcome(10, ok, parts.join("; "))
        }
        11 => {
            let (ok, detail) = property_check(cfg.seed)?;
            outcome(11, ok, detail)
        }
        other => return Err(Error::InvalidArgument(format!("no check with id {other}"))),
    })
}

/// Five parameter sets with finite `∫ F̄†/F̄★ R★(dx)`.
pub fn cross_param_sets() -> Vec<(&'static str, ModelParams)> {
    let mk = |f: DistributionSpec, t: DistributionSpec| ModelParams::new(1.0, 1.0, f, t).expect("valid");
    vec![
        ("exp(1) / exp(2)", transient_params()),
        (
            "exp(0.5) / exp(1.7)",
            mk(DistributionSpec::exponential(0.5).unwrap(), DistributionSpec::exponential(1.7).unwrap()),
        ),
        (
            "weibull(2, 1) / weibull(2, 0.6)",
            mk(DistributionSpec::weibull(2.0, 1.0).unwrap(), DistributionSpec::weibull(2.0, 0.6).unwrap()),
        ),
        (
            "pareto(1, 1) / pareto(1, 3)",
            mk(DistributionSpec::pareto(1.0, 1.0).unwrap(), DistributionSpec::pareto(1.0, 3.0).unwrap()),
        ),
        (
            "exp(1) / weibull(1.5, 1)",
            mk(DistributionSpec::exponential(1.0).unwrap(), DistributionSpec::weibull(1.5, 1.0).unwrap()),
        ),
    ]
}

pub fn phase_grid() -> GridSpec {
    let a = vec![0.5, 1.0, 1.5, 2.0];
    GridSpec { alpha_star: a.clone(), alpha_dagger: a, lambda_star: vec![0.7, 1.0], lambda_dagger: vec![1.0, 2.5] }
}

fn phase_map_check() -> Result<(bool, String)> {
    let mut mismatches = Vec::new();
    let points = phase_grid().points();
    for &[a, b, l, m] in &points {
        let r = classify(&ModelParams::exponential(a, b, l, m)?);
        let want_rec = if b > a { Recurrence::Transient } else { Recurrence::Recurrent };
        let want_cnt = if a > b { LimitCount::Finite } else { LimitCount::Infinite };
        let want_null = a == b;
        if r.recurrence != want_rec || r.limit_count != want_cnt || r.null_recurrent_like != want_null {
            mismatches.push(format!("({a},{b},{l},{m}): {:?}/{:?}", r.recurrence, r.limit_count));
        }
        // closed forms agree with the numeric integrals where finite
        let cf = exponential_closed_forms(a, b, l, m)?;
        if let (Some(t), Some(v)) = (cf.transient.as_ref(), r.integrals.e_m.finite()) {
            if (v - t.expected_m).abs() > 1e-6 * t.expected_m {
                mismatches.push(format!("({a},{b},{l},{m}): E[M] {v} vs {}", t.expected_m));
            }
        }
    }
    let ok = mismatches.is_empty();
    Ok((ok, if ok { format!("{} grid points agree", points.len()) } else { mismatches.join("; ") }))
}

fn oracle_params() -> Vec<ModelParams> {
    vec![
        transient_params(),
        limit_params(),
        ModelParams::new(
            1.3,
            0.8,
            DistributionSpec::weibull(0.7, 2.0).unwrap(),
            DistributionSpec::pareto(0.5, 1.5).unwrap(),
        )
        .unwrap(),
    ]
}

/// Random windows with at most 200 events: ladder count against the pairwise
/// scan, and evolution against per-species reconstruction.
pub fn oracle_check(seed: u64, trials: usize) -> Result<(bool, String)> {
    let params = oracle_params();
    let mut failures = 0usize;
    let mut events = 0usize;
    for i in 0..trials {
        let mut rng = RandomStream::new(derive_seed(seed, 4), i as u64);
        let p = &params[i % params.len()];
        let rate = p.lambda_birth + p.lambda_extinct;
        let horizon = rng.uniform() * 150.0 / rate;
        let mut stream = generate_stream(p, 0.0, horizon, &mut rng)?;
        if stream.events().len() > 200 {
            let kept = stream.events()[..200].to_vec();
            let end = kept[199].time;
            stream = crate::process::EventStream::new(0.0, end, kept, None)?;
        }
        events += stream.events().len();

        let (m, _) = count_m_from_stream(&stream);
        if m != pairwise_m(&stream) {
            failures += 1;
            continue;
        }

        let k = (rng.uniform() * 6.0) as usize;
        let initial: Vec<f64> = (0..k).map(|_| p.fitness.sample(&mut rng)).collect();
        let trace = evolve(&Configuration::from_values(initial.iter().copied())?, &stream);
        let probe = rng.uniform() * stream.horizon;
        let at_end = brute_force_configuration(&initial, &stream, stream.horizon);
        let at_probe = brute_force_configuration(&initial, &stream, probe);
        if trace.final_configuration.to_vec() != at_end
            || trace.configuration_at(probe)?.to_vec() != at_probe
            || species_count_at(&trace, probe)? != at_probe.len()
        {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("{trials} windows, {events} events, {failures} mismatches")))
}

fn property_check(seed: u64) -> Result<(bool, String)> {
    let mut problems = Vec::new();
    let stop = StopRule::default();
    let q = QuadratureConfig::default();

    let mut ladders = 0usize;
    for (j, p) in oracle_params().iter().chain(cross_param_sets().iter().map(|(_, p)| p)).enumerate() {
        for i in 0..200u64 {
            let mut rng = RandomStream::new(derive_seed(seed, 100 + j as u64), i);
            let f = sample_fitness_ladder(p, &stop, &mut rng)?;
            let t = sample_threshold_ladder(p, &stop, &mut rng)?;
            ladders += 2;
            if !f.is_strictly_increasing() || !t.is_strictly_increasing() || t.first_gap.is_nan() || t.first_gap <= 0.0
            {
                problems.push(format!("non-monotone ladder (set {j}, rep {i})"));
            }
        }
    }

    let mut dominated = 0usize;
    for [a, b, l, m] in phase_grid().points() {
        let p = ModelParams::exponential(a, b, l, m)?;
        let r = classify(&p);
        if let (Some(pi), Some(em)) = (r.integrals.phi_inf.finite(), r.integrals.e_m.finite()) {
            dominated += 1;
            if pi > em {
                problems.push(format!("φ(∞) > E[M] at ({a},{b},{l},{m})"));
            }
        }
        // φ(∞) and E[M] are finite together
        if r.integrals.phi_inf.is_finite() != r.integrals.e_m.is_finite() {
            problems.push(format!("φ(∞)/E[M] finiteness differ at ({a},{b},{l},{m})"));
        }
        let s = classify(&p.swapped());
        let same = matches!(
            (r.limit_count, s.recurrence),
            (LimitCount::Finite, Recurrence::Transient)
                | (LimitCount::Infinite, Recurrence::Recurrent)
                | (LimitCount::Inconclusive, Recurrence::Inconclusive)
        );
        if !same {
            problems.push(format!("role swap breaks duality at ({a},{b},{l},{m})"));
        }
        let phi1 = phi(&p, 1.0, &q)?.value;
        let phi2 = phi(&p, 2.0, &q)?.value;
        if let (Some(x), Some(y)) = (phi1.finite(), phi2.finite()) {
            if y < x {
                problems.push(format!("φ decreasing at ({a},{b},{l},{m})"));
            }
        }
    }

    let mut reruns = 0usize;
    for (task, p) in [
        (Task::SampleM, transient_params()),
        (Task::SampleLambda, transient_params()),
        (Task::SampleLimitConfig, limit_params()),
        (Task::ForwardCountAt { t: 20.0 }, limit_params()),
        (Task::EmptyTimeScan { horizon: 20.0 }, transient_params()),
    ] {
        let plan = ReplicationPlan::new(task, 2000, derive_seed(seed, 5));
        let (mut a, mut b) = (Vec::new(), Vec::new());
        run(&p, &plan)?.write_samples_csv(&mut a)?;
        run(&p, &plan)?.write_samples_csv(&mut b)?;
        reruns += 1;
        if a != b {
            problems.push(format!("rerun of {task:?} differs"));
        }
    }

    let ok = problems.is_empty();
    let detail = if ok {
        format!(
            "{ladders} ladders monotone; {dominated} grid points dominated; duality holds; {reruns} reruns identical"
        )
    } else {
        problems.join("; ")
    };
    Ok((ok, detail))
}
