//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Reference laws are written out here
//! rather than taken from the library.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;

use threshold_gms::criteria::{classify, expected_m, laplace_m, phi, u_space_integral, x_space_integral};
use threshold_gms::criteria::{LimitCount, Recurrence};
use threshold_gms::distributions::DistributionSpec;
use threshold_gms::ladder::{count_m_from_stream, sample_fitness_ladder, StopRule};
use threshold_gms::montecarlo::{run, Replicate, ReplicationPlan, Task};
use threshold_gms::process::{evolve, generate_stream, EventStream};
use threshold_gms::quadrature::{IntegralValue, QuadratureConfig};
use threshold_gms::stats::{correlation, gof_chi_square, gof_ks, two_sample_chi_square, Summary};
use threshold_gms::{Configuration, ModelParams, RandomStream};

const SEED: u64 = 4_170_023;
const REPS: usize = 100_000;
const ALPHA: f64 = 0.01;

type Check = fn() -> Result<String, String>;

fn exp_params(a: f64, b: f64, l: f64, m: f64) -> ModelParams {
    ModelParams::exponential(a, b, l, m).unwrap()
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn m_samples(p: &ModelParams, seed: u64) -> Vec<u64> {
    run(p, &ReplicationPlan::new(Task::SampleM, REPS, seed)).unwrap().counts()
}

fn limit_samples(p: &ModelParams, seed: u64) -> Vec<(u64, u64, u64, f64)> {
    run(p, &ReplicationPlan::new(Task::SampleLimitConfig, REPS, seed))
        .unwrap()
        .replicates
        .into_iter()
        .map(|r| match r {
            Replicate::Limit { n0, n_above, total, sigma0 } => (n0, n_above, total, sigma0),
            other => panic!("unexpected replicate {other:?}"),
        })
        .collect()
}

/// P(k) = 2^-(k+1)
fn geometric_half(k: u64) -> f64 {
    0.5f64.powi(k as i32 + 1)
}

/// P(k) = (k+1) 2^-(k+2)
fn negbin_two_half(k: u64) -> f64 {
    (k + 1) as f64 * 0.5f64.powi(k as i32 + 2)
}

fn c1_expected_m() -> Result<String, String> {
    let (a, b, l, m) = (1.0, 2.0, 1.0, 1.0);
    let exact = m / l * a / (b - a);
    let q = expected_m(&exp_params(a, b, l, m), &QuadratureConfig::default()).value;
    let qv = q.finite().ok_or(format!("quadrature gave {q:?}"))?;
    let s = Summary::of_counts(&m_samples(&exp_params(a, b, l, m), SEED)).unwrap();
    ensure(
        (qv - exact).abs() <= 1e-6 && s.within_se(exact, 3.0),
        format!("quadrature {qv:.12}; MC {:.5} ± {:.5} vs {exact}", s.mean, s.se),
    )
}

fn c2_m_law() -> Result<String, String> {
    let g = gof_chi_square(&m_samples(&exp_params(1.0, 2.0, 1.0, 1.0), SEED + 1), geometric_half, "2^-(k+1)").unwrap();
    ensure(g.p_value > ALPHA, format!("chi2 = {:.3}, df = {:?}, p = {:.4}", g.statistic, g.df, g.p_value))
}

fn c3_lambda_law() -> Result<String, String> {
    let p = exp_params(1.0, 2.0, 1.0, 1.0);
    let lam = run(&p, &ReplicationPlan::new(Task::SampleLambda, REPS, SEED + 2)).unwrap().values();
    let g = gof_ks(&lam, &|x: f64| -(-x.max(0.0)).exp_m1(), "Exp(1)").unwrap();
    ensure(g.p_value > ALPHA, format!("D = {:.5}, p = {:.4}, n = {}", g.statistic, g.p_value, g.n))
}

fn c4_laplace() -> Result<String, String> {
    let p = exp_params(1.0, 2.0, 1.0, 1.0);
    let cfg = QuadratureConfig::default();
    let m = m_samples(&p, SEED + 3);
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.5f64, 1.0, 2.0] {
        let target = laplace_m(&p, t, &cfg).unwrap().finite().unwrap();
        let e: Vec<f64> = m.iter().map(|&k| (-t * k as f64).exp()).collect();
        let s = Summary::of(&e).unwrap();
        ok &= s.within_se(target, 3.0);
        parts.push(format!("t={t}: {:.5} ± {:.5} vs {target:.5}", s.mean, s.se));
    }
    // NegBinom(r = 1, p = 1/2) transform at t = 1
    let (r, q) = (1.0f64, 0.5f64);
    let closed = ((1.0 - q) / (1.0 - q * (-1.0f64).exp())).powf(r);
    let at1 = laplace_m(&p, 1.0, &cfg).unwrap().finite().unwrap();
    ok &= (at1 - closed).abs() <= 1e-6;
    parts.push(format!("laplace_M(1) = {at1:.8} vs {closed:.8}"));
    ensure(ok, parts.join("; "))
}

fn c5_limit_law() -> Result<String, String> {
    let s = limit_samples(&exp_params(2.0, 1.0, 1.0, 1.0), SEED + 4);
    let total: Vec<u64> = s.iter().map(|v| v.2).collect();
    let n0: Vec<u64> = s.iter().map(|v| v.0).collect();
    if s.iter().any(|v| v.0 + v.1 != v.2) {
        return Err("total != N0 + N".into());
    }
    let gt = gof_chi_square(&total, negbin_two_half, "NB(2, 1/2)").unwrap();
    let g0 = gof_chi_square(&n0, geometric_half, "NB(1, 1/2)").unwrap();
    let a: Vec<f64> = s.iter().map(|v| v.0 as f64).collect();
    let b: Vec<f64> = s.iter().map(|v| v.1 as f64).collect();
    let rho = correlation(&a, &b).unwrap();
    let bound = 3.0 / (REPS as f64).sqrt();
    ensure(
        gt.p_value > ALPHA && g0.p_value > ALPHA && rho.abs() < bound,
        format!("total p = {:.4}; N0 p = {:.4}; corr {rho:.5} (bound {bound:.5})", gt.p_value, g0.p_value),
    )
}

fn c6_sigma0_law() -> Result<String, String> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, (l, m)) in [(1.0, 1.0), (1.0, 2.5)].into_iter().enumerate() {
        let rate: f64 = m / l;
        let s0: Vec<f64> =
            limit_samples(&exp_params(2.0, 1.0, l, m), SEED + 5 + k as u64).iter().map(|v| v.3).collect();
        let g = gof_ks(&s0, &|x: f64| -(-rate * x.max(0.0)).exp_m1(), "Exp(λ†/λ★)").unwrap();
        ok &= g.p_value > ALPHA;
        parts.push(format!("rate {rate}: D = {:.5}, p = {:.4}", g.statistic, g.p_value));
    }
    ensure(ok, parts.join("; "))
}

fn c7_phase_map() -> Result<String, String> {
    let levels = [0.5, 1.0, 1.5, 2.0];
    let mut checked = 0;
    for a in levels {
        for b in levels {
            for (l, m) in [(1.0, 1.0), (0.3, 4.0), (5.0, 0.2)] {
                let r = classify(&exp_params(a, b, l, m));
                let rec = if b > a { Recurrence::Transient } else { Recurrence::Recurrent };
                let lim = if a > b { LimitCount::Finite } else { LimitCount::Infinite };
                if r.recurrence != rec || r.limit_count != lim || r.null_recurrent_like != (a == b) {
                    return Err(format!("({a}, {b}, {l}, {m}): {:?} / {:?}", r.recurrence, r.limit_count));
                }
                checked += 1;
            }
        }
    }
    ensure(true, format!("{checked} grid points"))
}

/// Extinctions (s, y) with y at or above the largest fitness born before s.
fn pairwise_region_count(s: &EventStream) -> u64 {
    let births: Vec<(f64, f64)> = s.births().collect();
    s.extinctions()
        .filter(|&(t, y)| {
            let before: Vec<f64> = births.iter().filter(|b| b.0 < t).map(|b| b.1).collect();
            !before.is_empty() && before.iter().all(|&x| y >= x)
        })
        .count() as u64
}

/// Species alive at the horizon: each one born (or present at the start)
/// survives every later threshold that is not above it.
fn brute_force_final(initial: &[f64], s: &EventStream) -> Vec<f64> {
    let mut all: Vec<(f64, f64)> = initial.iter().map(|&x| (s.start - 1.0, x)).collect();
    all.extend(s.births());
    let mut alive: Vec<f64> =
        all.into_iter().filter(|&(t, x)| s.extinctions().all(|(u, y)| u <= t || y <= x)).map(|(_, x)| x).collect();
    alive.sort_by(f64::total_cmp);
    alive
}

fn c8_oracle() -> Result<String, String> {
    let sets = [
        exp_params(1.0, 2.0, 1.0, 1.0),
        exp_params(2.0, 1.0, 1.0, 1.0),
        ModelParams::new(
            1.3,
            0.8,
            DistributionSpec::weibull(0.7, 1.0).unwrap(),
            DistributionSpec::pareto(0.5, 2.0).unwrap(),
        )
        .unwrap(),
    ];
    let (mut m_bad, mut e_bad, mut events) = (0, 0, 0);
    for w in 0..1000u64 {
        let p = &sets[(w % 3) as usize];
        let mut rng = RandomStream::new(SEED + 8, w);
        let s = generate_stream(p, 0.0, 50.0, &mut rng).unwrap();
        if s.events().len() > 200 {
            return Err(format!("window {w} has {} events", s.events().len()));
        }
        events += s.events().len();
        let initial: Vec<f64> = (0..(w % 4)).map(|_| p.fitness.sample(&mut rng)).collect();
        m_bad += (count_m_from_stream(&s).0 != pairwise_region_count(&s)) as u32;
        let got = evolve(&Configuration::from_values(initial.clone()).unwrap(), &s).final_configuration.to_vec();
        e_bad += (got != brute_force_final(&initial, &s)) as u32;
    }
    ensure(
        m_bad == 0 && e_bad == 0,
        format!("1000 windows, {events} events, {m_bad} count and {e_bad} evolution mismatches"),
    )
}

fn c9_forward_limit() -> Result<String, String> {
    let p = exp_params(2.0, 1.0, 1.0, 1.0);
    let n = 10_000;
    let fwd = run(&p, &ReplicationPlan::new(Task::ForwardCountAt { t: 50.0 }, n, SEED + 9)).unwrap().counts();
    let lim = run(&p, &ReplicationPlan::new(Task::SampleLimitConfig, n, SEED + 10)).unwrap().counts();
    let g = two_sample_chi_square(&fwd, &lim, "forward vs limit").unwrap();
    ensure(g.p_value > ALPHA, format!("chi2 = {:.3}, df = {:?}, p = {:.4}", g.statistic, g.df, g.p_value))
}

fn c10_cross_param() -> Result<String, String> {
    let e = |r| DistributionSpec::exponential(r).unwrap();
    let w = |k, s| DistributionSpec::weibull(k, s).unwrap();
    let pa = |m, a| DistributionSpec::pareto(m, a).unwrap();
    let sets = [
        (e(1.0), e(2.0)),
        (e(0.4), e(1.3)),
        (w(2.0, 1.0), w(2.0, 0.6)),
        (pa(1.0, 1.0), pa(1.0, 3.0)),
        (e(0.7), w(1.5, 2.0)),
    ];
    let cfg = QuadratureConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (f, t) in sets {
        let p = ModelParams::new(1.0, 1.0, f, t).unwrap();
        let (x, u) = (x_space_integral(&p, &cfg).value, u_space_integral(&p, &cfg).value);
        match (x, u) {
            (IntegralValue::Finite(x), IntegralValue::Finite(u)) => {
                ok &= (x - u).abs() <= 1e-8;
                parts.push(format!("{:.3e}", (x - u).abs()));
            }
            _ => {
                ok = false;
                parts.push(format!("{x:?}/{u:?}"));
            }
        }
    }
    ensure(ok, format!("|x - u| = {}", parts.join(", ")))
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_threshold-gms")
}

fn cli(args: &[&str], out: &Path, threads: Option<&str>) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut cmd = Command::new(binary());
    cmd.args(args).arg("--out").arg(out);
    if let Some(t) = threads {
        cmd.env("THRESHOLD_GMS_THREADS", t);
    }
    let status = cmd.output().map_err(|e| e.to_string())?.status;
    if !status.success() {
        return Err(format!("{args:?} exited with {status}"));
    }
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(out).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn c11_properties() -> Result<String, String> {
    let cfg = QuadratureConfig::default();
    let levels = [0.5, 1.0, 1.5, 2.0];

    let mut ladders = 0;
    for (i, (a, b)) in [(1.0, 2.0), (2.0, 1.0), (1.0, 1.0), (0.5, 2.0)].into_iter().enumerate() {
        let p = exp_params(a, b, 1.0, 1.0);
        for k in 0..500u64 {
            let l = sample_fitness_ladder(
                &p,
                &StopRule::with_max_steps(300),
                &mut RandomStream::new(SEED + 11 + i as u64, k),
            )
            .unwrap();
            if !l.records().collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("ladder {k} of ({a}, {b}) not increasing"));
            }
            ladders += 1;
        }
    }

    let mut dominated = 0;
    for a in levels {
        for b in levels {
            let p = exp_params(a, b, 1.0, 1.0);
            if let (Some(inf), Some(m)) =
                (phi(&p, f64::INFINITY, &cfg).unwrap().value.finite(), expected_m(&p, &cfg).value.finite())
            {
                if inf > m * (1.0 + 1e-12) {
                    return Err(format!("φ(∞) = {inf} > E[M] = {m} at ({a}, {b})"));
                }
                dominated += 1;
            }
            let fwd = classify(&p);
            let bwd = classify(&p.swapped());
            let same = matches!(
                (fwd.limit_count, bwd.recurrence),
                (LimitCount::Finite, Recurrence::Transient)
                    | (LimitCount::Infinite, Recurrence::Recurrent)
                    | (LimitCount::Inconclusive, Recurrence::Inconclusive)
            );
            if !same {
                return Err(format!("duality fails at ({a}, {b})"));
            }
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let params = dir.path().join("params.json");
    std::fs::write(&params, serde_json::to_string(&exp_params(1.0, 2.0, 1.0, 1.0)).unwrap())
        .map_err(|e| e.to_string())?;
    let params = params.to_str().unwrap().to_owned();
    let commands: Vec<Vec<&str>> = vec![
        vec!["simulate", "--exponential", "2,1,1,1", "--horizon", "20", "--snapshot-every", "5"],
        vec!["simulate", "--params", &params, "--horizon", "20", "--format", "json"],
        vec!["classify", "--exponential", "1,2,1,1"],
        vec!["classify", "--params", &params, "--force-numeric", "--format", "json"],
        vec!["classify", "--grid", "alpha_star=0.5,1,2;alpha_dagger=0.5,1,2"],
        vec!["ladder-mc", "--exponential", "1,2,1,1", "--reps", "2000", "--export", "3"],
        vec!["ladder-mc", "--exponential", "1,2,1,1", "--task", "lambda", "--reps", "2000", "--mode", "total"],
        vec!["limit-mc", "--exponential", "2,1,1,1", "--reps", "2000", "--export", "2", "--format", "json"],
        vec!["validate", "--reps", "1000", "--only", "laplace,phase_map,cross_param"],
    ];
    let mut compared = 0;
    for (i, args) in commands.iter().enumerate() {
        let a = dir.path().join(format!("a{i}"));
        let first = cli(args, &a, Some("1"))?;
        let second = cli(args, &dir.path().join(format!("b{i}")), Some("3"))?;
        if first != second {
            return Err(format!("{args:?} differs between reruns"));
        }
        let manifest = a.join("manifest.json");
        let replay = cli(&["replay", manifest.to_str().unwrap()], &dir.path().join(format!("r{i}")), None)?;
        if replay != first {
            return Err(format!("replay of {args:?} differs"));
        }
        compared += 1;
    }

    ensure(
        true,
        format!("{ladders} ladders increasing; {dominated} points dominated; duality on 16 points; {compared} commands bit-identical on rerun and replay"),
    )
}

fn main() {
    let checks: [(u8, &str, Check); 11] = [
        (1, "E[M] exact value", c1_expected_m),
        (2, "M distribution", c2_m_law),
        (3, "Λ distribution", c3_lambda_law),
        (4, "Laplace identity", c4_laplace),
        (5, "limit size distribution", c5_limit_law),
        (6, "Σ₀ law", c6_sigma0_law),
        (7, "classifier phase map", c7_phase_map),
        (8, "oracle equivalence", c8_oracle),
        (9, "forward count against limit", c9_forward_limit),
        (10, "quadrature cross-parameterization", c10_cross_param),
        (11, "property suite", c11_properties),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS [{id:>2}] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
