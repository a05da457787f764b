//! Command execution. Every command computes all of its outputs in memory;
//! nothing is written until the whole run has succeeded.

use anyhow::{bail, Result};
use serde::Serialize;
use serde_json::json;
use threshold_gms::criteria::{classify_grid, classify_with, closed_forms_for, write_grid_csv, GridSpec};
use threshold_gms::ladder::{
    ladder_mass_lambda, sample_fitness_ladder, sample_limit_config, write_ladder_csv, Outcome,
};
use threshold_gms::montecarlo::{run, RunResult, Task};
use threshold_gms::process::{evolve_sampled, generate_stream, last_empty_time};
use threshold_gms::quadrature::QuadratureConfig;
use threshold_gms::validation::{run_checks, select, ValidationConfig, CHECKS};
use threshold_gms::{Configuration, RandomStream};

use crate::config::{ClassifyConfig, Format, McConfig, RunConfig, SimulateConfig, ValidateConfig};

/// Files to write, console text, and whether the run met its own criteria.
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub console: String,
    pub success: bool,
}

impl Outputs {
    fn ok(files: Vec<(String, Vec<u8>)>, console: String) -> Self {
        Self { files, console, success: true }
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn execute(config: &RunConfig) -> Result<Outputs> {
    match config {
        RunConfig::Simulate(c) => simulate(c),
        RunConfig::Classify(c) => classify_cmd(c),
        RunConfig::LadderMc(c) => ladder_mc(c),
        RunConfig::LimitMc(c) => limit_mc(c),
        RunConfig::Validate(c) => validate(c),
    }
}

fn simulate(c: &SimulateConfig) -> Result<Outputs> {
    let initial = Configuration::from_values(c.initial.iter().copied())?;
    let mut rng = RandomStream::new(c.seed, 0);
    let mut stream = generate_stream(&c.params, c.start, c.horizon, &mut rng)?;
    stream.seed = Some(c.seed);
    let trace = evolve_sampled(&initial, &stream, &c.snapshots)?;

    let mut files = Vec::new();
    match c.format {
        Format::Csv => {
            let mut buf = Vec::new();
            trace.write_trace_csv(&mut buf)?;
            files.push(("trace.csv".to_string(), buf));
        }
        Format::Json => {
            let events: Vec<_> = stream
                .events()
                .iter()
                .zip(trace.count_after())
                .map(|(e, n)| json!({"time": e.time, "kind": if e.is_birth() { "birth" } else { "extinction" }, "mark": e.mark(), "count_after": n}))
                .collect();
            files.push(("trace.json".to_string(), json_bytes(&events)?));
        }
    }
    if !c.snapshots.is_empty() {
        let mut buf = Vec::new();
        trace.write_snapshot_csv(&mut buf)?;
        files.push(("snapshots.csv".to_string(), buf));
    }
    let births = stream.births().count();
    let summary = json!({
        "events": stream.events().len(),
        "births": births,
        "extinctions": stream.events().len() - births,
        "initial_count": initial.len(),
        "final_count": trace.final_configuration.len(),
        "final_configuration": trace.final_configuration,
        "empty_intervals": trace.empty_intervals,
        "last_empty_time": last_empty_time(&trace),
    });
    let console = format!(
        "{} events on [{}, {}]; {} species at the horizon",
        stream.events().len(),
        c.start,
        c.horizon,
        trace.final_configuration.len()
    );
    files.push(("summary.json".to_string(), json_bytes(&summary)?));
    Ok(Outputs::ok(files, console))
}

fn classify_cmd(c: &ClassifyConfig) -> Result<Outputs> {
    match (&c.params, &c.grid) {
        (Some(p), None) => {
            let report = classify_with(p, &QuadratureConfig::default(), c.force_numeric);
            let console = format!(
                "recurrence: {:?}; limit count: {:?}; method: {:?}; null recurrent like: {}",
                report.recurrence, report.limit_count, report.method, report.null_recurrent_like
            );
            let file = match c.format {
                Format::Json => ("classification.json".to_string(), json_bytes(&report)?),
                Format::Csv => {
                    let row = format!(
                        "recurrence,limit_count,method,e_m,e_n,phi_inf,phi_bar_inf,null_recurrent_like\n{:?},{:?},{:?},{},{},{},{},{}\n",
                        report.recurrence,
                        report.limit_count,
                        report.method,
                        value_text(&report.integrals.e_m),
                        value_text(&report.integrals.e_n),
                        value_text(&report.integrals.phi_inf),
                        value_text(&report.integrals.phi_bar_inf),
                        report.null_recurrent_like
                    );
                    ("classification.csv".to_string(), row.into_bytes())
                }
            };
            Ok(Outputs::ok(vec![file], console))
        }
        (None, Some(spec)) => {
            if c.force_numeric {
                bail!("--force-numeric applies to single parameter sets only");
            }
            let grid: GridSpec = spec.parse()?;
            let rows = classify_grid(&grid)?;
            let file = match c.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_grid_csv(&rows, &mut buf)?;
                    ("phase_map.csv".to_string(), buf)
                }
                Format::Json => {
                    let v: Vec<_> = rows
                        .iter()
                        .map(|r| {
                            json!({
                                "alpha_star": r.point[0], "alpha_dagger": r.point[1],
                                "lambda_star": r.point[2], "lambda_dagger": r.point[3],
                                "report": r.report,
                            })
                        })
                        .collect();
                    ("phase_map.json".to_string(), json_bytes(&v)?)
                }
            };
            Ok(Outputs::ok(vec![file], format!("{} grid points classified", rows.len())))
        }
        _ => bail!("classify needs exactly one of --params/--exponential or --grid"),
    }
}

fn value_text(v: &threshold_gms::criteria::IntegralValue) -> String {
    serde_json::to_value(v).map(|x| x.to_string().trim_matches('"').to_string()).unwrap_or_default()
}

fn samples_file(result: &RunResult, format: Format) -> Result<(String, Vec<u8>)> {
    Ok(match format {
        Format::Csv => {
            let mut buf = Vec::new();
            result.write_samples_csv(&mut buf)?;
            ("samples.csv".to_string(), buf)
        }
        Format::Json => ("samples.json".to_string(), json_bytes(&result.replicates)?),
    })
}

fn run_console(result: &RunResult) -> String {
    match &result.stats.summary {
        Some(s) => format!(
            "{} replications: mean {:.6} (se {:.6}), variance {:.6}; {} divergent",
            result.replicates.len(),
            s.mean,
            s.se,
            s.variance,
            result.stats.divergent
        ),
        None => format!("{} replications, all divergent", result.replicates.len()),
    }
}

fn ladder_mc(c: &McConfig) -> Result<Outputs> {
    if !matches!(c.plan.task, Task::SampleM | Task::SampleLambda) {
        bail!("ladder-mc runs the m or lambda task");
    }
    let result = run(&c.params, &c.plan)?;
    let mut files = vec![samples_file(&result, c.format)?];
    // replication i's ladder is the first thing drawn from its stream
    for i in 0..c.export.min(c.plan.replications) {
        let mut rng = RandomStream::new(c.plan.base_seed, i as u64);
        let ladder = sample_fitness_ladder(&c.params, &c.plan.stop, &mut rng)?;
        let mass = ladder_mass_lambda(&ladder, &c.params);
        let mut buf = Vec::new();
        write_ladder_csv(&ladder, &mass, &mut buf)?;
        files.push((format!("ladder_{i}.csv"), buf));
        let diag = json!({
            "replication": i,
            "truncated_at": ladder.truncated_at,
            "stop_reason": ladder.stop_reason,
            "tail_bound": ladder.tail_bound,
            "divergent": ladder.divergent,
            "lambda": mass.value,
        });
        files.push((format!("ladder_{i}.json"), json_bytes(&diag)?));
    }
    let summary = json!({
        "summary": result.stats,
        "closed_forms": closed_forms_for(&c.params),
    });
    files.push(("summary.json".to_string(), json_bytes(&summary)?));
    Ok(Outputs::ok(files, run_console(&result)))
}

fn limit_mc(c: &McConfig) -> Result<Outputs> {
    if c.plan.task != Task::SampleLimitConfig {
        bail!("limit-mc runs the limit configuration task");
    }
    let result = run(&c.params, &c.plan)?;
    let mut files = vec![samples_file(&result, c.format)?];
    for i in 0..c.export.min(c.plan.replications) {
        let mut rng = RandomStream::new(c.plan.base_seed, i as u64);
        match sample_limit_config(&c.params, &c.plan.stop, c.plan.poisson_mode, &mut rng)? {
            Outcome::Finite(s) => {
                let mut buf = Vec::new();
                s.write_species_csv(&mut buf)?;
                files.push((format!("species_{i}.csv"), buf));
                let diag = json!({
                    "replication": i,
                    "n0": s.n0,
                    "n_above": s.n_above,
                    "total": s.total,
                    "first_gap": s.ladder.first_gap,
                    "truncated_at": s.ladder.truncated_at,
                    "stop_reason": s.ladder.stop_reason,
                    "tail_bound": s.ladder.tail_bound,
                });
                files.push((format!("species_{i}.json"), json_bytes(&diag)?));
            }
            Outcome::Divergent => {
                files.push((format!("species_{i}.json"), json_bytes(&json!({"replication": i, "divergent": true}))?));
            }
        }
    }
    let summary = json!({
        "summary": result.stats,
        "closed_forms": closed_forms_for(&c.params),
    });
    files.push(("summary.json".to_string(), json_bytes(&summary)?));
    Ok(Outputs::ok(files, run_console(&result)))
}

fn validate(c: &ValidateConfig) -> Result<Outputs> {
    let ids = select(c.only.as_deref())?;
    let cfg = ValidationConfig { reps: c.reps, seed: c.seed, ..Default::default() };
    let checks = run_checks(&cfg, &ids)?;
    let passed = checks.iter().all(|o| o.passed);
    let mut console = String::new();
    for o in &checks {
        let desc = CHECKS[o.id as usize - 1].2;
        console.push_str(&format!(
            "{} [{:>2}] {}: {} ({})\n",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.key,
            desc,
            o.detail
        ));
    }
    console.push_str(&format!("{} of {} checks passed", checks.iter().filter(|o| o.passed).count(), checks.len()));
    let report = json!({ "reps": c.reps, "seed": c.seed, "passed": passed, "checks": checks });
    Ok(Outputs { files: vec![("report.json".to_string(), json_bytes(&report)?)], console, success: passed })
}
