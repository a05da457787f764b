//! Parallel replications with per-replication random streams.
//!
//! Replication `i` of a plan draws only from `RandomStream::new(base_seed, i)`
//! and results are collected in replication order, so output does not depend
//! on the number of threads or on scheduling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configuration::Configuration;
use crate::criteria::{classify, LimitCount};
use crate::distributions::ModelParams;
use crate::error::{Error, Result};
use crate::ladder::{
    ladder_mass_lambda, sample_fitness_ladder, sample_limit_config, sample_m, Outcome, PoissonMode, StopRule,
};
use crate::process::{evolve, generate_stream, last_empty_time};
use crate::rng::RandomStream;
use crate::stats::{two_sample_chi_square, GofReport, Summary};

pub const THREADS_ENV: &str = "THRESHOLD_GMS_THREADS";

/// Sizes the global worker pool from `THRESHOLD_GMS_THREADS` when set.
/// Has no effect once the pool exists.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    SampleM,
    SampleLambda,
    SampleLimitConfig,
    /// Species count at time `t` from an empty start.
    ForwardCountAt {
        t: f64,
    },
    /// Last time in `[0, horizon]` at which a path from an empty start is empty.
    EmptyTimeScan {
        horizon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationPlan {
    pub task: Task,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub poisson_mode: PoissonMode,
}

impl ReplicationPlan {
    pub fn new(task: Task, replications: usize, base_seed: u64) -> Self {
        Self { task, replications, base_seed, stop: StopRule::default(), poisson_mode: PoissonMode::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be > 0".into()));
        }
        self.stop.validate()?;
        match self.task {
            Task::ForwardCountAt { t: x } | Task::EmptyTimeScan { horizon: x } if !(x.is_finite() && x >= 0.0) => {
                Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {x}")))
            }
            _ => Ok(()),
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Replicate {
    M { m: u64, lambda: f64 },
    Lambda { lambda: f64 },
    Limit { n0: u64, n_above: u64, total: u64, sigma0: f64 },
    Count { count: u64 },
    LastEmpty { time: f64 },
    Divergent,
}

impl Replicate {
    /// The value summarized for this task.
    pub fn primary(&self) -> Option<f64> {
        match *self {
            Replicate::M { m, .. } => Some(m as f64),
            Replicate::Lambda { lambda } => Some(lambda),
            Replicate::Limit { total, .. } => Some(total as f64),
            Replicate::Count { count } => Some(count as f64),
            Replicate::LastEmpty { time } => Some(time),
            Replicate::Divergent => None,
        }
    }

    fn fields(&self) -> Vec<String> {
        match *self {
            Replicate::M { m, lambda } => vec![m.to_string(), lambda.to_string()],
            Replicate::Lambda { lambda } => vec![lambda.to_string()],
            Replicate::Limit { n0, n_above, total, sigma0 } => {
                vec![n0.to_string(), n_above.to_string(), total.to_string(), sigma0.to_string()]
            }
            Replicate::Count { count } => vec![count.to_string()],
            Replicate::LastEmpty { time } => vec![time.to_string()],
            Replicate::Divergent => Vec::new(),
        }
    }
}

fn columns(task: Task) -> &'static [&'static str] {
    match task {
        Task::SampleM => &["m", "lambda"],
        Task::SampleLambda => &["lambda"],
        Task::SampleLimitConfig => &["n0", "n_above", "total", "sigma0"],
        Task::ForwardCountAt { .. } => &["count"],
        Task::EmptyTimeScan { .. } => &["last_empty_time"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// Moments of the non-divergent replications.
    pub summary: Option<Summary>,
    pub divergent: usize,
    pub sentinel_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub plan: ReplicationPlan,
    pub replicates: Vec<Replicate>,
    #[serde(flatten)]
    pub stats: RunSummary,
}

impl RunResult {
    pub fn values(&self) -> Vec<f64> {
        self.replicates.iter().filter_map(Replicate::primary).collect()
    }

    /// Integer-valued primaries, for count tasks.
    pub fn counts(&self) -> Vec<u64> {
        self.values().into_iter().map(|v| v as u64).collect()
    }

    /// CSV with one row per replication; divergent rows leave value columns empty.
    pub fn write_samples_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse(e.to_string());
        let cols = columns(self.plan.task);
        let mut header = vec!["replication", "status"];
        header.extend_from_slice(cols);
        w.write_record(&header).map_err(io)?;
        for (i, r) in self.replicates.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            if let Replicate::Divergent = r {
                rec.push("divergent".into());
                rec.extend(std::iter::repeat_n(String::new(), cols.len()));
            } else {
                rec.push("ok".into());
                rec.extend(r.fields());
            }
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

fn replicate(params: &ModelParams, plan: &ReplicationPlan, index: u64) -> Result<Replicate> {
    let mut rng = RandomStream::new(plan.base_seed, index);
    Ok(match plan.task {
        Task::SampleM => {
            let ladder = sample_fitness_ladder(params, &plan.stop, &mut rng)?;
            let lambda = ladder_mass_lambda(&ladder, params).value;
            match sample_m(&ladder, params, plan.poisson_mode, &mut rng) {
                Outcome::Finite(m) => Replicate::M { m, lambda },
                Outcome::Divergent => Replicate::Divergent,
            }
        }
        Task::SampleLambda => {
            let ladder = sample_fitness_ladder(params, &plan.stop, &mut rng)?;
            if ladder.divergent {
                Replicate::Divergent
            } else {
                Replicate::Lambda { lambda: ladder_mass_lambda(&ladder, params).value }
            }
        }
        Task::SampleLimitConfig => match sample_limit_config(params, &plan.stop, plan.poisson_mode, &mut rng)? {
            Outcome::Finite(s) => Replicate::Limit {
                n0: s.n0,
                n_above: s.n_above,
                total: s.total,
                sigma0: params.lambda_birth * s.ladder.first_gap,
            },
            Outcome::Divergent => Replicate::Divergent,
        },
        Task::ForwardCountAt { t } => {
            let stream = generate_stream(params, 0.0, t, &mut rng)?;
            Replicate::Count { count: evolve(&Configuration::new(), &stream).final_configuration.len() as u64 }
        }
        Task::EmptyTimeScan { horizon } => {
            let stream = generate_stream(params, 0.0, horizon, &mut rng)?;
            let trace = evolve(&Configuration::new(), &stream);
            Replicate::LastEmpty { time: last_empty_time(&trace).unwrap_or(0.0) }
        }
    })
}

/// Runs every replication of `plan`; divergent draws are counted, not summarized.
pub fn run(params: &ModelParams, plan: &ReplicationPlan) -> Result<RunResult> {
    plan.validate()?;
    let replicates = (0..plan.replications as u64)
        .into_par_iter()
        .map(|i| replicate(params, plan, i))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = replicates.iter().filter_map(Replicate::primary).collect();
    let divergent = replicates.len() - values.len();
    Ok(RunResult {
        plan: *plan,
        stats: RunSummary {
            summary: Summary::of(&values),
            divergent,
            sentinel_fraction: divergent as f64 / replicates.len() as f64,
        },
        replicates,
    })
}

/// Two-sample chi-square between forward species counts at `t_large` (empty
/// start) and limit-configuration totals, `n` draws each.
pub fn compare_forward_vs_limit(params: &ModelParams, t_large: f64, n: usize, base_seed: u64) -> Result<GofReport> {
    let report = classify(params);
    if report.limit_count != LimitCount::Finite {
        return Err(Error::RegimeMismatch(format!(
            "limit count is {:?}; forward and limit counts are only comparable when it is finite",
            report.limit_count
        )));
    }
    let forward = run(
        params,
        &ReplicationPlan::new(Task::ForwardCountAt { t: t_large }, n, crate::rng::derive_seed(base_seed, 0)),
    )?;
    let limit = run(params, &ReplicationPlan::new(Task::SampleLimitConfig, n, crate::rng::derive_seed(base_seed, 1)))?;
    two_sample_chi_square(
        &forward.counts(),
        &limit.counts(),
        &format!("species count at t = {t_large} vs limit configuration size"),
    )
}
