//! Record ladders and the counts built on top of them.
//!
//! The fitness ladder is the sequence of running fitness maxima together with
//! the waiting times between them. Extinction points above it are counted by
//! `M`, whose conditional mean given the ladder is the mass `Λ`. Running the
//! same construction backwards in time on thresholds gives the threshold
//! ladder, whose bands carry the species of the limit configuration.
//!
//! Ladders are infinite objects; sampling stops according to a [`StopRule`]
//! and every ladder reports why it stopped and how much mass may be missing.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{psi_asymptotics, PsiAsymptotics, TailBound};
use crate::configuration::Configuration;
use crate::distributions::{DistributionSpec, ModelParams, SURVIVAL_FLOOR};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, sample_poisson};
use crate::process::EventStream;
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    pub max_steps: usize,
    pub tail_tolerance: f64,
    /// Consecutive steps with mass below `tail_tolerance / quiet_steps` that end a ladder.
    pub quiet_steps: usize,
    /// Steps inspected by the divergence check when a ladder is cut short.
    pub divergence_window: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { max_steps: 10_000, tail_tolerance: 1e-9, quiet_steps: 20, divergence_window: 100 }
    }
}

impl StopRule {
    pub fn with_max_steps(max_steps: usize) -> Self {
        Self { max_steps, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.quiet_steps == 0 || self.divergence_window < 2 {
            return Err(Error::InvalidArgument(format!("invalid stop rule {self:?}")));
        }
        if !(self.tail_tolerance.is_finite() && self.tail_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tail_tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    TailBound,
    QuietRun,
    Underflow,
    /// Ladder read off a finite event stream.
    WindowEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderStep {
    pub record: f64,
    pub gap: f64,
}

/// Strictly increasing record values with the waiting time spent on each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordLadder {
    pub steps: Vec<LadderStep>,
    pub truncated_at: usize,
    pub tail_bound: TailBound,
    pub stop_reason: StopReason,
    /// Set when the missing mass is judged infinite.
    pub divergent: bool,
}

impl RecordLadder {
    pub fn records(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.record)
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].record > w[0].record) && self.steps.iter().all(|s| s.gap > 0.0)
    }
}

/// Forward fitness records `(X_{I_k}, ΔT_{I_k})`.
pub type FitnessLadder = RecordLadder;

/// Backward threshold records `(Y_{J_k}, ΔS_{J_k})` plus the time `ΔS₀` back
/// to the most recent extinction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdLadder {
    pub first_gap: f64,
    #[serde(flatten)]
    pub ladder: RecordLadder,
}

impl std::ops::Deref for ThresholdLadder {
    type Target = RecordLadder;

    fn deref(&self) -> &RecordLadder {
        &self.ladder
    }
}

/// Mean measure of the opposing stream over the region above a ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderMass {
    /// `Λ` or `Σ`; compensated sum of `per_step`.
    pub value: f64,
    pub per_step: Vec<f64>,
    pub truncation_tail: TailBound,
    /// `Σ₀`, the mass of the band before the first threshold record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leading: Option<f64>,
    pub divergent: bool,
}

/// A count or the verdict that it is infinite.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Finite(T),
    Divergent,
}

impl<T> Outcome<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Outcome::Finite(v) => Some(v),
            Outcome::Divergent => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, Outcome::Divergent)
    }
}

/// How conditionally Poisson counts are drawn given a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonMode {
    /// One Poisson draw per band, summed.
    #[default]
    PerStep,
    /// A single Poisson draw with the total mass.
    Total,
}

struct Side<'a> {
    own_rate: f64,
    own: &'a DistributionSpec,
    opp_rate: f64,
    opp: &'a DistributionSpec,
    asym: PsiAsymptotics,
}

impl<'a> Side<'a> {
    fn fitness(params: &'a ModelParams) -> Self {
        Self {
            own_rate: params.lambda_birth,
            own: &params.fitness,
            opp_rate: params.lambda_extinct,
            opp: &params.threshold,
            asym: psi_asymptotics(params),
        }
    }

    fn threshold(params: &'a ModelParams) -> Self {
        Self {
            own_rate: params.lambda_extinct,
            own: &params.threshold,
            opp_rate: params.lambda_birth,
            opp: &params.fitness,
            asym: psi_asymptotics(&params.swapped()),
        }
    }

    fn step_mass(&self, step: &LadderStep) -> f64 {
        self.opp_rate * step.gap * (-self.opp.hazard(step.record)).exp()
    }
}

fn sample_record_ladder(side: &Side, stop: &StopRule, rng: &mut RandomStream) -> Result<RecordLadder> {
    stop.validate()?;
    let quiet_level = stop.tail_tolerance / stop.quiet_steps as f64;
    let rate_ratio = side.opp_rate / side.own_rate;
    let mut steps = Vec::new();
    let mut masses = Vec::new();
    let mut quiet = 0usize;
    let mut tail = TailBound::Unknown;
    let mut record = side.own.sample(rng);

    let reason = loop {
        let hazard = side.own.hazard(record);
        let survival = (-hazard).exp();
        if survival < SURVIVAL_FLOOR {
            break StopReason::Underflow;
        }
        let step = LadderStep { record, gap: rng.exp1() / (side.own_rate * survival) };
        let mass = side.step_mass(&step);
        steps.push(step);
        masses.push(mass);

        tail = side.asym.tail_integral(hazard).scaled(rate_ratio);
        if let TailBound::Bound(b) = tail {
            if b < stop.tail_tolerance {
                break StopReason::TailBound;
            }
        }
        quiet = if mass < quiet_level { quiet + 1 } else { 0 };
        if quiet >= stop.quiet_steps && tail != TailBound::Infinite {
            break StopReason::QuietRun;
        }
        if steps.len() >= stop.max_steps {
            break StopReason::MaxSteps;
        }
        record = side.own.sample_conditional_above(record, rng)?;
    };

    let divergent = match reason {
        StopReason::MaxSteps | StopReason::Underflow => match tail {
            TailBound::Infinite => true,
            TailBound::Bound(_) => false,
            TailBound::Unknown => masses_not_decaying(&masses, stop.divergence_window),
        },
        _ => false,
    };

    Ok(RecordLadder { truncated_at: steps.len(), steps, tail_bound: tail, stop_reason: reason, divergent })
}

/// Trend test over the last `window` masses: the later half is not smaller
/// on average than the earlier half.
fn masses_not_decaying(masses: &[f64], window: usize) -> bool {
    if masses.len() < window {
        return false;
    }
    let tail = &masses[masses.len() - window..];
    let (early, late) = tail.split_at(window / 2);
    compensated_sum(late.iter().copied()) / late.len() as f64
        >= compensated_sum(early.iter().copied()) / early.len() as f64
}

/// Samples the forward fitness-record ladder.
pub fn sample_fitness_ladder(params: &ModelParams, stop: &StopRule, rng: &mut RandomStream) -> Result<FitnessLadder> {
    sample_record_ladder(&Side::fitness(params), stop, rng)
}

/// Samples the backward threshold-record ladder.
pub fn sample_threshold_ladder(
    params: &ModelParams,
    stop: &StopRule,
    rng: &mut RandomStream,
) -> Result<ThresholdLadder> {
    let first_gap = rng.exp1() / params.lambda_extinct;
    let ladder = sample_record_ladder(&Side::threshold(params), stop, rng)?;
    Ok(ThresholdLadder { first_gap, ladder })
}

fn ladder_mass(side: &Side, ladder: &RecordLadder, leading: Option<f64>) -> LadderMass {
    let per_step: Vec<f64> = ladder.steps.iter().map(|s| side.step_mass(s)).collect();
    LadderMass {
        value: compensated_sum(per_step.iter().copied()),
        per_step,
        truncation_tail: ladder.tail_bound,
        leading,
        divergent: ladder.divergent,
    }
}

/// `Λ = Σ_k λ† ΔT_{I_k} F̄†(X_{I_k})`.
pub fn ladder_mass_lambda(ladder: &FitnessLadder, params: &ModelParams) -> LadderMass {
    ladder_mass(&Side::fitness(params), ladder, None)
}

/// `Σ = Σ_k λ★ ΔS_{J_k} F̄★(Y_{J_k})`, with `Σ₀ = λ★ ΔS₀` in `leading`.
pub fn sigma_mass(ladder: &ThresholdLadder, params: &ModelParams) -> LadderMass {
    ladder_mass(&Side::threshold(params), &ladder.ladder, Some(params.lambda_birth * ladder.first_gap))
}

fn poisson_count(mass: &LadderMass, mode: PoissonMode, rng: &mut RandomStream) -> Outcome<u64> {
    if mass.divergent {
        return Outcome::Divergent;
    }
    Outcome::Finite(match mode {
        PoissonMode::PerStep => mass.per_step.iter().map(|&m| sample_poisson(m, rng)).sum(),
        PoissonMode::Total => sample_poisson(mass.value, rng),
    })
}

/// Number `M` of extinction points above the fitness ladder.
pub fn sample_m(
    ladder: &FitnessLadder,
    params: &ModelParams,
    mode: PoissonMode,
    rng: &mut RandomStream,
) -> Outcome<u64> {
    poisson_count(&ladder_mass_lambda(ladder, params), mode, rng)
}

/// Reads the fitness ladder off a finite stream and counts the extinction
/// points inside the region above it. The last step is clipped at the horizon.
pub fn count_m_from_stream(stream: &EventStream) -> (u64, FitnessLadder) {
    let mut steps: Vec<LadderStep> = Vec::new();
    let mut record_time = None;
    let mut m = 0u64;
    for e in stream.events() {
        match e.kind {
            crate::process::EventKind::Birth { fitness } => {
                let is_record = steps.last().is_none_or(|s| fitness > s.record);
                if is_record {
                    if let (Some(t0), Some(last)) = (record_time, steps.last_mut()) {
                        last.gap = e.time - t0;
                    }
                    steps.push(LadderStep { record: fitness, gap: 0.0 });
                    record_time = Some(e.time);
                }
            }
            crate::process::EventKind::Extinction { threshold } => {
                if steps.last().is_some_and(|s| threshold >= s.record) {
                    m += 1;
                }
            }
        }
    }
    if let (Some(t0), Some(last)) = (record_time, steps.last_mut()) {
        last.gap = stream.horizon - t0;
    }
    let ladder = RecordLadder {
        truncated_at: steps.len(),
        steps,
        tail_bound: TailBound::Unknown,
        stop_reason: StopReason::WindowEnd,
        divergent: false,
    };
    (m, ladder)
}

/// One draw of the limit configuration: species in the band before the most
/// recent extinction, plus the species above each threshold-ladder step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitConfigSample {
    pub ladder: ThresholdLadder,
    /// `bands[0]` is the unrestricted band; `bands[k]` sits above `Y_{J_k}`.
    pub bands: Vec<Vec<f64>>,
    pub n0: u64,
    pub n_above: u64,
    pub total: u64,
}

impl LimitConfigSample {
    pub fn species(&self) -> Configuration {
        let mut c = Configuration::new();
        for v in self.bands.iter().flatten() {
            c.insert(*v);
        }
        c
    }

    /// CSV `band,fitness`, bands in ladder order.
    pub fn write_species_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["band", "fitness"]).map_err(io)?;
        for (k, band) in self.bands.iter().enumerate() {
            for x in band {
                w.write_record([k.to_string(), x.to_string()]).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// Samples the limit configuration band by band above the threshold ladder.
pub fn sample_limit_config(
    params: &ModelParams,
    stop: &StopRule,
    mode: PoissonMode,
    rng: &mut RandomStream,
) -> Result<Outcome<LimitConfigSample>> {
    let ladder = sample_threshold_ladder(params, stop, rng)?;
    if ladder.divergent {
        return Ok(Outcome::Divergent);
    }
    let mass = sigma_mass(&ladder, params);
    let n0 = sample_poisson(mass.leading.unwrap_or(0.0), rng);
    let mut bands = Vec::with_capacity(ladder.steps.len() + 1);
    bands.push((0..n0).map(|_| params.fitness.sample(rng)).collect::<Vec<_>>());

    let counts: Vec<u64> = match mode {
        PoissonMode::PerStep => mass.per_step.iter().map(|&m| sample_poisson(m, rng)).collect(),
        PoissonMode::Total => split_total(&mass, rng),
    };
    let mut n_above = 0u64;
    for (step, &n) in ladder.steps.iter().zip(&counts) {
        let mut band = Vec::with_capacity(n as usize);
        for _ in 0..n {
            band.push(params.fitness.sample_conditional_above(step.record, rng)?);
        }
        n_above += n;
        bands.push(band);
    }
    Ok(Outcome::Finite(LimitConfigSample { ladder, bands, n0, n_above, total: n0 + n_above }))
}

/// Poisson(Σ) total spread over bands multinomially in proportion to mass.
fn split_total(mass: &LadderMass, rng: &mut RandomStream) -> Vec<u64> {
    let total = sample_poisson(mass.value, rng);
    let mut counts = vec![0u64; mass.per_step.len()];
    if mass.value <= 0.0 {
        return counts;
    }
    for _ in 0..total {
        let target = rng.uniform() * mass.value;
        let mut acc = 0.0;
        let mut idx = counts.len() - 1;
        for (k, &m) in mass.per_step.iter().enumerate() {
            acc += m;
            if target <= acc {
                idx = k;
                break;
            }
        }
        counts[idx] += 1;
    }
    counts
}

/// CSV `k,record_value,gap,per_step_mass`; `k` counts from 1.
pub fn write_ladder_csv<W: Write>(ladder: &RecordLadder, mass: &LadderMass, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["k", "record_value", "gap", "per_step_mass"]).map_err(io)?;
    for (k, (s, m)) in ladder.steps.iter().zip(&mass.per_step).enumerate() {
        w.write_record([(k + 1).to_string(), s.record.to_string(), s.gap.to_string(), m.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::Event;

    fn example_21() -> ModelParams {
        ModelParams::exponential(1.0, 2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn single_step_ladder() {
        let p = example_21();
        let mut rng = RandomStream::new(1, 0);
        let l = sample_fitness_ladder(&p, &StopRule::with_max_steps(1), &mut rng).unwrap();
        assert_eq!(l.steps.len(), 1);
        assert_eq!(l.truncated_at, 1);
        assert_eq!(l.stop_reason, StopReason::MaxSteps);
        assert!(!l.divergent);
    }

    #[test]
    fn single_step_mass() {
        let p = ModelParams::exponential(1.0, 2.0, 1.5, 3.0).unwrap();
        let ladder = RecordLadder {
            steps: vec![LadderStep { record: 0.7, gap: 2.5 }],
            truncated_at: 1,
            tail_bound: TailBound::Unknown,
            stop_reason: StopReason::MaxSteps,
            divergent: false,
        };
        let m = ladder_mass_lambda(&ladder, &p);
        let want = 3.0 * 2.5 * (-2.0f64 * 0.7).exp();
        assert!((m.value - want).abs() < 1e-15);
        assert_eq!(m.per_step.len(), 1);
    }

    #[test]
    fn empty_ladder_gives_zero() {
        let p = example_21();
        let ladder = RecordLadder {
            steps: vec![],
            truncated_at: 0,
            tail_bound: TailBound::Unknown,
            stop_reason: StopReason::WindowEnd,
            divergent: false,
        };
        let mut rng = RandomStream::new(1, 0);
        assert_eq!(sample_m(&ladder, &p, PoissonMode::PerStep, &mut rng), Outcome::Finite(0));
        assert_eq!(sample_m(&ladder, &p, PoissonMode::Total, &mut rng), Outcome::Finite(0));
    }

    #[test]
    fn transient_ladder_stops_on_tail_bound() {
        let p = example_21();
        let mut rng = RandomStream::new(2, 0);
        for _ in 0..200 {
            let l = sample_fitness_ladder(&p, &StopRule::default(), &mut rng).unwrap();
            assert_eq!(l.stop_reason, StopReason::TailBound);
            assert!(l.is_strictly_increasing());
            // remaining expected mass is e^{-X} < 1e-9
            assert!(l.steps.last().unwrap().record > -(1e-9f64).ln());
        }
    }

    #[test]
    fn recurrent_ladder_is_divergent() {
        let p = ModelParams::exponential(2.0, 1.0, 1.0, 1.0).unwrap();
        let mut rng = RandomStream::new(3, 0);
        let l = sample_fitness_ladder(&p, &StopRule::default(), &mut rng).unwrap();
        assert!(l.divergent);
        assert_eq!(l.stop_reason, StopReason::Underflow);
        assert_eq!(sample_m(&l, &p, PoissonMode::PerStep, &mut rng), Outcome::Divergent);
    }

    #[test]
    fn equal_laws_are_divergent_both_ways() {
        let d = DistributionSpec::weibull(1.5, 2.0).unwrap();
        let p = ModelParams::new(1.0, 3.0, d.clone(), d).unwrap();
        let mut rng = RandomStream::new(4, 0);
        assert!(sample_fitness_ladder(&p, &StopRule::default(), &mut rng).unwrap().divergent);
        assert!(sample_threshold_ladder(&p, &StopRule::default(), &mut rng).unwrap().divergent);
        assert!(sample_limit_config(&p, &StopRule::default(), PoissonMode::PerStep, &mut rng).unwrap().is_divergent());
    }

    #[test]
    fn unknown_tail_trend_check() {
        let growing: Vec<f64> = (0..100).map(|k| k as f64).collect();
        assert!(masses_not_decaying(&growing, 100));
        let decaying: Vec<f64> = (0..100).map(|k| (-(k as f64)).exp()).collect();
        assert!(!masses_not_decaying(&decaying, 100));
        assert!(!masses_not_decaying(&growing[..50], 100));
    }

    #[test]
    fn hand_built_stream_count() {
        let s = EventStream::new(
            0.0,
            3.0,
            vec![Event::birth(1.0, 1.0), Event::extinction(1.5, 2.0), Event::birth(2.0, 3.0)],
            None,
        )
        .unwrap();
        let (m, ladder) = count_m_from_stream(&s);
        assert_eq!(m, 1);
        assert_eq!(ladder.records().collect::<Vec<_>>(), vec![1.0, 3.0]);
        assert_eq!(ladder.steps[0].gap, 1.0);
        assert_eq!(ladder.steps[1].gap, 1.0);
    }

    #[test]
    fn no_extinctions_no_count() {
        let s = EventStream::new(0.0, 3.0, vec![Event::birth(1.0, 1.0), Event::birth(2.0, 0.5)], None).unwrap();
        let (m, ladder) = count_m_from_stream(&s);
        assert_eq!(m, 0);
        assert_eq!(ladder.steps.len(), 1);
        assert_eq!(ladder.steps[0].gap, 2.0);
    }

    #[test]
    fn vanishing_window_gives_empty_limit() {
        // a ladder whose only band has zero width and zero mass
        let p = ModelParams::exponential(2.0, 1.0, 1.0, 1.0).unwrap();
        let ladder = ThresholdLadder {
            first_gap: 0.0,
            ladder: RecordLadder {
                steps: vec![],
                truncated_at: 0,
                tail_bound: TailBound::Bound(0.0),
                stop_reason: StopReason::TailBound,
                divergent: false,
            },
        };
        let mass = sigma_mass(&ladder, &p);
        assert_eq!(mass.leading, Some(0.0));
        assert_eq!(mass.value, 0.0);
        let mut rng = RandomStream::new(1, 0);
        assert_eq!(sample_poisson(mass.leading.unwrap(), &mut rng), 0);
    }

    #[test]
    fn limit_sample_invariants() {
        let p = ModelParams::exponential(2.0, 1.0, 1.0, 1.0).unwrap();
        let mut rng = RandomStream::new(5, 0);
        for mode in [PoissonMode::PerStep, PoissonMode::Total] {
            for _ in 0..500 {
                let s = sample_limit_config(&p, &StopRule::default(), mode, &mut rng).unwrap().finite().unwrap();
                assert_eq!(s.total, s.n0 + s.n_above);
                assert_eq!(s.species().len() as u64, s.total);
                assert_eq!(s.bands[0].len() as u64, s.n0);
                for (step, band) in s.ladder.steps.iter().zip(&s.bands[1..]) {
                    assert!(band.iter().all(|&x| x > step.record));
                }
                assert!(s.ladder.is_strictly_increasing());
            }
        }
    }

    #[test]
    fn ladder_csv_layout() {
        let p = example_21();
        let ladder = RecordLadder {
            steps: vec![LadderStep { record: 0.5, gap: 2.0 }],
            truncated_at: 1,
            tail_bound: TailBound::Unknown,
            stop_reason: StopReason::MaxSteps,
            divergent: false,
        };
        let mass = ladder_mass_lambda(&ladder, &p);
        let mut buf = Vec::new();
        write_ladder_csv(&ladder, &mass, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,record_value,gap,per_step_mass\n1,0.5,2,"));
    }
}
