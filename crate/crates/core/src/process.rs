//! Forward simulation of the species process.
//!
//! Births and extinctions are generated as one superposed Poisson stream and
//! then applied in time order to an ordered multiset of fitness values.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::configuration::Configuration;
use crate::distributions::ModelParams;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Birth { fitness: f64 },
    Extinction { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn birth(time: f64, fitness: f64) -> Self {
        Self { time, kind: EventKind::Birth { fitness } }
    }

    pub fn extinction(time: f64, threshold: f64) -> Self {
        Self { time, kind: EventKind::Extinction { threshold } }
    }

    pub fn mark(&self) -> f64 {
        match self.kind {
            EventKind::Birth { fitness } => fitness,
            EventKind::Extinction { threshold } => threshold,
        }
    }

    pub fn is_birth(&self) -> bool {
        matches!(self.kind, EventKind::Birth { .. })
    }

    fn kind_label(&self) -> &'static str {
        match self.kind {
            EventKind::Birth { .. } => "birth",
            EventKind::Extinction { .. } => "extinction",
        }
    }
}

/// Time-ordered events on `[start, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub start: f64,
    pub horizon: f64,
    events: Vec<Event>,
    pub seed: Option<u64>,
}

impl EventStream {
    pub fn new(start: f64, horizon: f64, events: Vec<Event>, seed: Option<u64>) -> Result<Self> {
        check_window(start, horizon)?;
        for (i, e) in events.iter().enumerate() {
            if !(e.time >= start && e.time <= horizon) {
                return Err(Error::OutsideWindow { t: e.time, start, horizon });
            }
            if i > 0 && e.time <= events[i - 1].time {
                return Err(Error::UnorderedEvents { index: i, time: e.time });
            }
            let m = e.mark();
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidArgument(format!("event {i} has invalid mark {m}")));
            }
        }
        Ok(Self { start, horizon, events, seed })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn births(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::Birth { fitness } => Some((e.time, fitness)),
            _ => None,
        })
    }

    pub fn extinctions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::Extinction { threshold } => Some((e.time, threshold)),
            _ => None,
        })
    }
}

fn check_window(start: f64, horizon: f64) -> Result<()> {
    if !(start.is_finite() && horizon.is_finite() && horizon >= start) {
        return Err(Error::InvalidArgument(format!(
            "window must satisfy start <= horizon (finite), got [{start}, {horizon}]"
        )));
    }
    Ok(())
}

/// Superposed birth/extinction stream on `[start, horizon]`.
///
/// Inter-event times are exponential with rate `λ★ + λ†`; each event is a
/// birth with probability `λ★ / (λ★ + λ†)` and carries a mark from the
/// corresponding law.
pub fn generate_stream(params: &ModelParams, start: f64, horizon: f64, rng: &mut RandomStream) -> Result<EventStream> {
    check_window(start, horizon)?;
    let total = params.lambda_birth + params.lambda_extinct;
    let p_birth = params.lambda_birth / total;
    let mut events = Vec::new();
    let mut t = start;
    loop {
        t += rng.exp1() / total;
        if t > horizon {
            break;
        }
        let event = if rng.bernoulli(p_birth) {
            Event::birth(t, params.fitness.sample(rng))
        } else {
            Event::extinction(t, params.threshold.sample(rng))
        };
        // equal times are a probability-zero event; reject rather than reorder
        if events.last().is_some_and(|e: &Event| e.time >= t) {
            return Err(Error::UnorderedEvents { index: events.len(), time: t });
        }
        events.push(event);
    }
    Ok(EventStream { start, horizon, events, seed: None })
}

/// [`generate_stream`] driven by `RandomStream::new(seed, 0)`, recording the seed.
pub fn generate_stream_seeded(params: &ModelParams, start: f64, horizon: f64, seed: u64) -> Result<EventStream> {
    let mut rng = RandomStream::new(seed, 0);
    let mut stream = generate_stream(params, start, horizon, &mut rng)?;
    stream.seed = Some(seed);
    Ok(stream)
}

/// Half-open span `[open, close)` during which no species is present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmptyInterval {
    pub open: f64,
    pub close: f64,
}

/// A realized path: the stream, the configuration counts after every event,
/// and the empty spans. Full configurations are rebuilt on demand by replay,
/// except at explicitly requested sample times.
#[derive(Debug, Clone)]
pub struct PathTrace {
    pub stream: EventStream,
    pub initial: Configuration,
    count_after: Vec<usize>,
    pub empty_intervals: Vec<EmptyInterval>,
    pub final_configuration: Configuration,
    pub snapshots: Vec<(f64, Configuration)>,
}

impl PathTrace {
    pub fn count_after(&self) -> &[usize] {
        &self.count_after
    }

    /// Configuration after all events at or before `t`, rebuilt by replay.
    pub fn configuration_at(&self, t: f64) -> Result<Configuration> {
        self.check_time(t)?;
        let mut config = self.initial.clone();
        for e in self.stream.events.iter().take_while(|e| e.time <= t) {
            apply(&mut config, e);
        }
        Ok(config)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.stream.start && t <= self.stream.horizon) {
            return Err(Error::OutsideWindow { t, start: self.stream.start, horizon: self.stream.horizon });
        }
        Ok(())
    }

    /// CSV `time,kind,mark,count_after`, one row per event.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["time", "kind", "mark", "count_after"]).map_err(io)?;
        for (e, n) in self.stream.events.iter().zip(&self.count_after) {
            w.write_record([e.time.to_string(), e.kind_label().to_string(), e.mark().to_string(), n.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    /// CSV `time,count,min_fitness,max_fitness` at the recorded sample times.
    pub fn write_snapshot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["time", "count", "min_fitness", "max_fitness"]).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (t, c) in &self.snapshots {
            w.write_record([t.to_string(), c.len().to_string(), opt(c.min()), opt(c.max())]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

#[inline]
fn apply(config: &mut Configuration, e: &Event) {
    match e.kind {
        EventKind::Birth { fitness } => config.insert(fitness),
        EventKind::Extinction { threshold } => {
            config.cut_below(threshold);
        }
    }
}

/// Applies `stream` to `initial`: births insert, extinctions remove every
/// species with fitness strictly below the threshold.
pub fn evolve(initial: &Configuration, stream: &EventStream) -> PathTrace {
    evolve_sampled(initial, stream, &[]).expect("no sample times to validate")
}

/// [`evolve`] that also stores full configurations at `sample_times`
/// (ascending, inside the window).
pub fn evolve_sampled(initial: &Configuration, stream: &EventStream, sample_times: &[f64]) -> Result<PathTrace> {
    for (i, &t) in sample_times.iter().enumerate() {
        if !(t >= stream.start && t <= stream.horizon) {
            return Err(Error::OutsideWindow { t, start: stream.start, horizon: stream.horizon });
        }
        if i > 0 && t < sample_times[i - 1] {
            return Err(Error::InvalidArgument("sample times must be ascending".into()));
        }
    }

    let mut config = initial.clone();
    let mut count_after = Vec::with_capacity(stream.events.len());
    let mut empty_intervals = Vec::new();
    let mut open = config.is_empty().then_some(stream.start);
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;

    for e in &stream.events {
        while next_sample < sample_times.len() && sample_times[next_sample] < e.time {
            snapshots.push((sample_times[next_sample], config.clone()));
            next_sample += 1;
        }
        apply(&mut config, e);
        count_after.push(config.len());
        match (open, config.is_empty()) {
            (None, true) => open = Some(e.time),
            (Some(o), false) => {
                empty_intervals.push(EmptyInterval { open: o, close: e.time });
                open = None;
            }
            _ => {}
        }
    }
    for &t in &sample_times[next_sample..] {
        snapshots.push((t, config.clone()));
    }
    if let Some(o) = open {
        empty_intervals.push(EmptyInterval { open: o, close: stream.horizon });
    }

    Ok(PathTrace {
        stream: stream.clone(),
        initial: initial.clone(),
        count_after,
        empty_intervals,
        final_configuration: config,
        snapshots,
    })
}

/// Number of species right after the last event at or before `t`.
pub fn species_count_at(trace: &PathTrace, t: f64) -> Result<usize> {
    trace.check_time(t)?;
    let k = trace.stream.events.partition_point(|e| e.time <= t);
    Ok(if k == 0 { trace.initial.len() } else { trace.count_after[k - 1] })
}

/// Supremum of the empty times in the window, `None` if the path is never empty.
pub fn last_empty_time(trace: &PathTrace) -> Option<f64> {
    trace.empty_intervals.last().map(|iv| iv.close)
}
