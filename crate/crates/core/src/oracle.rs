//! Brute-force reference computations, quadratic in the number of events.
//!
//! These deliberately share no code with the ladder and evolution routines
//! they are used to check.

use crate::process::{EventKind, EventStream};

/// Extinction points `(s, y)` lying above the fitness-record ladder: some birth
/// precedes `s`, and `y` is at least the largest fitness born before `s`.
pub fn pairwise_m(stream: &EventStream) -> u64 {
    let births: Vec<(f64, f64)> = stream.births().collect();
    let mut m = 0;
    for (s, y) in stream.extinctions() {
        let mut best: Option<f64> = None;
        for &(t, x) in &births {
            if t <= s {
                best = Some(best.map_or(x, |b: f64| b.max(x)));
            }
        }
        if best.is_some_and(|b| y >= b) {
            m += 1;
        }
    }
    m
}

/// Species alive at time `t`, sorted: each one (initial, or born by `t`)
/// survives unless some later extinction up to `t` had a threshold above it.
pub fn brute_force_configuration(initial: &[f64], stream: &EventStream, t: f64) -> Vec<f64> {
    let mut candidates: Vec<(f64, f64)> = initial.iter().map(|&x| (f64::NEG_INFINITY, x)).collect();
    for e in stream.events() {
        if let EventKind::Birth { fitness } = e.kind {
            if e.time <= t {
                candidates.push((e.time, fitness));
            }
        }
    }
    let mut alive: Vec<f64> = candidates
        .into_iter()
        .filter(|&(born, x)| {
            !stream.events().iter().any(|e| match e.kind {
                EventKind::Extinction { threshold } => e.time > born && e.time <= t && threshold > x,
                EventKind::Birth { .. } => false,
            })
        })
        .map(|(_, x)| x)
        .collect();
    alive.sort_by(f64::total_cmp);
    alive
}
