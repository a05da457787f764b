//! Small numeric helpers shared across modules.

use statrs::function::gamma::ln_gamma;

use crate::rng::RandomStream;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Infinite sums stay infinite; the carry is meaningless once one term overflows.
    pub fn value(&self) -> f64 {
        if self.sum.is_infinite() {
            self.sum
        } else {
            self.sum + self.carry
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut s = CompensatedSum::new();
    for v in values {
        s.add(v);
    }
    s.value()
}

const INVERSION_LIMIT: f64 = 10.0;

/// Poisson draw: sequential inversion below mean 10, Hörmann's PTRS above.
pub fn sample_poisson(mean: f64, rng: &mut RandomStream) -> u64 {
    debug_assert!(mean.is_finite() && mean >= 0.0);
    if mean <= 0.0 {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion(mean: f64, rng: &mut RandomStream) -> u64 {
    let u = rng.uniform();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // 1 - cdf can stall at rounding level; stop after a generous bound
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs(mean: f64, rng: &mut RandomStream) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_terms_give_infinite_sums() {
        assert_eq!(compensated_sum([1.0, f64::INFINITY, 2.0]), f64::INFINITY);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1e16);
        assert_eq!(compensated_sum(v.iter().copied()), 1000.0);
        let naive: f64 = v.iter().sum();
        assert_ne!(naive, 1000.0);
    }

    #[test]
    fn poisson_zero_mean() {
        let mut rng = RandomStream::new(1, 0);
        assert_eq!(sample_poisson(0.0, &mut rng), 0);
    }

    fn moments(mean: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = RandomStream::new(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| sample_poisson(mean, &mut rng) as f64).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, v)
    }

    #[test]
    fn poisson_moments_both_branches() {
        for &(mean, seed) in &[(0.7, 1u64), (4.0, 2), (9.99, 3), (10.0, 4), (37.5, 5), (1e4, 6)] {
            let n = 100_000;
            let (m, v) = moments(mean, n, seed);
            let se = (mean / n as f64).sqrt();
            assert!((m - mean).abs() < 4.0 * se, "mean {mean}: {m}");
            // var of the sample variance ≈ (μ + 2μ²)/n for Poisson
            let se_v = ((mean + 2.0 * mean * mean) / n as f64).sqrt();
            assert!((v - mean).abs() < 4.0 * se_v, "var {mean}: {v}");
        }
    }
}
