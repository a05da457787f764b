//! Summary statistics and goodness-of-fit tests.

use serde::Serialize;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance (0 for a single sample).
    pub variance: f64,
    /// Standard error `sd / √n`.
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mut s = CompensatedSum::new();
        values.iter().for_each(|&v| s.add(v));
        let mean = s.value() / n as f64;
        let mut q = CompensatedSum::new();
        values.iter().for_each(|&v| q.add((v - mean) * (v - mean)));
        let variance = if n > 1 { q.value() / (n - 1) as f64 } else { 0.0 };
        Some(Self { n, mean, variance, se: (variance / n as f64).sqrt() })
    }

    pub fn of_counts(values: &[u64]) -> Option<Self> {
        Self::of(&values.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }

    /// `|mean - target| <= k · se`.
    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// Pearson correlation; `None` when either sample is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ma = Summary::of(a)?.mean;
    let mb = Summary::of(b)?.mean;
    let (mut sab, mut saa, mut sbb) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for (&x, &y) in a.iter().zip(b) {
        sab.add((x - ma) * (y - mb));
        saa.add((x - ma) * (x - ma));
        sbb.add((y - mb) * (y - mb));
    }
    let denom = (saa.value() * sbb.value()).sqrt();
    (denom > 0.0).then(|| sab.value() / denom)
}

/// `P(k) = Γ(k+r)/(Γ(r) k!) p^k (1-p)^r`.
pub fn neg_binomial_pmf(k: u64, r: f64, p: f64) -> f64 {
    let k = k as f64;
    (ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0) + k * p.ln() + r * (1.0 - p).ln()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GofTest {
    ChiSquare,
    KS,
    TwoSampleChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofReport {
    pub test: GofTest,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    pub reference: String,
}

impl GofReport {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

pub const MIN_EXPECTED: f64 = 5.0;
pub const MIN_CHI_SQUARE_SAMPLES: usize = 1000;

fn chi_square_p(statistic: f64, df: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
}

/// Pearson chi-square of integer samples against `pmf`, bins pooled so every
/// expected count is at least 5; the last bin is the whole upper tail.
pub fn gof_chi_square<F: Fn(u64) -> f64>(samples: &[u64], pmf: F, reference: &str) -> Result<GofReport> {
    let n = samples.len();
    if n < MIN_CHI_SQUARE_SAMPLES {
        return Err(Error::InsufficientSamples { got: n, needed: MIN_CHI_SQUARE_SAMPLES });
    }
    let nf = n as f64;
    // bin edges: bin i covers [edges[i], edges[i+1]), last bin open-ended
    let mut edges = vec![0u64];
    let mut bin_mass = Vec::new();
    let mut cum = 0.0;
    let mut acc = 0.0;
    let mut k = 0u64;
    loop {
        let pk = pmf(k);
        acc += pk;
        cum += pk;
        k += 1;
        let tail = (1.0 - cum).max(0.0);
        if nf * tail < MIN_EXPECTED || k > 1_000_000 {
            break;
        }
        if nf * acc >= MIN_EXPECTED {
            bin_mass.push(acc);
            edges.push(k);
            acc = 0.0;
        }
    }
    // whatever is left, including the tail, forms the last bin
    let last = (1.0 - bin_mass.iter().sum::<f64>()).max(0.0);
    bin_mass.push(last);
    if nf * last < MIN_EXPECTED && bin_mass.len() > 1 {
        let l = bin_mass.pop().unwrap();
        *bin_mass.last_mut().unwrap() += l;
        edges.pop();
    }
    let bins = bin_mass.len();
    if bins < 2 {
        return Err(Error::TooFewBins);
    }
    let mut observed = vec![0u64; bins];
    for &s in samples {
        let idx = edges.partition_point(|&e| e <= s) - 1;
        observed[idx] += 1;
    }
    let statistic = observed
        .iter()
        .zip(&bin_mass)
        .map(|(&o, &m)| {
            let e = nf * m;
            (o as f64 - e).powi(2) / e
        })
        .sum::<f64>();
    let df = bins - 1;
    Ok(GofReport {
        test: GofTest::ChiSquare,
        statistic,
        p_value: chi_square_p(statistic, df),
        n,
        df: Some(df),
        reference: reference.to_string(),
    })
}

/// Chi-square homogeneity test on the 2×K table of two integer samples,
/// bins pooled so every expected cell is at least 5.
pub fn two_sample_chi_square(a: &[u64], b: &[u64], reference: &str) -> Result<GofReport> {
    let (na, nb) = (a.len(), b.len());
    if na.min(nb) < MIN_CHI_SQUARE_SAMPLES {
        return Err(Error::InsufficientSamples { got: na.min(nb), needed: MIN_CHI_SQUARE_SAMPLES });
    }
    let top = a.iter().chain(b).copied().max().unwrap_or(0) as usize;
    let mut ca = vec![0u64; top + 1];
    let mut cb = vec![0u64; top + 1];
    a.iter().for_each(|&v| ca[v as usize] += 1);
    b.iter().for_each(|&v| cb[v as usize] += 1);
    let total = (na + nb) as f64;
    // expected cell = row · column / total; the smaller row is binding
    let need = MIN_EXPECTED * total / na.min(nb) as f64;

    let mut cols: Vec<(u64, u64)> = Vec::new();
    let (mut oa, mut ob) = (0u64, 0u64);
    let mut rest = (na + nb) as u64;
    for k in 0..=top {
        oa += ca[k];
        ob += cb[k];
        rest -= ca[k] + cb[k];
        if (oa + ob) as f64 >= need && rest as f64 >= need {
            cols.push((oa, ob));
            oa = 0;
            ob = 0;
        }
    }
    if oa + ob > 0 {
        match cols.last_mut() {
            Some(last) if ((oa + ob) as f64) < need => {
                last.0 += oa;
                last.1 += ob;
            }
            _ => cols.push((oa, ob)),
        }
    }
    if cols.len() < 2 {
        return Err(Error::TooFewBins);
    }
    let mut statistic = 0.0;
    for &(x, y) in &cols {
        let col = (x + y) as f64;
        for (o, row) in [(x, na), (y, nb)] {
            let e = row as f64 * col / total;
            statistic += (o as f64 - e).powi(2) / e;
        }
    }
    let df = cols.len() - 1;
    Ok(GofReport {
        test: GofTest::TwoSampleChiSquare,
        statistic,
        p_value: chi_square_p(statistic, df),
        n: na + nb,
        df: Some(df),
        reference: reference.to_string(),
    })
}

/// A law tested by [`gof_ks`].
pub trait ContinuousLaw {
    fn cdf(&self, x: f64) -> f64;

    /// `P(X < x)`; equal to `cdf` for continuous laws.
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialLaw {
    pub rate: f64,
}

impl ContinuousLaw for ExponentialLaw {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.rate * x).exp_m1()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaCdf {
    pub shape: f64,
    pub rate: f64,
}

impl ContinuousLaw for GammaCdf {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x.is_infinite() {
            1.0
        } else {
            gamma_lr(self.shape, self.rate * x)
        }
    }
}

impl<F: Fn(f64) -> f64> ContinuousLaw for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Empirical distribution function of a fixed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }
}

impl ContinuousLaw for EmpiricalCdf {
    fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v < x) as f64 / self.sorted.len() as f64
    }
}

/// Kolmogorov limiting survival `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction).
pub fn gof_ks<L: ContinuousLaw + ?Sized>(samples: &[f64], law: &L, reference: &str) -> Result<GofReport> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientSamples { got: 0, needed: 1 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < n {
        let x = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == x {
            j += 1;
        }
        let below = i as f64 / nf;
        let at = j as f64 / nf;
        d = d.max((at - law.cdf(x)).abs()).max((below - law.cdf_left(x)).abs());
        i = j;
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(GofReport {
        test: GofTest::KS,
        statistic: d,
        p_value: kolmogorov_q(lambda),
        n,
        df: None,
        reference: reference.to_string(),
    })
}
