//! Chain diagnostics: rank-normalized split-R̂, effective sample size and
//! Monte Carlo estimates.

use num_complex::Complex;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Monte Carlo estimate with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub mean: Complex<f64>,
    pub stderr: f64,
    pub r_hat: f64,
    pub n_effective: f64,
    pub acceptance_rate: f64,
    pub n_samples: usize,
}

impl EstimateRecord {
    pub fn exact(mean: Complex<f64>) -> Self {
        Self { mean, stderr: 0.0, r_hat: 1.0, n_effective: f64::INFINITY, acceptance_rate: 1.0, n_samples: 0 }
    }

    /// R̂ above the conventional 1.1 ceiling.
    pub fn flagged(&self) -> bool {
        !(self.r_hat < 1.1)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split each chain at its midpoint (dropping a middle draw when odd).
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let h = c.len() / 2;
        out.push(c[..h].to_vec());
        out.push(c[c.len() - h..].to_vec());
    }
    out
}

/// Normal scores of pooled fractional ranks (average ranks for ties).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, c) in chains.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            all.push((v, ci, i));
        }
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let s = all.len() as f64;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for item in &all[i..=j] {
            out[item.1][item.2] = z;
        }
        i = j + 1;
    }
    out
}

fn classic_rhat(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = n * var(&means);
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / m;
    if w <= 0.0 || !w.is_finite() {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Rank-normalized split-R̂ (maximum of the bulk and folded-tail values).
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let min_len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if chains.is_empty() || min_len < 4 {
        return f64::NAN;
    }
    let trimmed: Vec<Vec<f64>> = chains.iter().map(|c| c[..min_len].to_vec()).collect();
    let halves = split(&trimmed);
    let all: Vec<f64> = halves.iter().flatten().copied().collect();
    if all.iter().all(|&v| v == all[0]) {
        return 1.0;
    }
    let bulk = classic_rhat(&rank_normalize(&halves));
    let mut sorted = all.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = sorted[sorted.len() / 2];
    let folded: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let tail = classic_rhat(&rank_normalize(&folded));
    if tail.is_nan() {
        bulk
    } else {
        bulk.max(tail)
    }
}

fn autocov_at(x: &[f64], m: f64, k: usize) -> f64 {
    let n = x.len();
    (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
/// Autocovariances are evaluated lazily, so the cost scales with the
/// autocorrelation time rather than the chain length.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return (m * n) as f64;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |t: usize| chains.iter().zip(&means).map(|(c, &mu)| autocov_at(c, mu, t)).sum::<f64>() / m as f64;
    let w = acov(0) * n as f64 / (n as f64 - 1.0);
    let b_over_n = if m > 1 { var(&means) } else { 0.0 };
    let var_plus = w * (n as f64 - 1.0) / n as f64 + b_over_n;
    if var_plus <= 0.0 {
        return (m * n) as f64;
    }
    let rho = |t: usize| 1.0 - (w - acov(t)) / var_plus;
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev {
            pair = prev;
        }
        prev = pair;
        tau += 2.0 * pair;
        t += 2;
    }
    let total = (m * n) as f64;
    total / tau.max(1.0 / total.log10().max(1.0))
}

/// Self-normalized estimate over chains with optional importance weights.
pub fn estimate(values: &[Vec<Complex<f64>>], weights: Option<&[Vec<f64>]>, acceptance: f64) -> EstimateRecord {
    let n_samples: usize = values.iter().map(|c| c.len()).sum();
    if n_samples == 0 {
        return EstimateRecord {
            mean: Complex::new(f64::NAN, f64::NAN),
            stderr: f64::NAN,
            r_hat: f64::NAN,
            n_effective: 0.0,
            acceptance_rate: acceptance,
            n_samples,
        };
    }
    let (mean, wbar) = match weights {
        None => (values.iter().flatten().sum::<Complex<f64>>() / n_samples as f64, 1.0),
        Some(w) => {
            let sw: f64 = w.iter().flatten().sum();
            let s: Complex<f64> = values.iter().flatten().zip(w.iter().flatten()).map(|(v, &wi)| v * wi).sum();
            (s / sw, sw / n_samples as f64)
        }
    };
    // influence series of the ratio estimator; equals x - mean when unweighted
    let infl = |part: fn(Complex<f64>) -> f64| -> Vec<Vec<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                c.iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let wi = weights.map_or(1.0, |w| w[ci][i]) / wbar;
                        wi * part(v - mean)
                    })
                    .collect()
            })
            .collect()
    };
    let re = infl(|z| z.re);
    let im = infl(|z| z.im);
    let sd2 = |x: &[Vec<f64>]| x.iter().flatten().map(|v| v * v).sum::<f64>() / n_samples as f64;
    let n_eff_re = ess(&re);
    let n_eff_im = ess(&im);
    let var_re = sd2(&re) / n_eff_re.max(1.0);
    let var_im = if sd2(&im) > 0.0 { sd2(&im) / n_eff_im.max(1.0) } else { 0.0 };
    let raw_re: Vec<Vec<f64>> = values.iter().map(|c| c.iter().map(|z| z.re).collect()).collect();
    let r_hat = if values.len() >= 2 { split_rhat(&raw_re) } else { 1.0 };
    EstimateRecord {
        mean,
        stderr: (var_re + var_im).sqrt(),
        r_hat,
        n_effective: n_eff_re,
        acceptance_rate: acceptance,
        n_samples,
    }
}
