//! Metropolis–Hastings sampling of `|psi|^2` over the restricted space.
//!
//! Proposals mix single-atom toggles (probability `1 - p`) with hexagon
//! plaquette flips (probability `p`). Every chain owns a ChaCha stream seeded
//! by a counter-based derivation from `(master, step, chain, purpose)`, so the
//! results do not depend on how chains are scheduled.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::VariationalState;
use crate::lattice::{Configuration, RubyLattice};
use crate::scalar::Real;
use crate::stats::{self, EstimateRecord};

/// Seed-derivation purposes.
pub mod purpose {
    pub const SAMPLE: u64 = 1;
    pub const DOUBLED: u64 = 2;
    pub const INIT: u64 = 3;
    pub const PARAMS: u64 = 4;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed for a `(step, chain, purpose)` stream.
pub fn derive_seed(master: u64, step: u64, chain: u64, purpose: u64) -> u64 {
    let mut h = splitmix(master);
    for x in [step, chain, purpose] {
        h = splitmix(h ^ splitmix(x.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream_rng(master: u64, step: u64, chain: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, step, chain, purpose))
}

fn d_chains() -> usize {
    4
}
fn d_samples() -> usize {
    256
}
fn d_p() -> f64 {
    0.1
}
fn d_p_late() -> f64 {
    0.4
}
fn d_late() -> f64 {
    0.8
}
fn d_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "d_chains")]
    pub n_chains: usize,
    /// Retained samples per chain.
    #[serde(default = "d_samples")]
    pub n_samples: usize,
    /// Burn-in proposals per epoch; default ten sweeps (`10 N`).
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Proposals between retained samples; default one sweep (`N`).
    #[serde(default)]
    pub thin: Option<usize>,
    #[serde(default = "d_p")]
    pub p_plaquette: f64,
    /// Plaquette probability after `late_fraction * T_ramp`.
    #[serde(default = "d_p_late")]
    pub p_plaquette_late: f64,
    #[serde(default = "d_late")]
    pub late_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Sample `|psi|^(2 beta)` and reweight; `1` is plain sampling.
    #[serde(default = "d_beta")]
    pub beta: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: d_chains(),
            n_samples: d_samples(),
            burn_in: None,
            thin: None,
            p_plaquette: d_p(),
            p_plaquette_late: d_p_late(),
            late_fraction: d_late(),
            seed: 0,
            beta: d_beta(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplerError {
    #[error("need at least two chains (got {0})")]
    TooFewChains(usize),
    #[error("plaquette probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("tempering exponent {0} must lie in (0, 1]")]
    BadBeta(f64),
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_chains < 2 {
            return Err(SamplerError::TooFewChains(self.n_chains));
        }
        for p in [self.p_plaquette, self.p_plaquette_late] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SamplerError::BadProbability(p));
            }
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(SamplerError::BadBeta(self.beta));
        }
        Ok(())
    }

    pub fn burn_in_for(&self, n_atoms: usize) -> usize {
        self.burn_in.unwrap_or(10 * n_atoms)
    }

    pub fn thin_for(&self, n_atoms: usize) -> usize {
        self.thin.unwrap_or(n_atoms).max(1)
    }

    /// Plaquette probability at time `t` of a ramp lasting `t_ramp`.
    pub fn p_at(&self, t: f64, t_ramp: f64) -> f64 {
        if t_ramp > 0.0 && t > self.late_fraction * t_ramp {
            self.p_plaquette_late
        } else {
            self.p_plaquette
        }
    }
}

/// Propose a hybrid move in place; `false` means the proposal left the
/// restricted space and must be rejected (`c` is then unchanged).
pub fn propose<R: Rng + ?Sized>(lat: &RubyLattice, c: &mut Configuration, p_plaquette: f64, rng: &mut R) -> bool {
    let n_hex = lat.hexagons.len();
    let plaquette = n_hex > 0 && rng.gen::<f64>() < p_plaquette;
    if plaquette {
        lat.flip_plaquette(c, rng.gen_range(0..n_hex));
        true
    } else {
        c.toggle_atom(rng.gen_range(0..c.n_atoms()))
    }
}

/// Distribution of [`propose`] from `c` as `(target, probability)` pairs.
/// A rejected toggle leaves `c` unchanged and appears as `c` itself.
pub fn proposal_kernel(lat: &RubyLattice, c: &Configuration, p_plaquette: f64) -> Vec<(Configuration, f64)> {
    let n_hex = lat.hexagons.len();
    let p = if n_hex > 0 { p_plaquette } else { 0.0 };
    let mut out = Vec::with_capacity(n_hex + c.n_atoms());
    for h in 0..n_hex {
        let mut d = c.clone();
        lat.flip_plaquette(&mut d, h);
        out.push((d, p / n_hex as f64));
    }
    let n = c.n_atoms();
    for a in 0..n {
        let mut d = c.clone();
        if !d.toggle_atom(a) {
            d = c.clone();
        }
        out.push((d, (1.0 - p) / n as f64));
    }
    out
}

/// Metropolis acceptance `min(1, |psi(to)/psi(from)|^(2 beta))`.
#[inline]
pub fn acceptance_probability(log_psi_from: f64, log_psi_to: f64, beta: f64) -> f64 {
    let r = (2.0 * beta * (log_psi_to - log_psi_from)).exp();
    if r.is_nan() {
        0.0
    } else {
        r.min(1.0)
    }
}

/// A single-copy chain with its cached log-amplitude.
#[derive(Debug, Clone)]
pub struct Chain {
    pub state: Configuration,
    pub log_psi: Complex<f64>,
    pub rng: ChaCha8Rng,
    pub accepted: u64,
    pub proposed: u64,
}

impl Chain {
    pub fn new<T: Real, V: VariationalState<T> + ?Sized>(psi: &V, init: Configuration, rng: ChaCha8Rng) -> Self {
        let l = psi.log_psi(&init);
        Self { state: init, log_psi: Complex::new(l.re.as_f64(), l.im.as_f64()), rng, accepted: 0, proposed: 0 }
    }

    /// One Metropolis step targeting `|psi|^(2 beta)`.
    pub fn step<T: Real, V: VariationalState<T> + ?Sized>(
        &mut self,
        psi: &V,
        lat: &RubyLattice,
        p_plaquette: f64,
        beta: f64,
    ) -> bool {
        self.proposed += 1;
        let mut next = self.state.clone();
        if !propose(lat, &mut next, p_plaquette, &mut self.rng) {
            return false;
        }
        let l = psi.log_psi(&next);
        let l = Complex::new(l.re.as_f64(), l.im.as_f64());
        let a = acceptance_probability(self.log_psi.re, l.re, beta);
        if a >= 1.0 || self.rng.gen::<f64>() < a {
            self.state = next;
            self.log_psi = l;
            self.accepted += 1;
            true
        } else {
            false
        }
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Samples with cached log-amplitudes and optional importance weights.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub chains: Vec<Vec<Configuration>>,
    pub log_psi: Vec<Vec<Complex<f64>>>,
    /// Self-normalized weights (tempered sampling or exact enumeration).
    pub weights: Option<Vec<Vec<f64>>>,
    pub acceptance: f64,
    /// Weights are exact probabilities: no statistical error.
    pub exact: bool,
    /// Chain states after the last retained sample (warm start).
    pub final_states: Vec<Configuration>,
}

impl SampleSet {
    /// Full-basis enumeration with weights `|psi|^2 / Z`.
    pub fn exact<T: Real, V: VariationalState<T> + ?Sized>(psi: &V, admissible: impl Fn(&Configuration) -> bool) -> Self {
        let n_tri = psi.n_triangles();
        let mut confs = Vec::new();
        let mut logs = Vec::new();
        for idx in 0..(1usize << (2 * n_tri)) {
            let c = Configuration::from_basis_index(idx, n_tri);
            if !admissible(&c) {
                continue;
            }
            let l = psi.log_psi(&c);
            logs.push(Complex::new(l.re.as_f64(), l.im.as_f64()));
            confs.push(c);
        }
        let max = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logs.iter().map(|l| (2.0 * (l.re - max)).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        Self { chains: vec![confs], log_psi: vec![logs], weights: Some(vec![w]), acceptance: 1.0, exact: true, final_states: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Iterate `(configuration, log psi, weight)`; weight 1 when unweighted.
    pub fn iter(&self) -> impl Iterator<Item = (&Configuration, Complex<f64>, f64)> + '_ {
        self.chains.iter().enumerate().flat_map(move |(ci, ch)| {
            ch.iter().enumerate().map(move |(i, c)| {
                let w = self.weights.as_ref().map_or(1.0, |w| w[ci][i]);
                (c, self.log_psi[ci][i], w)
            })
        })
    }

    /// Reshape a flat per-sample vector to the chain layout.
    pub fn per_chain<X: Clone>(&self, flat: &[X]) -> Vec<Vec<X>> {
        let mut out = Vec::with_capacity(self.chains.len());
        let mut k = 0;
        for ch in &self.chains {
            out.push(flat[k..k + ch.len()].to_vec());
            k += ch.len();
        }
        out
    }

    /// Weighted mean of per-sample values with stderr, R̂ and ESS.
    pub fn estimate(&self, flat: &[Complex<f64>]) -> EstimateRecord {
        let values = self.per_chain(flat);
        if self.exact {
            let w = self.weights.as_ref().expect("exact sets carry weights");
            let sw: f64 = w.iter().flatten().sum();
            let m: Complex<f64> = values.iter().flatten().zip(w.iter().flatten()).map(|(v, &x)| v * x).sum();
            let mut e = EstimateRecord::exact(m / sw);
            e.n_samples = flat.len();
            return e;
        }
        stats::estimate(&values, self.weights.as_deref(), self.acceptance)
    }

    /// Flat weights, normalized to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let n = self.len();
        match &self.weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                let s: f64 = w.iter().flatten().sum();
                w.iter().flatten().map(|x| x / s).collect()
            }
        }
    }
}

/// Run `cfg.n_chains` chains from `inits` (cycled) and collect thinned
/// samples. `stream` identifies the epoch in the seed derivation.
pub fn run_chains<T: Real, V: VariationalState<T> + ?Sized>(
    cfg: &SamplerConfig,
    psi: &V,
    lat: &RubyLattice,
    inits: &[Configuration],
    p_plaquette: f64,
    stream: u64,
) -> SampleSet {
    let n_atoms = lat.n_atoms();
    let burn = cfg.burn_in_for(n_atoms);
    let thin = cfg.thin_for(n_atoms);
    let mut chains = Vec::with_capacity(cfg.n_chains);
    let mut logs = Vec::with_capacity(cfg.n_chains);
    let mut finals = Vec::with_capacity(cfg.n_chains);
    let (mut acc, mut prop) = (0u64, 0u64);
    for k in 0..cfg.n_chains {
        let rng = stream_rng(cfg.seed, stream, k as u64, purpose::SAMPLE);
        let mut ch = Chain::new(psi, inits[k % inits.len()].clone(), rng);
        for _ in 0..burn {
            ch.step(psi, lat, p_plaquette, cfg.beta);
        }
        let mut samples = Vec::with_capacity(cfg.n_samples);
        let mut ls = Vec::with_capacity(cfg.n_samples);
        for _ in 0..cfg.n_samples {
            for _ in 0..thin {
                ch.step(psi, lat, p_plaquette, cfg.beta);
            }
            samples.push(ch.state.clone());
            ls.push(ch.log_psi);
        }
        acc += ch.accepted;
        prop += ch.proposed;
        finals.push(ch.state.clone());
        chains.push(samples);
        logs.push(ls);
    }
    let weights = if cfg.beta != 1.0 {
        let max = logs.iter().flatten().map(|l: &Complex<f64>| l.re).fold(f64::NEG_INFINITY, f64::max);
        Some(
            logs.iter()
                .map(|ch| ch.iter().map(|l| (2.0 * (1.0 - cfg.beta) * (l.re - max)).exp()).collect())
                .collect(),
        )
    } else {
        None
    };
    SampleSet {
        chains,
        log_psi: logs,
        weights,
        acceptance: if prop == 0 { 0.0 } else { acc as f64 / prop as f64 },
        exact: false,
        final_states: finals,
    }
}

/// Doubled-space samples `x = (sigma, eta)`.
#[derive(Debug, Clone)]
pub struct DoubledSamples {
    pub chains: Vec<Vec<(Configuration, Configuration)>>,
    pub acceptance: f64,
}

impl DoubledSamples {
    pub fn len(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Configuration, Configuration)> + '_ {
        self.chains.iter().flatten()
    }
}

/// Metropolis sampling on two copies with target `exp(log_weight(sigma, eta))`.
/// Each proposal updates one randomly chosen half with the hybrid move.
pub fn sample_doubled(
    cfg: &SamplerConfig,
    lat: &RubyLattice,
    init: &(Configuration, Configuration),
    p_plaquette: f64,
    stream: u64,
    log_weight: impl Fn(&Configuration, &Configuration) -> f64,
) -> DoubledSamples {
    let n_atoms = lat.n_atoms();
    let burn = cfg.burn_in_for(n_atoms);
    let thin = cfg.thin_for(n_atoms);
    let mut chains = Vec::with_capacity(cfg.n_chains);
    let (mut acc, mut prop) = (0u64, 0u64);
    for k in 0..cfg.n_chains {
        let mut rng = stream_rng(cfg.seed, stream, k as u64, purpose::DOUBLED);
        let (mut s, mut e) = init.clone();
        let mut lw = log_weight(&s, &e);
        let mut step = |s: &mut Configuration, e: &mut Configuration, lw: &mut f64, rng: &mut ChaCha8Rng| {
            prop += 1;
            let first = rng.gen::<bool>();
            let mut ns = s.clone();
            let mut ne = e.clone();
            let target = if first { &mut ns } else { &mut ne };
            if !propose(lat, target, p_plaquette, rng) {
                return;
            }
            let nw = log_weight(&ns, &ne);
            let d = nw - *lw;
            if d >= 0.0 || rng.gen::<f64>() < d.exp() {
                *s = ns;
                *e = ne;
                *lw = nw;
                acc += 1;
            }
        };
        for _ in 0..burn {
            step(&mut s, &mut e, &mut lw, &mut rng);
        }
        let mut out = Vec::with_capacity(cfg.n_samples);
        for _ in 0..cfg.n_samples {
            for _ in 0..thin {
                step(&mut s, &mut e, &mut lw, &mut rng);
            }
            out.push((s.clone(), e.clone()));
        }
        chains.push(out);
    }
    DoubledSamples { chains, acceptance: if prop == 0 { 0.0 } else { acc as f64 / prop as f64 } }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::FullRank;
    use crate::lattice::LatticeSpec;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(7, 0, 0, purpose::SAMPLE);
        assert_eq!(a, derive_seed(7, 0, 0, purpose::SAMPLE));
        assert_ne!(a, derive_seed(7, 0, 1, purpose::SAMPLE));
        assert_ne!(a, derive_seed(7, 1, 0, purpose::SAMPLE));
        assert_ne!(a, derive_seed(7, 0, 0, purpose::DOUBLED));
    }

    #[test]
    fn uniform_toggle_from_vacuum_always_accepted() {
        let lat = LatticeSpec::periodic(2, 2).build().unwrap();
        let psi = FullRank::<f64>::new(8);
        let mut ch = Chain::new(&psi, lat.vacuum(), stream_rng(1, 0, 0, 0));
        assert!(ch.step(&psi, &lat, 0.0, 1.0));
    }

    #[test]
    fn config_validation() {
        let mut c = SamplerConfig::default();
        c.validate().unwrap();
        c.n_chains = 1;
        assert_eq!(c.validate(), Err(SamplerError::TooFewChains(1)));
        c.n_chains = 2;
        c.p_plaquette = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let lat = LatticeSpec::periodic(2, 2).build().unwrap();
        let psi = FullRank::<f64>::new(8);
        let cfg = SamplerConfig { n_samples: 20, ..Default::default() };
        let a = run_chains(&cfg, &psi, &lat, &[lat.vacuum()], 0.3, 5);
        let b = run_chains(&cfg, &psi, &lat, &[lat.vacuum()], 0.3, 5);
        assert_eq!(a.chains, b.chains);
    }

    #[test]
    fn kernel_matches_proposal_frequencies() {
        let lat = LatticeSpec::periodic(2, 2).build().unwrap();
        let mut c = lat.vacuum();
        c.toggle_atom(4);
        let kernel = proposal_kernel(&lat, &c, 0.3);
        assert!((kernel.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-14);
        let mut expected: std::collections::HashMap<Configuration, f64> = Default::default();
        for (d, p) in kernel {
            *expected.entry(d).or_default() += p;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut counts: std::collections::HashMap<Configuration, usize> = Default::default();
        for _ in 0..n {
            let mut d = c.clone();
            propose(&lat, &mut d, 0.3, &mut rng);
            *counts.entry(d).or_default() += 1;
        }
        assert_eq!(counts.len(), expected.len());
        for (d, p) in expected {
            let f = counts[&d] as f64 / n as f64;
            assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12, "{f} vs {p}");
        }
    }

    #[test]
    fn acceptance_rule() {
        assert_eq!(acceptance_probability(0.0, 1.0, 1.0), 1.0);
        assert!((acceptance_probability(0.0, -1.0, 0.5) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(acceptance_probability(0.0, f64::NEG_INFINITY, 1.0), 0.0);
        assert_eq!(acceptance_probability(f64::NAN, 0.0, 1.0), 0.0);
    }
}
