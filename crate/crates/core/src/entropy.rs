//! Rényi-2 entanglement entropy on the doubled space: SWAP estimator,
//! amplitude/phase split, ratio-path increments and the Kitaev-Preskill
//! combination.
//!
//! With `x = (sigma, eta)`, `s1 = (eta_A, sigma_Abar)` and
//! `s2 = (sigma_A, eta_Abar)`:
//! `F(x; A, psi) = psi(eta) psi(sigma) psi*(s1) psi*(s2)`, and
//! `exp(-S_A) = sum_x F(x; A, psi) / sum_x F(x; {}, psi)`.
//! Swaps that split a triangle into two excitations leave the restricted
//! space and contribute zero.

use std::cell::RefCell;
use std::collections::HashMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::VariationalState;
use crate::lattice::{Configuration, RubyLattice};
use crate::sampler::{sample_doubled, SamplerConfig};
use crate::scalar::Real;
use crate::stats::{self, EstimateRecord};

type C64 = Complex<f64>;

/// Largest single-copy basis for exact pair enumeration.
pub const MAX_EXACT_DIM: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("atom {0} out of range")]
    AtomOutOfRange(usize),
    #[error("exact doubled-space summation limited to {MAX_EXACT_DIM} basis states, got {0}")]
    TooLarge(usize),
    #[error("ratio path needs at least two states")]
    ShortPath,
    #[error("state count {0} does not match time count {1}")]
    Mismatch(usize, usize),
}

/// How doubled-space expectations are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Summation {
    Sampled { sampler: SamplerConfig, p_plaquette: f64 },
    /// Full enumeration of pairs (small systems only).
    Exact,
}

/// Entropy from `S = -ln m` with `m` a doubled-space mean.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EntropyEstimate {
    pub s: f64,
    pub stderr: f64,
    pub mean: EstimateRecord,
    /// Mean not resolved above zero.
    pub flagged: bool,
}

impl EntropyEstimate {
    fn from_mean(mean: EstimateRecord) -> Self {
        let m = mean.mean.re;
        let flagged = !(m > 0.0) || (mean.stderr > 0.0 && m <= 2.0 * mean.stderr);
        let s = if m > 0.0 { -m.ln() } else { f64::NAN };
        let stderr = if m > 0.0 { mean.stderr / m } else { f64::NAN };
        Self { s, stderr, mean, flagged }
    }

    pub fn zero() -> Self {
        Self { s: 0.0, stderr: 0.0, mean: EstimateRecord::exact(C64::new(1.0, 0.0)), flagged: false }
    }
}

/// Atom membership mask.
pub fn mask(n_atoms: usize, atoms: &[usize]) -> Result<Vec<bool>, EntropyError> {
    let mut m = vec![false; n_atoms];
    for &a in atoms {
        *m.get_mut(a).ok_or(EntropyError::AtomOutOfRange(a))? = true;
    }
    Ok(m)
}

/// `(s1, s2)`, or `None` when either leaves the restricted space.
pub fn swap(sigma: &Configuration, eta: &Configuration, in_a: &[bool]) -> Option<(Configuration, Configuration)> {
    let n_tri = sigma.n_triangles();
    let mut s1 = Vec::with_capacity(n_tri);
    let mut s2 = Vec::with_capacity(n_tri);
    for t in 0..n_tri {
        let m = [in_a[3 * t], in_a[3 * t + 1], in_a[3 * t + 2]];
        let (a, b) = (sigma.state(t), eta.state(t));
        if m == [true; 3] {
            s1.push(b);
            s2.push(a);
        } else if m == [false; 3] {
            s1.push(a);
            s2.push(b);
        } else {
            // mixed triangle: merge atom by atom
            let merge = |inside: u8, outside: u8| -> Option<u8> {
                let mut code = 0u8;
                for k in 0..3u8 {
                    let src = if m[k as usize] { inside } else { outside };
                    if src == k + 1 {
                        if code != 0 {
                            return None;
                        }
                        code = k + 1;
                    }
                }
                Some(code)
            };
            s1.push(merge(b, a)?);
            s2.push(merge(a, b)?);
        }
    }
    Some((Configuration::from_states(s1).ok()?, Configuration::from_states(s2).ok()?))
}

/// Bounded memo of log-amplitudes.
struct Memo<'a, T: Real, V: VariationalState<T> + ?Sized> {
    psi: &'a V,
    cache: RefCell<HashMap<Configuration, C64>>,
    _t: std::marker::PhantomData<T>,
}

impl<'a, T: Real, V: VariationalState<T> + ?Sized> Memo<'a, T, V> {
    const CAP: usize = 1 << 20;

    fn new(psi: &'a V) -> Self {
        Self { psi, cache: RefCell::new(HashMap::new()), _t: Default::default() }
    }

    fn get(&self, c: &Configuration) -> C64 {
        if let Some(&v) = self.cache.borrow().get(c) {
            return v;
        }
        let z = self.psi.log_psi(c);
        let v = C64::new(z.re.as_f64(), z.im.as_f64());
        let mut cache = self.cache.borrow_mut();
        if cache.len() >= Self::CAP {
            cache.clear();
        }
        cache.insert(c.clone(), v);
        v
    }
}

/// Doubled-space draws with optional normalized weights.
struct Draws {
    chains: Vec<Vec<(Configuration, Configuration)>>,
    weights: Option<Vec<f64>>,
    acceptance: f64,
}

impl Draws {
    fn iter(&self) -> impl Iterator<Item = &(Configuration, Configuration)> {
        self.chains.iter().flatten()
    }

    fn estimate(&self, flat: &[C64]) -> EstimateRecord {
        match &self.weights {
            Some(w) => {
                let m: C64 = flat.iter().zip(w).map(|(v, &x)| v * x).sum();
                let mut e = EstimateRecord::exact(m);
                e.n_samples = flat.len();
                e
            }
            None => {
                let mut per = Vec::with_capacity(self.chains.len());
                let mut k = 0;
                for ch in &self.chains {
                    per.push(flat[k..k + ch.len()].to_vec());
                    k += ch.len();
                }
                stats::estimate(&per, None, self.acceptance)
            }
        }
    }
}

/// Draw from `exp(log_weight)`; `-inf` marks zero weight.
fn draw<T: Real, V: VariationalState<T> + ?Sized>(
    lat: &RubyLattice,
    psi: &V,
    summation: &Summation,
    stream: u64,
    log_weight: &dyn Fn(&Configuration, &Configuration) -> f64,
) -> Result<Draws, EntropyError> {
    match summation {
        Summation::Sampled { sampler, p_plaquette } => {
            let init = (lat.vacuum(), lat.vacuum());
            let d = sample_doubled(sampler, lat, &init, *p_plaquette, stream, |a, b| log_weight(a, b));
            Ok(Draws { chains: d.chains, weights: None, acceptance: d.acceptance })
        }
        Summation::Exact => {
            let n_tri = psi.n_triangles();
            let dim = 1usize << (2 * n_tri);
            if dim > MAX_EXACT_DIM {
                return Err(EntropyError::TooLarge(dim));
            }
            let basis: Vec<Configuration> = (0..dim).map(|k| Configuration::from_basis_index(k, n_tri)).collect();
            let mut pairs = Vec::with_capacity(dim * dim);
            let mut logw = Vec::with_capacity(dim * dim);
            for a in &basis {
                for b in &basis {
                    let w = log_weight(a, b);
                    if w > f64::NEG_INFINITY {
                        pairs.push((a.clone(), b.clone()));
                        logw.push(w);
                    }
                }
            }
            let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= z);
            Ok(Draws { chains: vec![pairs], weights: Some(w), acceptance: 1.0 })
        }
    }
}

fn plain_weight<'m, T: Real, V: VariationalState<T> + ?Sized>(memo: &'m Memo<'_, T, V>) -> impl Fn(&Configuration, &Configuration) -> f64 + 'm {
    move |a, b| 2.0 * (memo.get(a).re + memo.get(b).re)
}

/// Rényi-2 entropy of `atoms` by the SWAP estimator.
pub fn swap_estimator<T: Real, V: VariationalState<T> + ?Sized>(
    lat: &RubyLattice,
    psi: &V,
    atoms: &[usize],
    summation: &Summation,
    stream: u64,
) -> Result<EntropyEstimate, EntropyError> {
    let in_a = mask(lat.n_atoms(), atoms)?;
    if atoms.is_empty() {
        return Ok(EntropyEstimate::zero());
    }
    let memo = Memo::new(psi);
    let draws = draw(lat, psi, summation, stream, &plain_weight(&memo))?;
    let vals: Vec<C64> = draws
        .iter()
        .map(|(s, e)| match swap(s, e, &in_a) {
            Some((s1, s2)) => (memo.get(&s1) + memo.get(&s2) - memo.get(s) - memo.get(e)).conj().exp(),
            None => C64::new(0.0, 0.0),
        })
        .collect();
    Ok(EntropyEstimate::from_mean(draws.estimate(&vals)))
}

/// `(S_Am, S_Ph)` with `S_Am + S_Ph = S_A`.
pub fn amplitude_phase_split<T: Real, V: VariationalState<T> + ?Sized>(
    lat: &RubyLattice,
    psi: &V,
    atoms: &[usize],
    summation: &Summation,
    stream: u64,
) -> Result<(EntropyEstimate, EntropyEstimate), EntropyError> {
    let in_a = mask(lat.n_atoms(), atoms)?;
    if atoms.is_empty() {
        return Ok((EntropyEstimate::zero(), EntropyEstimate::zero()));
    }
    let memo = Memo::new(psi);
    let draws = draw(lat, psi, summation, stream, &plain_weight(&memo))?;
    let vals: Vec<C64> = draws
        .iter()
        .map(|(s, e)| match swap(s, e, &in_a) {
            Some((s1, s2)) => {
                let r = (memo.get(&s1) + memo.get(&s2) - memo.get(s) - memo.get(e)).re.exp();
                assert!(r >= 0.0, "amplitude F must be non-negative");
                C64::new(r, 0.0)
            }
            None => C64::new(0.0, 0.0),
        })
        .collect();
    let am = EntropyEstimate::from_mean(draws.estimate(&vals));
    // phase part: reweighted sampling from F(x; A, |psi|)
    let target = |a: &Configuration, b: &Configuration| match swap(a, b, &in_a) {
        Some((s1, s2)) => memo.get(a).re + memo.get(b).re + memo.get(&s1).re + memo.get(&s2).re,
        None => f64::NEG_INFINITY,
    };
    let draws = draw(lat, psi, summation, stream ^ 0x5a5a_5a5a, &target)?;
    let vals: Vec<C64> = draws
        .iter()
        .map(|(s, e)| {
            let (s1, s2) = swap(s, e, &in_a).expect("target vanishes off the restricted space");
            C64::new(0.0, memo.get(s).im + memo.get(e).im - memo.get(&s1).im - memo.get(&s2).im).exp()
        })
        .collect();
    let ph = EntropyEstimate::from_mean(draws.estimate(&vals));
    Ok((am, ph))
}

/// Per-time records of a ratio path.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    /// Amplitude-part entropy per partition.
    pub s: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Increment from the previous point.
    pub delta: Vec<f64>,
    pub delta_stderr: Vec<f64>,
    pub failed: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropySeries {
    pub points: Vec<SeriesPoint>,
    /// Some increment failed.
    pub partial: bool,
}

fn log_mean(logs: &[f64], shift: f64, draws: &Draws) -> EstimateRecord {
    let vals: Vec<C64> = logs.iter().map(|l| C64::new((l - shift).exp(), 0.0)).collect();
    draws.estimate(&vals)
}

/// Telescoping `S_Am(t) = S_Am(t0) + sum Delta S` along a path of states,
/// for several partitions at once. The subsystem-independent normalization
/// term is estimated once per increment and shared.
pub fn ratio_path<T: Real, V: VariationalState<T>>(
    lat: &RubyLattice,
    states: &[V],
    times: &[f64],
    partitions: &[Vec<usize>],
    summation: &Summation,
    stream: u64,
) -> Result<EntropySeries, EntropyError> {
    if states.len() < 2 {
        return Err(EntropyError::ShortPath);
    }
    if states.len() != times.len() {
        return Err(EntropyError::Mismatch(states.len(), times.len()));
    }
    let masks: Vec<Vec<bool>> = partitions.iter().map(|a| mask(lat.n_atoms(), a)).collect::<Result<_, _>>()?;
    let mut s = Vec::with_capacity(partitions.len());
    let mut err = Vec::with_capacity(partitions.len());
    for (k, a) in partitions.iter().enumerate() {
        let (am, _) = amplitude_only(lat, &states[0], a, summation, stream.wrapping_add(k as u64))?;
        s.push(am.s);
        err.push(am.stderr);
    }
    let n_p = partitions.len();
    let mut points = vec![SeriesPoint {
        t: times[0],
        s: s.clone(),
        stderr: err.clone(),
        delta: vec![0.0; n_p],
        delta_stderr: vec![0.0; n_p],
        failed: vec![false; n_p],
    }];
    let mut partial = false;
    for step in 1..states.len() {
        let prev = Memo::new(&states[step - 1]);
        let next = Memo::new(&states[step]);
        let base = stream.wrapping_add(1000 * step as u64);
        // normalization term from F(x; {}, Psi_prev)
        let w0 = |a: &Configuration, b: &Configuration| 2.0 * (prev.get(a).re + prev.get(b).re);
        let d0 = draw(lat, &states[step - 1], summation, base, &w0)?;
        let l0: Vec<f64> =
            d0.iter().map(|(a, b)| 2.0 * (next.get(a).re + next.get(b).re - prev.get(a).re - prev.get(b).re)).collect();
        let mut point = SeriesPoint {
            t: times[step],
            s: vec![0.0; n_p],
            stderr: vec![0.0; n_p],
            delta: vec![0.0; n_p],
            delta_stderr: vec![0.0; n_p],
            failed: vec![false; n_p],
        };
        for (k, m) in masks.iter().enumerate() {
            if partitions[k].is_empty() {
                point.s[k] = s[k];
                continue;
            }
            let amp = |memo: &Memo<'_, T, V>, a: &Configuration, b: &Configuration, s1: &Configuration, s2: &Configuration| {
                memo.get(a).re + memo.get(b).re + memo.get(s1).re + memo.get(s2).re
            };
            let w1 = |a: &Configuration, b: &Configuration| match swap(a, b, m) {
                Some((s1, s2)) => amp(&prev, a, b, &s1, &s2),
                None => f64::NEG_INFINITY,
            };
            let d1 = draw(lat, &states[step - 1], summation, base + 1 + k as u64, &w1)?;
            let l1: Vec<f64> = d1
                .iter()
                .map(|(a, b)| {
                    let (s1, s2) = swap(a, b, m).expect("target vanishes off the restricted space");
                    amp(&next, a, b, &s1, &s2) - amp(&prev, a, b, &s1, &s2)
                })
                .collect();
            let shift = l0.iter().chain(&l1).copied().fold(f64::NEG_INFINITY, f64::max);
            let m1 = log_mean(&l1, shift, &d1);
            let m0 = log_mean(&l0, shift, &d0);
            let (a1, a0) = (m1.mean.re, m0.mean.re);
            let ok = a1 > 0.0 && a0 > 0.0 && a1.is_finite() && a0.is_finite();
            let delta = if ok { -a1.ln() + a0.ln() } else { f64::NAN };
            let de = if ok { ((m1.stderr / a1).powi(2) + (m0.stderr / a0).powi(2)).sqrt() } else { f64::NAN };
            s[k] += delta;
            err[k] = (err[k] * err[k] + de * de).sqrt();
            point.s[k] = s[k];
            point.stderr[k] = err[k];
            point.delta[k] = delta;
            point.delta_stderr[k] = de;
            point.failed[k] = !ok;
            partial |= !ok;
        }
        points.push(point);
    }
    Ok(EntropySeries { points, partial })
}

fn amplitude_only<T: Real, V: VariationalState<T> + ?Sized>(
    lat: &RubyLattice,
    psi: &V,
    atoms: &[usize],
    summation: &Summation,
    stream: u64,
) -> Result<(EntropyEstimate, ()), EntropyError> {
    let in_a = mask(lat.n_atoms(), atoms)?;
    if atoms.is_empty() {
        return Ok((EntropyEstimate::zero(), ()));
    }
    let memo = Memo::new(psi);
    let draws = draw(lat, psi, summation, stream, &plain_weight(&memo))?;
    let vals: Vec<C64> = draws
        .iter()
        .map(|(s, e)| match swap(s, e, &in_a) {
            Some((s1, s2)) => C64::new((memo.get(&s1) + memo.get(&s2) - memo.get(s) - memo.get(e)).re.exp(), 0.0),
            None => C64::new(0.0, 0.0),
        })
        .collect();
    Ok((EntropyEstimate::from_mean(draws.estimate(&vals)), ()))
}

/// Uniform checkpoint times over the final `fraction` of `[t0, t1]`,
/// including both ends of the window.
pub fn path_times(t0: f64, t1: f64, fraction: f64, points: usize) -> Vec<f64> {
    let start = t1 - fraction * (t1 - t0);
    if points < 2 {
        return vec![t1];
    }
    (0..points).map(|k| start + (t1 - start) * k as f64 / (points - 1) as f64).collect()
}

/// Three wedges of a hexagonal region, split by angular sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpPartition {
    pub wedges: [Vec<usize>; 3],
    pub center: [f64; 2],
    pub radius: f64,
}

impl KpPartition {
    /// Atoms whose hexagonal norm about `center` is at most `radius`, split
    /// into sectors `[offset + 120 k, offset + 120 (k + 1))` degrees. Atoms on
    /// a border go to the lower sector index; atoms at the centre to sector 0.
    pub fn hexagonal(lat: &RubyLattice, center: [f64; 2], radius: f64, offset_deg: f64) -> Self {
        let mut wedges: [Vec<usize>; 3] = Default::default();
        for (i, &p) in lat.atom_positions.iter().enumerate() {
            if let Some(k) = Self::sector(lat, center, p, radius, offset_deg) {
                wedges[k].push(i);
            }
        }
        Self { wedges, center, radius }
    }

    /// As [`KpPartition::hexagonal`] but placing whole triangles by their
    /// centres, so no triangle is cut by a region boundary.
    pub fn hexagonal_triangles(lat: &RubyLattice, center: [f64; 2], radius: f64, offset_deg: f64) -> Self {
        let mut wedges: [Vec<usize>; 3] = Default::default();
        for t in &lat.triangles {
            if let Some(k) = Self::sector(lat, center, t.center, radius, offset_deg) {
                wedges[k].extend(t.atoms);
            }
        }
        for w in &mut wedges {
            w.sort_unstable();
        }
        Self { wedges, center, radius }
    }

    fn sector(lat: &RubyLattice, center: [f64; 2], p: [f64; 2], radius: f64, offset_deg: f64) -> Option<usize> {
        let d = lat.displacement(center, p);
        let hex_norm = (0..6)
            .map(|k| {
                let th = std::f64::consts::PI / 3.0 * k as f64 + std::f64::consts::PI / 6.0;
                d[0] * th.cos() + d[1] * th.sin()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if hex_norm > radius + 1e-9 {
            return None;
        }
        let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let sector = if r < 1e-9 {
            0
        } else {
            let mut ang = d[1].atan2(d[0]).to_degrees() - offset_deg;
            ang = ang.rem_euclid(360.0);
            let s = (ang / 120.0).floor() as usize % 3;
            let on_border = (ang - 120.0 * s as f64).abs() < 1e-7;
            if on_border {
                // between sector s-1 and s: lower index, wrap to 0 at 0 degrees
                if s == 0 {
                    0
                } else {
                    s - 1
                }
            } else {
                s
            }
        };
        Some(sector)
    }

    /// `A1, A2, A3, A1A2, A2A3, A1A3, A1A2A3`.
    pub fn regions(&self) -> [Vec<usize>; 7] {
        let u = |ids: &[usize]| {
            let mut v: Vec<usize> = ids.iter().flat_map(|&k| self.wedges[k].iter().copied()).collect();
            v.sort_unstable();
            v
        };
        [u(&[0]), u(&[1]), u(&[2]), u(&[0, 1]), u(&[1, 2]), u(&[0, 2]), u(&[0, 1, 2])]
    }
}

/// `gamma` from the seven region entropies (ordered as
/// [`KpPartition::regions`]) with errors added in quadrature.
pub fn kitaev_preskill(s: &[f64; 7], err: &[f64; 7]) -> (f64, f64) {
    let minus_gamma = s[0] + s[1] + s[2] - s[3] - s[4] - s[5] + s[6];
    let e = err.iter().map(|x| x * x).sum::<f64>().sqrt();
    (-minus_gamma, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::FullRank;
    use crate::lattice::LatticeSpec;
    use crate::oracle::{renyi2, Basis, DenseState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn small() -> RubyLattice {
        LatticeSpec::open(2, 1).build().unwrap()
    }

    fn random_state(n_tri: usize, seed: u64) -> FullRank<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<C64> = (0..1usize << (2 * n_tri)).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        FullRank::from_amplitudes(n_tri, &amps)
    }

    fn exact_s(psi: &FullRank<f64>, atoms: &[usize]) -> f64 {
        let basis = Arc::new(Basis::new(psi.n_triangles(), |_| true).unwrap());
        renyi2(&DenseState::from_variational(basis, psi), atoms).unwrap()
    }

    #[test]
    fn swap_identity_on_equal_copies() {
        let lat = small();
        let c = Configuration::from_basis_index(77, lat.n_triangles());
        let m = mask(lat.n_atoms(), &[0, 4, 5]).unwrap();
        assert_eq!(swap(&c, &c, &m), Some((c.clone(), c)));
    }

    #[test]
    fn empty_region_has_zero_entropy() {
        let lat = small();
        let psi = random_state(lat.n_triangles(), 1);
        let s = swap_estimator(&lat, &psi, &[], &Summation::Exact, 0).unwrap();
        assert_eq!(s.s, 0.0);
    }

    #[test]
    fn exact_summation_matches_rdm() {
        let lat = small();
        let psi = random_state(lat.n_triangles(), 2);
        for atoms in [vec![0, 1, 2], vec![1, 3, 7], vec![0, 1, 2, 3, 4, 5]] {
            let s = swap_estimator(&lat, &psi, &atoms, &Summation::Exact, 0).unwrap();
            assert!((s.s - exact_s(&psi, &atoms)).abs() < 1e-10, "{} vs {}", s.s, exact_s(&psi, &atoms));
            let (am, ph) = amplitude_phase_split(&lat, &psi, &atoms, &Summation::Exact, 0).unwrap();
            assert!((am.s + ph.s - s.s).abs() < 1e-10);
        }
    }

    #[test]
    fn real_positive_state_has_no_phase_entropy() {
        let lat = small();
        let n = lat.n_triangles();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let amps: Vec<C64> = (0..1usize << (2 * n)).map(|_| C64::new(rng.gen::<f64>() + 0.1, 0.0)).collect();
        let psi = FullRank::<f64>::from_amplitudes(n, &amps);
        let (_, ph) = amplitude_phase_split(&lat, &psi, &[0, 1, 2, 3], &Summation::Exact, 0).unwrap();
        assert!(ph.s.abs() < 1e-12);
    }

    #[test]
    fn ratio_path_telescopes_exactly() {
        let lat = small();
        let n = lat.n_triangles();
        let states: Vec<FullRank<f64>> = (0..3).map(|k| random_state(n, 10 + k)).collect();
        let parts = vec![vec![0, 1, 2], vec![3, 4, 5, 6]];
        let series = ratio_path(&lat, &states, &[0.0, 0.5, 1.0], &parts, &Summation::Exact, 0).unwrap();
        assert!(!series.partial);
        for (k, a) in parts.iter().enumerate() {
            let (am, _) = amplitude_only(&lat, &states[2], a, &Summation::Exact, 0).unwrap();
            assert!((series.points[2].s[k] - am.s).abs() < 1e-10);
        }
        let same = vec![states[0].clone(), states[0].clone()];
        let series = ratio_path(&lat, &same, &[0.0, 1.0], &parts, &Summation::Exact, 0).unwrap();
        assert!(series.points[1].delta.iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn sampled_swap_close_to_exact() {
        let lat = small();
        let psi = random_state(lat.n_triangles(), 5);
        let atoms = [0, 1, 2];
        let cfg = SamplerConfig { n_chains: 4, n_samples: 4000, seed: 9, ..SamplerConfig::default() };
        let s = swap_estimator(&lat, &psi, &atoms, &Summation::Sampled { sampler: cfg, p_plaquette: 0.0 }, 1).unwrap();
        let e = exact_s(&psi, &atoms);
        assert!((s.s - e).abs() < 4.0 * s.stderr + 1e-3, "{} +- {} vs {e}", s.s, s.stderr);
    }

    #[test]
    fn wedges_partition_the_region() {
        let lat = LatticeSpec::periodic(3, 3).build().unwrap();
        let c = lat.hexagons[0].center;
        let kp = KpPartition::hexagonal(&lat, c, 3.0, 0.0);
        let r = kp.regions();
        assert_eq!(r[6].len(), r[0].len() + r[1].len() + r[2].len());
        assert!(r[0].iter().all(|a| !r[1].contains(a)));
        let (g, e) = kitaev_preskill(&[0.0; 7], &[0.1; 7]);
        assert_eq!(g, 0.0);
        assert!((e - 0.1 * 7f64.sqrt()).abs() < 1e-15);
    }
}
