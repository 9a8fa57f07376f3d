//! Time-dependent variational principle: geometric tensor and force
//! assembly, the eigen-basis clip regularizer, Heun integration and
//! imaginary-time ground-state optimization.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::VariationalState;
use crate::hamiltonian::{local_energy, Hamiltonian, RampProtocol, RydbergHamiltonian};
use crate::lattice::{Configuration, RubyLattice};
use crate::sampler::{run_chains, SampleSet, SamplerConfig};
use crate::scalar::{Cplx, Real};
use crate::stats::EstimateRecord;

type C64 = Complex<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum TdvpError {
    #[error("non-finite entry in S or F")]
    NonFinite,
    #[error("no usable samples")]
    NoSamples,
    #[error("dimension mismatch between S ({0}) and F ({1})")]
    Dimension(usize, usize),
}

/// Three-band clip rule on eigen-ratios `lambda_k / lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRule {
    /// Band edges, strictly decreasing.
    pub thresholds: [f64; 2],
    /// Magnitude caps per band, non-increasing.
    pub clips: [f64; 3],
}

impl Default for ClipRule {
    fn default() -> Self {
        Self { thresholds: [1e-5, 1e-8], clips: [f64::INFINITY, 0.5, 0.01] }
    }
}

impl ClipRule {
    /// `(band index, cap)` for an eigen-ratio.
    pub fn band(&self, ratio: f64) -> (usize, f64) {
        if ratio > self.thresholds[0] {
            (0, self.clips[0])
        } else if ratio > self.thresholds[1] {
            (1, self.clips[1])
        } else {
            (2, self.clips[2])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    RealTime,
    ImaginaryTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Regularization {
    Eigen(ClipRule),
    DiagShift { epsilon: f64 },
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Eigen(ClipRule::default())
    }
}

/// `S_jk = <O_j^* O_k> - <O_j^*><O_k>`, `F_j = <O_j^* E> - <O_j^*><E>`.
#[derive(Debug, Clone)]
pub struct GeometricTensor {
    pub n: usize,
    /// Row-major Hermitian matrix.
    pub s: Vec<C64>,
    pub f: Vec<C64>,
    pub mean_o: Vec<C64>,
    pub mean_e: C64,
    pub sample_count: usize,
}

impl GeometricTensor {
    pub fn s_at(&self, j: usize, k: usize) -> C64 {
        self.s[j * self.n + k]
    }
}

/// Assemble from per-sample log-derivative rows, local energies and
/// probabilities (normalized to one).
pub fn assemble(o: &[Vec<C64>], e: &[C64], p: &[f64]) -> GeometricTensor {
    let n = o.first().map_or(0, |r| r.len());
    let mut mean_o = vec![C64::new(0.0, 0.0); n];
    let mut mean_e = C64::new(0.0, 0.0);
    for ((row, &ei), &w) in o.iter().zip(e).zip(p) {
        for (m, &x) in mean_o.iter_mut().zip(row) {
            *m += x * w;
        }
        mean_e += ei * w;
    }
    let mut s = vec![C64::new(0.0, 0.0); n * n];
    let mut f = vec![C64::new(0.0, 0.0); n];
    let mut centered = vec![C64::new(0.0, 0.0); n];
    for ((row, &ei), &w) in o.iter().zip(e).zip(p) {
        for (c, (&x, &m)) in centered.iter_mut().zip(row.iter().zip(&mean_o)) {
            *c = x - m;
        }
        let de = (ei - mean_e) * w;
        for j in 0..n {
            let cj = centered[j].conj() * w;
            if cj == C64::new(0.0, 0.0) {
                continue;
            }
            let srow = &mut s[j * n..(j + 1) * n];
            for (sk, &ck) in srow.iter_mut().zip(&centered) {
                *sk += cj * ck;
            }
            f[j] += centered[j].conj() * de;
        }
    }
    GeometricTensor { n, s, f, mean_o, mean_e, sample_count: o.len() }
}

/// Diagnostics of one linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct SolveInfo {
    pub lambda_max: f64,
    pub bands: [usize; 3],
}

/// Solve for the parameter velocity. `mask` restricts the update to the
/// selected coordinates (the rest stay frozen).
pub fn solve_update(
    est: &GeometricTensor,
    reg: &Regularization,
    mode: Mode,
    mask: Option<&[bool]>,
) -> Result<(Vec<C64>, SolveInfo), TdvpError> {
    let n = est.n;
    if est.f.len() != n || est.s.len() != n * n {
        return Err(TdvpError::Dimension(n, est.f.len()));
    }
    if est.s.iter().chain(&est.f).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(TdvpError::NonFinite);
    }
    let active: Vec<usize> = (0..n).filter(|&k| mask.map_or(true, |m| m[k])).collect();
    let m = active.len();
    let s = DMatrix::from_fn(m, m, |i, j| {
        let (a, b) = (active[i], active[j]);
        // symmetrize against round-off
        (est.s_at(a, b) + est.s_at(b, a).conj()) * 0.5
    });
    let f = DVector::from_fn(m, |i, _| est.f[active[i]]);
    let phase = match mode {
        Mode::RealTime => C64::new(0.0, -1.0),
        Mode::ImaginaryTime => C64::new(-1.0, 0.0),
    };
    let mut info = SolveInfo::default();
    let sol: DVector<C64> = match reg {
        Regularization::Eigen(rule) => {
            let eig = SymmetricEigen::new(s);
            let u = eig.eigenvectors;
            let lam = eig.eigenvalues;
            let lmax = lam.iter().copied().fold(0.0, f64::max);
            info.lambda_max = lmax;
            let ft = u.adjoint() * &f * phase;
            let mut at = DVector::from_element(m, C64::new(0.0, 0.0));
            for k in 0..m {
                let fk = ft[k];
                let ratio = if lmax > 0.0 { lam[k] / lmax } else { 0.0 };
                let (band, cap) = rule.band(ratio);
                info.bands[band] += 1;
                if fk == C64::new(0.0, 0.0) {
                    continue;
                }
                let raw = if lam[k] > 0.0 { fk / lam[k] } else { fk * f64::INFINITY };
                let mag = raw.norm();
                at[k] = if mag <= cap { raw } else { fk / fk.norm() * cap };
            }
            u * at
        }
        Regularization::DiagShift { epsilon } => {
            let lmax = (0..m).map(|i| s[(i, i)].re).fold(0.0, f64::max);
            info.lambda_max = lmax;
            let shifted = DMatrix::from_fn(m, m, |i, j| if i == j { s[(i, j)] + *epsilon } else { s[(i, j)] });
            let chol = shifted.cholesky().ok_or(TdvpError::NonFinite)?;
            info.bands[0] = m;
            chol.solve(&(f * phase))
        }
    };
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, &k) in active.iter().enumerate() {
        out[k] = sol[i];
    }
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(TdvpError::NonFinite);
    }
    Ok((out, info))
}

/// Local energies and log-derivatives on a sample set.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub tensor: GeometricTensor,
    pub energy: EstimateRecord,
    /// Samples dropped because their local energy was not finite.
    pub discarded: usize,
    pub local_energies: Vec<C64>,
}

fn to64<T: Real>(z: Cplx<T>) -> C64 {
    C64::new(z.re.as_f64(), z.im.as_f64())
}

/// Evaluate `E_loc` and `O` on every sample, memoizing amplitudes of
/// repeated configurations.
pub fn evaluate<T: Real, V: VariationalState<T> + ?Sized, H: Hamiltonian + ?Sized>(
    psi: &V,
    h: &H,
    samples: &SampleSet,
) -> Result<Evaluation, TdvpError> {
    let mut cache: HashMap<Configuration, Cplx<T>> = HashMap::new();
    let mut unique: HashMap<&Configuration, (Vec<C64>, Option<C64>)> = HashMap::new();
    let np = psi.n_params();
    let mut grad = vec![Cplx::new(T::zero(), T::zero()); np];
    for (c, _, _) in samples.iter() {
        if unique.contains_key(c) {
            continue;
        }
        let lc = psi.log_psi_grad(c, &mut grad);
        cache.insert(c.clone(), lc);
        let el = local_energy(h, c, lc, |d| *cache.entry(d.clone()).or_insert_with(|| psi.log_psi(d)));
        unique.insert(c, (grad.iter().map(|&g| to64(g)).collect(), el.ok().map(to64)));
    }
    let mut o = Vec::with_capacity(samples.len());
    let mut e = Vec::with_capacity(samples.len());
    let mut p = Vec::with_capacity(samples.len());
    let mut discarded = 0;
    let weights = samples.normalized_weights();
    let mut all_e = Vec::with_capacity(samples.len());
    for ((c, _, _), &w) in samples.iter().zip(&weights) {
        let (row, el) = &unique[c];
        match el {
            Some(el) => {
                o.push(row.clone());
                e.push(*el);
                p.push(w);
                all_e.push(*el);
            }
            None => {
                discarded += 1;
                all_e.push(C64::new(0.0, 0.0));
            }
        }
    }
    if o.is_empty() {
        return Err(TdvpError::NoSamples);
    }
    if discarded > 0 {
        log::warn!("discarded {discarded} samples with non-finite local energy");
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
    }
    let energy = samples.estimate(&all_e);
    Ok(Evaluation { tensor: assemble(&o, &e, &p), energy, discarded, local_energies: all_e })
}

/// Hamiltonian as a function of time.
pub trait Schedule: Send + Sync {
    fn at(&self, t: f64) -> Arc<dyn Hamiltonian>;
    /// `(omega, delta)` for logging.
    fn drive(&self, _t: f64) -> (f64, f64) {
        (f64::NAN, f64::NAN)
    }
}

/// Fixed Hamiltonian.
pub struct Constant(pub Arc<dyn Hamiltonian>);

impl Schedule for Constant {
    fn at(&self, _t: f64) -> Arc<dyn Hamiltonian> {
        self.0.clone()
    }
}

/// Rydberg Hamiltonian following a ramp.
pub struct Ramped {
    pub base: RydbergHamiltonian,
    pub ramp: RampProtocol,
}

impl Schedule for Ramped {
    fn at(&self, t: f64) -> Arc<dyn Hamiltonian> {
        let (o, d) = self.ramp.at(t);
        Arc::new(self.base.with_drive(o, d))
    }

    fn drive(&self, t: f64) -> (f64, f64) {
        self.ramp.at(t)
    }
}

fn d_dt() -> f64 {
    1e-2
}
fn d_ceiling() -> f64 {
    1.1
}
fn d_retries() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdvpConfig {
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default)]
    pub regularization: Regularization,
    /// Resample when R̂ exceeds this value.
    #[serde(default = "d_ceiling")]
    pub rhat_ceiling: f64,
    #[serde(default = "d_retries")]
    pub max_retries: usize,
    /// Replace sampling by full-basis enumeration (small systems only).
    #[serde(default)]
    pub exact: bool,
}

impl Default for TdvpConfig {
    fn default() -> Self {
        Self { dt: d_dt(), regularization: Regularization::default(), rhat_ceiling: d_ceiling(), max_retries: d_retries(), exact: false }
    }
}

/// Per-step log record.
#[derive(Debug, Clone, Serialize)]
pub struct StepLog {
    pub step: u64,
    pub t: f64,
    pub omega: f64,
    pub delta: f64,
    pub energy: f64,
    pub energy_im: f64,
    pub stderr: f64,
    pub r_hat: f64,
    pub acceptance: f64,
    pub lambda_max: f64,
    pub clip_bands: [usize; 3],
    pub retries: usize,
}

/// Drives a variational state through TDVP epochs, owning chain states so
/// consecutive epochs warm-start.
pub struct Driver<T: Real, V: VariationalState<T>> {
    pub psi: V,
    pub lattice: Arc<RubyLattice>,
    pub sampler: SamplerConfig,
    pub tdvp: TdvpConfig,
    /// Frozen-coordinate mask (`true` = free).
    pub mask: Option<Vec<bool>>,
    /// Ramp duration used by the plaquette-probability schedule.
    pub t_ramp: f64,
    pub chains: Vec<Configuration>,
    pub step: u64,
    _marker: std::marker::PhantomData<T>,
}

/// Outcome of one velocity evaluation.
struct Velocity {
    v: Vec<C64>,
    energy: EstimateRecord,
    info: SolveInfo,
    retries: usize,
}

impl<T: Real, V: VariationalState<T>> Driver<T, V> {
    pub fn new(psi: V, lattice: Arc<RubyLattice>, sampler: SamplerConfig, tdvp: TdvpConfig) -> Self {
        let chains = vec![lattice.vacuum(); sampler.n_chains];
        Self { psi, lattice, sampler, tdvp, mask: None, t_ramp: 0.0, chains, step: 0, _marker: Default::default() }
    }

    /// Draw samples for the current parameters.
    pub fn sample(&mut self, h: &dyn Hamiltonian, t: f64, stream: u64) -> SampleSet {
        if self.tdvp.exact {
            return SampleSet::exact(&self.psi, |c| h.admissible(c));
        }
        let p = self.sampler.p_at(t, self.t_ramp);
        let s = run_chains(&self.sampler, &self.psi, &self.lattice, &self.chains, p, stream);
        self.chains = s.final_states.clone();
        s
    }

    fn velocity(&mut self, h: &dyn Hamiltonian, t: f64, mode: Mode, stage: u64) -> Result<Velocity, TdvpError> {
        let mut retries = 0;
        loop {
            let stream = self.step * 64 + stage * 8 + retries as u64;
            let samples = self.sample(h, t, stream);
            let ev = evaluate(&self.psi, h, &samples)?;
            let bad = !(ev.energy.r_hat <= self.tdvp.rhat_ceiling);
            if bad && retries < self.tdvp.max_retries {
                retries += 1;
                log::warn!("step {}: r_hat {:.3} above ceiling, resampling", self.step, ev.energy.r_hat);
                continue;
            }
            let (v, info) = solve_update(&ev.tensor, &self.tdvp.regularization, mode, self.mask.as_deref())?;
            return Ok(Velocity { v, energy: ev.energy, info, retries });
        }
    }

    fn params64(&self) -> Vec<C64> {
        self.psi.params().iter().map(|&z| to64(z)).collect()
    }

    fn set64(&mut self, p: &[C64]) {
        let q: Vec<Cplx<T>> = p.iter().map(|z| Cplx::new(T::lit(z.re), T::lit(z.im))).collect();
        self.psi.set_params(&q);
    }

    /// One Heun step `p + dt/2 (k1 + k2)` with fresh samples at each stage.
    pub fn heun_step(&mut self, schedule: &dyn Schedule, t: f64, dt: f64, mode: Mode) -> Result<StepLog, TdvpError> {
        let p0 = self.params64();
        let h1 = schedule.at(t);
        let k1 = self.velocity(h1.as_ref(), t, mode, 0)?;
        if dt == 0.0 {
            return Ok(self.log(schedule, t, &k1));
        }
        let p1: Vec<C64> = p0.iter().zip(&k1.v).map(|(p, k)| p + k * dt).collect();
        self.set64(&p1);
        let h2 = schedule.at(t + dt);
        let k2 = match self.velocity(h2.as_ref(), t + dt, mode, 1) {
            Ok(k) => k,
            Err(e) => {
                self.set64(&p0);
                return Err(e);
            }
        };
        let p2: Vec<C64> = p0.iter().zip(k1.v.iter().zip(&k2.v)).map(|(p, (a, b))| p + (a + b) * (dt / 2.0)).collect();
        self.set64(&p2);
        let mut rec = self.log(schedule, t, &k1);
        rec.retries += k2.retries;
        self.step += 1;
        Ok(rec)
    }

    /// One explicit Euler step, used for imaginary-time optimization.
    pub fn euler_step(&mut self, schedule: &dyn Schedule, t: f64, dt: f64, mode: Mode) -> Result<StepLog, TdvpError> {
        let p0 = self.params64();
        let h = schedule.at(t);
        let k = self.velocity(h.as_ref(), t, mode, 0)?;
        let p1: Vec<C64> = p0.iter().zip(&k.v).map(|(p, v)| p + v * dt).collect();
        self.set64(&p1);
        let rec = self.log(schedule, t, &k);
        self.step += 1;
        Ok(rec)
    }

    fn log(&self, schedule: &dyn Schedule, t: f64, k: &Velocity) -> StepLog {
        let (omega, delta) = schedule.drive(t);
        StepLog {
            step: self.step,
            t,
            omega,
            delta,
            energy: k.energy.mean.re,
            energy_im: k.energy.mean.im,
            stderr: k.energy.stderr,
            r_hat: k.energy.r_hat,
            acceptance: k.energy.acceptance_rate,
            lambda_max: k.info.lambda_max,
            clip_bands: k.info.bands,
            retries: k.retries,
        }
    }

    /// Energy estimate of the current parameters.
    pub fn energy(&mut self, h: &dyn Hamiltonian, t: f64) -> Result<EstimateRecord, TdvpError> {
        let stream = self.step * 64 + 63;
        let s = self.sample(h, t, stream);
        Ok(evaluate(&self.psi, h, &s)?.energy)
    }
}

/// Imaginary-time schedule for [`optimize_ground_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSchedule {
    /// Steps with only the mean-field coordinates free.
    pub pretrain_steps: usize,
    pub joint_steps: usize,
    pub dt: f64,
}

impl Default for OptimizeSchedule {
    fn default() -> Self {
        Self { pretrain_steps: 100, joint_steps: 200, dt: 0.05 }
    }
}

/// Two-phase imaginary-time optimization; returns the step logs.
pub fn optimize_ground_state<T: Real, V: VariationalState<T>>(
    driver: &mut Driver<T, V>,
    h: Arc<dyn Hamiltonian>,
    schedule: &OptimizeSchedule,
    mean_field_mask: Option<Vec<bool>>,
) -> Result<Vec<StepLog>, TdvpError> {
    let sched = Constant(h);
    let mut logs = Vec::with_capacity(schedule.pretrain_steps + schedule.joint_steps);
    let saved = driver.mask.take();
    driver.mask = mean_field_mask.clone();
    for _ in 0..schedule.pretrain_steps {
        logs.push(driver.euler_step(&sched, 0.0, schedule.dt, Mode::ImaginaryTime)?);
    }
    driver.mask = saved;
    for _ in 0..schedule.joint_steps {
        logs.push(driver.euler_step(&sched, 0.0, schedule.dt, Mode::ImaginaryTime)?);
    }
    Ok(logs)
}
