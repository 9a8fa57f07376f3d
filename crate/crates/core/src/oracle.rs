//! Exact reference for small systems: sparse restricted-basis Hamiltonians,
//! Lanczos spectra, time-dependent evolution, infidelities and Rényi-2
//! entropies from explicit reduced density matrices.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ansatz::VariationalState;
use crate::hamiltonian::{Hamiltonian, RampProtocol, RydbergHamiltonian, StabilizerHamiltonian};
use crate::lattice::Configuration;
use crate::scalar::Real;

type C64 = Complex<f64>;

/// Largest triangle count the oracle accepts (`4^12` basis states).
pub const MAX_TRIANGLES: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("system of {0} triangles exceeds the oracle limit of {MAX_TRIANGLES}")]
    TooLarge(usize),
    #[error("reduced density matrix of dimension {0} is too large")]
    RdmTooLarge(usize),
    #[error("time integration did not converge (last fidelity change {0:e})")]
    NotConverged(f64),
    #[error("state dimension mismatch")]
    Dimension,
    #[error("no configuration with every vertex in the dimer sector")]
    NoDimerCovering,
}

/// Admissible restricted-basis states and their index map.
#[derive(Debug, Clone)]
pub struct Basis {
    pub n_triangles: usize,
    states: Vec<usize>,
    /// `lookup[basis_index] = position` or `u32::MAX`.
    lookup: Vec<u32>,
}

impl Basis {
    pub fn new(n_triangles: usize, admissible: impl Fn(&Configuration) -> bool) -> Result<Self, OracleError> {
        if n_triangles > MAX_TRIANGLES {
            return Err(OracleError::TooLarge(n_triangles));
        }
        let full = 1usize << (2 * n_triangles);
        let mut states = Vec::new();
        let mut lookup = vec![u32::MAX; full];
        for idx in 0..full {
            if admissible(&Configuration::from_basis_index(idx, n_triangles)) {
                lookup[idx] = states.len() as u32;
                states.push(idx);
            }
        }
        Ok(Self { n_triangles, states, lookup })
    }

    pub fn for_hamiltonian<H: Hamiltonian + ?Sized>(h: &H) -> Result<Self, OracleError> {
        Self::new(h.lattice().n_triangles(), |c| h.admissible(c))
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn config(&self, k: usize) -> Configuration {
        Configuration::from_basis_index(self.states[k], self.n_triangles)
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        let v = self.lookup[c.basis_index()];
        (v != u32::MAX).then_some(v as usize)
    }
}

/// Real symmetric CSR matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    fn from_rows(dim: usize, mut row: impl FnMut(usize, &mut Vec<(usize, f64)>)) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut buf = Vec::new();
        for i in 0..dim {
            buf.clear();
            row(i, &mut buf);
            buf.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < buf.len() {
                let (j, mut v) = buf[k];
                while k + 1 < buf.len() && buf[k + 1].0 == j {
                    k += 1;
                    v += buf[k].1;
                }
                if v != 0.0 {
                    cols.push(j as u32);
                    vals.push(v);
                }
                k += 1;
            }
            row_ptr.push(cols.len());
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y += a * M x`.
    pub fn mul_add(&self, a: C64, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += x[self.cols[k] as usize] * self.vals[k];
            }
            *yi += a * acc;
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.vals[self.row_ptr[i]..self.row_ptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k] as usize)] = self.vals[k];
            }
        }
        m
    }
}

/// `H = sum_k coef_k M_k` with real component matrices.
#[derive(Debug, Clone)]
pub struct MatrixSum {
    pub parts: Vec<SparseMatrix>,
}

impl MatrixSum {
    pub fn apply(&self, coefs: &[f64], x: &[C64], y: &mut [C64], scale: C64) {
        for (m, &c) in self.parts.iter().zip(coefs) {
            if c != 0.0 {
                m.mul_add(scale * c, x, y);
            }
        }
    }

    pub fn norm_bound(&self, coefs: &[f64]) -> f64 {
        self.parts.iter().zip(coefs).map(|(m, c)| c.abs() * m.norm_inf()).sum()
    }
}

/// Sparse matrix of a fixed Hamiltonian.
pub fn build_matrix<H: Hamiltonian + ?Sized>(h: &H, basis: &Basis) -> SparseMatrix {
    let lat = h.lattice();
    let mut moves = Vec::new();
    SparseMatrix::from_rows(basis.dim(), |i, row| {
        let c = basis.config(i);
        row.push((i, h.diagonal(&c)));
        h.off_diagonal(&c, &mut moves);
        for &(m, v) in &moves {
            let mut d = c.clone();
            if m.apply(lat, &mut d) {
                if let Some(j) = basis.index_of(&d) {
                    row.push((j, v));
                }
            }
        }
    })
}

/// Rydberg Hamiltonian split as `H(omega, delta) = V + omega X - delta N`.
#[derive(Debug, Clone)]
pub struct RydbergMatrices {
    pub basis: Arc<Basis>,
    pub terms: MatrixSum,
}

impl RydbergMatrices {
    pub fn new(h: &RydbergHamiltonian) -> Result<Self, OracleError> {
        let basis = Arc::new(Basis::for_hamiltonian(h)?);
        let dim = basis.dim();
        let v = SparseMatrix::from_rows(dim, |i, row| row.push((i, h.interaction_energy(&basis.config(i)))));
        let n = SparseMatrix::from_rows(dim, |i, row| row.push((i, basis.config(i).excitation_count() as f64)));
        let unit = h.with_drive(1.0, 0.0);
        let lat = h.lattice();
        let mut moves = Vec::new();
        let x = SparseMatrix::from_rows(dim, |i, row| {
            let c = basis.config(i);
            unit.off_diagonal(&c, &mut moves);
            for &(m, val) in &moves {
                let mut d = c.clone();
                if m.apply(lat, &mut d) {
                    if let Some(j) = basis.index_of(&d) {
                        row.push((j, val));
                    }
                }
            }
        });
        Ok(Self { basis, terms: MatrixSum { parts: vec![v, x, n] } })
    }

    pub fn coefs(omega: f64, delta: f64) -> [f64; 3] {
        [1.0, omega, -delta]
    }

    /// Fixed-drive matrix.
    pub fn at(&self, omega: f64, delta: f64) -> SparseMatrix {
        let c = Self::coefs(omega, delta);
        let p = &self.terms.parts;
        let dim = self.basis.dim();
        SparseMatrix::from_rows(dim, |i, row| {
            for (m, &w) in p.iter().zip(&c) {
                for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                    row.push((m.cols[k] as usize, w * m.vals[k]));
                }
            }
        })
    }
}

/// Dense complex amplitude vector over a basis.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub basis: Arc<Basis>,
    pub amps: Vec<C64>,
}

impl DenseState {
    pub fn basis_state(basis: Arc<Basis>, c: &Configuration) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
        amps[basis.index_of(c).expect("configuration in basis")] = C64::new(1.0, 0.0);
        Self { basis, amps }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        self.amps.iter_mut().for_each(|a| *a /= n);
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &DenseState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &DenseState) -> f64 {
        self.inner(other).norm_sqr() / (self.norm_sqr() * other.norm_sqr())
    }

    pub fn amplitude(&self, c: &Configuration) -> C64 {
        self.basis.index_of(c).map_or(C64::new(0.0, 0.0), |k| self.amps[k])
    }

    /// Expectation of a real symmetric matrix.
    pub fn expectation(&self, m: &SparseMatrix) -> f64 {
        let mut y = vec![C64::new(0.0, 0.0); self.amps.len()];
        m.mul_add(C64::new(1.0, 0.0), &self.amps, &mut y);
        (self.amps.iter().zip(&y).map(|(a, b)| a.conj() * b).sum::<C64>() / self.norm_sqr()).re
    }

    /// Contract a variational state over the full basis (overflow-safe).
    pub fn from_variational<T: Real, V: VariationalState<T> + ?Sized>(basis: Arc<Basis>, psi: &V) -> Self {
        let logs: Vec<C64> = (0..basis.dim())
            .map(|k| {
                let l = psi.log_psi(&basis.config(k));
                C64::new(l.re.as_f64(), l.im.as_f64())
            })
            .collect();
        let max = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let amps = logs.iter().map(|l| (l - max).exp()).collect();
        Self { basis, amps }
    }
}

/// `1 - |<a|b>|^2 / (<a|a><b|b>)`.
pub fn infidelity<T: Real, V: VariationalState<T> + ?Sized>(exact: &DenseState, psi: &V) -> f64 {
    let nqs = DenseState::from_variational(exact.basis.clone(), psi);
    (1.0 - exact.fidelity(&nqs)).max(0.0)
}

/// Lowest eigenpairs of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn real_matvec(m: &SparseMatrix, x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in m.row_ptr[i]..m.row_ptr[i + 1] {
            acc += m.vals[k] * x[m.cols[k] as usize];
        }
        *yi = acc;
    }
}

/// Lowest eigenpair orthogonal to `deflate`, by Lanczos with full
/// reorthogonalization and restarts.
fn lanczos_lowest(m: &SparseMatrix, deflate: &[Vec<f64>], seed: u64, tol: f64) -> (f64, Vec<f64>) {
    let n = m.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let project = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for _ in 0..2 {
            for b in basis {
                let d = dot(v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
    };
    let mut start: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let max_krylov = 120.min(n);
    let mut best = (f64::INFINITY, start.clone());
    for _restart in 0..60 {
        project(&mut start, deflate);
        let nrm = dot(&start, &start).sqrt();
        start.iter_mut().for_each(|x| *x /= nrm);
        let mut q: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];
        for j in 0..max_krylov {
            real_matvec(m, &q[j], &mut w);
            let a = dot(&w, &q[j]);
            alpha.push(a);
            project(&mut w, deflate);
            project(&mut w, &q);
            let b = dot(&w, &w).sqrt();
            if b < 1e-12 || j + 1 == max_krylov {
                break;
            }
            beta.push(b);
            q.push(w.iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let mut v = vec![0.0; n];
        for (i, qi) in q.iter().enumerate().take(k) {
            let c = eig.eigenvectors[(i, imin)];
            v.iter_mut().zip(qi).for_each(|(x, y)| *x += c * y);
        }
        project(&mut v, deflate);
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        real_matvec(m, &v, &mut w);
        let rq = dot(&v, &w);
        let res = w.iter().zip(&v).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt();
        best = (rq, v.clone());
        if res < tol || k < max_krylov {
            break;
        }
        start = v;
    }
    best
}

/// Lowest `k` eigenpairs (dense solve for small dimensions, deflated
/// Lanczos otherwise).
pub fn lowest_eigenpairs(m: &SparseMatrix, k: usize) -> Spectrum {
    let k = k.min(m.dim);
    if m.dim <= 1500 {
        let eig = SymmetricEigen::new(m.to_dense());
        let mut idx: Vec<usize> = (0..m.dim).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let values = idx[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = idx[..k].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
        return Spectrum { values, vectors };
    }
    let mut values = Vec::with_capacity(k);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let (e, v) = lanczos_lowest(m, &vectors, 0xC0FFEE + i as u64, 1e-9);
        values.push(e);
        vectors.push(v);
    }
    // deflation can return pairs out of order when degenerate levels mix
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    Spectrum { values: idx.iter().map(|&i| values[i]).collect(), vectors: idx.iter().map(|&i| vectors[i].clone()).collect() }
}

/// Ground state of a fixed Hamiltonian.
pub fn ground_state<H: Hamiltonian + ?Sized>(h: &H) -> Result<(f64, DenseState), OracleError> {
    let basis = Arc::new(Basis::for_hamiltonian(h)?);
    let m = build_matrix(h, &basis);
    let sp = lowest_eigenpairs(&m, 1);
    let amps = sp.vectors[0].iter().map(|&x| C64::new(x, 0.0)).collect();
    Ok((sp.values[0], DenseState { basis, amps }))
}

/// Stabilizer ground state in the sector of `reference`: the equal-weight
/// superposition over the plaquette-flip orbit of a dimer covering. With no
/// reference, the first basis configuration in the dimer sector is used.
pub fn stabilizer_state(h: &StabilizerHamiltonian, reference: Option<&Configuration>) -> Result<DenseState, OracleError> {
    let lat = h.lattice();
    let basis = Arc::new(Basis::for_hamiltonian(h)?);
    let start = match reference {
        Some(c) => c.clone(),
        None => (0..basis.dim())
            .map(|k| basis.config(k))
            .find(|c| lat.parity_charges(c).charges.iter().all(|&q| q == -1))
            .ok_or(OracleError::NoDimerCovering)?,
    };
    if lat.parity_charges(&start).charges.iter().any(|&q| q != -1) {
        return Err(OracleError::NoDimerCovering);
    }
    let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
    let mut stack = vec![start];
    while let Some(c) = stack.pop() {
        let k = basis.index_of(&c).expect("restricted space is closed under plaquette flips");
        if amps[k].re != 0.0 {
            continue;
        }
        amps[k] = C64::new(1.0, 0.0);
        for p in 0..lat.hexagons.len() {
            let mut d = c.clone();
            lat.flip_plaquette(&mut d, p);
            stack.push(d);
        }
    }
    let mut psi = DenseState { basis, amps };
    psi.normalize();
    Ok(psi)
}

/// `psi <- exp(-i h B) psi` with `B = sum coefs_k M_k`, by scaled Taylor series.
fn exp_apply(terms: &MatrixSum, coefs: &[f64], h: f64, psi: &mut [C64]) {
    let norm = terms.norm_bound(coefs) * h.abs();
    let substeps = norm.ceil().max(1.0) as usize;
    let dt = h / substeps as f64;
    let n = psi.len();
    let mut term = vec![C64::new(0.0, 0.0); n];
    let mut next = vec![C64::new(0.0, 0.0); n];
    for _ in 0..substeps {
        term.copy_from_slice(psi);
        for k in 1..60 {
            next.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            terms.apply(coefs, &term, &mut next, C64::new(0.0, -dt / k as f64));
            std::mem::swap(&mut term, &mut next);
            let mut tn = 0.0;
            for (p, t) in psi.iter_mut().zip(&term) {
                *p += t;
                tn += t.norm_sqr();
            }
            if tn.sqrt() < 1e-16 {
                break;
            }
        }
    }
}

const CF4_ALPHA1: f64 = (3.0 - 2.0 * 1.732_050_807_568_877_2) / 12.0;
const CF4_ALPHA2: f64 = (3.0 + 2.0 * 1.732_050_807_568_877_2) / 12.0;

/// One fourth-order commutator-free Magnus step for `H(t) = sum_k f_k(t) M_k`.
fn cf4_step(terms: &MatrixSum, coefs_at: &impl Fn(f64) -> Vec<f64>, t: f64, h: f64, psi: &mut [C64]) {
    let s = 3f64.sqrt() / 6.0;
    let c1 = coefs_at(t + (0.5 - s) * h);
    let c2 = coefs_at(t + (0.5 + s) * h);
    let first: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| CF4_ALPHA2 * a + CF4_ALPHA1 * b).collect();
    let second: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| CF4_ALPHA1 * a + CF4_ALPHA2 * b).collect();
    exp_apply(terms, &first, h, psi);
    exp_apply(terms, &second, h, psi);
}

fn integrate(terms: &MatrixSum, coefs_at: &impl Fn(f64) -> Vec<f64>, t0: f64, t1: f64, dt: f64, psi: &mut [C64]) {
    if t1 <= t0 {
        return;
    }
    let steps = ((t1 - t0) / dt).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        cf4_step(terms, coefs_at, t0 + k as f64 * h, h, psi);
    }
}

/// Result of an exact evolution.
#[derive(Debug, Clone)]
pub struct Evolution {
    /// `(t, state)` at each requested snapshot time and at the end.
    pub snapshots: Vec<(f64, DenseState)>,
    pub dt_used: f64,
    /// Fidelity change between the last two refinement levels.
    pub refinement_change: f64,
}

/// Integrate `i d/dt psi = H(t) psi` over `[t0, t1]`, halving the step until
/// the final state changes by less than `1e-8` in fidelity.
pub fn evolve_exact(
    mats: &RydbergMatrices,
    ramp: &RampProtocol,
    psi0: &DenseState,
    t0: f64,
    t1: f64,
    dt_ref: f64,
    snapshot_times: &[f64],
) -> Result<Evolution, OracleError> {
    if psi0.amps.len() != mats.basis.dim() {
        return Err(OracleError::Dimension);
    }
    let coefs_at = |t: f64| {
        let (o, d) = ramp.at(t);
        RydbergMatrices::coefs(o, d).to_vec()
    };
    let mut times: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > t0 && t < t1).collect();
    times.push(t1);
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let run = |dt: f64| -> Vec<(f64, DenseState)> {
        let mut psi = psi0.amps.clone();
        let mut out = Vec::with_capacity(times.len());
        let mut t = t0;
        for &tn in &times {
            integrate(&mats.terms, &coefs_at, t, tn, dt, &mut psi);
            t = tn;
            out.push((tn, DenseState { basis: psi0.basis.clone(), amps: psi.clone() }));
        }
        out
    };
    if t1 <= t0 {
        return Ok(Evolution { snapshots: vec![(t0, psi0.clone())], dt_used: dt_ref, refinement_change: 0.0 });
    }
    let mut dt = dt_ref;
    let mut prev = run(dt);
    let mut change = f64::INFINITY;
    for _ in 0..8 {
        let next = run(dt / 2.0);
        change = 1.0 - prev.last().unwrap().1.fidelity(&next.last().unwrap().1);
        dt /= 2.0;
        prev = next;
        if change.abs() < 1e-8 {
            return Ok(Evolution { snapshots: prev, dt_used: dt, refinement_change: change });
        }
    }
    Err(OracleError::NotConverged(change))
}

/// Evolve under a fixed matrix for time `t`.
pub fn evolve_constant(m: &SparseMatrix, psi: &DenseState, t: f64) -> DenseState {
    let terms = MatrixSum { parts: vec![m.clone()] };
    let mut amps = psi.amps.clone();
    let steps = (t.abs() / 0.05).ceil().max(1.0) as usize;
    let coefs = |_: f64| vec![1.0];
    integrate(&terms, &coefs, 0.0, t, t / steps as f64, &mut amps);
    DenseState { basis: psi.basis.clone(), amps }
}

/// Rényi-2 entropy `-ln Tr rho_A^2` of the atom subset `atoms`, by explicit
/// partial trace in the atom-occupation basis.
pub fn renyi2(psi: &DenseState, atoms: &[usize]) -> Result<f64, OracleError> {
    let n_atoms = 3 * psi.basis.n_triangles;
    let mut in_a = vec![false; n_atoms];
    for &a in atoms {
        in_a[a] = true;
    }
    let key = |c: &Configuration, side: bool| -> u128 {
        let mut k = 0u128;
        let mut bit = 0;
        for (i, &ia) in in_a.iter().enumerate() {
            if ia == side {
                if c.occupied(i) {
                    k |= 1 << bit;
                }
                bit += 1;
            }
        }
        k
    };
    let norm = psi.norm_sqr();
    // group amplitudes by the traced-out side, index the kept side
    let mut keys_a: HashMap<u128, usize> = HashMap::new();
    let mut keys_b: HashMap<u128, usize> = HashMap::new();
    let mut entries = Vec::with_capacity(psi.amps.len());
    for (k, &amp) in psi.amps.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let c = psi.basis.config(k);
        let na = keys_a.len();
        let ia = *keys_a.entry(key(&c, true)).or_insert(na);
        let nb = keys_b.len();
        let ib = *keys_b.entry(key(&c, false)).or_insert(nb);
        entries.push((ia, ib, amp));
    }
    // keep the smaller side
    let (dim, swap) = if keys_a.len() <= keys_b.len() { (keys_a.len(), false) } else { (keys_b.len(), true) };
    if dim > 6000 {
        return Err(OracleError::RdmTooLarge(dim));
    }
    let mut groups: HashMap<usize, Vec<(usize, C64)>> = HashMap::new();
    for &(ia, ib, amp) in &entries {
        let (keep, trace) = if swap { (ib, ia) } else { (ia, ib) };
        groups.entry(trace).or_default().push((keep, amp));
    }
    let mut rho = vec![C64::new(0.0, 0.0); dim * dim];
    for g in groups.values() {
        for &(i, a) in g {
            for &(j, b) in g {
                rho[i * dim + j] += a * b.conj();
            }
        }
    }
    let purity: f64 = rho.iter().map(|x| x.norm_sqr()).sum::<f64>() / (norm * norm);
    Ok(-purity.ln())
}

/// Kitaev–Preskill combination `gamma = -(S_A + S_B + S_C - S_AB - S_BC - S_AC + S_ABC)`.
pub fn kitaev_preskill_exact(psi: &DenseState, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64, OracleError> {
    let join = |xs: &[&[usize]]| -> Vec<usize> { xs.iter().flat_map(|x| x.iter().copied()).collect() };
    let s = |x: Vec<usize>| renyi2(psi, &x);
    let total = s(a.to_vec())? + s(b.to_vec())? + s(c.to_vec())? - s(join(&[a, b]))? - s(join(&[b, c]))?
        - s(join(&[a, c]))?
        + s(join(&[a, b, c]))?;
    Ok(-total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{Knot, StabilizerHamiltonian, TailCutoff};
    use crate::lattice::LatticeSpec;

    fn single_triangle() -> Arc<crate::lattice::RubyLattice> {
        // an open 1x1 patch holds two triangles; keep only the up one by
        // working in the basis where the second triangle is E
        Arc::new(LatticeSpec::open(1, 1).build().unwrap())
    }

    #[test]
    fn two_triangle_matrix_structure() {
        let lat = single_triangle();
        let h = RydbergHamiltonian::standard(lat.clone(), 1.0, 0.0);
        let basis = Basis::for_hamiltonian(&h).unwrap();
        assert_eq!(basis.dim(), 16);
        let m = build_matrix(&h, &basis);
        let vac = basis.index_of(&lat.vacuum()).unwrap();
        for k in 0..3 {
            let mut c = lat.vacuum();
            c.toggle_atom(k);
            assert_eq!(m.get(vac, basis.index_of(&c).unwrap()), -0.5);
        }
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn stabilizer_ground_degeneracy() {
        let lat = Arc::new(LatticeSpec::periodic(2, 2).build().unwrap());
        let h = StabilizerHamiltonian::new(lat);
        let basis = Basis::for_hamiltonian(&h).unwrap();
        let m = build_matrix(&h, &basis);
        let sp = lowest_eigenpairs(&m, 5);
        for e in &sp.values[..4] {
            assert!((e - h.ground_energy()).abs() < 1e-8, "{:?}", sp.values);
        }
        assert!(sp.values[4] > h.ground_energy() + 1.0);
    }

    #[test]
    fn rabi_single_atom_closed_form() {
        // only the up triangle is driven: the down triangle is decoupled
        // at omega, with all excited pairs far away under a tiny cutoff
        let lat = single_triangle();
        let h = RydbergHamiltonian::new(lat.clone(), 1.0, 0.0, 2.4, TailCutoff::Distance(0.5), false, 1.0).unwrap();
        let mats = RydbergMatrices::new(&h).unwrap();
        let ramp = RampProtocol::PiecewiseLinear {
            knots: vec![Knot { t: 0.0, omega: 1.0, delta: 0.0 }, Knot { t: 2.0, omega: 1.0, delta: 0.0 }],
        };
        let psi0 = DenseState::basis_state(mats.basis.clone(), &lat.vacuum());
        let ev = evolve_exact(&mats, &ramp, &psi0, 0.0, 2.0, 0.05, &[]).unwrap();
        let out = &ev.snapshots.last().unwrap().1;
        // each triangle: E couples to the symmetric W state with sqrt(3) omega / 2
        let w = 3f64.sqrt() / 2.0;
        let p_vac_one = (w * 2.0).cos().powi(2);
        let p = out.amplitude(&lat.vacuum()).norm_sqr();
        assert!((p - p_vac_one * p_vac_one).abs() < 1e-8, "{p}");
        assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn renyi_of_product_and_bell_like_states() {
        let lat = single_triangle();
        let basis = Arc::new(Basis::new(2, |_| true).unwrap());
        let psi = DenseState::basis_state(basis.clone(), &lat.vacuum());
        assert!(renyi2(&psi, &[0, 1, 2]).unwrap().abs() < 1e-12);
        // sum_k |k>|k> over the four local states of each triangle
        let mut amps = vec![C64::new(0.0, 0.0); 16];
        for k in 0..4u8 {
            let c = Configuration::from_states(vec![k, k]).unwrap();
            amps[basis.index_of(&c).unwrap()] = C64::new(0.5, 0.0);
        }
        let bell = DenseState { basis, amps };
        assert!((renyi2(&bell, &[0, 1, 2]).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((renyi2(&bell, &[3, 4, 5]).unwrap() - 4f64.ln()).abs() < 1e-12);
    }
}
