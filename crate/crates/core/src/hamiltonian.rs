//! Rydberg and stabilizer Hamiltonians on the restricted space, ramps and
//! local energies.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Configuration, RubyLattice};
use crate::scalar::{Cplx, Real};

#[derive(Debug, Error, PartialEq)]
pub enum HamiltonianError {
    #[error("non-finite amplitude ratio in local energy")]
    NonFinite,
    #[error("ramp knots must have strictly increasing times")]
    KnotOrder,
    #[error("ramp needs at least one knot")]
    EmptyRamp,
    #[error("linear ramp must have positive duration (got {0})")]
    BadRate(f64),
    #[error("tail cutoff {0} is not positive")]
    BadCutoff(f64),
}

/// An off-diagonal move connecting two basis states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    /// Toggle one atom (E <-> R_k on its triangle).
    Toggle(usize),
    /// Hexagon plaquette flip.
    Plaquette(usize),
}

impl Move {
    /// Apply in place. Returns `false` when the move leaves the restricted
    /// space (only possible for toggles).
    pub fn apply(self, lat: &RubyLattice, c: &mut Configuration) -> bool {
        match self {
            Move::Toggle(a) => c.toggle_atom(a),
            Move::Plaquette(p) => {
                lat.flip_plaquette(c, p);
                true
            }
        }
    }
}

/// Hamiltonian acting on the restricted space with real matrix elements.
pub trait Hamiltonian: Send + Sync {
    fn lattice(&self) -> &RubyLattice;

    fn diagonal(&self, c: &Configuration) -> f64;

    /// Off-diagonal entries of row `c` as `(move, element)`.
    fn off_diagonal(&self, c: &Configuration, out: &mut Vec<(Move, f64)>);

    /// Whether `c` belongs to the model's Hilbert space (hard constraints).
    fn admissible(&self, _c: &Configuration) -> bool {
        true
    }

    /// Full row: diagonal entry first, then each connected configuration.
    fn connected_configurations(&self, c: &Configuration) -> Vec<(Configuration, f64)> {
        let mut moves = Vec::new();
        self.off_diagonal(c, &mut moves);
        let mut row = Vec::with_capacity(moves.len() + 1);
        row.push((c.clone(), self.diagonal(c)));
        for (m, h) in moves {
            let mut d = c.clone();
            if m.apply(self.lattice(), &mut d) {
                row.push((d, h));
            }
        }
        row
    }
}

/// Interaction range for the van der Waals tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TailCutoff {
    Distance(f64),
    Named(NamedCutoff),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedCutoff {
    HalfSystem,
}

impl Default for TailCutoff {
    fn default() -> Self {
        TailCutoff::Named(NamedCutoff::HalfSystem)
    }
}

impl TailCutoff {
    pub fn resolve(self, lat: &RubyLattice) -> f64 {
        match self {
            TailCutoff::Distance(d) => d,
            TailCutoff::Named(NamedCutoff::HalfSystem) => lat.half_system(),
        }
    }
}

/// Dense pair-interaction table shared between drive settings.
#[derive(Debug, Clone)]
pub struct Interactions {
    n: usize,
    v: Vec<f64>,
    /// Pairs closer than `R_b` in different triangles (PXP hard constraint).
    blocked: Vec<Vec<usize>>,
}

impl Interactions {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.n + j]
    }

    pub fn blocked_partners(&self, i: usize) -> &[usize] {
        &self.blocked[i]
    }
}

/// `H = sum_{i<j} V_ij n_i n_j - delta sum_i n_i - (omega/2) sum_i (b_i + b_i^dag)`
/// on the restricted space. With `pxp` set, pairs within `R_b` are excluded
/// from the Hilbert space and no tails are kept.
#[derive(Debug, Clone)]
pub struct RydbergHamiltonian {
    lattice: Arc<RubyLattice>,
    pub omega: f64,
    pub delta: f64,
    pub rb_over_a: f64,
    pub tail_cutoff: f64,
    pub pxp: bool,
    interactions: Arc<Interactions>,
}

impl RydbergHamiltonian {
    /// Interaction strengths use `v_scale * (R_b/R)^6`; `v_scale` is the
    /// reference Rabi frequency that defines `R_b`.
    pub fn new(
        lattice: Arc<RubyLattice>,
        omega: f64,
        delta: f64,
        rb_over_a: f64,
        cutoff: TailCutoff,
        pxp: bool,
        v_scale: f64,
    ) -> Result<Self, HamiltonianError> {
        let tail_cutoff = if pxp { rb_over_a } else { cutoff.resolve(&lattice) };
        if !(tail_cutoff > 0.0) {
            return Err(HamiltonianError::BadCutoff(tail_cutoff));
        }
        let n = lattice.n_atoms();
        let mut v = vec![0.0; n * n];
        let mut blocked = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i == j || lattice.same_triangle(i, j) {
                    continue;
                }
                let r = lattice.distance(i, j);
                if r < rb_over_a {
                    blocked[i].push(j);
                }
                if !pxp && r <= tail_cutoff + 1e-9 {
                    v[i * n + j] = v_scale * (rb_over_a / r).powi(6);
                }
            }
        }
        let interactions = Arc::new(Interactions { n, v, blocked });
        Ok(Self { lattice, omega, delta, rb_over_a, tail_cutoff, pxp, interactions })
    }

    /// Default settings: `R_b = 2.4a`, half-system tails, unit reference scale.
    pub fn standard(lattice: Arc<RubyLattice>, omega: f64, delta: f64) -> Self {
        Self::new(lattice, omega, delta, 2.4, TailCutoff::default(), false, 1.0)
            .expect("default cutoff is positive")
    }

    /// Same interactions, different drive.
    pub fn with_drive(&self, omega: f64, delta: f64) -> Self {
        Self { omega, delta, ..self.clone() }
    }

    pub fn interactions(&self) -> &Interactions {
        &self.interactions
    }

    pub fn lattice_arc(&self) -> &Arc<RubyLattice> {
        &self.lattice
    }

    pub fn interaction_energy(&self, c: &Configuration) -> f64 {
        let ex: Vec<usize> = c.excited_atoms().collect();
        let mut e = 0.0;
        for (k, &i) in ex.iter().enumerate() {
            for &j in &ex[k + 1..] {
                e += self.interactions.get(i, j);
            }
        }
        e
    }

    fn is_blocked(&self, c: &Configuration) -> bool {
        c.excited_atoms()
            .any(|i| self.interactions.blocked[i].iter().any(|&j| c.occupied(j)))
    }
}

impl Hamiltonian for RydbergHamiltonian {
    fn lattice(&self) -> &RubyLattice {
        &self.lattice
    }

    fn diagonal(&self, c: &Configuration) -> f64 {
        self.interaction_energy(c) - self.delta * c.excitation_count() as f64
    }

    fn off_diagonal(&self, c: &Configuration, out: &mut Vec<(Move, f64)>) {
        out.clear();
        if self.omega == 0.0 {
            return;
        }
        let h = -0.5 * self.omega;
        for t in 0..c.n_triangles() {
            let s = c.state(t);
            if s != 0 {
                out.push((Move::Toggle(3 * t + s as usize - 1), h));
                continue;
            }
            for k in 0..3 {
                let atom = 3 * t + k;
                if self.pxp && self.interactions.blocked[atom].iter().any(|&j| c.occupied(j)) {
                    continue;
                }
                out.push((Move::Toggle(atom), h));
            }
        }
    }

    fn admissible(&self, c: &Configuration) -> bool {
        !self.pxp || !self.is_blocked(c)
    }
}

/// `H_s = sum_v A_v - sum_p B_p`, whose ground space has every vertex in the
/// odd-parity (dimer) sector and every plaquette at `B_p = +1`.
#[derive(Debug, Clone)]
pub struct StabilizerHamiltonian {
    lattice: Arc<RubyLattice>,
}

impl StabilizerHamiltonian {
    pub fn new(lattice: Arc<RubyLattice>) -> Self {
        Self { lattice }
    }

    /// Energy of the stabilizer ground space.
    pub fn ground_energy(&self) -> f64 {
        -((self.lattice.vertices.len() + self.lattice.hexagons.len()) as f64)
    }
}

impl Hamiltonian for StabilizerHamiltonian {
    fn lattice(&self) -> &RubyLattice {
        &self.lattice
    }

    fn diagonal(&self, c: &Configuration) -> f64 {
        let q = self.lattice.parity_charges(c);
        q.charges.iter().map(|&x| x as f64).sum()
    }

    fn off_diagonal(&self, _c: &Configuration, out: &mut Vec<(Move, f64)>) {
        out.clear();
        out.extend((0..self.lattice.hexagons.len()).map(|p| (Move::Plaquette(p), -1.0)));
    }
}

/// `E_loc(c) = sum_{c'} H_{c c'} psi(c')/psi(c)`.
pub fn local_energy<T: Real, H: Hamiltonian + ?Sized>(
    h: &H,
    c: &Configuration,
    logpsi_c: Cplx<T>,
    mut logpsi: impl FnMut(&Configuration) -> Cplx<T>,
) -> Result<Cplx<T>, HamiltonianError> {
    let mut moves = Vec::new();
    h.off_diagonal(c, &mut moves);
    let mut e = Cplx::new(T::lit(h.diagonal(c)), T::zero());
    let mut d = c.clone();
    for (m, hv) in moves {
        d.clone_from(c);
        if !m.apply(h.lattice(), &mut d) || !h.admissible(&d) {
            continue;
        }
        let ratio = (logpsi(&d) - logpsi_c).exp();
        e += ratio * T::lit(hv);
    }
    if e.re.is_finite() && e.im.is_finite() {
        Ok(e)
    } else {
        Err(HamiltonianError::NonFinite)
    }
}

/// Single piecewise-linear knot `(t, omega, delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub t: f64,
    pub omega: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RampProtocol {
    PiecewiseLinear { knots: Vec<Knot> },
    LinearRate { omega: f64, delta_start: f64, delta_final: f64, rate: f64 },
}

impl RampProtocol {
    pub fn validate(&self) -> Result<(), HamiltonianError> {
        match self {
            RampProtocol::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(HamiltonianError::EmptyRamp);
                }
                if knots.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return Err(HamiltonianError::KnotOrder);
                }
                Ok(())
            }
            RampProtocol::LinearRate { .. } => {
                let t = self.total_time();
                if t > 0.0 && t.is_finite() {
                    Ok(())
                } else {
                    Err(HamiltonianError::BadRate(t))
                }
            }
        }
    }

    pub fn start_time(&self) -> f64 {
        match self {
            RampProtocol::PiecewiseLinear { knots } => knots[0].t,
            RampProtocol::LinearRate { .. } => 0.0,
        }
    }

    /// Ramp duration `T_ramp`.
    pub fn total_time(&self) -> f64 {
        match self {
            RampProtocol::PiecewiseLinear { knots } => knots[knots.len() - 1].t - knots[0].t,
            RampProtocol::LinearRate { delta_start, delta_final, rate, .. } => {
                (delta_final - delta_start) / rate
            }
        }
    }

    pub fn end_time(&self) -> f64 {
        self.start_time() + self.total_time()
    }

    /// Drive `(omega, delta)` at time `t` (clamped to the ramp window).
    pub fn at(&self, t: f64) -> (f64, f64) {
        match self {
            RampProtocol::PiecewiseLinear { knots } => {
                if t <= knots[0].t {
                    return (knots[0].omega, knots[0].delta);
                }
                for w in knots.windows(2) {
                    if t <= w[1].t {
                        let f = (t - w[0].t) / (w[1].t - w[0].t);
                        return (
                            w[0].omega + f * (w[1].omega - w[0].omega),
                            w[0].delta + f * (w[1].delta - w[0].delta),
                        );
                    }
                }
                let k = knots[knots.len() - 1];
                (k.omega, k.delta)
            }
            RampProtocol::LinearRate { omega, delta_start, delta_final, rate } => {
                let tt = t.clamp(0.0, self.total_time());
                let d = delta_start + rate * tt;
                (*omega, if *rate > 0.0 { d.min(*delta_final) } else { d.max(*delta_final) })
            }
        }
    }

    /// Digitized approximation of an experimental-style profile: the drive is
    /// switched on at fixed negative detuning, then the detuning is swept up.
    /// Knot values are an approximation, not tabulated data.
    pub fn experimental_approx() -> Self {
        RampProtocol::PiecewiseLinear {
            knots: vec![
                Knot { t: 0.0, omega: 0.0, delta: -1.5 },
                Knot { t: 0.3, omega: 1.0, delta: -1.5 },
                Knot { t: 3.3, omega: 1.0, delta: 4.5 },
            ],
        }
    }
}

/// `(<A_v>, <B_p>)` averaged over vertices and plaquettes.
///
/// `A_v` is diagonal; `B_p` uses the amplitude ratio of the flipped state.
pub fn stabilizer_values<T: Real>(
    lat: &RubyLattice,
    c: &Configuration,
    logpsi_c: Cplx<T>,
    mut logpsi: impl FnMut(&Configuration) -> Cplx<T>,
) -> (f64, Cplx<f64>) {
    let q = lat.parity_charges(c);
    let a = q.charges.iter().map(|&x| x as f64).sum::<f64>() / q.charges.len().max(1) as f64;
    let mut b = Cplx::new(0.0, 0.0);
    let mut d = c.clone();
    for p in 0..lat.hexagons.len() {
        d.clone_from(c);
        lat.flip_plaquette(&mut d, p);
        let r = (logpsi(&d) - logpsi_c).exp();
        b += Cplx::new(r.re.as_f64(), r.im.as_f64());
    }
    (a, b / lat.hexagons.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;

    fn torus() -> Arc<RubyLattice> {
        Arc::new(LatticeSpec::periodic(2, 2).build().unwrap())
    }

    #[test]
    fn vacuum_row() {
        let h = RydbergHamiltonian::standard(torus(), 1.0, 0.3);
        let row = h.connected_configurations(&h.lattice().vacuum());
        assert_eq!(row.len(), 25);
        assert_eq!(row[0].1, 0.0);
        assert!(row[1..].iter().all(|(_, v)| *v == -0.5));
    }

    #[test]
    fn single_excitation_diagonal_is_minus_delta() {
        let lat = Arc::new(LatticeSpec::periodic(4, 4).build().unwrap());
        let h = RydbergHamiltonian::standard(lat, 1.0, 1.0);
        let mut c = h.lattice().vacuum();
        c.toggle_atom(7);
        assert_eq!(h.diagonal(&c), -1.0);
    }

    #[test]
    fn interactions_symmetric_and_monotone() {
        let h = RydbergHamiltonian::standard(torus(), 1.0, 0.0);
        let lat = h.lattice();
        let n = lat.n_atoms();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = h.interactions().get(i, j);
                assert!(v >= 0.0);
                assert_eq!(v, h.interactions().get(j, i));
                if v > 0.0 {
                    pairs.push((lat.distance(i, j), v));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!(pairs.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
        // nearest inter-triangle pair sits at sqrt(3) a
        assert!((pairs[0].0 - 3f64.sqrt()).abs() < 1e-9);
        assert!((pairs[0].1 - (2.4 / 3f64.sqrt()).powi(6)).abs() < 1e-9);
    }

    #[test]
    fn uniform_state_local_energy() {
        let lat = torus();
        let h = RydbergHamiltonian::new(lat.clone(), 1.0, 0.0, 2.4, TailCutoff::Distance(0.5), false, 1.0)
            .unwrap();
        let e = local_energy(&h, &lat.vacuum(), Cplx::new(0.0, 0.0), |_| Cplx::new(0.0f64, 0.0)).unwrap();
        assert!((e.re + 12.0).abs() < 1e-12 && e.im == 0.0);
    }

    #[test]
    fn local_energy_flags_overflow() {
        let lat = torus();
        let h = RydbergHamiltonian::standard(lat.clone(), 1.0, 0.0);
        let r = local_energy(&h, &lat.vacuum(), Cplx::new(0.0, 0.0), |_| Cplx::new(1e6f64, 0.0));
        assert_eq!(r, Err(HamiltonianError::NonFinite));
    }

    #[test]
    fn ramp_interpolation() {
        let r = RampProtocol::PiecewiseLinear {
            knots: vec![
                Knot { t: 0.0, omega: 0.0, delta: -1.0 },
                Knot { t: 2.0, omega: 1.0, delta: 1.0 },
            ],
        };
        r.validate().unwrap();
        assert_eq!(r.at(1.0), (0.5, 0.0));
        assert_eq!(r.at(5.0), (1.0, 1.0));
        let lin = RampProtocol::LinearRate { omega: 1.0, delta_start: -2.0, delta_final: 4.5, rate: 0.1 };
        assert!((lin.total_time() - 65.0).abs() < 1e-9);
        assert!((lin.at(10.0).1 + 1.0).abs() < 1e-12);
        let bad = RampProtocol::LinearRate { omega: 1.0, delta_start: 1.0, delta_final: 0.0, rate: 0.1 };
        assert!(bad.validate().is_err());
        let unordered = RampProtocol::PiecewiseLinear {
            knots: vec![Knot { t: 1.0, omega: 0.0, delta: 0.0 }, Knot { t: 1.0, omega: 0.0, delta: 0.0 }],
        };
        assert_eq!(unordered.validate(), Err(HamiltonianError::KnotOrder));
    }

    #[test]
    fn ramp_config_parses() {
        let r: RampProtocol = toml::from_str(
            "kind = 'linear_rate'\nomega = 1.0\ndelta_start = -2.0\ndelta_final = 4.5\nrate = 0.096",
        )
        .unwrap();
        assert!(matches!(r, RampProtocol::LinearRate { .. }));
    }

    #[test]
    fn stabilizer_diagonal_on_vacuum() {
        let lat = torus();
        let h = StabilizerHamiltonian::new(lat.clone());
        assert_eq!(h.diagonal(&lat.vacuum()), 12.0);
        assert_eq!(h.ground_energy(), -16.0);
    }
}
