//! Spin-liquid diagnostics: Wilson loops and open strings, BFFM order
//! parameters, solid order parameters and seed patterns, string gaps and
//! the anyon-gas length-scale fits.
//!
//! Operator conventions, in the restricted (one excitation per triangle)
//! space:
//! - `Z` types are products of atomic `Z_i = 1 - 2 n_i`. A Z loop is the
//!   product of `A_v` over a set of vertices, i.e. `Z` on every atom with an
//!   odd number of endpoints in the set. A Z string is `Z` on the atoms cut
//!   by a dual path of alternating hexagons and triangles.
//! - `X` types are products of triangle operators: atom `a` applies the Klein
//!   move `state ^= a % 3 + 1` on triangle `a / 3`, which swaps `E` with the
//!   excitation on `a` and exchanges the other two. An X loop over a hexagon
//!   set equals the product of its `B_p`; an X string walks kagome links.

use std::collections::HashMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::VariationalState;
use crate::hamiltonian::{Hamiltonian, Move, RydbergHamiltonian};
use crate::lattice::{Boundary, Configuration, RubyLattice};
use crate::sampler::SampleSet;
use crate::scalar::Real;
use crate::stats::EstimateRecord;

type C64 = Complex<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum ObservableError {
    #[error("atom {0} out of range")]
    AtomOutOfRange(usize),
    #[error("geometry walk left the lattice after {0} steps")]
    Walk(usize),
    #[error("order parameters need a periodic lattice with even L1, L2")]
    NeedEvenTorus,
    #[error("no configuration matches the requested solid pattern")]
    NoPattern,
    #[error("the lattice has no hexagons")]
    NoHexagons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    ZLoop,
    XLoop,
    ZString,
    XString,
}

/// A loop or string operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub kind: LoopKind,
    /// Z types: atoms carrying `Z`. X types: atoms whose Klein move is applied.
    pub atoms: Vec<usize>,
    /// Enclosed vertices (Z loops) or enclosed hexagons (X loops).
    pub area: usize,
    pub perimeter: usize,
    /// Atom count for strings.
    pub length: usize,
}

impl LoopSpec {
    pub fn identity(kind: LoopKind) -> Self {
        Self { kind, atoms: Vec::new(), area: 0, perimeter: 0, length: 0 }
    }

    /// `prod_{v in A} A_v`.
    pub fn z_loop(lat: &RubyLattice, vertices: &[usize]) -> Self {
        let mut count = vec![0u8; lat.n_atoms()];
        for &v in vertices {
            for &a in &lat.vertices[v].atoms {
                count[a] ^= 1;
            }
        }
        let atoms: Vec<usize> = (0..count.len()).filter(|&a| count[a] == 1).collect();
        let perimeter = atoms.len();
        Self { kind: LoopKind::ZLoop, atoms, area: vertices.len(), perimeter, length: 0 }
    }

    /// `prod_{p in A} B_p`.
    pub fn x_loop(lat: &RubyLattice, hexagons: &[usize]) -> Self {
        let mut net = vec![0u8; lat.n_triangles()];
        for &p in hexagons {
            for (t, code) in lat.hexagons[p].klein_factors() {
                net[t] ^= code;
            }
        }
        let atoms: Vec<usize> = net.iter().enumerate().filter(|(_, &k)| k != 0).map(|(t, &k)| 3 * t + k as usize - 1).collect();
        let perimeter = atoms.len();
        Self { kind: LoopKind::XLoop, atoms, area: hexagons.len(), perimeter, length: 0 }
    }

    pub fn z_string(atoms: Vec<usize>) -> Self {
        let n = atoms.len();
        Self { kind: LoopKind::ZString, atoms, area: 0, perimeter: 0, length: n }
    }

    pub fn x_string(atoms: Vec<usize>) -> Self {
        let n = atoms.len();
        Self { kind: LoopKind::XString, atoms, area: 0, perimeter: 0, length: n }
    }

    pub fn validate(&self, lat: &RubyLattice) -> Result<(), ObservableError> {
        match self.atoms.iter().find(|&&a| a >= lat.n_atoms()) {
            Some(&a) => Err(ObservableError::AtomOutOfRange(a)),
            None => Ok(()),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.kind, LoopKind::ZLoop | LoopKind::ZString)
    }

    /// `prod Z_i` on `c`.
    pub fn sign(&self, c: &Configuration) -> f64 {
        let neg = self.atoms.iter().filter(|&&a| c.occupied(a)).count();
        if neg % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Image of `c` under the Klein moves (X types).
    pub fn apply(&self, c: &Configuration) -> Configuration {
        let mut d = c.clone();
        for &a in &self.atoms {
            d.xor_triangle(a / 3, (a % 3) as u8 + 1);
        }
        d
    }
}

/// Lattice directions for straight strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    A1,
    A2,
    A2MinusA1,
}

impl Direction {
    fn unit(self, lat: &RubyLattice) -> [f64; 2] {
        let v = match self {
            Direction::A1 => lat.a1,
            Direction::A2 => lat.a2,
            Direction::A2MinusA1 => [lat.a2[0] - lat.a1[0], lat.a2[1] - lat.a1[1]],
        };
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    }
}

/// Alignment score with a slight counter-clockwise bias to break ties.
fn score(d: [f64; 2], u: [f64; 2]) -> f64 {
    d[0] * u[0] + d[1] * u[1] + 1e-6 * (u[0] * d[1] - u[1] * d[0])
}

fn centroid(lat: &RubyLattice) -> [f64; 2] {
    let n = lat.n_atoms() as f64;
    let s = lat.atom_positions.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

fn norm2(d: [f64; 2]) -> f64 {
    d[0] * d[0] + d[1] * d[1]
}

/// Reference hexagon: index 0 on tori, the one nearest the atom centroid
/// on open lattices.
pub fn center_hexagon(lat: &RubyLattice) -> Result<usize, ObservableError> {
    if lat.hexagons.is_empty() {
        return Err(ObservableError::NoHexagons);
    }
    if lat.boundary() == Boundary::Periodic {
        return Ok(0);
    }
    let c = centroid(lat);
    let key = |h: usize| norm2(lat.displacement(c, lat.hexagons[h].center));
    Ok((0..lat.hexagons.len()).min_by(|&a, &b| key(a).total_cmp(&key(b))).unwrap())
}

/// The `n` hexagons nearest to `center` (stable by index on ties).
pub fn hexagon_cluster(lat: &RubyLattice, center: usize, n: usize) -> Vec<usize> {
    let c = lat.hexagons[center].center;
    let mut idx: Vec<usize> = (0..lat.hexagons.len()).collect();
    idx.sort_by(|&a, &b| {
        let da = norm2(lat.displacement(c, lat.hexagons[a].center));
        let db = norm2(lat.displacement(c, lat.hexagons[b].center));
        if (da - db).abs() < 1e-9 {
            a.cmp(&b)
        } else {
            da.total_cmp(&db)
        }
    });
    idx.truncate(n);
    idx
}

/// Corner vertices of a hexagon set, sorted.
pub fn hexagon_vertices(lat: &RubyLattice, hexagons: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> =
        hexagons.iter().flat_map(|&h| lat.hexagons[h].atoms.iter().flat_map(|&a| lat.atom_vertices[a].iter().copied())).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Nested Z loops around growing hexagon clusters of the given sizes.
pub fn concentric_z_loops(lat: &RubyLattice, center: usize, sizes: &[usize]) -> Vec<LoopSpec> {
    sizes.iter().map(|&n| LoopSpec::z_loop(lat, &hexagon_vertices(lat, &hexagon_cluster(lat, center, n)))).collect()
}

/// Nested X loops over growing hexagon clusters.
pub fn concentric_x_loops(lat: &RubyLattice, center: usize, sizes: &[usize]) -> Vec<LoopSpec> {
    sizes.iter().map(|&n| LoopSpec::x_loop(lat, &hexagon_cluster(lat, center, n))).collect()
}

/// Z string cutting `len` atoms along a straight dual path that starts in
/// hexagon `start`.
pub fn straight_z_string(lat: &RubyLattice, start: usize, dir: Direction, len: usize) -> Result<LoopSpec, ObservableError> {
    let u = dir.unit(lat);
    let mut atoms = Vec::with_capacity(len);
    let mut hex = Some(start);
    let mut tri = None;
    let mut entered = usize::MAX;
    while atoms.len() < len {
        if let Some(h) = hex {
            let hx = &lat.hexagons[h];
            let k = (0..6)
                .filter(|&k| !atoms.contains(&hx.atoms[k]))
                .max_by(|&a, &b| {
                    let sa = score(lat.displacement(hx.center, lat.triangles[hx.triangles[a]].center), u);
                    let sb = score(lat.displacement(hx.center, lat.triangles[hx.triangles[b]].center), u);
                    sa.total_cmp(&sb)
                })
                .ok_or(ObservableError::Walk(atoms.len()))?;
            atoms.push(hx.atoms[k]);
            entered = hx.atoms[k];
            tri = Some(hx.triangles[k]);
            hex = None;
        } else {
            let t = tri.take().unwrap();
            let tc = lat.triangles[t].center;
            let best = lat.triangles[t]
                .atoms
                .iter()
                .filter(|&&a| a != entered)
                .filter_map(|&a| lat.atom_hexagon[a].map(|h| (a, h)))
                .max_by(|x, y| {
                    let sx = score(lat.displacement(tc, lat.hexagons[x.1].center), u);
                    let sy = score(lat.displacement(tc, lat.hexagons[y.1].center), u);
                    sx.total_cmp(&sy)
                })
                .ok_or(ObservableError::Walk(atoms.len()))?;
            atoms.push(best.0);
            hex = Some(best.1);
        }
    }
    Ok(LoopSpec::z_string(atoms))
}

/// X string along `len` kagome links starting at vertex `start`.
pub fn straight_x_string(lat: &RubyLattice, start: usize, dir: Direction, len: usize) -> Result<LoopSpec, ObservableError> {
    let u = dir.unit(lat);
    let mut atoms = Vec::with_capacity(len);
    let mut v = start;
    for step in 0..len {
        let pos = lat.vertices[v].position;
        let best = lat.vertices[v]
            .atoms
            .iter()
            .filter(|a| !atoms.contains(*a))
            .filter_map(|&a| lat.atom_vertices[a].iter().find(|&&w| w != v).map(|&w| (a, w)))
            .max_by(|x, y| {
                let sx = score(lat.displacement(pos, lat.vertices[x.1].position), u);
                let sy = score(lat.displacement(pos, lat.vertices[y.1].position), u);
                sx.total_cmp(&sy)
            })
            .ok_or(ObservableError::Walk(step))?;
        atoms.push(best.0);
        v = best.1;
    }
    Ok(LoopSpec::x_string(atoms))
}

/// Closed loops and their halves for the BFFM ratios, built around one
/// hexagon: the Z loop is the product of the hexagon's six `A_v` (Z on the
/// outer atoms of its six triangles), its half keeps three consecutive
/// triangles; the X loop is `B_p` and its half three consecutive links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BffmGeometry {
    pub z_loop: LoopSpec,
    pub z_half: LoopSpec,
    pub x_loop: LoopSpec,
    pub x_half: LoopSpec,
}

impl BffmGeometry {
    pub fn around(lat: &RubyLattice, hexagon: usize) -> Self {
        let hx = &lat.hexagons[hexagon];
        let z_loop = LoopSpec::z_loop(lat, &hexagon_vertices(lat, &[hexagon]));
        let mut half = Vec::new();
        for k in 0..3 {
            let t = hx.triangles[k];
            half.extend(lat.triangles[t].atoms.iter().copied().filter(|&a| a != hx.atoms[k]));
        }
        let x_loop = LoopSpec::x_loop(lat, &[hexagon]);
        let x_half = LoopSpec::x_string(hx.atoms[..3].to_vec());
        Self { z_loop, z_half: LoopSpec::z_string(half), x_loop, x_half }
    }
}

fn to64<T: Real>(z: Complex<T>) -> C64 {
    C64::new(z.re.as_f64(), z.im.as_f64())
}

/// Per-sample values of a loop or string operator.
pub fn loop_values<T: Real, V: VariationalState<T> + ?Sized>(spec: &LoopSpec, samples: &SampleSet, psi: &V) -> Vec<C64> {
    if spec.is_diagonal() {
        return samples.iter().map(|(c, _, _)| C64::new(spec.sign(c), 0.0)).collect();
    }
    let mut cache: HashMap<&Configuration, C64> = HashMap::new();
    samples
        .iter()
        .map(|(c, lc, _)| {
            *cache.entry(c).or_insert_with(|| {
                let d = spec.apply(c);
                (to64(psi.log_psi(&d)) - lc).exp()
            })
        })
        .collect()
}

pub fn measure_loop<T: Real, V: VariationalState<T> + ?Sized>(spec: &LoopSpec, samples: &SampleSet, psi: &V) -> EstimateRecord {
    samples.estimate(&loop_values(spec, samples, psi))
}

/// BFFM ratios with the underlying estimates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BffmRecord {
    pub z: f64,
    pub x: f64,
    pub z_error: f64,
    pub x_error: f64,
    /// Denominator loop not resolved from zero.
    pub z_flagged: bool,
    pub x_flagged: bool,
}

fn ratio_sqrt(num: &EstimateRecord, den: &EstimateRecord) -> (f64, f64, bool) {
    let d = den.mean.re;
    let flagged = !(d > 2.0 * den.stderr) || d <= 0.0;
    if d <= 0.0 {
        return (f64::NAN, f64::NAN, true);
    }
    let v = num.mean.re / d.sqrt();
    let err = ((num.stderr / d.sqrt()).powi(2) + (0.5 * v * den.stderr / d).powi(2)).sqrt();
    (v, err, flagged)
}

pub fn bffm<T: Real, V: VariationalState<T> + ?Sized>(geometry: &BffmGeometry, samples: &SampleSet, psi: &V) -> BffmRecord {
    let m = |s: &LoopSpec| measure_loop(s, samples, psi);
    let (z, z_error, z_flagged) = ratio_sqrt(&m(&geometry.z_half), &m(&geometry.z_loop));
    let (x, x_error, x_flagged) = ratio_sqrt(&m(&geometry.x_half), &m(&geometry.x_loop));
    BffmRecord { z, x, z_error, x_error, z_flagged, x_flagged }
}

fn require_even_torus(lat: &RubyLattice) -> Result<(), ObservableError> {
    if lat.boundary() != Boundary::Periodic || lat.l1() % 2 != 0 || lat.l2() % 2 != 0 {
        return Err(ObservableError::NeedEvenTorus);
    }
    Ok(())
}

/// `(M_VBS, M_SS)` of one configuration from the up-triangle states.
pub fn order_parameters_of(lat: &RubyLattice, c: &Configuration) -> Result<(f64, f64), ObservableError> {
    require_even_torus(lat)?;
    let up = |n1: usize, n2: usize| c.state(2 * lat.cell_at(n1, n2).expect("full torus"));
    let eq = |a: u8, b: u8| if a == b { 1.0 } else { -1.0 };
    let (s00, s10) = (up(0, 0), up(1, 0));
    let (mut vbs, mut ss) = (0.0, 0.0);
    for n1 in 0..lat.l1() {
        for n2 in 0..lat.l2() {
            let s = up(n1, n2);
            let u = if n1 % 2 == 0 { eq(s, s00) } else { eq(s, s10) * eq(s10, s00) };
            ss += if n1 % 2 == 0 { u } else { -u };
            vbs += if (n1 + n2) % 2 == 0 { u } else { -u };
        }
    }
    let n = lat.n_cells() as f64;
    Ok((vbs / n, ss / n))
}

pub fn order_parameters(lat: &RubyLattice, samples: &SampleSet) -> Result<(EstimateRecord, EstimateRecord), ObservableError> {
    let mut vbs = Vec::with_capacity(samples.len());
    let mut ss = Vec::with_capacity(samples.len());
    for (c, _, _) in samples.iter() {
        let (v, s) = order_parameters_of(lat, c)?;
        vbs.push(C64::new(v, 0.0));
        ss.push(C64::new(s, 0.0));
    }
    Ok((samples.estimate(&vbs), samples.estimate(&ss)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolidPattern {
    /// Checkerboard valence-bond solid: a perfect dimer cover, density 1/4.
    Vbs,
    /// Stripe solid: every triangle occupied, density 1/3.
    Stripe,
}

/// Lowest classical energy configuration with period two in both
/// directions that realizes the pattern (`M = 1` and the density rule).
pub fn solid_pattern(h: &RydbergHamiltonian, kind: SolidPattern) -> Result<Configuration, ObservableError> {
    let lat = h.lattice();
    require_even_torus(lat)?;
    let mut best: Option<(f64, Configuration)> = None;
    for motif in 0..(1usize << 16) {
        let code = |n1: usize, n2: usize, k: usize| ((motif >> (2 * (4 * (n1 % 2) + 2 * (n2 % 2) + k))) & 3) as u8;
        if kind == SolidPattern::Stripe && (0..8).any(|k| (motif >> (2 * k)) & 3 == 0) {
            continue;
        }
        let mut states = vec![0u8; lat.n_triangles()];
        for n1 in 0..lat.l1() {
            for n2 in 0..lat.l2() {
                let cell = lat.cell_at(n1, n2).expect("full torus");
                states[2 * cell] = code(n1, n2, 0);
                states[2 * cell + 1] = code(n1, n2, 1);
            }
        }
        let c = Configuration::from_states(states).expect("codes below 4");
        let (vbs, ss) = order_parameters_of(lat, &c)?;
        let ok = match kind {
            SolidPattern::Vbs => vbs == 1.0 && lat.parity_charges(&c).charges.iter().all(|&q| q == -1),
            SolidPattern::Stripe => ss == 1.0,
        };
        if !ok {
            continue;
        }
        let e = h.interaction_energy(&c) - h.delta * c.excitation_count() as f64;
        if best.as_ref().map_or(true, |(b, _)| e < *b - 1e-9) {
            best = Some((e, c));
        }
    }
    best.map(|(_, c)| c).ok_or(ObservableError::NoPattern)
}

/// Site fields `A_i = magnitude * Z_i(c)` favouring the pattern `c`.
pub fn seed_fields(c: &Configuration, magnitude: f64) -> Vec<f64> {
    (0..c.n_atoms()).map(|i| magnitude * c.spin(i) as f64).collect()
}

/// `sum_{d'} H_{d d'} s0 s(d') psi(S d') / psi(c)` for `d = S c`.
#[allow(clippy::too_many_arguments)]
fn twisted_local<H: Hamiltonian + ?Sized>(
    h: &H,
    lat: &RubyLattice,
    d: &Configuration,
    lc: C64,
    s0: f64,
    image: impl Fn(&Configuration) -> (Configuration, f64),
    logpsi: &mut impl FnMut(&Configuration) -> C64,
    moves: &mut Vec<(Move, f64)>,
) -> C64 {
    let mut e = C64::new(h.diagonal(d), 0.0);
    moves.clear();
    h.off_diagonal(d, moves);
    let mut dp = d.clone();
    for &(m, hv) in moves.iter() {
        dp.clone_from(d);
        if !m.apply(lat, &mut dp) || !h.admissible(&dp) {
            continue;
        }
        let (cp, s1) = image(&dp);
        e += (logpsi(&cp) - lc).exp() * (hv * s0 * s1);
    }
    e
}

/// Energy cost of a string operator.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapRecord {
    /// `<S H S> - <H>`, estimated from paired per-sample differences.
    pub gap: EstimateRecord,
    pub energy: EstimateRecord,
    pub string_energy: EstimateRecord,
    pub flagged: bool,
}

/// `Delta = <S psi|H|S psi>/<S psi|S psi> - <psi|H|psi>` for a string
/// (or loop) operator `S`. Both operator kinds are unitary involutions, so
/// the norm ratio is one and `<S H S>` is sampled from `|psi|^2` directly.
pub fn string_gap<T: Real, V: VariationalState<T> + ?Sized, H: Hamiltonian + ?Sized>(
    spec: &LoopSpec,
    h: &H,
    samples: &SampleSet,
    psi: &V,
) -> GapRecord {
    let lat = h.lattice();
    let mut cache: HashMap<Configuration, C64> = HashMap::new();
    let mut logpsi = |c: &Configuration| -> C64 { *cache.entry(c.clone()).or_insert_with(|| to64(psi.log_psi(c))) };
    let mut moves = Vec::new();
    let mut e_plain = Vec::with_capacity(samples.len());
    let mut e_string = Vec::with_capacity(samples.len());
    let mut diff = Vec::with_capacity(samples.len());
    let mut flagged = false;
    for (c, lc, _) in samples.iter() {
        let e0 = twisted_local(h, lat, c, lc, 1.0, |x| (x.clone(), 1.0), &mut logpsi, &mut moves);
        let es = if spec.is_diagonal() {
            twisted_local(h, lat, c, lc, spec.sign(c), |x| (x.clone(), spec.sign(x)), &mut logpsi, &mut moves)
        } else {
            twisted_local(h, lat, &spec.apply(c), lc, 1.0, |x| (spec.apply(x), 1.0), &mut logpsi, &mut moves)
        };
        if !(e0.re.is_finite() && es.re.is_finite()) {
            flagged = true;
        }
        e_plain.push(e0);
        e_string.push(es);
        diff.push(es - e0);
    }
    GapRecord { gap: samples.estimate(&diff), energy: samples.estimate(&e_plain), string_energy: samples.estimate(&e_string), flagged }
}

/// Area-law fit `ln |W / W_gs| = -|A| / lambda^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub inv_lambda2: f64,
    pub residual: f64,
    /// False when a ratio is non-positive after removing `(-1)^|A|`.
    pub ok: bool,
}

pub fn fit_lambda(areas: &[usize], w: &[f64], w_gs: &[f64]) -> LambdaFit {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut pts = Vec::with_capacity(areas.len());
    let mut ok = areas.len() >= 3;
    for ((&a, &wa), &wg) in areas.iter().zip(w).zip(w_gs) {
        let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
        let r = (wa * sign) / (wg * sign);
        if !(r > 0.0) {
            ok = false;
            continue;
        }
        let (x, y) = (a as f64, r.ln());
        sxy += x * y;
        sxx += x * x;
        pts.push((x, y));
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let inv = -slope;
    let residual = pts.iter().map(|(x, y)| (y - slope * x).powi(2)).sum::<f64>();
    let lambda = if inv > 0.0 { inv.sqrt().recip() } else { f64::NAN };
    LambdaFit { lambda, inv_lambda2: inv, residual, ok: ok && inv > 0.0 }
}

/// Free-e density `n_e = (1 + <A_v>) / 2`.
pub fn defect_density(mean_av: f64) -> f64 {
    (1.0 + mean_av) / 2.0
}

/// `sum_{k<=K} P(k; alpha) (-1)^k`.
pub fn poisson_parity_partial(alpha: f64, k_max: usize) -> f64 {
    let mut term = (-alpha).exp();
    let mut sum = term;
    for k in 1..=k_max {
        term *= -alpha / k as f64;
        sum += term;
    }
    sum
}

pub fn poisson_parity_closed(alpha: f64) -> f64 {
    (-2.0 * alpha).exp()
}

/// String fit `S_L = A_{1,2} exp(-L / xi)`, `A1` when `(L - 1) mod 4 == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiFit {
    pub xi: f64,
    pub a1: f64,
    pub a2: f64,
    pub residual: f64,
    /// All lengths in one residue class.
    pub degenerate: bool,
}

fn first_class(l: usize) -> bool {
    l >= 1 && (l - 1) % 4 == 0
}

fn xi_amplitudes(lengths: &[usize], values: &[f64], xi: f64) -> (f64, f64, f64) {
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    for (&l, &y) in lengths.iter().zip(values) {
        let k = if first_class(l) { 0 } else { 1 };
        let e = (-(l as f64) / xi).exp();
        num[k] += y * e;
        den[k] += e * e;
    }
    let a = [if den[0] > 0.0 { num[0] / den[0] } else { 0.0 }, if den[1] > 0.0 { num[1] / den[1] } else { 0.0 }];
    let res = lengths
        .iter()
        .zip(values)
        .map(|(&l, &y)| {
            let k = if first_class(l) { 0 } else { 1 };
            (y - a[k] * (-(l as f64) / xi).exp()).powi(2)
        })
        .sum();
    (a[0], a[1], res)
}

/// Variable projection: amplitudes in closed form, `ln xi` by grid scan and
/// golden-section refinement.
pub fn fit_xi(lengths: &[usize], values: &[f64]) -> XiFit {
    let n1 = lengths.iter().filter(|&&l| first_class(l)).count();
    let degenerate = n1 == 0 || n1 == lengths.len();
    let f = |u: f64| xi_amplitudes(lengths, values, u.exp()).2;
    let (lo, hi, n) = (-4.0f64, 10.0f64, 600);
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let kbest = (0..grid.len()).min_by(|&a, &b| f(grid[a]).total_cmp(&f(grid[b]))).unwrap();
    let (mut a, mut b) = (grid[kbest.saturating_sub(1)], grid[(kbest + 1).min(n)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    let xi = ((a + b) / 2.0).exp();
    let (a1, a2, residual) = xi_amplitudes(lengths, values, xi);
    XiFit { xi, a1, a2, residual, degenerate }
}

/// Length scales of the anyon-gas picture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthScaleFit {
    pub lambda: LambdaFit,
    pub xi: XiFit,
    pub n_e: f64,
    pub n_e_gs: f64,
    /// `lambda^2 / xi`.
    pub l_crossover: f64,
    /// `2 (n_e - n_e_gs)`, the independent estimate of `1 / lambda^2`.
    pub inv_lambda2_from_density: f64,
    /// Largest fitted area stays below the crossover scale.
    pub window_consistent: bool,
    pub gap_e: f64,
    pub gap_m: f64,
}

impl LengthScaleFit {
    pub fn assemble(lambda: LambdaFit, xi: XiFit, n_e: f64, n_e_gs: f64, max_area: usize, gap_e: f64, gap_m: f64) -> Self {
        let l_crossover = lambda.lambda * lambda.lambda / xi.xi;
        Self {
            lambda,
            xi,
            n_e,
            n_e_gs,
            l_crossover,
            inv_lambda2_from_density: 2.0 * (n_e - n_e_gs),
            window_consistent: (max_area as f64).sqrt() < l_crossover,
            gap_e,
            gap_m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use std::sync::Arc;

    fn torus(l: usize) -> Arc<RubyLattice> {
        Arc::new(LatticeSpec::periodic(l, l).build().unwrap())
    }

    #[test]
    fn empty_loop_is_one() {
        let lat = torus(2);
        let c = lat.vacuum();
        assert_eq!(LoopSpec::identity(LoopKind::ZLoop).sign(&c), 1.0);
        assert_eq!(LoopSpec::identity(LoopKind::XLoop).apply(&c), c);
    }

    #[test]
    fn z_loop_of_one_vertex_is_charge() {
        let lat = torus(2);
        let mut c = lat.vacuum();
        c.toggle_atom(4);
        for v in 0..lat.vertices.len() {
            assert_eq!(LoopSpec::z_loop(&lat, &[v]).sign(&c), lat.vertex_charge(&c, v) as f64);
        }
    }

    #[test]
    fn x_loop_of_one_hexagon_is_plaquette() {
        let lat = torus(3);
        let c = Configuration::from_basis_index(12345, lat.n_triangles());
        let mut d = c.clone();
        lat.flip_plaquette(&mut d, 4);
        assert_eq!(LoopSpec::x_loop(&lat, &[4]).apply(&c), d);
        assert_eq!(LoopSpec::x_loop(&lat, &[4]).perimeter, 6);
    }

    #[test]
    fn cluster_loop_perimeters() {
        let lat = torus(4);
        let h = center_hexagon(&lat).unwrap();
        let z = concentric_z_loops(&lat, h, &[1, 7]);
        assert_eq!(z[0].area, 6);
        assert_eq!(z[0].perimeter, 12);
        assert_eq!(z[1].area, 30);
        let x = concentric_x_loops(&lat, h, &[1, 7]);
        assert_eq!(x[1].perimeter, 18);
    }

    #[test]
    fn strings_create_anyon_pairs() {
        let lat = torus(4);
        let zs = straight_z_string(&lat, 0, Direction::A1, 4).unwrap();
        assert_eq!(zs.length, 4);
        // a Z string between hexagons anticommutes with exactly two B_p
        let c = Configuration::from_basis_index(987654321, lat.n_triangles());
        let flipped: Vec<usize> = (0..lat.hexagons.len())
            .filter(|&p| {
                let mut d = c.clone();
                lat.flip_plaquette(&mut d, p);
                zs.sign(&c) != zs.sign(&d)
            })
            .collect();
        assert_eq!(flipped.len(), 2, "{flipped:?}");
        let xs = straight_x_string(&lat, 0, Direction::A1, 4).unwrap();
        let d = xs.apply(&c);
        let changed = (0..lat.vertices.len()).filter(|&v| lat.vertex_charge(&c, v) != lat.vertex_charge(&d, v)).count();
        assert_eq!(changed, 2);
    }

    #[test]
    fn checkerboard_and_stripe_maximize_order() {
        let lat = torus(4);
        let h = RydbergHamiltonian::standard(lat.clone(), 1.0, 4.5);
        let vbs = solid_pattern(&h, SolidPattern::Vbs).unwrap();
        assert_eq!(order_parameters_of(&lat, &vbs).unwrap().0, 1.0);
        assert_eq!(vbs.excitation_count() * 4, lat.n_atoms());
        let ss = solid_pattern(&h, SolidPattern::Stripe).unwrap();
        assert_eq!(order_parameters_of(&lat, &ss).unwrap().1, 1.0);
        assert_eq!(ss.excitation_count() * 3, lat.n_atoms());
        assert_eq!(order_parameters_of(&lat, &lat.vacuum()).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn lambda_from_synthetic_area_law() {
        let areas = [3, 6, 9, 12];
        let w: Vec<f64> = areas.iter().map(|&a| (if a % 2 == 0 { 1.0 } else { -1.0 }) * (-(a as f64) / 4.0).exp()).collect();
        let gs: Vec<f64> = areas.iter().map(|&a| if a % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let fit = fit_lambda(&areas, &w, &gs);
        assert!(fit.ok);
        assert!((fit.lambda - 2.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_partial_sums_converge() {
        for &alpha in &[0.1, 1.0, 2.5, 5.0] {
            assert!((poisson_parity_partial(alpha, 50) - poisson_parity_closed(alpha)).abs() < 1e-12);
        }
    }

    #[test]
    fn xi_fit_recovers_constructed_data() {
        let ls: Vec<usize> = (1..=12).collect();
        let ys: Vec<f64> = ls.iter().map(|&l| (-(l as f64) / 3.0).exp()).collect();
        let f = fit_xi(&ls, &ys);
        assert!((f.xi - 3.0).abs() < 1e-6 && (f.a1 - 1.0).abs() < 1e-6 && (f.a2 - 1.0).abs() < 1e-6, "{f:?}");
        let ys: Vec<f64> = ls.iter().map(|&l| if (l - 1) % 4 == 0 { 0.8 } else { 0.2 } * (-(l as f64) / 5.0).exp()).collect();
        let f = fit_xi(&ls, &ys);
        assert!((f.xi - 5.0).abs() < 1e-6 && (f.a1 - 0.8).abs() < 1e-6 && (f.a2 - 0.2).abs() < 1e-6, "{f:?}");
        assert!(fit_xi(&[2, 3, 4, 6], &[1.0, 0.5, 0.2, 0.1]).degenerate);
    }
}
