//! Ruby-lattice geometry and the blockade-restricted configuration encoding.
//!
//! Atoms sit on the links of a kagome lattice and are grouped in triangles of
//! side `a = 1`. Each unit cell holds one up and one down triangle (six atoms),
//! three kagome vertices and one hexagon. Triangle `t` owns atoms `3t..3t+3`;
//! triangle `2c` is the up triangle of cell `c` and `2c + 1` the down one.
//!
//! A triangle is in one of four local states, stored as a 2-bit code:
//! `E = 00`, `R1 = 10`, `R2 = 01`, `R3 = 11` (bit 0 first), i.e. code `k`
//! means atom slot `k - 1` is excited. The plaquette (`X`) operators act on
//! this code by XOR, so the local space is a two-qubit register.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_6, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("periodic lattice needs L1, L2 >= 2 (got {0}x{1})")]
    TooSmall(usize, usize),
    #[error("aspect ratio rho must exceed 1 (got {0})")]
    BadRho(f64),
    #[error("unit-cell mask selects no cells")]
    EmptyMask,
    #[error("mask cell ({0}, {1}) outside the {2}x{3} grid")]
    MaskOutOfRange(usize, usize, usize, usize),
    #[error("triangle {0} holds more than one excitation")]
    DoubleExcitation(usize),
    #[error("occupation vector has length {got}, expected a multiple of 3")]
    BadLength { got: usize },
    #[error("local state code {0} out of range")]
    BadState(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

fn default_rho() -> f64 {
    3f64.sqrt()
}

/// Lattice block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub l1: usize,
    pub l2: usize,
    pub boundary: Boundary,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Unit cells kept for open geometries; `None` keeps the full grid.
    #[serde(default)]
    pub mask: Option<Vec<(usize, usize)>>,
}

impl LatticeSpec {
    pub fn periodic(l1: usize, l2: usize) -> Self {
        Self { l1, l2, boundary: Boundary::Periodic, rho: default_rho(), mask: None }
    }

    pub fn open(l1: usize, l2: usize) -> Self {
        Self { l1, l2, boundary: Boundary::Open, rho: default_rho(), mask: None }
    }

    pub fn build(&self) -> Result<RubyLattice, LatticeError> {
        RubyLattice::build(self)
    }

    /// Stable textual form used for hashing into checkpoints and outputs.
    pub fn canonical(&self) -> String {
        let mut mask = self.mask.clone();
        if let Some(m) = mask.as_mut() {
            m.sort_unstable();
            m.dedup();
        }
        format!(
            "ruby:{}x{}:{:?}:rho={:.12}:mask={:?}",
            self.l1, self.l2, self.boundary, self.rho, mask
        )
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Blockade-restricted basis state: one 2-bit code per triangle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    states: Vec<u8>,
}

impl Configuration {
    /// All atoms in the ground state.
    pub fn vacuum(n_triangles: usize) -> Self {
        Self { states: vec![0; n_triangles] }
    }

    pub fn from_states(states: Vec<u8>) -> Result<Self, LatticeError> {
        if let Some(&s) = states.iter().find(|&&s| s > 3) {
            return Err(LatticeError::BadState(s));
        }
        Ok(Self { states })
    }

    /// Encode per-atom occupations; rejects two excitations in one triangle.
    pub fn encode(occupations: &[bool]) -> Result<Self, LatticeError> {
        if occupations.len() % 3 != 0 {
            return Err(LatticeError::BadLength { got: occupations.len() });
        }
        let mut states = Vec::with_capacity(occupations.len() / 3);
        for (t, tri) in occupations.chunks_exact(3).enumerate() {
            let mut code = 0u8;
            for (k, &n) in tri.iter().enumerate() {
                if n {
                    if code != 0 {
                        return Err(LatticeError::DoubleExcitation(t));
                    }
                    code = k as u8 + 1;
                }
            }
            states.push(code);
        }
        Ok(Self { states })
    }

    pub fn decode(&self) -> Vec<bool> {
        (0..self.n_atoms()).map(|i| self.occupied(i)).collect()
    }

    #[inline]
    pub fn n_triangles(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn n_atoms(&self) -> usize {
        3 * self.states.len()
    }

    #[inline]
    pub fn states(&self) -> &[u8] {
        &self.states
    }

    #[inline]
    pub fn state(&self, t: usize) -> u8 {
        self.states[t]
    }

    #[inline]
    pub fn set_state(&mut self, t: usize, code: u8) {
        debug_assert!(code < 4);
        self.states[t] = code;
    }

    #[inline]
    pub fn occupied(&self, atom: usize) -> bool {
        self.states[atom / 3] == (atom % 3) as u8 + 1
    }

    /// `+1` for ground, `-1` for Rydberg.
    #[inline]
    pub fn spin(&self, atom: usize) -> i8 {
        if self.occupied(atom) {
            -1
        } else {
            1
        }
    }

    pub fn excitation_count(&self) -> usize {
        self.states.iter().filter(|&&s| s != 0).count()
    }

    /// Indices of excited atoms, ascending.
    pub fn excited_atoms(&self) -> impl Iterator<Item = usize> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0)
            .map(|(t, &s)| 3 * t + s as usize - 1)
    }

    /// Toggle one atom. Returns `false` (and leaves `self` untouched) when the
    /// result would leave the restricted space.
    pub fn toggle_atom(&mut self, atom: usize) -> bool {
        let t = atom / 3;
        let k = (atom % 3) as u8 + 1;
        match self.states[t] {
            0 => {
                self.states[t] = k;
                true
            }
            s if s == k => {
                self.states[t] = 0;
                true
            }
            _ => false,
        }
    }

    /// XOR a Klein code onto a triangle (the local `X` operators).
    #[inline]
    pub fn xor_triangle(&mut self, t: usize, code: u8) {
        self.states[t] ^= code;
    }

    /// Restricted-basis index: `sum_t code_t * 4^t`.
    pub fn basis_index(&self) -> usize {
        self.states
            .iter()
            .rev()
            .fold(0usize, |acc, &s| (acc << 2) | s as usize)
    }

    pub fn from_basis_index(mut index: usize, n_triangles: usize) -> Self {
        let mut states = Vec::with_capacity(n_triangles);
        for _ in 0..n_triangles {
            states.push((index & 3) as u8);
            index >>= 2;
        }
        Self { states }
    }

    /// Packed 2-bit codes, four triangles per byte, triangle 0 in the low bits.
    pub fn pack(&self) -> Vec<u8> {
        self.states
            .chunks(4)
            .map(|ch| ch.iter().enumerate().fold(0u8, |b, (i, &s)| b | (s << (2 * i))))
            .collect()
    }

    pub fn unpack(bytes: &[u8], n_triangles: usize) -> Self {
        let states = (0..n_triangles).map(|t| (bytes[t / 4] >> (2 * (t % 4))) & 3).collect();
        Self { states }
    }
}

/// Vertex parity charges `prod_{i at v} s_i`, one entry per kagome vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCharges {
    pub charges: Vec<i8>,
}

impl ParityCharges {
    pub fn violations(&self) -> usize {
        self.charges.iter().filter(|&&q| q == 1).count()
    }
}

// ---------------------------------------------------------------------------
// Geometry records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Triangle {
    pub atoms: [usize; 3],
    pub up: bool,
    pub cell: usize,
    pub center: [f64; 2],
}

/// Kagome vertex: the four atoms on the links meeting there (two per triangle).
#[derive(Debug, Clone, Serialize)]
pub struct Vertex {
    pub atoms: [usize; 4],
    pub cell: usize,
    pub slot: usize,
    pub position: [f64; 2],
}

/// Hexagonal plaquette: six bordering atoms, one per adjacent triangle.
#[derive(Debug, Clone, Serialize)]
pub struct Hexagon {
    pub atoms: [usize; 6],
    pub triangles: [usize; 6],
    pub cell: usize,
    pub center: [f64; 2],
}

impl Hexagon {
    /// Klein codes `(triangle, slot + 1)` of the plaquette operator.
    pub fn klein_factors(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.atoms.iter().map(|&a| (a / 3, (a % 3) as u8 + 1))
    }
}

/// A point-group element: atom permutation together with the induced
/// triangle permutation and local slot relabeling.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetryElement {
    pub name: String,
    pub atom_perm: Vec<usize>,
    pub triangle_perm: Vec<usize>,
    pub relabel: Vec<[u8; 3]>,
}

impl SymmetryElement {
    fn from_atom_perm(name: String, atom_perm: Vec<usize>) -> Option<Self> {
        let n_tri = atom_perm.len() / 3;
        let mut triangle_perm = vec![0; n_tri];
        let mut relabel = vec![[0u8; 3]; n_tri];
        for t in 0..n_tri {
            let t2 = atom_perm[3 * t] / 3;
            for k in 0..3 {
                let img = atom_perm[3 * t + k];
                if img / 3 != t2 {
                    return None;
                }
                relabel[t][k] = (img % 3) as u8;
            }
            triangle_perm[t] = t2;
        }
        Some(Self { name, atom_perm, triangle_perm, relabel })
    }

    pub fn apply(&self, c: &Configuration) -> Configuration {
        let mut out = Configuration::vacuum(c.n_triangles());
        self.apply_into(c, &mut out);
        out
    }

    pub fn apply_into(&self, c: &Configuration, out: &mut Configuration) {
        for (t, &s) in c.states().iter().enumerate() {
            let code = if s == 0 { 0 } else { self.relabel[t][s as usize - 1] + 1 };
            out.states[self.triangle_perm[t]] = code;
        }
    }

    pub fn compose(&self, other: &SymmetryElement) -> SymmetryElement {
        // (self ∘ other)(i) = self(other(i))
        let perm = other.atom_perm.iter().map(|&i| self.atom_perm[i]).collect();
        Self::from_atom_perm(format!("{}*{}", self.name, other.name), perm)
            .expect("composition of triangle-preserving maps")
    }

    pub fn inverse(&self) -> SymmetryElement {
        let mut inv = vec![0; self.atom_perm.len()];
        for (i, &j) in self.atom_perm.iter().enumerate() {
            inv[j] = i;
        }
        Self::from_atom_perm(format!("{}^-1", self.name), inv).expect("inverse exists")
    }

    pub fn is_identity(&self) -> bool {
        self.atom_perm.iter().enumerate().all(|(i, &j)| i == j)
    }
}

// ---------------------------------------------------------------------------
// RubyLattice
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RubyLattice {
    spec: LatticeSpec,
    /// Bravais vectors in units of `a`.
    pub a1: [f64; 2],
    pub a2: [f64; 2],
    /// `(n1, n2)` for each kept cell.
    pub cells: Vec<(usize, usize)>,
    cell_grid: Vec<Option<usize>>,
    pub triangles: Vec<Triangle>,
    pub atom_positions: Vec<[f64; 2]>,
    pub vertices: Vec<Vertex>,
    pub hexagons: Vec<Hexagon>,
    /// Vertex indices touching each atom (two in the bulk).
    pub atom_vertices: Vec<Vec<usize>>,
    /// Hexagon bordered by each atom, if kept.
    pub atom_hexagon: Vec<Option<usize>>,
    /// `cell_vertices[c][slot]`: vertex at slot 0/1/2 of cell `c`, if kept.
    pub cell_vertices: Vec<[Option<usize>; 3]>,
    distances: Vec<f64>,
    pub point_group: Vec<SymmetryElement>,
}

fn rot(v: [f64; 2], ang: f64) -> [f64; 2] {
    let (s, c) = ang.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn scale(a: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] * s, a[1] * s]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

const GEOM_TOL: f64 = 1e-7;

impl RubyLattice {
    pub fn build(spec: &LatticeSpec) -> Result<Self, LatticeError> {
        let (l1, l2) = (spec.l1, spec.l2);
        if spec.boundary == Boundary::Periodic && (l1 < 2 || l2 < 2) {
            return Err(LatticeError::TooSmall(l1, l2));
        }
        if l1 == 0 || l2 == 0 {
            return Err(LatticeError::EmptyMask);
        }
        if !(spec.rho > 1.0) {
            return Err(LatticeError::BadRho(spec.rho));
        }
        let lambda = 1.0 + 3f64.sqrt() * spec.rho;
        let a1 = [lambda, 0.0];
        let a2 = [lambda / 2.0, lambda * 3f64.sqrt() / 2.0];

        let mut keep = vec![spec.mask.is_none(); l1 * l2];
        if let (Boundary::Open, Some(mask)) = (spec.boundary, &spec.mask) {
            for &(n1, n2) in mask {
                if n1 >= l1 || n2 >= l2 {
                    return Err(LatticeError::MaskOutOfRange(n1, n2, l1, l2));
                }
                keep[n1 * l2 + n2] = true;
            }
        } else if spec.mask.is_some() {
            // masks only make sense for open geometries
            keep.iter_mut().for_each(|k| *k = true);
        }
        let mut cells = Vec::new();
        let mut cell_grid = vec![None; l1 * l2];
        for n1 in 0..l1 {
            for n2 in 0..l2 {
                if keep[n1 * l2 + n2] {
                    cell_grid[n1 * l2 + n2] = Some(cells.len());
                    cells.push((n1, n2));
                }
            }
        }
        if cells.is_empty() {
            return Err(LatticeError::EmptyMask);
        }

        let circum = 1.0 / 3f64.sqrt();
        let up_angles = [PI / 2.0, 7.0 * PI / 6.0, 11.0 * PI / 6.0];
        let down_angles = [3.0 * PI / 2.0, PI / 6.0, 5.0 * PI / 6.0];
        let mut triangles = Vec::with_capacity(2 * cells.len());
        let mut atom_positions = Vec::with_capacity(6 * cells.len());
        for (ci, &(n1, n2)) in cells.iter().enumerate() {
            let origin = add(scale(a1, n1 as f64), scale(a2, n2 as f64));
            let down = add(origin, scale(add(a1, a2), 1.0 / 3.0));
            for (up, center, angles) in [(true, origin, up_angles), (false, down, down_angles)] {
                let t = triangles.len();
                let mut atoms = [0; 3];
                for (k, ang) in angles.iter().enumerate() {
                    atoms[k] = 3 * t + k;
                    atom_positions.push(add(center, [circum * ang.cos(), circum * ang.sin()]));
                }
                triangles.push(Triangle { atoms, up, cell: ci, center });
            }
        }

        let mut lat = RubyLattice {
            spec: spec.clone(),
            a1,
            a2,
            cells,
            cell_grid,
            triangles,
            atom_positions,
            vertices: Vec::new(),
            hexagons: Vec::new(),
            atom_vertices: Vec::new(),
            atom_hexagon: Vec::new(),
            cell_vertices: Vec::new(),
            distances: Vec::new(),
            point_group: Vec::new(),
        };
        lat.build_vertices();
        lat.build_hexagons();
        lat.build_distances();
        lat.build_point_group();
        Ok(lat)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn boundary(&self) -> Boundary {
        self.spec.boundary
    }

    pub fn l1(&self) -> usize {
        self.spec.l1
    }

    pub fn l2(&self) -> usize {
        self.spec.l2
    }

    pub fn rho(&self) -> f64 {
        self.spec.rho
    }

    #[inline]
    pub fn n_atoms(&self) -> usize {
        self.atom_positions.len()
    }

    #[inline]
    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Kept cell at grid position `(n1, n2)`.
    pub fn cell_at(&self, n1: usize, n2: usize) -> Option<usize> {
        self.cell_grid[n1 * self.spec.l2 + n2]
    }

    /// `(up, down)` triangle indices of the cell at `(n1, n2)`.
    pub fn unit_cell(&self, n1: usize, n2: usize) -> Option<(usize, usize)> {
        self.cell_at(n1, n2).map(|c| (2 * c, 2 * c + 1))
    }

    /// Cell index reached by shifting `(n1, n2)` by `(d1, d2)`, wrapping under
    /// periodic boundaries.
    pub fn shifted_cell(&self, n1: usize, n2: usize, d1: isize, d2: isize) -> Option<usize> {
        let (l1, l2) = (self.spec.l1 as isize, self.spec.l2 as isize);
        let (m1, m2) = (n1 as isize + d1, n2 as isize + d2);
        match self.spec.boundary {
            Boundary::Periodic => {
                self.cell_at(m1.rem_euclid(l1) as usize, m2.rem_euclid(l2) as usize)
            }
            Boundary::Open => {
                if m1 < 0 || m2 < 0 || m1 >= l1 || m2 >= l2 {
                    None
                } else {
                    self.cell_at(m1 as usize, m2 as usize)
                }
            }
        }
    }

    /// Minimum-image displacement `b - a` under periodic boundaries.
    pub fn displacement(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let d = sub(b, a);
        if self.spec.boundary == Boundary::Open {
            return d;
        }
        let big1 = scale(self.a1, self.spec.l1 as f64);
        let big2 = scale(self.a2, self.spec.l2 as f64);
        // fractional coordinates in the supercell basis
        let det = big1[0] * big2[1] - big1[1] * big2[0];
        let f1 = (d[0] * big2[1] - d[1] * big2[0]) / det;
        let f2 = (big1[0] * d[1] - big1[1] * d[0]) / det;
        let (f1, f2) = (f1 - f1.round(), f2 - f2.round());
        let mut best = [f64::INFINITY, 0.0];
        for s1 in -1..=1 {
            for s2 in -1..=1 {
                let g1 = f1 + s1 as f64;
                let g2 = f2 + s2 as f64;
                let v = add(scale(big1, g1), scale(big2, g2));
                if norm(v) < norm(best) - 1e-12 {
                    best = v;
                }
            }
        }
        best
    }

    fn nearest_atoms_of(&self, t: usize, point: [f64; 2], count: usize) -> Vec<usize> {
        let mut atoms: Vec<(f64, usize)> = self.triangles[t]
            .atoms
            .iter()
            .map(|&a| (norm(self.displacement(point, self.atom_positions[a])), a))
            .collect();
        atoms.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        atoms.into_iter().take(count).map(|(_, a)| a).collect()
    }

    fn build_vertices(&mut self) {
        let mut vertices = Vec::new();
        let mut cell_vertices = vec![[None; 3]; self.cells.len()];
        let shifts = [(0isize, 0isize), (-1, 0), (0, -1)];
        for (ci, &(n1, n2)) in self.cells.clone().iter().enumerate() {
            let up = 2 * ci;
            for (slot, &(d1, d2)) in shifts.iter().enumerate() {
                let Some(dc) = self.shifted_cell(n1, n2, d1, d2) else { continue };
                let down = 2 * dc + 1;
                let uc = self.triangles[up].center;
                let dv = self.displacement(uc, self.triangles[down].center);
                let position = add(uc, scale(dv, 0.5));
                let mut atoms = [0; 4];
                let ua = self.nearest_atoms_of(up, position, 2);
                let da = self.nearest_atoms_of(down, position, 2);
                atoms[..2].copy_from_slice(&ua);
                atoms[2..].copy_from_slice(&da);
                cell_vertices[ci][slot] = Some(vertices.len());
                vertices.push(Vertex { atoms, cell: ci, slot, position });
            }
        }
        let mut atom_vertices = vec![Vec::new(); self.n_atoms()];
        for (v, vx) in vertices.iter().enumerate() {
            for &a in &vx.atoms {
                atom_vertices[a].push(v);
            }
        }
        self.vertices = vertices;
        self.cell_vertices = cell_vertices;
        self.atom_vertices = atom_vertices;
    }

    fn build_hexagons(&mut self) {
        let lambda = norm(self.a1);
        let target = lambda / 3f64.sqrt();
        let ups = [(1isize, 0isize), (0, 1), (1, 1)];
        let downs = [(0isize, 0isize), (1, 0), (0, 1)];
        let mut hexagons = Vec::new();
        for (ci, &(n1, n2)) in self.cells.clone().iter().enumerate() {
            let origin = self.triangles[2 * ci].center;
            let center = add(origin, scale(add(self.a1, self.a2), 2.0 / 3.0));
            let mut tris = Vec::with_capacity(6);
            for &(d1, d2) in &ups {
                if let Some(c) = self.shifted_cell(n1, n2, d1, d2) {
                    tris.push(2 * c);
                }
            }
            for &(d1, d2) in &downs {
                if let Some(c) = self.shifted_cell(n1, n2, d1, d2) {
                    tris.push(2 * c + 1);
                }
            }
            if tris.len() != 6 {
                continue;
            }
            // order triangles by angle around the centre
            let mut with_angle: Vec<(f64, usize)> = tris
                .iter()
                .map(|&t| {
                    let d = self.displacement(center, self.triangles[t].center);
                    debug_assert!((norm(d) - target).abs() < 1e-6);
                    (d[1].atan2(d[0]).rem_euclid(2.0 * PI), t)
                })
                .collect();
            with_angle.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            let mut triangles = [0; 6];
            let mut atoms = [0; 6];
            for (i, &(_, t)) in with_angle.iter().enumerate() {
                triangles[i] = t;
                atoms[i] = self.nearest_atoms_of(t, center, 1)[0];
            }
            hexagons.push(Hexagon { atoms, triangles, cell: ci, center });
        }
        let mut atom_hexagon = vec![None; self.n_atoms()];
        for (h, hx) in hexagons.iter().enumerate() {
            for &a in &hx.atoms {
                atom_hexagon[a] = Some(h);
            }
        }
        self.hexagons = hexagons;
        self.atom_hexagon = atom_hexagon;
    }

    fn build_distances(&mut self) {
        let n = self.n_atoms();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let r = norm(self.displacement(self.atom_positions[i], self.atom_positions[j]));
                d[i * n + j] = r;
                d[j * n + i] = r;
            }
        }
        self.distances = d;
    }

    /// Candidate C6v operations about `center`, kept when they map the atom
    /// set onto itself.
    fn build_point_group(&mut self) {
        let center = match self.spec.boundary {
            Boundary::Periodic => self.hexagons.first().map(|h| h.center).unwrap_or([0.0, 0.0]),
            Boundary::Open => {
                let n = self.n_atoms() as f64;
                let s = self.atom_positions.iter().fold([0.0, 0.0], |acc, &p| add(acc, p));
                scale(s, 1.0 / n)
            }
        };
        let mut group = Vec::new();
        for k in 0..6 {
            let ang = k as f64 * FRAC_PI_3;
            let name = if k == 0 { "E".to_string() } else { format!("C6^{k}") };
            let map = |p: [f64; 2]| add(center, rot(sub(p, center), ang));
            if let Some(g) = self.trial_element(name, map) {
                group.push(g);
            }
        }
        for k in 0..6 {
            let phi = k as f64 * FRAC_PI_6;
            let (s, c) = (2.0 * phi).sin_cos();
            let map = |p: [f64; 2]| {
                let d = sub(p, center);
                add(center, [c * d[0] + s * d[1], s * d[0] - c * d[1]])
            };
            if let Some(g) = self.trial_element(format!("M{}", 30 * k), map) {
                group.push(g);
            }
        }
        self.point_group = group;
    }

    fn trial_element(&self, name: String, map: impl Fn([f64; 2]) -> [f64; 2]) -> Option<SymmetryElement> {
        let n = self.n_atoms();
        // bucket atoms on a coarse grid to keep the lookup linear
        let key = |p: [f64; 2]| ((p[0] * 8.0).round() as i64, (p[1] * 8.0).round() as i64);
        let reduce = |p: [f64; 2]| -> [f64; 2] {
            match self.spec.boundary {
                Boundary::Open => p,
                Boundary::Periodic => add(self.atom_positions[0], self.displacement(self.atom_positions[0], p)),
            }
        };
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &p) in self.atom_positions.iter().enumerate() {
            buckets.entry(key(reduce(p))).or_default().push(i);
        }
        let mut perm = vec![usize::MAX; n];
        let mut used = vec![false; n];
        for i in 0..n {
            let img = reduce(map(self.atom_positions[i]));
            let (k0, k1) = key(img);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = buckets.get(&(k0 + dx, k1 + dy)) {
                        for &j in list {
                            if norm(self.displacement(img, self.atom_positions[j])) < GEOM_TOL * 100.0 {
                                found = Some(j);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let j = found?;
            if used[j] {
                return None;
            }
            used[j] = true;
            perm[i] = j;
        }
        SymmetryElement::from_atom_perm(name, perm)
    }

    /// Lattice translation by `d1 a1 + d2 a2`; `None` when some kept cell
    /// would leave the geometry.
    pub fn translation(&self, d1: isize, d2: isize) -> Option<SymmetryElement> {
        let mut perm = vec![0; self.n_atoms()];
        for (ci, &(n1, n2)) in self.cells.iter().enumerate() {
            let cj = self.shifted_cell(n1, n2, d1, d2)?;
            for k in 0..6 {
                perm[6 * ci + k] = 6 * cj + k;
            }
        }
        SymmetryElement::from_atom_perm(format!("T({d1},{d2})"), perm)
    }

    /// Pairwise distance in units of `a` (minimum image when periodic).
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.n_atoms() + j]
    }

    pub fn distance_table(&self) -> &[f64] {
        &self.distances
    }

    #[inline]
    pub fn same_triangle(&self, i: usize, j: usize) -> bool {
        i / 3 == j / 3
    }

    /// Largest interaction range that is unambiguous under minimum image.
    pub fn half_system(&self) -> f64 {
        let lambda = norm(self.a1);
        match self.spec.boundary {
            Boundary::Periodic => 0.5 * lambda * self.spec.l1.min(self.spec.l2) as f64,
            Boundary::Open => f64::INFINITY,
        }
    }

    pub fn parity_charges(&self, c: &Configuration) -> ParityCharges {
        let charges = self
            .vertices
            .iter()
            .map(|v| v.atoms.iter().map(|&a| c.spin(a)).product())
            .collect();
        ParityCharges { charges }
    }

    #[inline]
    pub fn vertex_charge(&self, c: &Configuration, v: usize) -> i8 {
        self.vertices[v].atoms.iter().map(|&a| c.spin(a)).product()
    }

    /// Plaquette operator `B_p`: XOR the facing slot code onto each of the six
    /// adjacent triangles. Always stays inside the restricted space and is an
    /// involution.
    pub fn flip_plaquette(&self, c: &mut Configuration, p: usize) {
        for (t, code) in self.hexagons[p].klein_factors() {
            c.xor_triangle(t, code);
        }
    }

    pub fn apply_symmetry(&self, g: &SymmetryElement, c: &Configuration) -> Configuration {
        g.apply(c)
    }

    pub fn vacuum(&self) -> Configuration {
        Configuration::vacuum(self.n_triangles())
    }

    /// Sorted distinct inter-triangle distances strictly below `cutoff`.
    pub fn inter_triangle_shells(&self, cutoff: f64) -> Vec<f64> {
        let n = self.n_atoms();
        let mut shells: Vec<f64> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.same_triangle(i, j) {
                    continue;
                }
                let r = self.distance(i, j);
                if r < cutoff - GEOM_TOL && !shells.iter().any(|&s| (s - r).abs() < 1e-6) {
                    shells.push(r);
                }
            }
        }
        shells.sort_by(|a, b| a.partial_cmp(b).unwrap());
        shells
    }

    /// Structured dump of positions and incidence maps (JSON).
    pub fn dump(&self) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec,
            "a1": self.a1,
            "a2": self.a2,
            "cells": self.cells,
            "atom_positions": self.atom_positions,
            "triangles": self.triangles,
            "vertices": self.vertices,
            "hexagons": self.hexagons,
            "point_group": self.point_group.iter().map(|g| &g.name).collect::<Vec<_>>(),
        })
    }
}
