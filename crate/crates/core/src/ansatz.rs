//! Variational wavefunctions.
//!
//! [`Nqs`] implements `log psi(s) = theta_MF(s) + (1/|G|) sum_g theta_NN(g s)`
//! with a two-branch complex convolutional network: one branch reads the
//! vertex parity charges (gauge invariant), the other reads the raw triangle
//! bits. [`FullRank`] stores one free log-amplitude per basis state and is
//! used as an exact reference on tiny systems.
//!
//! Flattened parameter order (format version 1):
//! `[mf_A][mf_B][inv: W1 b1 W2 b2 .. W_Nh][non: W1 b1 .. W_Nh][final bias]`.
//! Kernels are stored `W[r1][r2][out][in]`.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::lattice::{Boundary, Configuration, RubyLattice, SymmetryElement};
use crate::scalar::{Cplx, Real};

/// A parameterized log-amplitude `log psi(c; alpha)`, holomorphic in `alpha`.
pub trait VariationalState<T: Real>: Send + Sync {
    fn n_params(&self) -> usize;

    fn params(&self) -> &[Cplx<T>];

    fn set_params(&mut self, p: &[Cplx<T>]);

    fn log_psi(&self, c: &Configuration) -> Cplx<T>;

    /// Returns `log psi(c)` and writes `d log psi / d alpha_k` into `grad`.
    fn log_psi_grad(&self, c: &Configuration, grad: &mut [Cplx<T>]) -> Cplx<T>;

    /// Number of triangles of the configurations this state accepts.
    fn n_triangles(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanFieldMode {
    #[default]
    Uniform,
    Site,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Merge {
    #[default]
    Sum,
    Product,
}

fn default_layers() -> usize {
    3
}
fn default_features() -> usize {
    8
}
fn default_rb() -> f64 {
    2.4
}
fn default_init() -> f64 {
    1e-2
}
fn default_true() -> bool {
    true
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzHyper {
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_features")]
    pub features: usize,
    /// Kernel linear size; defaults to `ceil(max(L1, L2) / layers)`.
    #[serde(default)]
    pub kernel: Option<usize>,
    #[serde(default)]
    pub mean_field: MeanFieldMode,
    #[serde(default)]
    pub merge: Merge,
    #[serde(default = "default_true")]
    pub symmetrize: bool,
    /// Disable to keep only the mean-field part.
    #[serde(default = "default_true")]
    pub network: bool,
    #[serde(default = "default_rb")]
    pub rb_over_a: f64,
    #[serde(default = "default_init")]
    pub init_scale: f64,
}

impl Default for AnsatzHyper {
    fn default() -> Self {
        Self {
            layers: default_layers(),
            features: default_features(),
            kernel: None,
            mean_field: MeanFieldMode::Uniform,
            merge: Merge::Sum,
            symmetrize: true,
            network: true,
            rb_over_a: default_rb(),
            init_scale: default_init(),
        }
    }
}

#[inline]
fn sigma1<T: Real>(x: Cplx<T>) -> Cplx<T> {
    x * (x * T::lit(0.25) + T::lit(0.5))
}

#[inline]
fn dsigma1<T: Real>(x: Cplx<T>) -> Cplx<T> {
    (x + T::one()) * T::lit(0.5)
}

#[inline]
fn sigma2<T: Real>(x: Cplx<T>) -> Cplx<T> {
    let x2 = x * x;
    x * T::lit(0.5) + x2 * T::lit(0.25) - x2 * x2 / T::lit(48.0)
}

#[inline]
fn dsigma2<T: Real>(x: Cplx<T>) -> Cplx<T> {
    let x2 = x * x;
    (x + T::one()) * T::lit(0.5) - x2 * x / T::lit(12.0)
}

/// Unit-cell grid the convolutions run on.
#[derive(Debug, Clone)]
struct Grid {
    n: usize,
    valid: Vec<bool>,
    n_valid: usize,
    /// Lattice cell index of each grid site.
    cell: Vec<Option<usize>>,
    kernel: usize,
    /// `nb[site * k^2 + r]`: source site of kernel offset `r`, `None` = padding.
    nb: Vec<Option<usize>>,
}

impl Grid {
    fn new(lat: &RubyLattice, kernel: usize) -> Self {
        let (l1, l2) = (lat.l1(), lat.l2());
        let n = l1 * l2;
        let cell: Vec<Option<usize>> = (0..n).map(|s| lat.cell_at(s / l2, s % l2)).collect();
        let valid: Vec<bool> = cell.iter().map(|c| c.is_some()).collect();
        let kk = kernel * kernel;
        let mut nb = vec![None; n * kk];
        for s in 0..n {
            let (n1, n2) = ((s / l2) as isize, (s % l2) as isize);
            for r1 in 0..kernel as isize {
                for r2 in 0..kernel as isize {
                    let (m1, m2) = (n1 + r1, n2 + r2);
                    let src = match lat.boundary() {
                        Boundary::Periodic => {
                            Some((m1.rem_euclid(l1 as isize) as usize) * l2 + m2.rem_euclid(l2 as isize) as usize)
                        }
                        Boundary::Open => {
                            if m1 < l1 as isize && m2 < l2 as isize {
                                Some(m1 as usize * l2 + m2 as usize)
                            } else {
                                None
                            }
                        }
                    };
                    nb[s * kk + (r1 as usize) * kernel + r2 as usize] = src.filter(|&x| valid[x]);
                }
            }
        }
        let n_valid = valid.iter().filter(|&&v| v).count();
        Self { n, valid, n_valid, cell, kernel, nb }
    }
}

fn conv_forward<T: Real>(
    grid: &Grid,
    u: &[Cplx<T>],
    din: usize,
    w: &[Cplx<T>],
    bias: Option<&[Cplx<T>]>,
    dout: usize,
    z: &mut [Cplx<T>],
) {
    let kk = grid.kernel * grid.kernel;
    for s in 0..grid.n {
        let zs = &mut z[s * dout..(s + 1) * dout];
        if !grid.valid[s] {
            zs.iter_mut().for_each(|x| *x = Cplx::new(T::zero(), T::zero()));
            continue;
        }
        match bias {
            Some(b) => zs.copy_from_slice(b),
            None => zs.iter_mut().for_each(|x| *x = Cplx::new(T::zero(), T::zero())),
        }
        for r in 0..kk {
            let Some(src) = grid.nb[s * kk + r] else { continue };
            let us = &u[src * din..(src + 1) * din];
            let wr = &w[r * dout * din..(r + 1) * dout * din];
            for (f, zf) in zs.iter_mut().enumerate() {
                let row = &wr[f * din..(f + 1) * din];
                let mut acc = Cplx::new(T::zero(), T::zero());
                for (a, b) in row.iter().zip(us) {
                    acc += *a * *b;
                }
                *zf += acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    grid: &Grid,
    u: &[Cplx<T>],
    din: usize,
    w: &[Cplx<T>],
    dout: usize,
    gz: &[Cplx<T>],
    gw: &mut [Cplx<T>],
    mut gb: Option<&mut [Cplx<T>]>,
    mut gu: Option<&mut [Cplx<T>]>,
) {
    let kk = grid.kernel * grid.kernel;
    for s in 0..grid.n {
        if !grid.valid[s] {
            continue;
        }
        let gzs = &gz[s * dout..(s + 1) * dout];
        if let Some(gb) = gb.as_deref_mut() {
            for (b, g) in gb.iter_mut().zip(gzs) {
                *b += *g;
            }
        }
        for r in 0..kk {
            let Some(src) = grid.nb[s * kk + r] else { continue };
            let us = &u[src * din..(src + 1) * din];
            let base = r * dout * din;
            for (f, &g) in gzs.iter().enumerate() {
                let gwr = &mut gw[base + f * din..base + (f + 1) * din];
                for (a, &x) in gwr.iter_mut().zip(us) {
                    *a += g * x;
                }
            }
            if let Some(gu) = gu.as_deref_mut() {
                let gus = &mut gu[src * din..(src + 1) * din];
                let wr = &w[base..base + dout * din];
                for (f, &g) in gzs.iter().enumerate() {
                    for (a, &wv) in gus.iter_mut().zip(&wr[f * din..(f + 1) * din]) {
                        *a += g * wv;
                    }
                }
            }
        }
    }
}

/// Offsets of one branch's blocks inside the flat parameter vector.
#[derive(Debug, Clone)]
struct BranchLayout {
    din: usize,
    /// `(weights, bias)` per layer; the last layer has no bias.
    layers: Vec<(Range<usize>, Option<Range<usize>>)>,
}

#[derive(Debug, Clone)]
struct Layout {
    mf_a: Range<usize>,
    mf_b: Range<usize>,
    branches: Option<[BranchLayout; 2]>,
    final_bias: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(n_a: usize, n_b: usize, hyper: &AnsatzHyper, kernel: usize, network: bool) -> Self {
        let mut off = 0;
        let mut take = |n: usize| {
            let r = off..off + n;
            off += n;
            r
        };
        let mf_a = take(n_a);
        let mf_b = take(n_b);
        let kk = kernel * kernel;
        let d = hyper.features;
        let branches = if network {
            let mut mk = |din: usize| {
                let mut layers = Vec::with_capacity(hyper.layers);
                let mut cin = din;
                for n in 0..hyper.layers {
                    let w = take(kk * d * cin);
                    let b = if n + 1 < hyper.layers { Some(take(d)) } else { None };
                    layers.push((w, b));
                    cin = d;
                }
                BranchLayout { din, layers }
            };
            let inv = mk(3);
            let non = mk(4);
            Some([inv, non])
        } else {
            None
        };
        let final_bias = if network { take(d) } else { take(0) };
        Self { mf_a, mf_b, branches, final_bias, total: off }
    }
}

/// Mean-field plus symmetrized convolutional network.
#[derive(Debug, Clone)]
pub struct Nqs<T: Real> {
    lattice: Arc<RubyLattice>,
    hyper: AnsatzHyper,
    grid: Grid,
    layout: Layout,
    params: Vec<Cplx<T>>,
    /// Sub-blockade inter-triangle partners `(j, distance class)` per atom.
    mf_pairs: Vec<Vec<(usize, usize)>>,
    shells: Vec<f64>,
    group: Vec<SymmetryElement>,
}

/// Intermediate activations of one branch.
struct BranchTrace<T> {
    /// Inputs to each layer.
    inputs: Vec<Vec<Cplx<T>>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<Cplx<T>>>,
}

impl<T: Real> Nqs<T> {
    /// Zero-initialized ansatz.
    pub fn new(lattice: Arc<RubyLattice>, hyper: AnsatzHyper) -> Self {
        let shells = lattice.inter_triangle_shells(hyper.rb_over_a);
        let n = lattice.n_atoms();
        let mut mf_pairs = vec![Vec::new(); n];
        for (i, pairs) in mf_pairs.iter_mut().enumerate() {
            for j in 0..n {
                if i == j || lattice.same_triangle(i, j) {
                    continue;
                }
                let r = lattice.distance(i, j);
                if let Some(k) = shells.iter().position(|&s| (s - r).abs() < 1e-6) {
                    pairs.push((j, k));
                }
            }
        }
        let kernel = hyper
            .kernel
            .unwrap_or_else(|| lattice.l1().max(lattice.l2()).div_ceil(hyper.layers.max(1)))
            .max(1);
        let network = hyper.network && hyper.layers > 0 && hyper.features > 0;
        let n_a = match hyper.mean_field {
            MeanFieldMode::Uniform => 1,
            MeanFieldMode::Site => n,
        };
        let layout = Layout::new(n_a, shells.len(), &hyper, kernel, network);
        let grid = Grid::new(&lattice, kernel);
        let group = if hyper.symmetrize && !lattice.point_group.is_empty() {
            lattice.point_group.clone()
        } else {
            vec![lattice.point_group.first().cloned().unwrap_or_else(|| identity(lattice.n_atoms()))]
        };
        let params = vec![Cplx::new(T::zero(), T::zero()); layout.total];
        Self { lattice, hyper, grid, layout, params, mf_pairs, shells, group }
    }

    /// Network weights complex Gaussian with the configured scale, mean-field
    /// part set to `A = a0` (uniform) and `B = 0`.
    pub fn random<R: Rng + ?Sized>(lattice: Arc<RubyLattice>, hyper: AnsatzHyper, a0: Cplx<T>, rng: &mut R) -> Self {
        let mut s = Self::new(lattice, hyper);
        let scale = s.hyper.init_scale;
        let net = s.network_range();
        for p in &mut s.params[net] {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *p = Cplx::new(T::lit(scale * re), T::lit(scale * im));
        }
        for p in &mut s.params[s.layout.mf_a.clone()] {
            *p = a0;
        }
        s
    }

    pub fn lattice(&self) -> &Arc<RubyLattice> {
        &self.lattice
    }

    pub fn hyper(&self) -> &AnsatzHyper {
        &self.hyper
    }

    pub fn kernel(&self) -> usize {
        self.grid.kernel
    }

    pub fn symmetry_count(&self) -> usize {
        self.group.len()
    }

    /// Distinct sub-blockade distances, one `B` coefficient each.
    pub fn distance_classes(&self) -> &[f64] {
        &self.shells
    }

    pub fn mean_field_range(&self) -> Range<usize> {
        self.layout.mf_a.start..self.layout.mf_b.end
    }

    pub fn mf_a_range(&self) -> Range<usize> {
        self.layout.mf_a.clone()
    }

    pub fn mf_b_range(&self) -> Range<usize> {
        self.layout.mf_b.clone()
    }

    pub fn network_range(&self) -> Range<usize> {
        self.layout.mf_b.end..self.layout.total
    }

    pub fn final_bias_range(&self) -> Range<usize> {
        self.layout.final_bias.clone()
    }

    /// Boolean mask selecting the mean-field coordinates.
    pub fn mean_field_mask(&self) -> Vec<bool> {
        let r = self.mean_field_range();
        (0..self.layout.total).map(|k| r.contains(&k)).collect()
    }

    /// Set site-dependent `A_i`; requires site mode.
    pub fn set_site_fields(&mut self, a: &[Cplx<T>]) {
        assert_eq!(self.hyper.mean_field, MeanFieldMode::Site, "site fields need site mode");
        let r = self.layout.mf_a.clone();
        self.params[r].copy_from_slice(a);
    }

    /// `theta_MF(s) = sum_i s_i (A_i + sum_{j: R_ij < R_b} B_{R_ij} s_j)`.
    pub fn mean_field(&self, c: &Configuration) -> Cplx<T> {
        let p = &self.params;
        let a = &p[self.layout.mf_a.clone()];
        let b = &p[self.layout.mf_b.clone()];
        let uniform = a.len() == 1;
        let mut acc = Cplx::new(T::zero(), T::zero());
        for i in 0..c.n_atoms() {
            let si = T::lit(c.spin(i) as f64);
            let mut inner = if uniform { a[0] } else { a[i] };
            for &(j, k) in &self.mf_pairs[i] {
                inner += b[k] * T::lit(c.spin(j) as f64);
            }
            acc += inner * si;
        }
        acc
    }

    fn mean_field_grad(&self, c: &Configuration, grad: &mut [Cplx<T>]) {
        let ra = self.layout.mf_a.clone();
        let rb = self.layout.mf_b.clone();
        let uniform = ra.len() == 1;
        for i in 0..c.n_atoms() {
            let si = c.spin(i) as f64;
            let ga = if uniform { ra.start } else { ra.start + i };
            grad[ga] += Cplx::new(T::lit(si), T::zero());
            for &(j, k) in &self.mf_pairs[i] {
                grad[rb.start + k] += Cplx::new(T::lit(si * c.spin(j) as f64), T::zero());
            }
        }
    }

    /// Input features on the grid: `(charges, bits)`.
    fn features(&self, c: &Configuration) -> (Vec<Cplx<T>>, Vec<Cplx<T>>) {
        let zero = Cplx::new(T::zero(), T::zero());
        let mut inv = vec![zero; self.grid.n * 3];
        let mut non = vec![zero; self.grid.n * 4];
        for s in 0..self.grid.n {
            let Some(ci) = self.grid.cell[s] else { continue };
            for (k, v) in self.lattice.cell_vertices[ci].iter().enumerate() {
                if let Some(v) = v {
                    inv[s * 3 + k] = Cplx::new(T::lit(self.lattice.vertex_charge(c, *v) as f64), T::zero());
                }
            }
            for (h, t) in [2 * ci, 2 * ci + 1].into_iter().enumerate() {
                let st = c.state(t);
                non[s * 4 + 2 * h] = Cplx::new(T::lit((st & 1) as f64), T::zero());
                non[s * 4 + 2 * h + 1] = Cplx::new(T::lit((st >> 1) as f64), T::zero());
            }
        }
        (inv, non)
    }

    fn branch_forward(&self, b: &BranchLayout, x: Vec<Cplx<T>>) -> BranchTrace<T> {
        let d = self.hyper.features;
        let n_layers = b.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut u = x;
        let mut din = b.din;
        for (n, (wr, br)) in b.layers.iter().enumerate() {
            let mut z = vec![Cplx::new(T::zero(), T::zero()); self.grid.n * d];
            conv_forward(
                &self.grid,
                &u,
                din,
                &self.params[wr.clone()],
                br.as_ref().map(|r| &self.params[r.clone()]),
                d,
                &mut z,
            );
            inputs.push(u);
            if n + 1 < n_layers {
                u = z.iter().map(|&x| sigma1(x)).collect();
                for s in 0..self.grid.n {
                    if !self.grid.valid[s] {
                        u[s * d..(s + 1) * d].iter_mut().for_each(|x| *x = Cplx::new(T::zero(), T::zero()));
                    }
                }
            } else {
                u = Vec::new();
            }
            pre.push(z);
            din = d;
        }
        BranchTrace { inputs, pre }
    }

    fn branch_backward(&self, b: &BranchLayout, tr: &BranchTrace<T>, g_last: Vec<Cplx<T>>, grad: &mut [Cplx<T>], w: T) {
        let d = self.hyper.features;
        let n_layers = b.layers.len();
        let mut gz = g_last;
        for n in (0..n_layers).rev() {
            let (wr, br) = &b.layers[n];
            let din = if n == 0 { b.din } else { d };
            let mut gw = vec![Cplx::new(T::zero(), T::zero()); wr.len()];
            let mut gb = br.as_ref().map(|r| vec![Cplx::new(T::zero(), T::zero()); r.len()]);
            let mut gu = if n > 0 { Some(vec![Cplx::new(T::zero(), T::zero()); self.grid.n * din]) } else { None };
            conv_backward(
                &self.grid,
                &tr.inputs[n],
                din,
                &self.params[wr.clone()],
                d,
                &gz,
                &mut gw,
                gb.as_deref_mut(),
                gu.as_deref_mut(),
            );
            for (g, v) in grad[wr.clone()].iter_mut().zip(gw) {
                *g += v * w;
            }
            if let (Some(r), Some(gb)) = (br, gb) {
                for (g, v) in grad[r.clone()].iter_mut().zip(gb) {
                    *g += v * w;
                }
            }
            if let Some(gu) = gu {
                let zprev = &tr.pre[n - 1];
                gz = gu.iter().zip(zprev).map(|(&g, &z)| g * dsigma1(z)).collect();
                for s in 0..self.grid.n {
                    if !self.grid.valid[s] {
                        gz[s * d..(s + 1) * d].iter_mut().for_each(|x| *x = Cplx::new(T::zero(), T::zero()));
                    }
                }
            }
        }
    }

    /// Unsymmetrized network output on one configuration; optionally
    /// accumulates `weight * d theta / d alpha` into `grad`.
    fn raw_network(&self, c: &Configuration, grad: Option<(&mut [Cplx<T>], T)>) -> Cplx<T> {
        let Some([bi, bn]) = &self.layout.branches else {
            return Cplx::new(T::zero(), T::zero());
        };
        let d = self.hyper.features;
        let (xi, xn) = self.features(c);
        let ti = self.branch_forward(bi, xi);
        let tn = self.branch_forward(bn, xn);
        let zi = ti.pre.last().unwrap();
        let zn = tn.pre.last().unwrap();
        let fb = &self.params[self.layout.final_bias.clone()];
        let norm = T::lit(1.0 / (self.grid.n_valid * d) as f64);
        let mut merged = vec![Cplx::new(T::zero(), T::zero()); self.grid.n * d];
        let mut out = Cplx::new(T::zero(), T::zero());
        for s in 0..self.grid.n {
            if !self.grid.valid[s] {
                continue;
            }
            for f in 0..d {
                let k = s * d + f;
                let z = match self.hyper.merge {
                    Merge::Sum => zi[k] + zn[k],
                    Merge::Product => zi[k] * zn[k],
                } + fb[f];
                merged[k] = z;
                out += sigma2(z);
            }
        }
        out = out * norm;
        if let Some((grad, w)) = grad {
            let gz: Vec<Cplx<T>> = merged.iter().map(|&z| dsigma2(z) * norm).collect();
            let mut gi = vec![Cplx::new(T::zero(), T::zero()); gz.len()];
            let mut gn = gi.clone();
            let fbr = self.layout.final_bias.clone();
            for s in 0..self.grid.n {
                if !self.grid.valid[s] {
                    continue;
                }
                for f in 0..d {
                    let k = s * d + f;
                    grad[fbr.start + f] += gz[k] * w;
                    match self.hyper.merge {
                        Merge::Sum => {
                            gi[k] = gz[k];
                            gn[k] = gz[k];
                        }
                        Merge::Product => {
                            gi[k] = gz[k] * zn[k];
                            gn[k] = gz[k] * zi[k];
                        }
                    }
                }
            }
            self.branch_backward(bi, &ti, gi, grad, w);
            self.branch_backward(bn, &tn, gn, grad, w);
        }
        out
    }

    /// Symmetrized network part `(1/|G|) sum_g theta_NN(g c)`.
    pub fn network(&self, c: &Configuration) -> Cplx<T> {
        if self.layout.branches.is_none() {
            return Cplx::new(T::zero(), T::zero());
        }
        let mut gc = c.clone();
        let mut acc = Cplx::new(T::zero(), T::zero());
        for g in &self.group {
            g.apply_into(c, &mut gc);
            acc += self.raw_network(&gc, None);
        }
        acc / T::lit(self.group.len() as f64)
    }
}

fn identity(n_atoms: usize) -> SymmetryElement {
    SymmetryElement {
        name: "E".into(),
        atom_perm: (0..n_atoms).collect(),
        triangle_perm: (0..n_atoms / 3).collect(),
        relabel: vec![[0, 1, 2]; n_atoms / 3],
    }
}

impl<T: Real> VariationalState<T> for Nqs<T> {
    fn n_params(&self) -> usize {
        self.layout.total
    }

    fn params(&self) -> &[Cplx<T>] {
        &self.params
    }

    fn set_params(&mut self, p: &[Cplx<T>]) {
        self.params.copy_from_slice(p);
    }

    fn log_psi(&self, c: &Configuration) -> Cplx<T> {
        self.mean_field(c) + self.network(c)
    }

    fn log_psi_grad(&self, c: &Configuration, grad: &mut [Cplx<T>]) -> Cplx<T> {
        grad.iter_mut().for_each(|g| *g = Cplx::new(T::zero(), T::zero()));
        self.mean_field_grad(c, grad);
        let mut value = self.mean_field(c);
        if self.layout.branches.is_some() {
            let w = T::lit(1.0 / self.group.len() as f64);
            let mut gc = c.clone();
            for g in &self.group {
                g.apply_into(c, &mut gc);
                value += self.raw_network(&gc, Some((&mut *grad, w))) * w;
            }
        }
        value
    }

    fn n_triangles(&self) -> usize {
        self.lattice.n_triangles()
    }
}

/// One free log-amplitude per restricted basis state.
#[derive(Debug, Clone)]
pub struct FullRank<T: Real> {
    n_triangles: usize,
    params: Vec<Cplx<T>>,
}

impl<T: Real> FullRank<T> {
    pub fn new(n_triangles: usize) -> Self {
        assert!(n_triangles <= 10, "full-rank table limited to 4^10 entries");
        Self { n_triangles, params: vec![Cplx::new(T::zero(), T::zero()); 1 << (2 * n_triangles)] }
    }

    /// Log-amplitudes from a dense amplitude vector (zeros map to a large
    /// negative real part).
    pub fn from_amplitudes(n_triangles: usize, amps: &[Complex<f64>]) -> Self {
        let mut s = Self::new(n_triangles);
        for (p, a) in s.params.iter_mut().zip(amps) {
            let l = if a.norm() > 0.0 { a.ln() } else { Complex::new(-700.0, 0.0) };
            *p = Cplx::new(T::lit(l.re), T::lit(l.im));
        }
        s
    }
}

impl<T: Real> VariationalState<T> for FullRank<T> {
    fn n_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[Cplx<T>] {
        &self.params
    }

    fn set_params(&mut self, p: &[Cplx<T>]) {
        self.params.copy_from_slice(p);
    }

    fn log_psi(&self, c: &Configuration) -> Cplx<T> {
        self.params[c.basis_index()]
    }

    fn log_psi_grad(&self, c: &Configuration, grad: &mut [Cplx<T>]) -> Cplx<T> {
        grad.iter_mut().for_each(|g| *g = Cplx::new(T::zero(), T::zero()));
        let k = c.basis_index();
        grad[k] = Cplx::new(T::one(), T::zero());
        self.params[k]
    }

    fn n_triangles(&self) -> usize {
        self.n_triangles
    }
}
