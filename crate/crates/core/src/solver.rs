//! Generalized-interpolation saddle systems, their solution, and evaluation
//! of the resulting interpolants, their divergence-free/curl-free parts and
//! potentials.
//!
//! Unknowns are ordered node-major: `(c₁₁, …, c₁d, c₂₁, …, c_Nd, d₁, …, d_M)`.
//! The `A` block is `G ⊗ I_d` in that ordering, where `G` is the scalar
//! `N × N` Gram matrix of `-Δφ`, so only `G` is stored.

use faer::linalg::solvers::{Llt, Solve};
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::geometry::NodeSet;
use crate::kernels::{RadialProfile, MAX_DIM};

/// Which boundary functionals the interpolant carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolantKind {
    /// `n · P_div s = g` on `Y`, basis `Φ_div(·, y) n`.
    DivFreeBc,
    /// `t · P_curl s = 0` on `Y`, basis `Φ_curl(·, y) t` (2D only).
    CurlFreeBc,
    /// Full interpolation only.
    Plain,
}

/// Symmetric positive definite system `[[A, B], [Bᵀ, C]] [c; d] = [f; g]`.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    kind: InterpolantKind,
    dim: usize,
    profile: RadialProfile,
    centers: Vec<f64>,
    boundary_centers: Vec<f64>,
    boundary_dirs: Vec<f64>,
    gram: Mat<f64>,
    coupling: Mat<f64>,
    boundary: Mat<f64>,
    rhs: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn diff(x: &[f64], y: &[f64], out: &mut [f64; MAX_DIM]) -> usize {
    for (k, (a, b)) in x.iter().zip(y).enumerate() {
        out[k] = a - b;
    }
    x.len()
}

/// `Φ_div(v) a` written into `out`.
#[inline]
fn div_free_apply(p: &RadialProfile, v: &[f64], a: &[f64], out: &mut [f64]) {
    let (f1, f2, v2) = p.derivs(v);
    let d = v.len() as f64;
    let va = dot(v, a);
    let diag = v2 * f2 + (d - 1.0) * f1;
    for k in 0..v.len() {
        out[k] = f2 * va * v[k] - diag * a[k];
    }
}

/// `Φ_curl(v) a` written into `out`.
#[inline]
fn curl_free_apply(p: &RadialProfile, v: &[f64], a: &[f64], out: &mut [f64]) {
    let (f1, f2, _) = p.derivs(v);
    let va = dot(v, a);
    for k in 0..v.len() {
        out[k] = -(f2 * va * v[k] + f1 * a[k]);
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DataLength { expected, found })
    }
}

fn boundary_dirs(nodes: &NodeSet, kind: InterpolantKind) -> Result<Vec<f64>> {
    match kind {
        InterpolantKind::Plain => Ok(Vec::new()),
        InterpolantKind::DivFreeBc => Ok(nodes.normals_flat().to_vec()),
        InterpolantKind::CurlFreeBc => {
            let mut t = Vec::with_capacity(2 * nodes.n_boundary());
            for j in 0..nodes.n_boundary() {
                t.extend_from_slice(&nodes.tangent(j)?);
            }
            Ok(t)
        }
    }
}

fn assemble(
    kind: InterpolantKind,
    nodes: &NodeSet,
    p: &RadialProfile,
    f_at_x: &[f64],
    g_at_y: &[f64],
) -> Result<AssembledSystem> {
    let d = nodes.dim();
    let n = nodes.n_interior();
    let m = if kind == InterpolantKind::Plain { 0 } else { nodes.n_boundary() };
    check_len(d * n, f_at_x.len())?;
    check_len(m, g_at_y.len())?;
    let centers = nodes.interior_flat().to_vec();
    let boundary_centers = if m > 0 { nodes.boundary_flat().to_vec() } else { Vec::new() };
    let dirs = if m > 0 { boundary_dirs(nodes, kind)? } else { Vec::new() };
    let bc_apply = match kind {
        InterpolantKind::CurlFreeBc => curl_free_apply,
        _ => div_free_apply,
    };

    let mut v = [0.0; MAX_DIM];
    let mut gram = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let xj = nodes.interior_point(j);
        for i in j..n {
            diff(nodes.interior_point(i), xj, &mut v);
            let val = p.neg_laplacian(&v[..d]);
            gram[(i, j)] = val;
            gram[(j, i)] = val;
        }
    }

    let mut coupling = Mat::<f64>::zeros(d * n, m);
    let mut out = [0.0; MAX_DIM];
    for j in 0..m {
        let yj = &boundary_centers[j * d..(j + 1) * d];
        let dj = &dirs[j * d..(j + 1) * d];
        for i in 0..n {
            diff(nodes.interior_point(i), yj, &mut v);
            bc_apply(p, &v[..d], dj, &mut out[..d]);
            for a in 0..d {
                coupling[(i * d + a, j)] = out[a];
            }
        }
    }

    let mut boundary = Mat::<f64>::zeros(m, m);
    for j in 0..m {
        let yj = &boundary_centers[j * d..(j + 1) * d];
        let dj = &dirs[j * d..(j + 1) * d];
        for i in j..m {
            let yi = &boundary_centers[i * d..(i + 1) * d];
            let di = &dirs[i * d..(i + 1) * d];
            diff(yi, yj, &mut v);
            bc_apply(p, &v[..d], dj, &mut out[..d]);
            let val = dot(di, &out[..d]);
            boundary[(i, j)] = val;
            boundary[(j, i)] = val;
        }
    }

    let mut rhs = Vec::with_capacity(d * n + m);
    rhs.extend_from_slice(f_at_x);
    rhs.extend_from_slice(g_at_y);

    Ok(AssembledSystem {
        kind,
        dim: d,
        profile: *p,
        centers,
        boundary_centers,
        boundary_dirs: dirs,
        gram,
        coupling,
        boundary,
        rhs,
    })
}

/// Divergence-free boundary conditions: interpolate `f` on `X` (node-major,
/// `d` values per node) and impose `n · P_div s = g` on `Y`.
pub fn assemble_divfree(nodes: &NodeSet, p: &RadialProfile, f_at_x: &[f64], g_at_y: &[f64]) -> Result<AssembledSystem> {
    if g_at_y.len() == nodes.n_boundary() {
        warn_if_inadmissible(nodes, g_at_y);
    }
    assemble(InterpolantKind::DivFreeBc, nodes, p, f_at_x, g_at_y)
}

/// Curl-free boundary conditions `t · P_curl s = 0` on `Y` (2D only).
pub fn assemble_curlfree(nodes: &NodeSet, p: &RadialProfile, f_at_x: &[f64]) -> Result<AssembledSystem> {
    if nodes.dim() != 2 {
        return Err(Error::Unsupported("curl-free boundary conditions are implemented in 2D only"));
    }
    let zeros = vec![0.0; nodes.n_boundary()];
    assemble(InterpolantKind::CurlFreeBc, nodes, p, f_at_x, &zeros)
}

/// Plain Gram system with `Φ = -Δφ I`; boundary nodes are ignored.
pub fn assemble_plain(nodes: &NodeSet, p: &RadialProfile, f_at_x: &[f64]) -> Result<AssembledSystem> {
    assemble(InterpolantKind::Plain, nodes, p, f_at_x, &[])
}

/// Per-component boundary flux `∮ g ds` by the closed trapezoid rule, with
/// the matching `∮ |g| ds`. `None` when the node set has no recorded
/// boundary components or is not 2D.
pub fn boundary_flux(nodes: &NodeSet, g_at_y: &[f64]) -> Option<Vec<(f64, f64)>> {
    if nodes.dim() != 2 || nodes.components().is_empty() {
        return None;
    }
    let flux = nodes
        .components()
        .iter()
        .map(|comp| {
            let len = comp.len();
            let (mut signed, mut abs) = (0.0, 0.0);
            for k in 0..len {
                let j = comp.start + k;
                let next = comp.start + (k + 1) % len;
                let (a, b) = (nodes.boundary_point(j), nodes.boundary_point(next));
                let ds = (a[0] - b[0]).hypot(a[1] - b[1]);
                signed += 0.5 * ds * (g_at_y[j] + g_at_y[next]);
                abs += 0.5 * ds * (g_at_y[j].abs() + g_at_y[next].abs());
            }
            (signed, abs)
        })
        .collect();
    Some(flux)
}

fn warn_if_inadmissible(nodes: &NodeSet, g_at_y: &[f64]) {
    if let Some(flux) = boundary_flux(nodes, g_at_y) {
        let total: f64 = flux.iter().map(|f| f.1).sum();
        for (k, (signed, _)) in flux.iter().enumerate() {
            if signed.abs() >= 1e-6 * total && total > 0.0 {
                log::warn!(
                    "boundary data has net flux {signed:e} on component {k}; \
                     the divergence-free part cannot match it exactly"
                );
            }
        }
    }
}

impl AssembledSystem {
    pub fn kind(&self) -> InterpolantKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_interior(&self) -> usize {
        self.gram.nrows()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.nrows()
    }

    /// `dN + M`.
    pub fn size(&self) -> usize {
        self.dim * self.n_interior() + self.n_boundary()
    }

    /// Row of component `a` of node `i`.
    pub fn row_of(&self, node: usize, component: usize) -> usize {
        node * self.dim + component
    }

    /// Row of boundary functional `j`.
    pub fn boundary_row(&self, j: usize) -> usize {
        self.dim * self.n_interior() + j
    }

    /// `perm[k]` is the node-major row placed at component-major position
    /// `k`, for the `A` block.
    pub fn component_major_permutation(&self) -> Vec<usize> {
        let (n, d) = (self.n_interior(), self.dim);
        (0..d).flat_map(|a| (0..n).map(move |i| i * d + a)).collect()
    }

    /// Scalar Gram matrix `G`; `A = G ⊗ I_d`.
    pub fn gram(&self) -> &Mat<f64> {
        &self.gram
    }

    /// `B`, `dN × M`.
    pub fn coupling(&self) -> &Mat<f64> {
        &self.coupling
    }

    /// `C`, `M × M`.
    pub fn boundary_block(&self) -> &Mat<f64> {
        &self.boundary
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Dense `(dN + M)²` saddle matrix in node-major order.
    pub fn matrix(&self) -> Mat<f64> {
        let (n, m, d) = (self.n_interior(), self.n_boundary(), self.dim);
        let dn = d * n;
        Mat::from_fn(dn + m, dn + m, |r, c| match (r < dn, c < dn) {
            (true, true) => {
                if r % d == c % d {
                    self.gram[(r / d, c / d)]
                } else {
                    0.0
                }
            }
            (true, false) => self.coupling[(r, c - dn)],
            (false, true) => self.coupling[(c, r - dn)],
            (false, false) => self.boundary[(r - dn, c - dn)],
        })
    }

    /// Full matrix-vector product with the (unjittered) saddle matrix.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (n, m, d) = (self.n_interior(), self.n_boundary(), self.dim);
        let dn = d * n;
        assert_eq!(x.len(), dn + m);
        let c = Mat::from_fn(n, d, |i, a| x[i * d + a]);
        let dv = Mat::from_fn(m, 1, |j, _| x[dn + j]);
        let gc = &self.gram * &c;
        let bd = &self.coupling * &dv;
        let btc = self.coupling.transpose() * Mat::from_fn(dn, 1, |r, _| x[r]);
        let cd = &self.boundary * &dv;
        let mut y = vec![0.0; dn + m];
        for i in 0..n {
            for a in 0..d {
                y[i * d + a] = gc[(i, a)] + bd[(i * d + a, 0)];
            }
        }
        for j in 0..m {
            y[dn + j] = btc[(j, 0)] + cd[(j, 0)];
        }
        y
    }

    /// Relative 2-norm residual `‖K x - rhs‖ / ‖rhs‖` (absolute when the
    /// right-hand side vanishes).
    pub fn residual(&self, x: &[f64]) -> f64 {
        let kx = self.apply(x);
        let num = kx.iter().zip(&self.rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den = self.rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }

    /// `1e-10 · trace / size`, a reasonable jitter for near-degenerate sets.
    pub fn suggested_jitter(&self) -> f64 {
        let trace = self.dim as f64 * (0..self.n_interior()).map(|i| self.gram[(i, i)]).sum::<f64>()
            + (0..self.n_boundary()).map(|j| self.boundary[(j, j)]).sum::<f64>();
        1e-10 * trace / self.size().max(1) as f64
    }

    /// Builds the interpolant for a solution of this system.
    pub fn interpolant(&self, sol: &Solution) -> Interpolant {
        Interpolant {
            kind: self.kind,
            dim: self.dim,
            profile: self.profile,
            centers: self.centers.clone(),
            coeffs: sol.coeffs.clone(),
            boundary_centers: self.boundary_centers.clone(),
            boundary_dirs: self.boundary_dirs.clone(),
            boundary_coeffs: sol.boundary_coeffs.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Factor `G` once and the `M × M` Schur complement separately.
    pub use_schur: bool,
    /// Added to the diagonal before factorization.
    pub jitter: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            use_schur: false,
            jitter: 0.0,
        }
    }
}

/// Coefficients `c` (node-major, `dN`) and `d` (`M`).
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub coeffs: Vec<f64>,
    pub boundary_coeffs: Vec<f64>,
    /// Relative residual against the unjittered system.
    pub residual: f64,
    /// Smallest Cholesky pivot `L_kk²` encountered.
    pub min_pivot: f64,
}

impl Solution {
    /// `[c; d]` as one vector.
    pub fn stacked(&self) -> Vec<f64> {
        self.coeffs.iter().chain(&self.boundary_coeffs).copied().collect()
    }
}

fn factor(mut a: Mat<f64>, jitter: f64, block: &'static str, sys: &AssembledSystem) -> Result<(Llt<f64>, f64)> {
    let size = a.nrows();
    for k in 0..size {
        a[(k, k)] += jitter;
    }
    let llt = a.llt(Side::Lower).map_err(|e| match e {
        faer::linalg::solvers::LltError::NonPositivePivot { index } => Error::Factorization {
            block,
            index,
            size,
            suggested_jitter: sys.suggested_jitter(),
        },
    })?;
    let l = llt.L();
    let min_pivot = (0..size).map(|k| l[(k, k)] * l[(k, k)]).fold(f64::INFINITY, f64::min);
    Ok((llt, min_pivot))
}

/// Refinement sweeps after the initial solve.
const MAX_REFINEMENTS: usize = 4;

/// Solves the saddle system by dense Cholesky, either of the whole matrix or
/// block-wise through the Schur complement `C - Bᵀ A⁻¹ B`, then polishes the
/// result by iterative refinement with a compensated residual. Refinement
/// makes the coefficients accurate to working precision for any system the
/// factorization can resolve at all, so both paths return the same vector.
pub fn solve(sys: &AssembledSystem, opts: SolveOptions) -> Result<Solution> {
    if !(opts.jitter.is_finite() && opts.jitter >= 0.0) {
        return Err(Error::InvalidInput(format!("jitter must be nonnegative, got {}", opts.jitter)));
    }
    let (factored, min_pivot) = if opts.use_schur {
        Factored::schur(sys, opts.jitter)?
    } else {
        Factored::direct(sys, opts.jitter)?
    };
    let mut x = factored.solve(sys, &sys.rhs);
    let mut last = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        let r = sys.compensated_residual(&x, opts.jitter);
        let delta = factored.solve(sys, &r);
        let step = norm2(&delta);
        // stagnation: the correction no longer carries information
        if step.is_nan() || step >= 0.5 * last {
            break;
        }
        x.iter_mut().zip(&delta).for_each(|(a, b)| *a += b);
        last = step;
        if step <= f64::EPSILON * norm2(&x) {
            break;
        }
    }
    let residual = sys.residual(&x);
    let boundary_coeffs = x.split_off(sys.dim * sys.n_interior());
    Ok(Solution {
        coeffs: x,
        boundary_coeffs,
        residual,
        min_pivot,
    })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Dot product in twice the working precision (Ogita, Rump and Oishi),
/// accumulated onto `init`.
fn dot2(init: f64, pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut s, mut c) = (init, 0.0);
    for (a, b) in pairs {
        let p = a * b;
        let ep = a.mul_add(b, -p);
        let t = s + p;
        let z = t - s;
        let es = (s - (t - z)) + (p - z);
        s = t;
        c += ep + es;
    }
    s + c
}

impl AssembledSystem {
    /// `rhs - (K + jitter·I) x` with compensated dot products.
    fn compensated_residual(&self, x: &[f64], jitter: f64) -> Vec<f64> {
        let (n, m, d) = (self.n_interior(), self.n_boundary(), self.dim);
        let dn = d * n;
        let mut r = vec![0.0; dn + m];
        for i in 0..n {
            for a in 0..d {
                let row = i * d + a;
                let gram = (0..n).map(|k| (-self.gram[(i, k)], x[k * d + a]));
                let coupling = (0..m).map(|j| (-self.coupling[(row, j)], x[dn + j]));
                let own = std::iter::once((-jitter, x[row]));
                r[row] = dot2(self.rhs[row], gram.chain(coupling).chain(own));
            }
        }
        for j in 0..m {
            let coupling = (0..dn).map(|c| (-self.coupling[(c, j)], x[c]));
            let boundary = (0..m).map(|l| (-self.boundary[(j, l)], x[dn + l]));
            let own = std::iter::once((-jitter, x[dn + j]));
            r[dn + j] = dot2(self.rhs[dn + j], coupling.chain(boundary).chain(own));
        }
        r
    }
}

/// A factorization of the (jittered) saddle matrix that can be reused for
/// several right-hand sides.
enum Factored {
    Direct(Llt<f64>),
    /// `G = L Lᵀ`, `W_a = L⁻¹ B_a` and the Schur complement factor.
    Schur {
        gram: Llt<f64>,
        w: Vec<Mat<f64>>,
        complement: Option<Llt<f64>>,
    },
}

impl Factored {
    fn direct(sys: &AssembledSystem, jitter: f64) -> Result<(Self, f64)> {
        let (llt, min_pivot) = factor(sys.matrix(), jitter, "saddle matrix", sys)?;
        Ok((Factored::Direct(llt), min_pivot))
    }

    fn schur(sys: &AssembledSystem, jitter: f64) -> Result<(Self, f64)> {
        let (n, m, d) = (sys.n_interior(), sys.n_boundary(), sys.dim);
        let (gram, mut min_pivot) = factor(sys.gram.clone(), jitter, "Gram block", sys)?;
        let l = gram.L();
        // with W_a = L⁻¹ B_a the complement C - Σ W_aᵀ W_a is symmetric by
        // construction
        let mut complement = sys.boundary.clone();
        let mut w = Vec::with_capacity(d);
        for a in 0..d {
            let mut w_a = Mat::from_fn(n, m, |i, j| sys.coupling[(i * d + a, j)]);
            solve_lower_triangular_in_place(l, w_a.as_mut(), Par::Seq);
            complement -= w_a.transpose() * &w_a;
            w.push(w_a);
        }
        let complement = if m == 0 {
            None
        } else {
            let (llt, pivot) = factor(complement, jitter, "Schur complement", sys)?;
            min_pivot = min_pivot.min(pivot);
            Some(llt)
        };
        Ok((Factored::Schur { gram, w, complement }, min_pivot))
    }

    /// Solves for one stacked right-hand side `[f; g]`.
    fn solve(&self, sys: &AssembledSystem, rhs: &[f64]) -> Vec<f64> {
        match self {
            Factored::Direct(llt) => {
                let x = llt.solve(Mat::from_fn(rhs.len(), 1, |r, _| rhs[r]));
                (0..rhs.len()).map(|r| x[(r, 0)]).collect()
            }
            Factored::Schur { gram, w, complement } => {
                let (n, m, d) = (sys.n_interior(), sys.n_boundary(), sys.dim);
                let dn = d * n;
                let l = gram.L();
                let mut u = Mat::from_fn(n, d, |i, a| rhs[i * d + a]);
                solve_lower_triangular_in_place(l, u.as_mut(), Par::Seq);
                let mut reduced = Mat::from_fn(m, 1, |j, _| rhs[dn + j]);
                for (a, w_a) in w.iter().enumerate() {
                    reduced -= w_a.transpose() * u.col(a).as_mat();
                }
                let dvec = match complement {
                    Some(llt) => llt.solve(&reduced),
                    None => Mat::zeros(0, 1),
                };
                for (a, w_a) in w.iter().enumerate() {
                    let wd = w_a * &dvec;
                    for i in 0..n {
                        u[(i, a)] -= wd[(i, 0)];
                    }
                }
                solve_upper_triangular_in_place(l.transpose(), u.as_mut(), Par::Seq);
                (0..dn)
                    .map(|r| u[(r / d, r % d)])
                    .chain((0..m).map(|j| dvec[(j, 0)]))
                    .collect()
            }
        }
    }
}

/// Solves `sys` and returns the interpolant with its solution.
pub fn fit(sys: &AssembledSystem, opts: SolveOptions) -> Result<(Interpolant, Solution)> {
    let sol = solve(sys, opts)?;
    Ok((sys.interpolant(&sol), sol))
}

/// Stream function: scalar in 2D, vector in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stream {
    Scalar(f64),
    Vector([f64; 3]),
}

impl Stream {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Stream::Scalar(s) => Some(*s),
            Stream::Vector(_) => None,
        }
    }
}

/// `(ψ, q)` with `curl ψ = P_div s` and `∇q = P_curl s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potentials {
    pub stream: Stream,
    pub potential: f64,
}

/// `s`, `P_div s` and `P_curl s` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Parts {
    pub full: Vec<f64>,
    pub div: Vec<f64>,
    pub curl: Vec<f64>,
}

/// Fitted kernel interpolant
/// `s = Σ Φ(·, x_j) c_j + Σ K_bc(·, y_j) dir_j d_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolant {
    kind: InterpolantKind,
    dim: usize,
    profile: RadialProfile,
    centers: Vec<f64>,
    coeffs: Vec<f64>,
    boundary_centers: Vec<f64>,
    boundary_dirs: Vec<f64>,
    boundary_coeffs: Vec<f64>,
}

impl Interpolant {
    pub fn kind(&self) -> InterpolantKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn boundary_coeffs(&self) -> &[f64] {
        &self.boundary_coeffs
    }

    fn interior_terms(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.centers.chunks_exact(self.dim).zip(self.coeffs.chunks_exact(self.dim))
    }

    fn boundary_terms(&self) -> impl Iterator<Item = (&[f64], [f64; MAX_DIM])> {
        let d = self.dim;
        self.boundary_centers
            .chunks_exact(d)
            .zip(self.boundary_dirs.chunks_exact(d))
            .zip(&self.boundary_coeffs)
            .map(move |((y, dir), &coef)| {
                let mut b = [0.0; MAX_DIM];
                for k in 0..d {
                    b[k] = dir[k] * coef;
                }
                (y, b)
            })
    }

    /// Evaluates `s`, `P_div s` and `P_curl s` in one sweep. `s` is
    /// accumulated from `Φ = -Δφ I` directly, not as the sum of the parts.
    pub fn eval_parts(&self, x: &[f64]) -> Parts {
        let d = self.dim;
        assert_eq!(x.len(), d, "point dimension");
        let p = &self.profile;
        let (mut full, mut div, mut curl) = ([0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM]);
        let mut v = [0.0; MAX_DIM];
        let (mut t_div, mut t_curl) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        for (xj, c) in self.interior_terms() {
            diff(x, xj, &mut v);
            let v = &v[..d];
            let lap = p.neg_laplacian(v);
            div_free_apply(p, v, c, &mut t_div[..d]);
            curl_free_apply(p, v, c, &mut t_curl[..d]);
            for k in 0..d {
                full[k] += lap * c[k];
                div[k] += t_div[k];
                curl[k] += t_curl[k];
            }
        }
        for (yj, b) in self.boundary_terms() {
            diff(x, yj, &mut v);
            match self.kind {
                InterpolantKind::DivFreeBc => {
                    div_free_apply(p, &v[..d], &b[..d], &mut t_div[..d]);
                    for k in 0..d {
                        full[k] += t_div[k];
                        div[k] += t_div[k];
                    }
                }
                InterpolantKind::CurlFreeBc => {
                    curl_free_apply(p, &v[..d], &b[..d], &mut t_curl[..d]);
                    for k in 0..d {
                        full[k] += t_curl[k];
                        curl[k] += t_curl[k];
                    }
                }
                InterpolantKind::Plain => {}
            }
        }
        Parts {
            full: full[..d].to_vec(),
            div: div[..d].to_vec(),
            curl: curl[..d].to_vec(),
        }
    }

    /// `s(x)`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_parts(x).full
    }

    /// `P_div s(x)`.
    pub fn eval_div_part(&self, x: &[f64]) -> Vec<f64> {
        self.eval_parts(x).div
    }

    /// `P_curl s(x)`.
    pub fn eval_curl_part(&self, x: &[f64]) -> Vec<f64> {
        self.eval_parts(x).curl
    }

    /// Stream function and scalar potential of the two parts.
    ///
    /// With `∇φ = f1 v`: in 2D `ψ = -Σ f1 (Rv)·a` over divergence-free
    /// terms, `R` the +90° rotation; in 3D `ψ = Σ f1 v × a`; and
    /// `q = -Σ f1 v·a` over curl-free terms.
    pub fn eval_potentials(&self, x: &[f64]) -> Potentials {
        let d = self.dim;
        assert_eq!(x.len(), d, "point dimension");
        let p = &self.profile;
        let mut psi = [0.0; 3];
        let mut q = 0.0;
        let mut v = [0.0; MAX_DIM];
        let mut add_stream = |v: &[f64], a: &[f64], f1: f64| {
            if d == 2 {
                psi[0] -= f1 * (v[0] * a[1] - v[1] * a[0]);
            } else {
                psi[0] += f1 * (v[1] * a[2] - v[2] * a[1]);
                psi[1] += f1 * (v[2] * a[0] - v[0] * a[2]);
                psi[2] += f1 * (v[0] * a[1] - v[1] * a[0]);
            }
        };
        for (xj, c) in self.interior_terms() {
            diff(x, xj, &mut v);
            let (f1, _, _) = p.derivs(&v[..d]);
            add_stream(&v[..d], c, f1);
            q -= f1 * dot(&v[..d], c);
        }
        for (yj, b) in self.boundary_terms() {
            diff(x, yj, &mut v);
            let (f1, _, _) = p.derivs(&v[..d]);
            match self.kind {
                InterpolantKind::DivFreeBc => add_stream(&v[..d], &b[..d], f1),
                InterpolantKind::CurlFreeBc => q -= f1 * dot(&v[..d], &b[..d]),
                InterpolantKind::Plain => {}
            }
        }
        let stream = if d == 2 { Stream::Scalar(psi[0]) } else { Stream::Vector(psi) };
        Potentials { stream, potential: q }
    }

    /// Borrowed view of one part as a [`VectorField`].
    pub fn view(&self, part: Part) -> PartView<'_> {
        PartView { it: self, part }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Full,
    Div,
    Curl,
}

pub struct PartView<'a> {
    it: &'a Interpolant,
    part: Part,
}

impl VectorField for PartView<'_> {
    fn dim(&self) -> usize {
        self.it.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.it.dim {
            return Err(Error::DimensionMismatch {
                expected: self.it.dim,
                found: x.len(),
            });
        }
        let parts = self.it.eval_parts(x);
        Ok(match self.part {
            Part::Full => parts.full,
            Part::Div => parts.div,
            Part::Curl => parts.curl,
        })
    }
}

/// Samples `f` at the interior nodes, node-major.
pub fn sample_at_nodes(f: &dyn VectorField, nodes: &NodeSet) -> Result<Vec<f64>> {
    if f.dim() != nodes.dim() {
        return Err(Error::DimensionMismatch {
            expected: nodes.dim(),
            found: f.dim(),
        });
    }
    let mut out = Vec::with_capacity(nodes.dim() * nodes.n_interior());
    for x in nodes.interior_points() {
        out.extend(f.eval(x)?);
    }
    Ok(out)
}

/// Two-step kernel Helmholtz-Hodge decomposition
/// `f ≈ normal + leray + harmonic`.
#[derive(Debug, Clone)]
pub struct HhdDecomposition {
    /// Step 1: curl-free boundary conditions fitted to `f`.
    pub normal_fit: Interpolant,
    /// Step 2: divergence-free boundary conditions (`g = 0`) fitted to
    /// `P_div` of step 1.
    pub tangential_fit: Interpolant,
    pub residuals: [f64; 2],
}

impl HhdDecomposition {
    /// Curl-free part normal to the boundary, `P_curl` of step 1.
    pub fn normal_part(&self, x: &[f64]) -> Vec<f64> {
        self.normal_fit.eval_curl_part(x)
    }

    /// Divergence-free part tangent to the boundary, `P_div` of step 2.
    pub fn leray_part(&self, x: &[f64]) -> Vec<f64> {
        self.tangential_fit.eval_div_part(x)
    }

    /// Gradient of a harmonic function, `P_curl` of step 2.
    pub fn harmonic_part(&self, x: &[f64]) -> Vec<f64> {
        self.tangential_fit.eval_curl_part(x)
    }

    /// `[normal, leray, harmonic]` at one point.
    pub fn eval_all(&self, x: &[f64]) -> [Vec<f64>; 3] {
        let a = self.normal_fit.eval_parts(x);
        let b = self.tangential_fit.eval_parts(x);
        [a.curl, b.div, b.curl]
    }

    /// `[q_normal, ψ_leray, q_harmonic]` (2D).
    pub fn potentials(&self, x: &[f64]) -> [f64; 3] {
        let a = self.normal_fit.eval_potentials(x);
        let b = self.tangential_fit.eval_potentials(x);
        [a.potential, b.stream.scalar().unwrap_or(f64::NAN), b.potential]
    }

    pub fn normal_view(&self) -> PartView<'_> {
        self.normal_fit.view(Part::Curl)
    }

    pub fn leray_view(&self) -> PartView<'_> {
        self.tangential_fit.view(Part::Div)
    }

    pub fn harmonic_view(&self) -> PartView<'_> {
        self.tangential_fit.view(Part::Curl)
    }
}

/// Curl-free-BC fit of `f`, then divergence-free-BC fit (with `g = 0`) of
/// its divergence-free part.
pub fn full_hhd(f: &dyn VectorField, nodes: &NodeSet, p: &RadialProfile, opts: SolveOptions) -> Result<HhdDecomposition> {
    if nodes.dim() != 2 {
        return Err(Error::Unsupported("the full decomposition is implemented in 2D only"));
    }
    let f_at_x = sample_at_nodes(f, nodes)?;
    let step1 = assemble_curlfree(nodes, p, &f_at_x)?;
    let (normal_fit, sol1) = fit(&step1, opts)?;
    let mut div_at_x = Vec::with_capacity(f_at_x.len());
    for x in nodes.interior_points() {
        div_at_x.extend(normal_fit.eval_div_part(x));
    }
    let zeros = vec![0.0; nodes.n_boundary()];
    let step2 = assemble_divfree(nodes, p, &div_at_x, &zeros)?;
    let (tangential_fit, sol2) = fit(&step2, opts)?;
    Ok(HhdDecomposition {
        normal_fit,
        tangential_fit,
        residuals: [sol1.residual, sol2.residual],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{eval_curl_free_kernel, eval_div_free_kernel, matern5_profile};

    #[test]
    fn dot2_recovers_cancelled_terms() {
        // naive summation returns 0 here
        let pairs = [(1e16, 1.0), (1.0, 1.0), (-1e16, 1.0)];
        assert_eq!(dot2(0.0, pairs.into_iter()), 1.0);
        assert_eq!(dot2(2.0, std::iter::once((1.0 + f64::EPSILON, 1.0 - f64::EPSILON))), 3.0);
    }

    fn small_nodes() -> NodeSet {
        NodeSet::new(
            2,
            vec![0.0, 0.0, 0.3, 0.1, -0.2, 0.25, 0.1, -0.3],
            vec![0.5, 0.0, 0.0, 0.5],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn single_node_system() {
        let p = matern5_profile(1.0).unwrap();
        let nodes = NodeSet::new(2, vec![0.4, -0.1], vec![], vec![]).unwrap();
        let f = [1.5, -2.0];
        let sys = assemble_divfree(&nodes, &p, &f, &[]).unwrap();
        let k = sys.matrix();
        assert!((k[(0, 0)] - 2.0 / 9.0).abs() < 1e-15 && k[(0, 1)] == 0.0);
        let sol = solve(&sys, SolveOptions::default()).unwrap();
        assert!((sol.coeffs[0] - 4.5 * 1.5).abs() < 1e-13);
        assert!((sol.coeffs[1] + 4.5 * 2.0).abs() < 1e-13);
        let plain = solve(&assemble_plain(&nodes, &p, &f).unwrap(), SolveOptions::default()).unwrap();
        assert_eq!(plain.coeffs, sol.coeffs);
    }

    #[test]
    fn blocks_match_kernel_evaluators() {
        let p = matern5_profile(2.0).unwrap();
        let nodes = small_nodes();
        let f = vec![0.0; 8];
        let sys = assemble_divfree(&nodes, &p, &f, &[0.0, 0.0]).unwrap();
        let k = sys.matrix();
        for i in 0..4 {
            for j in 0..2 {
                let kd = eval_div_free_kernel(&p, nodes.interior_point(i), nodes.boundary_point(j), 2).unwrap();
                let col = kd.apply(nodes.normal(j));
                for a in 0..2 {
                    assert!((k[(sys.row_of(i, a), sys.boundary_row(j))] - col[a]).abs() < 1e-14);
                }
            }
        }
        let cf = assemble_curlfree(&nodes, &p, &f).unwrap();
        let kc = cf.matrix();
        let t0 = nodes.tangent(0).unwrap();
        let t1 = nodes.tangent(1).unwrap();
        let kk = eval_curl_free_kernel(&p, nodes.boundary_point(0), nodes.boundary_point(1), 2).unwrap();
        let c01: f64 = t0.iter().zip(kk.apply(&t1)).map(|(a, b)| a * b).sum();
        assert!((kc[(cf.boundary_row(0), cf.boundary_row(1))] - c01).abs() < 1e-14);
        assert!(cf.rhs()[8..].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn degenerate_blocks_equal_plain() {
        let p = matern5_profile(3.0).unwrap();
        let with_y = small_nodes();
        let nodes = NodeSet::new(2, with_y.interior_flat().to_vec(), vec![], vec![]).unwrap();
        let f: Vec<f64> = (0..8).map(|k| k as f64 * 0.3 - 1.0).collect();
        let plain = assemble_plain(&nodes, &p, &f).unwrap().matrix();
        let div = assemble_divfree(&nodes, &p, &f, &[]).unwrap().matrix();
        let curl = assemble_curlfree(&nodes, &p, &f).unwrap().matrix();
        assert_eq!(plain, div);
        assert_eq!(plain, curl);
        // boundary nodes are ignored by the plain system
        assert_eq!(assemble_plain(&with_y, &p, &f).unwrap().matrix(), plain);
    }

    #[test]
    fn component_major_a_is_block_diagonal() {
        let p = matern5_profile(2.0).unwrap();
        let sys = assemble_divfree(&small_nodes(), &p, &[0.0; 8], &[0.0; 2]).unwrap();
        let k = sys.matrix();
        let perm = sys.component_major_permutation();
        let n = sys.n_interior();
        for r in 0..perm.len() {
            for c in 0..perm.len() {
                let val = k[(perm[r], perm[c])];
                if r / n != c / n {
                    assert_eq!(val, 0.0);
                } else {
                    assert_eq!(val, sys.gram()[(r % n, c % n)]);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = matern5_profile(1.0).unwrap();
        let nodes = small_nodes();
        assert!(matches!(
            assemble_divfree(&nodes, &p, &[0.0; 7], &[0.0; 2]),
            Err(Error::DataLength { .. })
        ));
        assert!(matches!(
            assemble_divfree(&nodes, &p, &[0.0; 8], &[0.0; 1]),
            Err(Error::DataLength { .. })
        ));
        let n3 = NodeSet::new(3, vec![0.0; 3], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(assemble_curlfree(&n3, &p, &[0.0; 3]), Err(Error::Unsupported(_))));
        assert!(assemble_divfree(&n3, &p, &[0.0; 3], &[0.0]).is_ok());
        let sys = assemble_plain(&nodes, &p, &[0.0; 8]).unwrap();
        assert!(solve(&sys, SolveOptions { use_schur: false, jitter: -1.0 }).is_err());
    }

    #[test]
    fn factorization_failure_is_reported() {
        let p = matern5_profile(1.0).unwrap();
        // coincident up to 1e-9: distinct for the validator, numerically singular
        let nodes = NodeSet::new(2, vec![0.0, 0.0, 1e-9, 0.0, 2e-9, 1e-9], vec![], vec![]).unwrap();
        let sys = assemble_plain(&nodes, &p, &[1.0; 6]).unwrap();
        match solve(&sys, SolveOptions::default()) {
            Err(Error::Factorization { suggested_jitter, .. }) => assert!(suggested_jitter > 0.0),
            Ok(sol) => assert!(sol.min_pivot < 1e-12),
            Err(e) => panic!("{e}"),
        }
        let jit = SolveOptions {
            use_schur: false,
            jitter: 1e-8,
        };
        assert!(solve(&sys, jit).is_ok());
    }

    #[test]
    fn decays_far_away() {
        let p = matern5_profile(5.0).unwrap();
        let nodes = small_nodes();
        let sys = assemble_divfree(&nodes, &p, &[1.0; 8], &[0.0; 2]).unwrap();
        let (it, _) = fit(&sys, SolveOptions::default()).unwrap();
        let far = it.eval(&[1e3, 0.0]);
        assert!(far.iter().all(|c| c.abs() <= 1e-50));
        let pot = it.eval_potentials(&[0.0, 1e3]);
        assert!(pot.potential.abs() <= 1e-50 && pot.stream.scalar().unwrap().abs() <= 1e-50);
    }
}
