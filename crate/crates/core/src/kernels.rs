//! Scalar Matérn profile and the matrix-valued kernels built from it.
//!
//! Every kernel here is generated by differential operators acting on a
//! radial function `φ(ε|x - y|)`:
//!
//! * `Φ      = -Δφ I`
//! * `Φ_curl = -∇∇ᵀφ`
//! * `Φ_div  = (-Δ I + ∇∇ᵀ)φ`
//!
//! so that `Φ = Φ_div + Φ_curl`. The radial derivative stack is stored in the
//! "absorbed ε" convention: with `v = x - y` and `r = ε|v|`,
//!
//! ```text
//! ∇φ      = f1(r) v
//! Hess φ  = f2(r) v vᵀ + f1(r) I
//! ```
//!
//! which keeps every call site free of chain-rule factors.

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Family of scalar radial functions understood by [`RadialProfile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `φ(r) = e^{-r}(r⁵ + 15r⁴ + 105r³ + 420r² + 945r + 945) / 945`.
    Matern5,
}

/// Scalar RBF with its shape parameter baked in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile {
    kind: ProfileKind,
    eps: f64,
    tau: f64,
}

/// Builds the degree-5 Matérn profile for shape parameter `eps`.
pub fn matern5_profile(eps: f64) -> Result<RadialProfile> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidShapeParameter(eps));
    }
    Ok(RadialProfile {
        kind: ProfileKind::Matern5,
        eps,
        tau: 5.5,
    })
}

impl RadialProfile {
    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    /// Shape parameter ε.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Native-space smoothness exponent.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `φ(r)`, with `r = ε|v|` already scaled.
    pub fn f0(&self, r: f64) -> f64 {
        match self.kind {
            ProfileKind::Matern5 => {
                let p = 945.0 + r * (945.0 + r * (420.0 + r * (105.0 + r * (15.0 + r))));
                (-r).exp() * p / 945.0
            }
        }
    }

    /// `ε² φ'(r)/r`, finite at `r = 0`.
    pub fn f1(&self, r: f64) -> f64 {
        match self.kind {
            ProfileKind::Matern5 => {
                let q = 105.0 + r * (105.0 + r * (45.0 + r * (10.0 + r)));
                -self.eps * self.eps * (-r).exp() * q / 945.0
            }
        }
    }

    /// `ε⁴ (φ''(r) - φ'(r)/r) / r²`, finite at `r = 0`.
    pub fn f2(&self, r: f64) -> f64 {
        match self.kind {
            ProfileKind::Matern5 => {
                let e2 = self.eps * self.eps;
                let q = 15.0 + r * (15.0 + r * (6.0 + r));
                e2 * e2 * (-r).exp() * q / 945.0
            }
        }
    }

    /// Returns `(f1, f2, |v|²)` at separation `v`.
    #[inline]
    pub fn derivs(&self, v: &[f64]) -> (f64, f64, f64) {
        let v2: f64 = v.iter().map(|c| c * c).sum();
        let r = self.eps * v2.sqrt();
        (self.f1(r), self.f2(r), v2)
    }

    /// Diagonal value of `Φ` at separation `v`, i.e. `-Δφ`.
    #[inline]
    pub fn neg_laplacian(&self, v: &[f64]) -> f64 {
        let (f1, f2, v2) = self.derivs(v);
        -(v2 * f2 + v.len() as f64 * f1)
    }
}

/// Small dense `d × d` kernel value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMatrix {
    dim: usize,
    entries: [[f64; MAX_DIM]; MAX_DIM],
}

impl KernelMatrix {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.dim && j < self.dim);
        self.entries[i][j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[i][i]).sum()
    }

    /// `K a` for a `d`-vector `a`.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entries[i][j] * a[j]).sum())
            .collect()
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.entries[i][j]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.entries[i][j] = self.entries[j][i];
            }
        }
        out
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut m = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max((self.entries[i][j] - other.entries[i][j]).abs());
            }
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.entries[i][j] -= other.entries[i][j];
            }
        }
        out
    }
}

fn separation(x: &[f64], y: &[f64], dim: usize) -> Result<([f64; MAX_DIM], usize)> {
    if !(2..=MAX_DIM).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if x.len() != dim || y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: if x.len() != dim { x.len() } else { y.len() },
        });
    }
    let mut v = [0.0; MAX_DIM];
    for k in 0..dim {
        v[k] = x[k] - y[k];
    }
    Ok((v, dim))
}

/// `Φ(x, y) = -Δφ(|x - y|) I`.
pub fn eval_full_kernel(p: &RadialProfile, x: &[f64], y: &[f64], dim: usize) -> Result<KernelMatrix> {
    let (v, d) = separation(x, y, dim)?;
    let diag = p.neg_laplacian(&v[..d]);
    let mut k = KernelMatrix::zeros(d);
    for i in 0..d {
        k.entries[i][i] = diag;
    }
    Ok(k)
}

/// `Φ_curl(x, y) = -(f2 v vᵀ + f1 I)`.
pub fn eval_curl_free_kernel(
    p: &RadialProfile,
    x: &[f64],
    y: &[f64],
    dim: usize,
) -> Result<KernelMatrix> {
    let (v, d) = separation(x, y, dim)?;
    let (f1, f2, _) = p.derivs(&v[..d]);
    let mut k = KernelMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            k.entries[i][j] = -f2 * (v[i] * v[j]);
        }
        k.entries[i][i] -= f1;
    }
    Ok(k)
}

/// `Φ_div(x, y) = Φ(x, y) - Φ_curl(x, y)`.
pub fn eval_div_free_kernel(
    p: &RadialProfile,
    x: &[f64],
    y: &[f64],
    dim: usize,
) -> Result<KernelMatrix> {
    let full = eval_full_kernel(p, x, y, dim)?;
    let curl = eval_curl_free_kernel(p, x, y, dim)?;
    Ok(full.sub(&curl))
}

/// Closed form `Φ_div = f2 v vᵀ - (|v|² f2 + (d - 1) f1) I`.
pub fn eval_div_free_kernel_direct(
    p: &RadialProfile,
    x: &[f64],
    y: &[f64],
    dim: usize,
) -> Result<KernelMatrix> {
    let (v, d) = separation(x, y, dim)?;
    let (f1, f2, v2) = p.derivs(&v[..d]);
    let diag = v2 * f2 + (d as f64 - 1.0) * f1;
    let mut k = KernelMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            k.entries[i][j] = f2 * (v[i] * v[j]);
        }
        k.entries[i][i] -= diag;
    }
    Ok(k)
}

/// `∇ₓ φ(x - y) = f1(r) (x - y)`.
pub fn eval_scalar_gradient(p: &RadialProfile, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let (v, d) = separation(x, y, x.len())?;
    let (f1, _, _) = p.derivs(&v[..d]);
    Ok(v[..d].iter().map(|c| f1 * c).collect())
}
