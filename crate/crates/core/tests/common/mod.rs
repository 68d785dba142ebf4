#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbf_hhd::geometry::NodeSet;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(rng: &mut ChaCha8Rng, dim: usize, half_width: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-half_width..half_width)).collect()
}

fn shifted(x: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[k] += h;
    y
}

/// Central-difference Jacobian `J[i][k] = ∂f_i/∂x_k`.
pub fn fd_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (p, m) = (f(&shifted(x, k, h)), f(&shifted(x, k, -h)));
            p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        })
        .collect();
    (0..f(x).len()).map(|i| (0..d).map(|k| cols[k][i]).collect()).collect()
}

pub fn fd_divergence(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> f64 {
    let j = fd_jacobian(f, x, h);
    (0..x.len()).map(|k| j[k][k]).sum()
}

/// Scalar curl in 2D, vector curl in 3D.
pub fn fd_curl(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let j = fd_jacobian(f, x, h);
    match x.len() {
        2 => vec![j[1][0] - j[0][1]],
        3 => vec![j[2][1] - j[1][2], j[0][2] - j[2][0], j[1][0] - j[0][1]],
        d => panic!("no curl in dimension {d}"),
    }
}

pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| (f(&shifted(x, k, h)) - f(&shifted(x, k, -h))) / (2.0 * h))
        .collect()
}

/// 2D curl `(-∂yψ, ∂xψ)` of a scalar stream function.
pub fn fd_scalar_curl(psi: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let g = fd_gradient(psi, x, h);
    vec![-g[1], g[0]]
}

pub fn rotation_2d(t: f64) -> Vec<Vec<f64>> {
    vec![vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]
}

/// Rotation by `t` about the unit axis `u` (Rodrigues).
pub fn rotation_3d(u: &[f64], t: f64) -> Vec<Vec<f64>> {
    let (c, s) = (t.cos(), t.sin());
    let k = [[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]];
    (0..3)
        .map(|i| {
            (0..3)
                .map(|j| {
                    let kk: f64 = (0..3).map(|l| k[i][l] * k[l][j]).sum();
                    (if i == j { 1.0 } else { 0.0 }) + s * k[i][j] + (1.0 - c) * kk
                })
                .collect()
        })
        .collect()
}

pub fn mat_vec(r: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    r.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn conjugate(r: &[Vec<f64>], k: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = r.len();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|a| (0..d).map(|b| r[i][a] * k[a][b] * r[j][b]).sum::<f64>()).sum())
                .collect()
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Random node set: interior points in a ball of radius 1.5 kept `sep`
/// apart, boundary points on the sphere of radius 2 with outward normals.
pub fn random_nodes(rng: &mut ChaCha8Rng, dim: usize, n: usize, m: usize, sep: f64) -> NodeSet {
    let mut interior: Vec<Vec<f64>> = Vec::new();
    while interior.len() < n {
        let p = random_point(rng, dim, 1.5);
        if norm(&p) < 1.5 && interior.iter().all(|q| dist(q, &p) > sep) {
            interior.push(p);
        }
    }
    let mut boundary: Vec<Vec<f64>> = Vec::new();
    while boundary.len() < m {
        let mut p = random_point(rng, dim, 1.0);
        let r = norm(&p);
        if r < 1e-3 {
            continue;
        }
        p.iter_mut().for_each(|c| *c *= 2.0 / r);
        if boundary.iter().all(|q| dist(q, &p) > sep) {
            boundary.push(p);
        }
    }
    let normals: Vec<f64> = boundary.iter().flat_map(|p| p.iter().map(|c| c / 2.0)).collect();
    NodeSet::new(dim, interior.concat(), boundary.concat(), normals).unwrap()
}

// Independent oracle: kernels from φ' and φ'' of the Matérn profile
// M(r) = e^{-r} P(r) / 945, assembled entry by entry and solved by Gaussian
// elimination with partial pivoting.

const P: [f64; 6] = [945.0, 945.0, 420.0, 105.0, 15.0, 1.0];

fn poly(c: &[f64], r: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * r + a)
}

fn deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect()
}

/// `(φ'(ρ)/ρ, φ''(ρ))` for `φ(ρ) = M(ερ)`; at ρ = 0 both equal `ε² M''(0)`.
fn radial(eps: f64, rho: f64) -> (f64, f64) {
    let p1 = deriv(&P);
    let p2 = deriv(&p1);
    let r = eps * rho;
    let m1 = (-r).exp() * (poly(&p1, r) - poly(&P, r)) / 945.0;
    let m2 = (-r).exp() * (poly(&p2, r) - 2.0 * poly(&p1, r) + poly(&P, r)) / 945.0;
    let second = eps * eps * m2;
    if rho == 0.0 {
        (second, second)
    } else {
        (eps * m1 / rho, second)
    }
}

/// Hessian of `φ(|v|)`.
pub fn oracle_hessian(eps: f64, v: &[f64]) -> Vec<Vec<f64>> {
    let rho = norm(v);
    let (d1, d2) = radial(eps, rho);
    let d = v.len();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let (ei, ej) = if rho == 0.0 { (0.0, 0.0) } else { (v[i] / rho, v[j] / rho) };
                    let id = if i == j { 1.0 } else { 0.0 };
                    d2 * ei * ej + d1 * (id - ei * ej)
                })
                .collect()
        })
        .collect()
}

pub fn oracle_full(eps: f64, v: &[f64]) -> Vec<Vec<f64>> {
    let h = oracle_hessian(eps, v);
    let lap: f64 = (0..v.len()).map(|k| h[k][k]).sum();
    (0..v.len())
        .map(|i| (0..v.len()).map(|j| if i == j { -lap } else { 0.0 }).collect())
        .collect()
}

pub fn oracle_curl(eps: f64, v: &[f64]) -> Vec<Vec<f64>> {
    oracle_hessian(eps, v)
        .into_iter()
        .map(|row| row.into_iter().map(|a| -a).collect())
        .collect()
}

pub fn oracle_div(eps: f64, v: &[f64]) -> Vec<Vec<f64>> {
    let full = oracle_full(eps, v);
    let curl = oracle_curl(eps, v);
    full.iter()
        .zip(&curl)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Bc {
    Div,
    Curl,
    Plain,
}

/// Saddle matrix and right-hand side built from the oracle kernels.
pub fn oracle_system(eps: f64, nodes: &NodeSet, f: &[f64], g: &[f64], bc: Bc) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = nodes.dim();
    let n = nodes.n_interior();
    let m = if bc == Bc::Plain { 0 } else { nodes.n_boundary() };
    let size = d * n + m;
    let mut a = vec![vec![0.0; size]; size];
    let sub = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
    let dir = |j: usize| -> Vec<f64> {
        match bc {
            Bc::Curl => {
                let t = nodes.tangent(j).unwrap();
                t.to_vec()
            }
            _ => nodes.normal(j).to_vec(),
        }
    };
    let kbc = |v: &[f64]| if bc == Bc::Curl { oracle_curl(eps, v) } else { oracle_div(eps, v) };
    for i in 0..n {
        for k in 0..n {
            let phi = oracle_full(eps, &sub(nodes.interior_point(i), nodes.interior_point(k)));
            for a_ in 0..d {
                for b_ in 0..d {
                    a[i * d + a_][k * d + b_] = phi[a_][b_];
                }
            }
        }
        for j in 0..m {
            let kmat = kbc(&sub(nodes.interior_point(i), nodes.boundary_point(j)));
            let t = dir(j);
            for a_ in 0..d {
                let val: f64 = (0..d).map(|b_| kmat[a_][b_] * t[b_]).sum();
                a[i * d + a_][d * n + j] = val;
                a[d * n + j][i * d + a_] = val;
            }
        }
    }
    for j in 0..m {
        for l in 0..m {
            let kmat = kbc(&sub(nodes.boundary_point(j), nodes.boundary_point(l)));
            let (tj, tl) = (dir(j), dir(l));
            a[d * n + j][d * n + l] = (0..d).map(|p| (0..d).map(|q| tj[p] * kmat[p][q] * tl[q]).sum::<f64>()).sum();
        }
    }
    let mut rhs = f.to_vec();
    match bc {
        Bc::Div => rhs.extend_from_slice(g),
        Bc::Curl => rhs.extend(std::iter::repeat(0.0).take(m)),
        Bc::Plain => {}
    }
    (a, rhs)
}

pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    num / norm(b).max(f64::MIN_POSITIVE)
}
