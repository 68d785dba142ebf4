//! Analytic target fields and sampled (tabulated) fields.
//!
//! In 2D, `curl ψ := (-∂_y ψ, ∂_x ψ)` for a scalar `ψ`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Point-to-vector map.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Wraps an infallible closure as a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }
}

/// MATLAB `peaks` function.
pub fn peaks(x: f64, y: f64) -> f64 {
    3.0 * (1.0 - x).powi(2) * (-x * x - (y + 1.0).powi(2)).exp()
        - 10.0 * (x / 5.0 - x.powi(3) - y.powi(5)) * (-x * x - y * y).exp()
        - (-(x + 1.0).powi(2) - y * y).exp() / 3.0
}

/// Closed-form gradient of [`peaks`].
pub fn peaks_gradient(x: f64, y: f64) -> [f64; 2] {
    let e1 = (-x * x - (y + 1.0).powi(2)).exp();
    let e2 = (-x * x - y * y).exp();
    let e3 = (-(x + 1.0).powi(2) - y * y).exp();
    let w = x / 5.0 - x.powi(3) - y.powi(5);
    let dx = -6.0 * (1.0 - x) * e1 - 6.0 * x * (1.0 - x).powi(2) * e1
        - 10.0 * (0.2 - 3.0 * x * x) * e2
        + 20.0 * x * w * e2
        + 2.0 * (x + 1.0) * e3 / 3.0;
    let dy = -6.0 * (y + 1.0) * (1.0 - x).powi(2) * e1 + 50.0 * y.powi(4) * e2 + 20.0 * y * w * e2
        + 2.0 * y * e3 / 3.0;
    [dx, dy]
}

/// `curl(cos(2|x|²)) = (4y sin 2|x|², -4x sin 2|x|²)`; divergence-free and
/// tangent to every circle centred at the origin.
pub fn annulus_leray_exact(x: &[f64]) -> [f64; 2] {
    let s = (2.0 * (x[0] * x[0] + x[1] * x[1])).sin();
    [4.0 * x[1] * s, -4.0 * x[0] * s]
}

/// `curl(cos(2|x|²)) + ∇peaks`.
pub fn annulus_target(x: &[f64]) -> [f64; 2] {
    let c = annulus_leray_exact(x);
    let g = peaks_gradient(x[0], x[1]);
    [c[0] + g[0], c[1] + g[1]]
}

/// [`annulus_target`] as a [`VectorField`].
pub fn annulus_target_field() -> FnField<impl Fn(&[f64]) -> Vec<f64>> {
    FnField::new(2, |x: &[f64]| annulus_target(x).to_vec())
}

/// [`annulus_leray_exact`] as a [`VectorField`].
pub fn annulus_leray_field() -> FnField<impl Fn(&[f64]) -> Vec<f64>> {
    FnField::new(2, |x: &[f64]| annulus_leray_exact(x).to_vec())
}

fn key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 name the same point
    x.iter().map(|c| (c + 0.0).to_bits()).collect()
}

/// Field known only at a table of points; exact lookup, no interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    dim: usize,
    points: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    index: HashMap<Vec<u64>, usize>,
}

impl SampledField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(p, v)| (p.as_slice(), v.as_slice()))
    }

    /// Writes the sample CSV (`x,y[,z],fx,fy[,fz]`).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let header: &[&str] = if self.dim == 2 {
            &["x", "y", "fx", "fy"]
        } else {
            &["x", "y", "z", "fx", "fy", "fz"]
        };
        w.write_record(header).map_err(|e| Error::csv(path, e))?;
        for (p, v) in self.samples() {
            let row: Vec<String> = p.iter().chain(v).map(|c| format!("{c:?}")).collect();
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl VectorField for SampledField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.index
            .get(&key(x))
            .map(|&i| self.values[i].clone())
            .ok_or_else(|| Error::MissingPoint(x.to_vec()))
    }
}

/// Builds a [`SampledField`] from `(point, value)` pairs; later duplicates
/// replace earlier ones.
pub fn sampled_field(dim: usize, table: impl IntoIterator<Item = (Vec<f64>, Vec<f64>)>) -> Result<SampledField> {
    if !(2..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    let mut field = SampledField {
        dim,
        points: Vec::new(),
        values: Vec::new(),
        index: HashMap::new(),
    };
    for (p, v) in table {
        if p.len() != dim || v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: if p.len() != dim { p.len() } else { v.len() },
            });
        }
        match field.index.get(&key(&p)) {
            Some(&i) => field.values[i] = v,
            None => {
                field.index.insert(key(&p), field.points.len());
                field.points.push(p);
                field.values.push(v);
            }
        }
    }
    Ok(field)
}

/// Reads a sample CSV; dimension follows from the header.
pub fn load_sampled_field(path: impl AsRef<Path>) -> Result<SampledField> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let dim = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "fx", "fy"] => 2,
        ["x", "y", "z", "fx", "fy", "fz"] => 3,
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("unexpected header {header:?}"),
            })
        }
    };
    let mut table = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let vals = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: k + 2,
                    msg: format!("invalid number {s:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 2 * dim {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: k + 2,
                msg: format!("expected {} columns, found {}", 2 * dim, vals.len()),
            });
        }
        table.push((vals[..dim].to_vec(), vals[dim..].to_vec()));
    }
    sampled_field(dim, table)
}
