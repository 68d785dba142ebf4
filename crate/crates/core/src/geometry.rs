//! Node sets, the node text format, ring-based node generation on annular
//! domains, and mesh-norm estimation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

/// Default coincidence threshold for nodes within one set.
pub const DEFAULT_MIN_SEPARATION: f64 = 1e-10;

const NORMAL_REPAIR_TOL: f64 = 1e-6;
const NORMAL_EXACT_TOL: f64 = 1e-12;
const MIN_BOUNDARY_NODES: usize = 16;
const ARCLENGTH_SEGMENTS: usize = 8192;

/// Interpolation nodes `X` and boundary nodes `Y` with outward unit normals.
///
/// Points are stored flat, `dim` coordinates per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    dim: usize,
    interior: Vec<f64>,
    boundary: Vec<f64>,
    normals: Vec<f64>,
    components: Vec<Range<usize>>,
}

impl NodeSet {
    /// Validates and builds a node set with the default duplicate threshold.
    pub fn new(dim: usize, interior: Vec<f64>, boundary: Vec<f64>, normals: Vec<f64>) -> Result<Self> {
        Self::with_min_separation(dim, interior, boundary, normals, DEFAULT_MIN_SEPARATION)
    }

    pub fn with_min_separation(
        dim: usize,
        interior: Vec<f64>,
        boundary: Vec<f64>,
        mut normals: Vec<f64>,
        min_separation: f64,
    ) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        for (len, what) in [(interior.len(), "interior"), (boundary.len(), "boundary")] {
            if len % dim != 0 {
                return Err(Error::InvalidInput(format!(
                    "{what} coordinate count {len} is not a multiple of {dim}"
                )));
            }
        }
        if normals.len() != boundary.len() {
            return Err(Error::DataLength {
                expected: boundary.len(),
                found: normals.len(),
            });
        }
        if interior.iter().chain(&boundary).chain(&normals).any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        for (index, n) in normals.chunks_exact_mut(dim).enumerate() {
            let length = n.iter().map(|c| c * c).sum::<f64>().sqrt();
            let dev = (length - 1.0).abs();
            if dev > NORMAL_REPAIR_TOL {
                return Err(Error::NonUnitNormal { index, length });
            }
            if dev > NORMAL_EXACT_TOL {
                n.iter_mut().for_each(|c| *c /= length);
            }
        }
        check_duplicates(&interior, dim, min_separation, "interior")?;
        check_duplicates(&boundary, dim, min_separation, "boundary")?;
        Ok(Self {
            dim,
            interior,
            boundary,
            normals,
            components: Vec::new(),
        })
    }

    /// Records ordered closed boundary curves as index ranges into `Y`.
    pub fn with_components(mut self, components: Vec<Range<usize>>) -> Result<Self> {
        let m = self.n_boundary();
        if components.iter().any(|c| c.start > c.end || c.end > m) {
            return Err(Error::InvalidInput("boundary component out of range".into()));
        }
        self.components = components;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `N = |X|`.
    pub fn n_interior(&self) -> usize {
        self.interior.len() / self.dim
    }

    /// `M = |Y|`.
    pub fn n_boundary(&self) -> usize {
        self.boundary.len() / self.dim
    }

    pub fn interior_point(&self, i: usize) -> &[f64] {
        &self.interior[i * self.dim..(i + 1) * self.dim]
    }

    pub fn boundary_point(&self, j: usize) -> &[f64] {
        &self.boundary[j * self.dim..(j + 1) * self.dim]
    }

    pub fn normal(&self, j: usize) -> &[f64] {
        &self.normals[j * self.dim..(j + 1) * self.dim]
    }

    /// Unit tangent `(-n₂, n₁)` at boundary node `j` (2D only).
    pub fn tangent(&self, j: usize) -> Result<[f64; 2]> {
        if self.dim != 2 {
            return Err(Error::Unsupported("boundary tangents are defined in 2D only"));
        }
        let n = self.normal(j);
        Ok([-n[1], n[0]])
    }

    pub fn interior_points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.interior.chunks_exact(self.dim)
    }

    pub fn boundary_points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.boundary.chunks_exact(self.dim)
    }

    pub fn interior_flat(&self) -> &[f64] {
        &self.interior
    }

    pub fn boundary_flat(&self) -> &[f64] {
        &self.boundary
    }

    pub fn normals_flat(&self) -> &[f64] {
        &self.normals
    }

    /// Ordered closed boundary curves, empty when unknown (e.g. loaded files).
    pub fn components(&self) -> &[Range<usize>] {
        &self.components
    }
}

fn check_duplicates(points: &[f64], dim: usize, tol: f64, set: &'static str) -> Result<()> {
    let n = points.len() / dim;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a * dim].total_cmp(&points[b * dim]));
    for (k, &a) in order.iter().enumerate() {
        let pa = &points[a * dim..(a + 1) * dim];
        for &b in &order[k + 1..] {
            let pb = &points[b * dim..(b + 1) * dim];
            if pb[0] - pa[0] > tol {
                break;
            }
            let d2: f64 = pa.iter().zip(pb).map(|(u, v)| (u - v) * (u - v)).sum();
            if d2.sqrt() <= tol {
                return Err(Error::DuplicateNode {
                    set,
                    first: a.min(b),
                    second: a.max(b),
                    tol,
                });
            }
        }
    }
    Ok(())
}

/// Reads a node file (see [`parse_nodes`]).
pub fn load_nodes(path: impl AsRef<Path>) -> Result<NodeSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nodes(&text, &path.display().to_string())
}

/// Parses the node text format.
///
/// ```text
/// # comment
/// INTERIOR
/// x y [z]
/// BOUNDARY
/// x y [z] nx ny [nz]
/// ```
pub fn parse_nodes(text: &str, source: &str) -> Result<NodeSet> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Interior,
        Boundary,
    }
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut section = Section::None;
    let mut dim: Option<usize> = None;
    let (mut interior, mut boundary, mut normals) = (Vec::new(), Vec::new(), Vec::new());
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "INTERIOR" => {
                section = Section::Interior;
                continue;
            }
            "BOUNDARY" => {
                section = Section::Boundary;
                continue;
            }
            _ => {}
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| err(lineno, format!("invalid number {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let line_dim = match section {
            Section::None => return Err(err(lineno, "data before INTERIOR/BOUNDARY header".into())),
            Section::Interior => values.len(),
            Section::Boundary => {
                if values.len() % 2 != 0 {
                    return Err(err(lineno, format!("expected 4 or 6 columns, found {}", values.len())));
                }
                values.len() / 2
            }
        };
        if !(2..=3).contains(&line_dim) {
            return Err(err(lineno, format!("unsupported column count {}", values.len())));
        }
        match dim {
            None => dim = Some(line_dim),
            Some(d) if d != line_dim => {
                return Err(err(lineno, format!("dimension {line_dim} inconsistent with {d}")));
            }
            _ => {}
        }
        if section == Section::Interior {
            interior.extend_from_slice(&values);
        } else {
            boundary.extend_from_slice(&values[..line_dim]);
            normals.extend_from_slice(&values[line_dim..]);
        }
    }
    let dim = dim.ok_or_else(|| err(0, "no nodes found".into()))?;
    NodeSet::new(dim, interior, boundary, normals)
}

/// Serializes a node set so that [`parse_nodes`] reproduces it bit for bit.
pub fn emit_nodes(nodes: &NodeSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# N={} M={} dim={}", nodes.n_interior(), nodes.n_boundary(), nodes.dim());
    out.push_str("INTERIOR\n");
    for p in nodes.interior_points() {
        push_row(&mut out, p);
    }
    out.push_str("BOUNDARY\n");
    for (j, p) in nodes.boundary_points().enumerate() {
        let row: Vec<f64> = p.iter().chain(nodes.normal(j)).copied().collect();
        push_row(&mut out, &row);
    }
    out
}

fn push_row(out: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

pub fn write_nodes(nodes: &NodeSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, emit_nodes(nodes)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Annulus,
    WavyAnnulus,
}

/// Annular 2D domain `ri ≤ |x| ≤ ro(θ)` with `ro(θ) = ro + a·cos(kθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub amplitude: f64,
    pub waves: u32,
}

impl DomainSpec {
    pub fn annulus(inner_radius: f64, outer_radius: f64) -> Result<Self> {
        Self {
            kind: DomainKind::Annulus,
            inner_radius,
            outer_radius,
            amplitude: 0.0,
            waves: 0,
        }
        .validated()
    }

    pub fn wavy_annulus(inner_radius: f64, outer_radius: f64, amplitude: f64, waves: u32) -> Result<Self> {
        Self {
            kind: DomainKind::WavyAnnulus,
            inner_radius,
            outer_radius,
            amplitude,
            waves,
        }
        .validated()
    }

    /// Annulus with radii 0.75 and 2.
    pub fn reference_annulus() -> Self {
        Self::annulus(0.75, 2.0).expect("valid constants")
    }

    /// Inner radius 0.75, outer boundary `2 + 0.2 cos 5θ`.
    pub fn reference_wavy_annulus() -> Self {
        Self::wavy_annulus(0.75, 2.0, 0.2, 5).expect("valid constants")
    }

    fn validated(self) -> Result<Self> {
        let ok = self.inner_radius.is_finite()
            && self.outer_radius.is_finite()
            && self.amplitude.is_finite()
            && self.inner_radius > 0.0
            && self.amplitude >= 0.0
            && self.outer_radius > self.inner_radius + 2.0 * self.amplitude;
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidDomain(format!(
                "need 0 < inner ({}) and outer ({}) > inner + 2·amplitude ({})",
                self.inner_radius, self.outer_radius, self.amplitude
            )))
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DomainKind::Annulus => "annulus",
            DomainKind::WavyAnnulus => "wavy-annulus",
        }
    }

    fn wave(&self) -> (f64, f64) {
        match self.kind {
            DomainKind::Annulus => (0.0, 0.0),
            DomainKind::WavyAnnulus => (self.amplitude, self.waves as f64),
        }
    }

    /// Outer boundary radius at polar angle `theta`.
    pub fn outer_radius_at(&self, theta: f64) -> f64 {
        let (a, k) = self.wave();
        self.outer_radius + a * (k * theta).cos()
    }

    fn outer_radius_derivative(&self, theta: f64) -> f64 {
        let (a, k) = self.wave();
        -a * k * (k * theta).sin()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        let r = p[0].hypot(p[1]);
        r >= self.inner_radius && r <= self.outer_radius_at(p[1].atan2(p[0]))
    }

    pub fn area(&self) -> f64 {
        let (a, _) = self.wave();
        PI * (self.outer_radius * self.outer_radius + 0.5 * a * a)
            - PI * self.inner_radius * self.inner_radius
    }

    /// Radius bounding the whole domain.
    pub fn bounding_radius(&self) -> f64 {
        self.outer_radius + self.wave().0
    }

    /// Curve `s ∈ [0, 1]` between the inner circle (`s = 0`) and the outer
    /// boundary (`s = 1`), parametrized by polar angle.
    fn blend(&self, s: f64) -> BlendCurve {
        BlendCurve { spec: *self, s }
    }
}

#[derive(Clone, Copy)]
struct BlendCurve {
    spec: DomainSpec,
    s: f64,
}

impl BlendCurve {
    fn radius(&self, theta: f64) -> f64 {
        let ri = self.spec.inner_radius;
        ri + self.s * (self.spec.outer_radius_at(theta) - ri)
    }

    fn radius_derivative(&self, theta: f64) -> f64 {
        self.s * self.spec.outer_radius_derivative(theta)
    }

    fn point(&self, theta: f64) -> [f64; 2] {
        let r = self.radius(theta);
        [r * theta.cos(), r * theta.sin()]
    }

    /// `dc/dθ`.
    fn velocity(&self, theta: f64) -> [f64; 2] {
        let (r, dr) = (self.radius(theta), self.radius_derivative(theta));
        let (s, c) = theta.sin_cos();
        [dr * c - r * s, dr * s + r * c]
    }

    fn is_circle(&self) -> bool {
        self.s == 0.0 || self.spec.kind == DomainKind::Annulus
    }

    /// Angles of `n` points equispaced in arclength, shifted by `offset`
    /// spacings.
    fn equispaced_angles(&self, n: usize, offset: f64) -> Vec<f64> {
        if self.is_circle() {
            return (0..n).map(|j| 2.0 * PI * (j as f64 + offset) / n as f64).collect();
        }
        let table = self.arclength_table();
        let total = *table.last().unwrap();
        let dtheta = 2.0 * PI / ARCLENGTH_SEGMENTS as f64;
        (0..n)
            .map(|j| {
                let target = total * (j as f64 + offset) / n as f64;
                let k = table.partition_point(|&s| s <= target).clamp(1, ARCLENGTH_SEGMENTS);
                let (s0, s1) = (table[k - 1], table[k]);
                let frac = if s1 > s0 { (target - s0) / (s1 - s0) } else { 0.0 };
                dtheta * ((k - 1) as f64 + frac)
            })
            .collect()
    }

    fn length(&self) -> f64 {
        if self.is_circle() {
            2.0 * PI * self.radius(0.0)
        } else {
            *self.arclength_table().last().unwrap()
        }
    }

    /// Cumulative arclength at `ARCLENGTH_SEGMENTS + 1` uniform angles
    /// (Simpson's rule per segment).
    fn arclength_table(&self) -> Vec<f64> {
        let speed = |t: f64| {
            let v = self.velocity(t);
            v[0].hypot(v[1])
        };
        let dtheta = 2.0 * PI / ARCLENGTH_SEGMENTS as f64;
        let mut table = Vec::with_capacity(ARCLENGTH_SEGMENTS + 1);
        let mut acc = 0.0;
        table.push(0.0);
        for k in 0..ARCLENGTH_SEGMENTS {
            let t0 = k as f64 * dtheta;
            acc += dtheta / 6.0 * (speed(t0) + 4.0 * speed(t0 + 0.5 * dtheta) + speed(t0 + dtheta));
            table.push(acc);
        }
        table
    }
}

/// Deterministic quasi-uniform nodes on an annular domain.
///
/// Nodes lie on `K + 1` curves blending the inner circle into the outer
/// boundary, `K ≈ width / h`, each curve carrying points equispaced in
/// arclength at spacing `≈ h`; odd curves are shifted by half a spacing.
/// The two boundary curves form `Y` (inner first) and are also part of `X`.
pub fn gen_domain_nodes(spec: &DomainSpec, h_target: f64) -> Result<NodeSet> {
    if !(h_target.is_finite() && h_target > 0.0) {
        return Err(Error::InvalidInput(format!("h_target must be positive, got {h_target}")));
    }
    let width = spec.outer_radius - spec.inner_radius;
    let rings = ((width / h_target).round() as usize).max(1);
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut normals = Vec::new();
    let mut components = Vec::new();
    for k in 0..=rings {
        let curve = spec.blend(k as f64 / rings as f64);
        let count = (curve.length() / h_target).round() as usize;
        let on_boundary = k == 0 || k == rings;
        if on_boundary && count < MIN_BOUNDARY_NODES {
            return Err(Error::TooCoarse {
                h: h_target,
                count,
                min: MIN_BOUNDARY_NODES,
            });
        }
        let offset = if k % 2 == 1 { 0.5 } else { 0.0 };
        let start = boundary.len() / 2;
        for theta in curve.equispaced_angles(count.max(1), offset) {
            let p = curve.point(theta);
            interior.extend_from_slice(&p);
            if !on_boundary {
                continue;
            }
            boundary.extend_from_slice(&p);
            let n = if k == 0 {
                [-theta.cos(), -theta.sin()]
            } else {
                let v = curve.velocity(theta);
                let len = v[0].hypot(v[1]);
                [v[1] / len, -v[0] / len]
            };
            normals.extend_from_slice(&n);
        }
        if on_boundary {
            components.push(start..boundary.len() / 2);
        }
    }
    NodeSet::new(2, interior, boundary, normals)?.with_components(components)
}

/// Uniform bucket grid for nearest-node queries in 2D.
pub struct NearestGrid<'a> {
    points: &'a [f64],
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> NearestGrid<'a> {
    /// Indexes flat 2D `points` (must be nonempty).
    pub fn new(points: &'a [f64]) -> Self {
        let n = points.len() / 2;
        assert!(n > 0, "NearestGrid needs at least one point");
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points.chunks_exact(2) {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let cell = (extent / (n as f64).sqrt()).max(1e-12);
        let dims = [
            ((hi[0] - lo[0]) / cell) as usize + 1,
            ((hi[1] - lo[1]) / cell) as usize + 1,
        ];
        let mut counts = vec![0usize; dims[0] * dims[1] + 1];
        let cell_of = |p: &[f64]| {
            let i = (((p[0] - lo[0]) / cell) as usize).min(dims[0] - 1);
            let j = (((p[1] - lo[1]) / cell) as usize).min(dims[1] - 1);
            j * dims[0] + i
        };
        for p in points.chunks_exact(2) {
            counts[cell_of(p) + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; n];
        for (idx, p) in points.chunks_exact(2).enumerate() {
            let c = cell_of(p);
            items[fill[c]] = idx;
            fill[c] += 1;
        }
        Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: counts,
            items,
        }
    }

    /// Distance from `q` to the closest indexed point other than `skip`.
    pub fn nearest_distance(&self, q: &[f64], skip: Option<usize>) -> f64 {
        let (nx, ny) = (self.dims[0] as i64, self.dims[1] as i64);
        // clamping projects q onto the grid box, which never increases
        // distances to indexed points
        let ci = (((q[0] - self.origin[0]) / self.cell).floor() as i64).clamp(0, nx - 1);
        let cj = (((q[1] - self.origin[1]) / self.cell).floor() as i64).clamp(0, ny - 1);
        let mut best = f64::INFINITY;
        for ring in 0..=nx.max(ny) {
            // cells on Chebyshev ring `ring` are at least (ring - 1) * cell
            // away from the projected query
            if ring > 0 && ((ring - 1) as f64) * self.cell > best {
                break;
            }
            for j in (cj - ring)..=(cj + ring) {
                if j < 0 || j >= ny {
                    continue;
                }
                let edge = j == cj - ring || j == cj + ring;
                let step = if edge { 1 } else { (2 * ring).max(1) };
                let mut i = ci - ring;
                while i <= ci + ring {
                    if i >= 0 && i < nx {
                        let c = (j * nx + i) as usize;
                        for &idx in &self.items[self.starts[c]..self.starts[c + 1]] {
                            if Some(idx) == skip {
                                continue;
                            }
                            let p = &self.points[2 * idx..2 * idx + 2];
                            best = best.min((p[0] - q[0]).hypot(p[1] - q[1]));
                        }
                    }
                    i += step;
                }
            }
        }
        best
    }
}

/// Fill distance of `X` over `spec`, estimated by dense probing.
///
/// `probe_density` is the number of probes per node; probes form a dyadic
/// lattice over the domain's bounding box plus dyadic angular samples on
/// each boundary curve, so raising the density only ever adds probes.
pub fn estimate_mesh_norm(nodes: &NodeSet, spec: &DomainSpec, probe_density: f64) -> Result<f64> {
    if nodes.n_interior() == 0 {
        return Err(Error::EmptyNodeSet);
    }
    if nodes.dim() != 2 {
        return Err(Error::Unsupported("mesh norm estimation is implemented for 2D domains"));
    }
    if !(probe_density.is_finite() && probe_density > 0.0) {
        return Err(Error::InvalidInput(format!("probe density must be positive, got {probe_density}")));
    }
    let grid = NearestGrid::new(nodes.interior_flat());
    let target_spacing = (spec.area() / (nodes.n_interior() as f64 * probe_density)).sqrt();
    let side = 2.0 * spec.bounding_radius();
    let level = (side / target_spacing).log2().ceil().max(0.0) as u32;
    let cells = 1usize << level.min(14);
    let spacing = side / cells as f64;
    let lo = -spec.bounding_radius();
    let mut h = 0.0f64;
    for j in 0..=cells {
        for i in 0..=cells {
            let q = [lo + i as f64 * spacing, lo + j as f64 * spacing];
            if spec.contains(&q) {
                h = h.max(grid.nearest_distance(&q, None));
            }
        }
    }
    let angular = 4 * cells;
    for s in [0.0, 1.0] {
        let curve = spec.blend(s);
        for k in 0..angular {
            let q = curve.point(2.0 * PI * k as f64 / angular as f64);
            h = h.max(grid.nearest_distance(&q, None));
        }
    }
    Ok(h)
}

/// `(min separation, max nearest-neighbour distance)` over `X`.
pub fn separation_stats(nodes: &NodeSet) -> Result<(f64, f64)> {
    if nodes.dim() != 2 {
        return Err(Error::Unsupported("separation statistics are implemented for 2D"));
    }
    if nodes.n_interior() < 2 {
        return Err(Error::EmptyNodeSet);
    }
    let grid = NearestGrid::new(nodes.interior_flat());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (i, p) in nodes.interior_points().enumerate() {
        let d = grid.nearest_distance(p, Some(i));
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let s = parse_nodes("# one node\nINTERIOR\n0 0\n", "t").unwrap();
        assert_eq!((s.n_interior(), s.n_boundary(), s.dim()), (1, 0, 2));
    }

    #[test]
    fn accepts_three_four_five_normal() {
        let s = parse_nodes("INTERIOR\n0 0\nBOUNDARY\n1 0 0.6 0.8\n", "t").unwrap();
        let n = s.normal(0);
        assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
        let t = s.tangent(0).unwrap();
        assert_eq!(t, [-0.8, 0.6]);
    }

    #[test]
    fn repairs_nearly_unit_normal_and_rejects_others() {
        let s = parse_nodes("INTERIOR\n0 0\nBOUNDARY\n1 0 1.0000005 0\n", "t").unwrap();
        assert_eq!(s.normal(0), &[1.0, 0.0]);
        let e = parse_nodes("INTERIOR\n0 0\nBOUNDARY\n1 0 1.1 0\n", "t").unwrap_err();
        assert!(matches!(e, Error::NonUnitNormal { index: 0, .. }));
    }

    #[test]
    fn duplicate_interior_rejected() {
        let e = parse_nodes("INTERIOR\n0.5 0.5\n1 1\n0.5 0.5\n", "t").unwrap_err();
        assert!(matches!(e, Error::DuplicateNode { set: "interior", first: 0, second: 2, .. }));
    }

    #[test]
    fn overlap_between_sets_allowed() {
        let s = parse_nodes("INTERIOR\n1 0\nBOUNDARY\n1 0 1 0\n", "t").unwrap();
        assert_eq!(s.n_boundary(), 1);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_nodes("INTERIOR\n0 0\n1 x\n", "f.txt").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        match parse_nodes("INTERIOR\n0 0\n1 1 1\n", "f.txt").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        assert!(parse_nodes("1 2\n", "f").is_err());
    }

    #[test]
    fn three_dimensional_file() {
        let s = parse_nodes("INTERIOR\n0 0 0\n1 0 0\nBOUNDARY\n0 0 1 0 0 1\n", "t").unwrap();
        assert_eq!((s.dim(), s.n_interior(), s.n_boundary()), (3, 2, 1));
        assert!(s.tangent(0).is_err());
    }

    #[test]
    fn domain_validation() {
        assert!(DomainSpec::annulus(0.0, 1.0).is_err());
        assert!(DomainSpec::annulus(1.0, 0.5).is_err());
        assert!(DomainSpec::wavy_annulus(0.75, 1.0, 0.2, 5).is_err());
        assert!(DomainSpec::wavy_annulus(0.75, 2.0, 0.2, 5).is_ok());
    }

    #[test]
    fn rejects_coarse_h() {
        let spec = DomainSpec::reference_annulus();
        assert!(matches!(gen_domain_nodes(&spec, 0.5), Err(Error::TooCoarse { .. })));
    }

    #[test]
    fn generated_boundary_on_circles() {
        let spec = DomainSpec::reference_annulus();
        let s = gen_domain_nodes(&spec, 0.2).unwrap();
        for (j, p) in s.boundary_points().enumerate() {
            let r = p[0].hypot(p[1]);
            assert!((r - 0.75).abs() <= 1e-12 || (r - 2.0).abs() <= 1e-12);
            let n = s.normal(j);
            let radial = [p[0] / r, p[1] / r];
            let sign = if (r - 2.0).abs() < 1e-9 { 1.0 } else { -1.0 };
            assert!((n[0] - sign * radial[0]).abs() < 1e-12 && (n[1] - sign * radial[1]).abs() < 1e-12);
        }
        assert_eq!(s.components().len(), 2);
    }

    #[test]
    fn wavy_normals_are_outward_and_unit() {
        let spec = DomainSpec::reference_wavy_annulus();
        let s = gen_domain_nodes(&spec, 0.15).unwrap();
        let outer = s.components()[1].clone();
        for j in outer.clone() {
            let p = s.boundary_point(j);
            let n = s.normal(j);
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
            let step = [p[0] + 1e-4 * n[0], p[1] + 1e-4 * n[1]];
            assert!(!spec.contains(&step));
            let back = [p[0] - 1e-4 * n[0], p[1] - 1e-4 * n[1]];
            assert!(spec.contains(&back));
        }
        // tangent of θ ↦ r(θ)(cos θ, sin θ) by central differences
        for j in outer {
            let p = s.boundary_point(j);
            let th = p[1].atan2(p[0]);
            let at = |t: f64| {
                let r = spec.outer_radius_at(t);
                [r * t.cos(), r * t.sin()]
            };
            let (a, b) = (at(th - 1e-6), at(th + 1e-6));
            let tangent = [b[0] - a[0], b[1] - a[1]];
            let n = s.normal(j);
            let cos = (tangent[0] * n[0] + tangent[1] * n[1]) / tangent[0].hypot(tangent[1]);
            assert!(cos.abs() < 1e-8, "{j}: {cos}");
        }
    }

    #[test]
    fn wavy_boundary_is_equispaced_in_arclength() {
        let spec = DomainSpec::reference_wavy_annulus();
        let s = gen_domain_nodes(&spec, 0.1).unwrap();
        let outer = s.components()[1].clone();
        let gaps: Vec<f64> = outer
            .clone()
            .map(|j| {
                let k = if j + 1 == outer.end { outer.start } else { j + 1 };
                let (a, b) = (s.boundary_point(j), s.boundary_point(k));
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .collect();
        let max = gaps.iter().cloned().fold(0.0, f64::max);
        let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        // chords of equal arcs differ only through curvature
        assert!(max / min < 1.01, "{min} {max}");
        assert!((max - 0.1).abs() < 0.01);
    }

    #[test]
    fn nearest_grid_matches_brute_force() {
        let spec = DomainSpec::reference_wavy_annulus();
        let s = gen_domain_nodes(&spec, 0.25).unwrap();
        let grid = NearestGrid::new(s.interior_flat());
        for k in 0..200 {
            let q = [-2.4 + 0.0243 * k as f64, 1.7 - 0.0171 * k as f64];
            let brute = s
                .interior_points()
                .map(|p| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(grid.nearest_distance(&q, None), brute);
        }
    }

    #[test]
    fn mesh_norm_single_center_on_unit_disk() {
        let spec = DomainSpec::annulus(1e-9, 1.0).unwrap();
        let s = NodeSet::new(2, vec![0.0, 0.0], vec![], vec![]).unwrap();
        let h = estimate_mesh_norm(&s, &spec, 4000.0).unwrap();
        assert!((h - 1.0).abs() < 1e-9, "{h}");
    }

    #[test]
    fn mesh_norm_of_covering_grid() {
        let spec = DomainSpec::reference_annulus();
        let step = 0.1;
        let mut pts = Vec::new();
        for i in -21..=21 {
            for j in -21..=21 {
                pts.extend_from_slice(&[i as f64 * step, j as f64 * step]);
            }
        }
        let s = NodeSet::new(2, pts, vec![], vec![]).unwrap();
        let h = estimate_mesh_norm(&s, &spec, 10.0).unwrap();
        assert!(h <= step && h > 0.5 * step, "{h}");
    }

    #[test]
    fn mesh_norm_is_monotone_in_probe_density() {
        let spec = DomainSpec::reference_wavy_annulus();
        let s = gen_domain_nodes(&spec, 0.2).unwrap();
        let mut prev = 0.0;
        for density in [1.0, 4.0, 16.0, 64.0] {
            let h = estimate_mesh_norm(&s, &spec, density).unwrap();
            assert!(h >= prev);
            prev = h;
        }
        assert!(estimate_mesh_norm(&NodeSet::new(2, vec![], vec![], vec![]).unwrap(), &spec, 1.0).is_err());
    }
}
