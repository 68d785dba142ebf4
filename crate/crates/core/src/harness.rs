//! Convergence studies, error metrics, order fitting and run configuration.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::fields::{annulus_leray_exact, annulus_target, annulus_target_field, VectorField};
use crate::geometry::{estimate_mesh_norm, gen_domain_nodes, DomainKind, DomainSpec, NodeSet};
use crate::kernels::matern5_profile;
use crate::solver::{assemble_divfree, fit, full_hhd, sample_at_nodes, SolveOptions};

/// Above this many unknowns the Schur path is used even when not requested;
/// the dense saddle matrix would otherwise dominate memory.
pub const DIRECT_SOLVE_LIMIT: usize = 4000;

/// `‖a - b‖_{ℓ₂(X)} / ‖b‖_{ℓ₂(X)}` with `‖g‖ = sqrt(Σ|g(x)|² / #X)`.
pub fn rel_l2_error<'a>(
    a: &dyn VectorField,
    b: &dyn VectorField,
    points: impl IntoIterator<Item = &'a [f64]>,
) -> Result<f64> {
    let mut av = Vec::new();
    let mut bv = Vec::new();
    for x in points {
        av.extend(a.eval(x)?);
        bv.extend(b.eval(x)?);
    }
    rel_l2_error_values(&av, &bv, a.dim())
}

/// [`rel_l2_error`] on pre-evaluated, flattened vectors.
pub fn rel_l2_error_values(a: &[f64], b: &[f64], dim: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DataLength {
            expected: b.len(),
            found: a.len(),
        });
    }
    let count = a.len() / dim.max(1);
    if count == 0 {
        return Err(Error::EmptyNodeSet);
    }
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / count as f64;
    let den = b.iter().map(|y| y * y).sum::<f64>() / count as f64;
    if den <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((num / den).sqrt())
}

/// Least-squares slope of `log err` against `log h` and the consecutive
/// pairwise slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub pairwise: Vec<f64>,
}

pub fn fit_order(hs: &[f64], errs: &[f64]) -> Result<OrderFit> {
    if hs.len() != errs.len() {
        return Err(Error::DataLength {
            expected: hs.len(),
            found: errs.len(),
        });
    }
    if hs.len() < 2 {
        return Err(Error::InvalidInput("order fitting needs at least two levels".into()));
    }
    if hs.iter().chain(errs).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput("order fitting needs positive finite h and errors".into()));
    }
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("order fitting needs distinct h".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let pairwise = lx
        .windows(2)
        .zip(ly.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .collect();
    Ok(OrderFit {
        slope: sxy / sxx,
        pairwise,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Divergence-free boundary conditions on the annulus against the exact
    /// Leray projection.
    DivfreeAnnulus,
    /// Two-step decomposition on the wavy annulus against finest-level proxies.
    FullHhd,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::DivfreeAnnulus => "divfree-annulus",
            ExperimentKind::FullHhd => "full-hhd",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "divfree-annulus" => Ok(Self::DivfreeAnnulus),
            "full-hhd" => Ok(Self::FullHhd),
            _ => Err(Error::InvalidInput(format!("unknown experiment kind {s:?}"))),
        }
    }
}

/// Boundary data `g` for divergence-free boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryData {
    Zero,
    File(PathBuf),
}

impl FromStr for BoundaryData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(Error::InvalidInput(format!("--g expects zero or file:<path>, got {s:?}"))),
            },
        }
    }
}

/// Parses `annulus` / `wavy-annulus` into the shipped reference domains.
pub fn parse_domain(s: &str) -> Result<DomainSpec> {
    match s {
        "annulus" => Ok(DomainSpec::reference_annulus()),
        "wavy-annulus" => Ok(DomainSpec::reference_wavy_annulus()),
        _ => Err(Error::InvalidInput(format!("unknown domain {s:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub eps: f64,
    /// Number of refinement levels.
    pub levels: usize,
    /// Target spacing of the coarsest level; level `k` uses `h0 · 2^{-k/2}`,
    /// roughly doubling the node count per level. `None` picks the study
    /// default, see [`RunConfig::coarsest_spacing`].
    pub h0: Option<f64>,
    pub kind: ExperimentKind,
    pub g: BoundaryData,
    pub out: PathBuf,
    pub schur: bool,
    pub jitter: f64,
    pub nodes: Option<PathBuf>,
    pub probe_density: f64,
    /// Write measured wall times into the report CSV (otherwise `0`).
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::reference_annulus(),
            eps: 5.0,
            levels: 4,
            h0: None,
            kind: ExperimentKind::DivfreeAnnulus,
            g: BoundaryData::Zero,
            out: PathBuf::from("out"),
            schur: false,
            jitter: 0.0,
            nodes: None,
            probe_density: 10.0,
            timing: false,
        }
    }
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidInput(format!("invalid value {value:?} for {what}"));
        let parse_bool = |v: &str| match v {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(bad(key)),
        };
        match key {
            "domain" => {
                self.domain = parse_domain(value)?;
                self.kind = match self.domain.kind {
                    DomainKind::Annulus => ExperimentKind::DivfreeAnnulus,
                    DomainKind::WavyAnnulus => ExperimentKind::FullHhd,
                };
            }
            "eps" => self.eps = value.parse().map_err(|_| bad(key))?,
            "levels" => self.levels = value.parse().map_err(|_| bad(key))?,
            "h0" => self.h0 = Some(value.parse().map_err(|_| bad(key))?),
            "kind" => self.kind = value.parse()?,
            "g" => self.g = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            "schur" => self.schur = parse_bool(value)?,
            "jitter" => self.jitter = value.parse().map_err(|_| bad(key))?,
            "nodes" => self.nodes = Some(PathBuf::from(value)),
            "probe_density" | "probe-density" => self.probe_density = value.parse().map_err(|_| bad(key))?,
            "timing" => self.timing = parse_bool(value)?,
            _ => return Err(Error::InvalidInput(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "config".into(),
                line: k + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: "config".into(),
                line: k + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        matern5_profile(self.eps)?;
        if self.levels < 3 {
            return Err(Error::InvalidInput(format!("need at least 3 levels, got {}", self.levels)));
        }
        let h0 = self.coarsest_spacing();
        if !(h0.is_finite() && h0 > 0.0) {
            return Err(Error::InvalidInput(format!("h0 must be positive, got {h0}")));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidInput(format!("jitter must be nonnegative, got {}", self.jitter)));
        }
        if self.g != BoundaryData::Zero {
            return Err(Error::InvalidInput("convergence studies use g = 0".into()));
        }
        match (self.kind, self.domain.kind) {
            (ExperimentKind::DivfreeAnnulus, DomainKind::Annulus) | (ExperimentKind::FullHhd, _) => Ok(()),
            _ => Err(Error::InvalidInput(
                "the divergence-free study needs a circular annulus (exact Leray field)".into(),
            )),
        }
    }

    /// `h0`, or the study default: N ≈ 600 → 4800 for the annulus study, and
    /// one level finer for the two-step study, whose finest level only serves
    /// as the proxy reference and whose coarsest levels are pre-asymptotic
    /// where the wavy boundary cuts the target's steep features.
    pub fn coarsest_spacing(&self) -> f64 {
        self.h0.unwrap_or(match self.kind {
            ExperimentKind::DivfreeAnnulus => 0.14,
            ExperimentKind::FullHhd => 0.099,
        })
    }

    /// Target spacing per level, coarsest first.
    pub fn level_spacings(&self) -> Vec<f64> {
        let h0 = self.coarsest_spacing();
        (0..self.levels).map(|k| h0 * 0.5f64.powf(0.5 * k as f64)).collect()
    }

    /// Spacing of the evaluation set of the divergence-free study, one level
    /// finer than the last fitted level.
    pub fn reference_spacing(&self) -> f64 {
        self.coarsest_spacing() * 0.5f64.powf(0.5 * self.levels as f64)
    }

    /// Solver options for a system of `size` unknowns.
    pub fn solve_options(&self, size: usize) -> SolveOptions {
        SolveOptions {
            use_schur: self.schur || size > DIRECT_SOLVE_LIMIT,
            jitter: self.jitter,
        }
    }
}

/// One refinement level of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub level: usize,
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub rel_err_full: f64,
    /// Divergence-free part (Leray part for the two-step study).
    pub rel_err_div: f64,
    /// Curl-free part (normal part for the two-step study).
    pub rel_err_curl: f64,
    /// Harmonic part, two-step study only.
    pub rel_err_harmonic: Option<f64>,
    /// Largest linear-solve relative residual.
    pub residual: f64,
    /// `max_j |Σ parts(x_j) - f(x_j)| / max_j |f(x_j)|`, two-step study only.
    pub sum_residual: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOrder {
    pub column: &'static str,
    pub fit: OrderFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub kind: ExperimentKind,
    pub eps: f64,
    pub levels: Vec<LevelResult>,
    pub orders: Vec<ColumnOrder>,
    pub timing: bool,
}

impl ConvergenceReport {
    pub fn order(&self, column: &str) -> Option<&OrderFit> {
        self.orders.iter().find(|o| o.column == column).map(|o| &o.fit)
    }

    fn fit_columns(&mut self) -> Result<()> {
        // the finest level is the reference for proxy errors and is excluded
        let usable: Vec<&LevelResult> = match self.kind {
            ExperimentKind::DivfreeAnnulus => self.levels.iter().collect(),
            ExperimentKind::FullHhd => self.levels.iter().take(self.levels.len().saturating_sub(1)).collect(),
        };
        let hs: Vec<f64> = usable.iter().map(|l| l.h).collect();
        let mut columns: Vec<(&'static str, Vec<f64>)> = vec![
            ("rel_err_full", usable.iter().map(|l| l.rel_err_full).collect()),
            ("rel_err_div", usable.iter().map(|l| l.rel_err_div).collect()),
            ("rel_err_curl", usable.iter().map(|l| l.rel_err_curl).collect()),
        ];
        if self.kind == ExperimentKind::FullHhd {
            columns.push((
                "rel_err_harmonic",
                usable.iter().map(|l| l.rel_err_harmonic.unwrap_or(f64::NAN)).collect(),
            ));
        }
        self.orders = columns
            .into_iter()
            .map(|(column, errs)| Ok(ColumnOrder { column, fit: fit_order(&hs, &errs)? }))
            .collect::<Result<_>>()?;
        Ok(())
    }
}

fn level_nodes(cfg: &RunConfig) -> Result<Vec<NodeSet>> {
    cfg.level_spacings()
        .into_iter()
        .map(|h| gen_domain_nodes(&cfg.domain, h))
        .collect()
}

fn eval_many(points: &NodeSet, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    points.interior_points().flat_map(f).collect()
}

/// Divergence-free boundary conditions with `g = 0` on the annulus; the
/// divergence-free part is compared with the exact Leray projection on a
/// reference node set finer than every fitted level.
pub fn run_divfree_annulus(cfg: &RunConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::DivfreeAnnulus {
        return Err(Error::InvalidInput("config kind is not divfree-annulus".into()));
    }
    let profile = matern5_profile(cfg.eps)?;
    let sets = level_nodes(cfg)?;
    // one refinement past the finest level: the finest fit interpolates its
    // own nodes, so measuring there would collapse its error to the residual
    let reference = &gen_domain_nodes(&cfg.domain, cfg.reference_spacing())?;
    let exact_full = eval_many(reference, |x| annulus_target(x).to_vec());
    let exact_div = eval_many(reference, |x| annulus_leray_exact(x).to_vec());
    let exact_curl: Vec<f64> = exact_full.iter().zip(&exact_div).map(|(a, b)| a - b).collect();
    let target = annulus_target_field();

    let mut levels = Vec::with_capacity(sets.len());
    for (level, nodes) in sets.iter().enumerate() {
        let start = Instant::now();
        let f_at_x = sample_at_nodes(&target, nodes)?;
        let g = vec![0.0; nodes.n_boundary()];
        let sys = assemble_divfree(nodes, &profile, &f_at_x, &g)?;
        let (it, sol) = fit(&sys, cfg.solve_options(sys.size()))?;
        let (mut full, mut div, mut curl) = (Vec::new(), Vec::new(), Vec::new());
        for x in reference.interior_points() {
            let parts = it.eval_parts(x);
            full.extend(parts.full);
            div.extend(parts.div);
            curl.extend(parts.curl);
        }
        let h = estimate_mesh_norm(nodes, &cfg.domain, cfg.probe_density)?;
        let result = LevelResult {
            level,
            n: nodes.n_interior(),
            m: nodes.n_boundary(),
            h,
            rel_err_full: rel_l2_error_values(&full, &exact_full, 2)?,
            rel_err_div: rel_l2_error_values(&div, &exact_div, 2)?,
            rel_err_curl: rel_l2_error_values(&curl, &exact_curl, 2)?,
            rel_err_harmonic: None,
            residual: sol.residual,
            sum_residual: None,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "level {level}: N={} M={} h={:.4} err_div={:.3e} err_full={:.3e} residual={:.1e} ({:.1}s)",
            result.n,
            result.m,
            result.h,
            result.rel_err_div,
            result.rel_err_full,
            result.residual,
            result.seconds
        );
        levels.push(result);
    }
    let mut report = ConvergenceReport {
        kind: cfg.kind,
        eps: cfg.eps,
        levels,
        orders: Vec::new(),
        timing: cfg.timing,
    };
    report.fit_columns()?;
    Ok(report)
}

/// Two-step decomposition per level; each part is compared with the finest
/// level's approximation of the same part on the finest level's nodes.
pub fn run_full_hhd(cfg: &RunConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::FullHhd {
        return Err(Error::InvalidInput("config kind is not full-hhd".into()));
    }
    let profile = matern5_profile(cfg.eps)?;
    let sets = level_nodes(cfg)?;
    let target = annulus_target_field();

    let mut fits = Vec::with_capacity(sets.len());
    for nodes in &sets {
        let start = Instant::now();
        let size = 2 * nodes.n_interior() + nodes.n_boundary();
        let hhd = full_hhd(&target, nodes, &profile, cfg.solve_options(size))?;
        let f_at_x = sample_at_nodes(&target, nodes)?;
        let fmax = f_at_x.chunks_exact(2).map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for (x, f) in nodes.interior_points().zip(f_at_x.chunks_exact(2)) {
            let [a, b, c] = hhd.eval_all(x);
            worst = worst.max((a[0] + b[0] + c[0] - f[0]).hypot(a[1] + b[1] + c[1] - f[1]));
        }
        fits.push((hhd, worst / fmax, start.elapsed().as_secs_f64()));
    }

    let reference = sets.last().expect("at least 3 levels");
    let exact_full = eval_many(reference, |x| annulus_target(x).to_vec());
    let proxy = &fits.last().expect("at least 3 levels").0;
    let mut proxies: [Vec<f64>; 3] = Default::default();
    for x in reference.interior_points() {
        for (acc, part) in proxies.iter_mut().zip(proxy.eval_all(x)) {
            acc.extend(part);
        }
    }

    let mut levels = Vec::with_capacity(sets.len());
    for (level, (nodes, (hhd, sum_residual, seconds))) in sets.iter().zip(&fits).enumerate() {
        let start = Instant::now();
        let mut parts: [Vec<f64>; 3] = Default::default();
        let mut full = Vec::new();
        for x in reference.interior_points() {
            full.extend(hhd.normal_fit.eval(x));
            for (acc, part) in parts.iter_mut().zip(hhd.eval_all(x)) {
                acc.extend(part);
            }
        }
        let h = estimate_mesh_norm(nodes, &cfg.domain, cfg.probe_density)?;
        let result = LevelResult {
            level,
            n: nodes.n_interior(),
            m: nodes.n_boundary(),
            h,
            rel_err_full: rel_l2_error_values(&full, &exact_full, 2)?,
            rel_err_div: rel_l2_error_values(&parts[1], &proxies[1], 2)?,
            rel_err_curl: rel_l2_error_values(&parts[0], &proxies[0], 2)?,
            rel_err_harmonic: Some(rel_l2_error_values(&parts[2], &proxies[2], 2)?),
            residual: hhd.residuals[0].max(hhd.residuals[1]),
            sum_residual: Some(*sum_residual),
            seconds: seconds + start.elapsed().as_secs_f64(),
        };
        log::info!(
            "level {level}: N={} M={} h={:.4} normal={:.3e} leray={:.3e} harmonic={:.3e} sum={:.1e}",
            result.n,
            result.m,
            result.h,
            result.rel_err_curl,
            result.rel_err_div,
            result.rel_err_harmonic.unwrap_or(f64::NAN),
            sum_residual
        );
        levels.push(result);
    }
    let mut report = ConvergenceReport {
        kind: cfg.kind,
        eps: cfg.eps,
        levels,
        orders: Vec::new(),
        timing: cfg.timing,
    };
    report.fit_columns()?;
    Ok(report)
}

/// Order threshold for the convergence checks; desk-scale node counts sit
/// below the asymptotic 5.5.
pub const MIN_ORDER: f64 = 4.5;
/// Largest accepted finest-level Leray error in the annulus study.
pub const MAX_FINEST_DIV_ERROR: f64 = 1e-4;
/// Largest accepted sum-of-parts residual in the two-step study.
pub const MAX_SUM_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Threshold checks applied by `converge --check`.
pub fn check_report(report: &ConvergenceReport) -> Vec<CheckOutcome> {
    let at_least = |name: &str, value: f64, threshold: f64| CheckOutcome {
        name: name.to_string(),
        value,
        threshold,
        passed: value >= threshold,
    };
    let at_most = |name: &str, value: f64, threshold: f64| CheckOutcome {
        name: name.to_string(),
        value,
        threshold,
        passed: value <= threshold,
    };
    let order = |col: &str| report.order(col).map_or(f64::NAN, |o| o.slope);
    let mut out = Vec::new();
    match report.kind {
        ExperimentKind::DivfreeAnnulus => {
            out.push(at_least("order rel_err_div", order("rel_err_div"), MIN_ORDER));
            out.push(at_least("order rel_err_full", order("rel_err_full"), MIN_ORDER));
            let finest = report.levels.last().map_or(f64::NAN, |l| l.rel_err_div);
            out.push(at_most("finest rel_err_div", finest, MAX_FINEST_DIV_ERROR));
        }
        ExperimentKind::FullHhd => {
            out.push(at_least("order normal part", order("rel_err_curl"), MIN_ORDER));
            out.push(at_least("order leray part", order("rel_err_div"), MIN_ORDER));
            out.push(at_least("order harmonic part", order("rel_err_harmonic"), MIN_ORDER));
            let worst = report
                .levels
                .iter()
                .map(|l| l.sum_residual.unwrap_or(f64::NAN))
                .fold(0.0, f64::max);
            out.push(at_most("max sum-of-parts residual", worst, MAX_SUM_RESIDUAL));
        }
    }
    out
}

/// Dispatches on `cfg.kind`.
pub fn run(cfg: &RunConfig) -> Result<ConvergenceReport> {
    match cfg.kind {
        ExperimentKind::DivfreeAnnulus => run_divfree_annulus(cfg),
        ExperimentKind::FullHhd => run_full_hhd(cfg),
    }
}
