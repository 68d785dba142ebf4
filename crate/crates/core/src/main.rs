use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use rbf_hhd::fields::{annulus_target_field, load_sampled_field, sampled_field};
use rbf_hhd::geometry::{gen_domain_nodes, load_nodes, write_nodes, DomainSpec, NodeSet};
use rbf_hhd::harness::{check_report, run, BoundaryData, RunConfig};
use rbf_hhd::kernels::matern5_profile;
use rbf_hhd::output::{
    emit_outputs, quiver_contour_svg, write_decomposition_csv, write_hhd_csv, write_text, DecompositionSample,
};
use rbf_hhd::solver::{
    assemble_curlfree, assemble_divfree, assemble_plain, fit, full_hhd, sample_at_nodes, Interpolant,
};
use rbf_hhd::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CHECK: u8 = 4;

/// Helmholtz-Hodge decomposition of 2D/3D vector fields with matrix-valued
/// radial basis function interpolants.
#[derive(Parser)]
#[command(name = "rbf-hhd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate interior and boundary nodes for a reference domain.
    GenNodes {
        #[command(flatten)]
        common: Common,
        /// Target spacing (defaults to the coarsest study spacing).
        #[arg(long)]
        h: Option<f64>,
    },
    /// Fit one interpolant and write its div-free/curl-free parts.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        h: Option<f64>,
        /// Field samples `x,y,fx,fy` at the interior nodes (default: the
        /// built-in annulus target).
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Boundary conditions: divfree, curlfree or none.
        #[arg(long, default_value = "divfree")]
        bc: String,
        /// Side length of the plotting lattice.
        #[arg(long, default_value_t = 28)]
        grid: usize,
    },
    /// Two-step normal / Leray / harmonic decomposition.
    Hhd {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long, default_value_t = 28)]
        grid: usize,
    },
    /// Convergence study over refinement levels.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Exit with status 4 if an order or error threshold is missed.
        #[arg(long)]
        check: bool,
    },
}

/// Settings shared by every subcommand; each overrides the config key of the
/// same name.
#[derive(Args)]
struct Common {
    /// `key=value` file; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// annulus or wavy-annulus.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    /// Coarsest-level spacing.
    #[arg(long)]
    h0: Option<f64>,
    /// divfree-annulus or full-hhd.
    #[arg(long)]
    kind: Option<String>,
    /// Boundary data: zero or file:<path> with columns `x,y,g`.
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solve through the Schur complement of the interior block.
    #[arg(long)]
    schur: bool,
    /// Diagonal shift added before factorization.
    #[arg(long)]
    jitter: Option<f64>,
    /// Node file to use instead of the generator.
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    probe_density: Option<f64>,
    /// Record wall times in the report.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn resolve(&self) -> rbf_hhd::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                RunConfig::parse(&text).map_err(|e| match e {
                    Error::Parse { line, msg, .. } => Error::Parse {
                        path: path.display().to_string(),
                        line,
                        msg,
                    },
                    other => other,
                })?
            }
            None => RunConfig::default(),
        };
        let mut flags: Vec<(&str, String)> = Vec::new();
        // domain first: it resets the experiment kind, which --kind may override
        if let Some(v) = &self.domain {
            flags.push(("domain", v.clone()));
        }
        if let Some(v) = self.eps {
            flags.push(("eps", v.to_string()));
        }
        if let Some(v) = &self.levels {
            flags.push(("levels", v.to_string()));
        }
        if let Some(v) = self.h0 {
            flags.push(("h0", v.to_string()));
        }
        if let Some(v) = &self.kind {
            flags.push(("kind", v.clone()));
        }
        if let Some(v) = &self.g {
            flags.push(("g", v.clone()));
        }
        if let Some(v) = &self.out {
            flags.push(("out", v.display().to_string()));
        }
        if self.schur {
            flags.push(("schur", "true".into()));
        }
        if let Some(v) = self.jitter {
            flags.push(("jitter", v.to_string()));
        }
        if let Some(v) = &self.nodes {
            flags.push(("nodes", v.display().to_string()));
        }
        if let Some(v) = self.probe_density {
            flags.push(("probe_density", v.to_string()));
        }
        if self.timing {
            flags.push(("timing", "true".into()));
        }
        for (key, value) in flags {
            cfg.set(key, &value)?;
        }
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Factorization { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn dispatch(command: Command) -> rbf_hhd::Result<u8> {
    match command {
        Command::GenNodes { common, h } => {
            let cfg = common.resolve()?;
            let nodes = gen_domain_nodes(&cfg.domain, h.unwrap_or(cfg.coarsest_spacing()))?;
            std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
            let path = cfg.out.join("nodes.txt");
            write_nodes(&nodes, &path)?;
            println!(
                "{}: N={} M={} -> {}",
                cfg.domain.name(),
                nodes.n_interior(),
                nodes.n_boundary(),
                path.display()
            );
            Ok(0)
        }
        Command::Decompose {
            common,
            h,
            samples,
            bc,
            grid,
        } => {
            let cfg = common.resolve()?;
            decompose(&cfg, h, samples.as_deref(), &bc, grid)?;
            Ok(0)
        }
        Command::Hhd {
            common,
            h,
            samples,
            grid,
        } => {
            let cfg = common.resolve()?;
            hhd(&cfg, h, samples.as_deref(), grid)?;
            Ok(0)
        }
        Command::Converge { common, check } => {
            let cfg = common.resolve()?;
            if cfg.nodes.is_some() {
                return Err(Error::InvalidInput(
                    "converge generates its own node sets; --nodes is not accepted".into(),
                ));
            }
            let report = run(&cfg)?;
            let written = emit_outputs(&report, &cfg.out)?;
            println!("{:>5} {:>6} {:>5} {:>9} {:>12} {:>12} {:>12}", "level", "N", "M", "h", "err_full", "err_div", "err_curl");
            for l in &report.levels {
                println!(
                    "{:>5} {:>6} {:>5} {:>9.5} {:>12.4e} {:>12.4e} {:>12.4e}",
                    l.level, l.n, l.m, l.h, l.rel_err_full, l.rel_err_div, l.rel_err_curl
                );
            }
            for o in &report.orders {
                println!("order {}: {:.3}", o.column, o.fit.slope);
            }
            for p in written {
                println!("wrote {}", p.display());
            }
            if check {
                let mut ok = true;
                for c in check_report(&report) {
                    println!(
                        "{} {}: {:.4e} (threshold {:.1e})",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.value,
                        c.threshold
                    );
                    ok &= c.passed;
                }
                if !ok {
                    return Ok(EXIT_CHECK);
                }
            }
            Ok(0)
        }
    }
}

fn node_set(cfg: &RunConfig, h: Option<f64>) -> rbf_hhd::Result<NodeSet> {
    match &cfg.nodes {
        Some(path) => load_nodes(path),
        None => gen_domain_nodes(&cfg.domain, h.unwrap_or(cfg.coarsest_spacing())),
    }
}

fn samples_at(nodes: &NodeSet, samples: Option<&Path>) -> rbf_hhd::Result<Vec<f64>> {
    match samples {
        Some(path) => sample_at_nodes(&load_sampled_field(path)?, nodes),
        None => sample_at_nodes(&annulus_target_field(), nodes),
    }
}

fn bits(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| (v + 0.0).to_bits()).collect()
}

fn boundary_values(cfg: &RunConfig, nodes: &NodeSet) -> rbf_hhd::Result<Vec<f64>> {
    let path = match &cfg.g {
        BoundaryData::Zero => return Ok(vec![0.0; nodes.n_boundary()]),
        BoundaryData::File(path) => path,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut table = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let vals: Vec<f64> = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line,
                msg: e.to_string(),
            })?;
        if vals.len() != nodes.dim() + 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("expected {} columns, found {}", nodes.dim() + 1, vals.len()),
            });
        }
        table.insert(bits(&vals[..nodes.dim()]), vals[nodes.dim()]);
    }
    nodes
        .boundary_points()
        .map(|y| table.get(&bits(y)).copied().ok_or_else(|| Error::MissingPoint(y.to_vec())))
        .collect()
}

fn plot_domain(cfg: &RunConfig) -> Option<&DomainSpec> {
    // plots need a domain description, which node files do not carry
    cfg.nodes.is_none().then_some(&cfg.domain)
}

fn require_2d(nodes: &NodeSet) -> rbf_hhd::Result<()> {
    if nodes.dim() == 2 {
        Ok(())
    } else {
        Err(Error::Unsupported("sample output is written for 2D node sets only"))
    }
}

fn decompose(cfg: &RunConfig, h: Option<f64>, samples: Option<&Path>, bc: &str, grid: usize) -> rbf_hhd::Result<()> {
    let profile = matern5_profile(cfg.eps)?;
    let nodes = node_set(cfg, h)?;
    require_2d(&nodes)?;
    let f_at_x = samples_at(&nodes, samples)?;
    let sys = match bc {
        "divfree" => assemble_divfree(&nodes, &profile, &f_at_x, &boundary_values(cfg, &nodes)?)?,
        "curlfree" => assemble_curlfree(&nodes, &profile, &f_at_x)?,
        "none" => assemble_plain(&nodes, &profile, &f_at_x)?,
        other => return Err(Error::InvalidInput(format!("--bc expects divfree, curlfree or none, got {other:?}"))),
    };
    let (it, sol) = fit(&sys, cfg.solve_options(sys.size()))?;
    info!("N={} M={} residual={:.2e}", nodes.n_interior(), nodes.n_boundary(), sol.residual);
    if sol.residual > 1e-6 {
        warn!("large solve residual {:.2e}; consider --jitter", sol.residual);
    }

    let rows: Vec<DecompositionSample> = nodes
        .interior_points()
        .map(|x| {
            let parts = it.eval_parts(x);
            let pots = it.eval_potentials(x);
            DecompositionSample {
                point: [x[0], x[1]],
                full: [parts.full[0], parts.full[1]],
                div: [parts.div[0], parts.div[1]],
                curl: [parts.curl[0], parts.curl[1]],
                psi: pots.stream.scalar().unwrap_or(f64::NAN),
                q: pots.potential,
            }
        })
        .collect();
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let csv_path = cfg.out.join("decomposition.csv");
    write_decomposition_csv(&rows, &csv_path)?;
    println!("wrote {}", csv_path.display());
    if let Some(domain) = plot_domain(cfg) {
        write_part_svgs(&it, domain, grid, &cfg.out)?;
    }
    Ok(())
}

fn write_part_svgs(it: &Interpolant, domain: &DomainSpec, grid: usize, out: &Path) -> rbf_hhd::Result<()> {
    let div = quiver_contour_svg(domain, "divergence-free part, stream function", grid, |x| {
        let v = it.eval_div_part(x);
        ([v[0], v[1]], it.eval_potentials(x).stream.scalar().unwrap_or(0.0))
    });
    let curl = quiver_contour_svg(domain, "curl-free part, potential", grid, |x| {
        let v = it.eval_curl_part(x);
        ([v[0], v[1]], it.eval_potentials(x).potential)
    });
    for (name, svg) in [("div_part.svg", div), ("curl_part.svg", curl)] {
        let path = out.join(name);
        write_text(&path, &svg)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn hhd(cfg: &RunConfig, h: Option<f64>, samples: Option<&Path>, grid: usize) -> rbf_hhd::Result<()> {
    if cfg.g != BoundaryData::Zero {
        return Err(Error::InvalidInput("the two-step decomposition uses g = 0".into()));
    }
    let profile = matern5_profile(cfg.eps)?;
    let nodes = node_set(cfg, h)?;
    require_2d(&nodes)?;
    let f_at_x = samples_at(&nodes, samples)?;
    let field = sampled_field(
        2,
        nodes
            .interior_points()
            .zip(f_at_x.chunks_exact(2))
            .map(|(x, f)| (x.to_vec(), f.to_vec())),
    )?;
    let size = 2 * nodes.n_interior() + nodes.n_boundary();
    let dec = full_hhd(&field, &nodes, &profile, cfg.solve_options(size))?;
    info!(
        "N={} M={} residuals={:.2e}/{:.2e}",
        nodes.n_interior(),
        nodes.n_boundary(),
        dec.residuals[0],
        dec.residuals[1]
    );

    let rows: Vec<([f64; 2], [[f64; 2]; 3], [f64; 3])> = nodes
        .interior_points()
        .map(|x| {
            let [a, b, c] = dec.eval_all(x);
            ([x[0], x[1]], [[a[0], a[1]], [b[0], b[1]], [c[0], c[1]]], dec.potentials(x))
        })
        .collect();
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let csv_path = cfg.out.join("hhd.csv");
    write_hhd_csv(&rows, &csv_path)?;
    println!("wrote {}", csv_path.display());

    if let Some(domain) = plot_domain(cfg) {
        let plots: [(&str, &str, usize); 3] = [
            ("normal.svg", "normal part, potential", 0),
            ("leray.svg", "Leray part, stream function", 1),
            ("harmonic.svg", "harmonic part, potential", 2),
        ];
        for (name, title, k) in plots {
            let svg = quiver_contour_svg(domain, title, grid, |x| {
                let v = &dec.eval_all(x)[k];
                ([v[0], v[1]], dec.potentials(x)[k])
            });
            let path = cfg.out.join(name);
            write_text(&path, &svg)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
