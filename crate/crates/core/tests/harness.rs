use rbf_hhd::geometry::DomainSpec;
use rbf_hhd::harness::*;
use rbf_hhd::output::*;
use rbf_hhd::Error;

fn synthetic(kind: ExperimentKind, levels: usize) -> ConvergenceReport {
    let levels: Vec<LevelResult> = (0..levels)
        .map(|k| {
            let h = 0.1 * 0.5f64.powf(0.5 * k as f64);
            LevelResult {
                level: k,
                n: 600 << k,
                m: 120 + 40 * k,
                h,
                rel_err_full: 3.0 * h.powf(5.5),
                rel_err_div: 7.0 * h.powf(5.5),
                rel_err_curl: 0.5 * h.powf(5.0),
                rel_err_harmonic: (kind == ExperimentKind::FullHhd).then(|| 2.0 * h.powf(5.5)),
                residual: 1e-13 * (k + 1) as f64,
                sum_residual: (kind == ExperimentKind::FullHhd).then_some(1e-12),
                seconds: 0.25 * k as f64,
            }
        })
        .collect();
    let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
    let column = |name: &'static str, f: fn(&LevelResult) -> f64| ColumnOrder {
        column: name,
        fit: fit_order(&hs, &levels.iter().map(f).collect::<Vec<_>>()).unwrap(),
    };
    let orders = if levels.len() >= 2 {
        vec![
            column("rel_err_full", |l| l.rel_err_full),
            column("rel_err_div", |l| l.rel_err_div),
            column("rel_err_curl", |l| l.rel_err_curl),
        ]
    } else {
        Vec::new()
    };
    ConvergenceReport {
        kind,
        eps: 5.0,
        levels,
        orders,
        timing: true,
    }
}

#[test]
fn empty_report_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_report_csv(&synthetic(ExperimentKind::DivfreeAnnulus, 0), &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        "level,N,M,h,rel_err_full,rel_err_div,rel_err_curl,residual,seconds\n"
    );
}

#[test]
fn four_level_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let report = synthetic(ExperimentKind::DivfreeAnnulus, 4);
    write_report_csv(&report, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 9));
    assert_eq!(read_report_csv(&path).unwrap(), report.levels);
}

#[test]
fn seconds_are_zero_unless_timing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let mut report = synthetic(ExperimentKind::DivfreeAnnulus, 3);
    report.timing = false;
    write_report_csv(&report, &path).unwrap();
    assert!(read_report_csv(&path).unwrap().iter().all(|l| l.seconds == 0.0));
}

#[test]
fn svg_outputs_are_well_formed() {
    let report = synthetic(ExperimentKind::FullHhd, 4);
    let doc = loglog_svg(&report);
    roxmltree::Document::parse(&doc).unwrap();
    assert!(doc.contains("5.5"));
    for domain in [DomainSpec::reference_annulus(), DomainSpec::reference_wavy_annulus()] {
        let svg = quiver_contour_svg(&domain, "swirl & <gradient>", 20, |x| {
            ([-x[1], x[0]], x[0] * x[0] - x[1] * x[1])
        });
        let parsed = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(parsed.root_element().tag_name().name(), "svg");
    }
}

#[test]
fn emit_outputs_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&synthetic(ExperimentKind::FullHhd, 4), dir.path().join("a/b")).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["report.csv", "parts.csv", "convergence.svg"]);
    let parts = std::fs::read_to_string(&written[1]).unwrap();
    assert!(parts.starts_with("level,N,M,h,rel_err_normal,rel_err_leray,rel_err_harmonic,sum_residual\n"));
    let written = emit_outputs(&synthetic(ExperimentKind::DivfreeAnnulus, 3), dir.path()).unwrap();
    assert_eq!(written.len(), 2);
}

#[test]
fn output_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_outputs(&synthetic(ExperimentKind::DivfreeAnnulus, 3), blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn checks_follow_thresholds() {
    let good = synthetic(ExperimentKind::DivfreeAnnulus, 4);
    assert!(check_report(&good).iter().all(|c| c.passed));
    let mut bad = good.clone();
    bad.levels[3].rel_err_div = 1e-3;
    let outcomes = check_report(&bad);
    assert!(outcomes.iter().any(|c| !c.passed && c.name.contains("finest")));
}

fn small_config(domain: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.set("domain", domain).unwrap();
    cfg.set("levels", "3").unwrap();
    cfg.set("h0", "0.25").unwrap();
    cfg
}

#[test]
fn small_annulus_study_is_consistent() {
    let report = run(&small_config("annulus")).unwrap();
    assert_eq!(report.levels.len(), 3);
    for w in report.levels.windows(2) {
        assert!(w[1].h < w[0].h);
        // measured on nodes no level interpolates
        assert!(w[1].rel_err_full < w[0].rel_err_full);
        assert!(w[1].rel_err_div < w[0].rel_err_div);
    }
    for l in &report.levels {
        for e in [l.rel_err_full, l.rel_err_div, l.rel_err_curl] {
            assert!(e.is_finite() && e > 0.0);
        }
        assert!(l.residual < 1e-8);
    }
    assert_eq!(report.orders.len(), 3);
}

#[test]
fn small_two_step_study_is_consistent() {
    let report = run(&small_config("wavy-annulus")).unwrap();
    let finest = report.levels.last().unwrap();
    assert_eq!(finest.rel_err_div, 0.0);
    assert_eq!(finest.rel_err_curl, 0.0);
    assert_eq!(finest.rel_err_harmonic, Some(0.0));
    for l in &report.levels {
        assert!(l.sum_residual.unwrap() <= 1e-8);
    }
    assert!(report.order("rel_err_harmonic").is_some());
}

#[test]
fn study_rejects_mismatched_configuration() {
    let mut cfg = small_config("wavy-annulus");
    cfg.kind = ExperimentKind::DivfreeAnnulus;
    assert!(run(&cfg).is_err());
    assert!(run_full_hhd(&small_config("annulus")).is_err());
    let mut cfg = small_config("annulus");
    cfg.eps = 0.0;
    assert!(matches!(run(&cfg), Err(Error::InvalidShapeParameter(_))));
}
