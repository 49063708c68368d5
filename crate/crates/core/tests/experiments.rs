use eit_cem::experiments::{
    parse_csv, sweep_h, sweep_z, to_csv, to_svg, write_report, GeometryConfig, HModel, SweepConfig,
};

fn small_z() -> SweepConfig {
    SweepConfig {
        geometry: GeometryConfig {
            base_level: 2,
            boundary_rounds: 2,
            ..GeometryConfig::default()
        },
        betas: vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4],
        ..SweepConfig::default()
    }
}

fn small_h() -> SweepConfig {
    SweepConfig {
        levels: vec![1, 2, 3],
        reference_level: 5,
        ..SweepConfig::default()
    }
}

#[test]
fn z_sweep_rows_follow_the_grid() {
    let config = small_z();
    let report = sweep_z(&config).unwrap();
    assert_eq!(report.rows.len(), config.betas.len());
    for (row, beta) in report.rows.iter().zip(&config.betas) {
        assert_eq!(row.param, *beta);
        assert!(row.h1 > 0.0 && row.combined > 0.0 && row.l2 > 0.0 && row.rmap > 0.0);
        assert!(row.kappa.is_none());
    }
    let f = report.fits;
    let h1 = f.h1.unwrap().slope;
    assert!(f.l2.unwrap().slope > h1);
    assert!(f.rmap.unwrap().slope > h1);
    assert!(f.kappa.is_none());
}

#[test]
fn shunt_reference_does_not_depend_on_the_grid() {
    let mut a = small_z();
    a.betas = vec![1e-1, 1e-3];
    let mut b = small_z();
    b.betas = vec![1e-3];
    let (ra, rb) = (sweep_z(&a).unwrap(), sweep_z(&b).unwrap());
    let last = |r: &eit_cem::experiments::SweepReport| to_csv(r).lines().last().unwrap().to_string();
    assert_eq!(last(&ra), last(&rb));
}

#[test]
fn z_sweep_is_deterministic() {
    let mut config = small_z();
    config.record_condition = true;
    let a = to_csv(&sweep_z(&config).unwrap());
    let b = to_csv(&sweep_z(&config).unwrap());
    assert_eq!(a, b);
    assert!(a.starts_with("param,h1,combined,l2,rmap,kappa\n"));
}

#[test]
fn failing_point_names_its_parameter() {
    let mut config = small_z();
    config.betas = vec![1e-1, 1e-320];
    let err = sweep_z(&config).unwrap_err();
    match err {
        eit_cem::Error::SweepPoint { param, .. } => assert_eq!(param, 1e-320),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn h_sweep_against_itself_is_degenerate() {
    let mut config = small_h();
    config.levels = vec![1, 2, 5];
    let report = sweep_h(&config, HModel::Shunt).unwrap();
    let last = report.rows.last().unwrap();
    assert_eq!((last.h1, last.combined, last.l2, last.rmap), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(report.excluded, vec![false, false, true]);
    // two usable points are too few for a fit
    assert!(report.fits.h1.is_none());
}

#[test]
fn h_sweep_rates_and_ordering() {
    let config = small_h();
    let smooth = sweep_h(&config, HModel::Cem { beta: 10.0 }).unwrap();
    let shunt = sweep_h(&config, HModel::Shunt).unwrap();
    for report in [&smooth, &shunt] {
        assert_eq!(report.rows.len(), 3);
        assert!(report
            .rows
            .windows(2)
            .all(|w| (w[1].param / w[0].param - 0.5).abs() <= 1e-12));
        assert!(report.rows.iter().all(|r| r.h1 > 0.0 && r.rmap > 0.0));
        let f = report.fits;
        assert!(f.rmap.unwrap().slope > f.h1.unwrap().slope);
    }
    assert!(smooth.fits.h1.unwrap().slope > shunt.fits.h1.unwrap().slope);
    assert_eq!(smooth.meshes.len(), 4);
    assert_eq!(smooth.meshes[3].level, 5);
}

#[test]
fn h1_rate_degrades_for_small_impedance() {
    let config = SweepConfig::default();
    let large = sweep_h(&config, HModel::Cem { beta: 10.0 }).unwrap();
    let small = sweep_h(&config, HModel::Cem { beta: 1e-3 }).unwrap();
    let (a, b) = (large.fits.h1.unwrap().slope, small.fits.h1.unwrap().slope);
    assert!(a - b >= 0.1, "{a} vs {b}");
}

#[test]
fn invalid_configurations() {
    let mut c = small_z();
    c.betas = vec![1e-2, 1e-1];
    assert!(matches!(sweep_z(&c), Err(eit_cem::Error::Config(_))));
    let mut c = small_h();
    c.reference_level = 4;
    assert!(matches!(sweep_h(&c, HModel::Shunt), Err(eit_cem::Error::Config(_))));
    assert!(matches!(
        sweep_h(&small_h(), HModel::Cem { beta: -1.0 }),
        Err(eit_cem::Error::Config(_))
    ));
}

#[test]
fn default_report_outputs() {
    let report = sweep_z(&SweepConfig::default()).unwrap();
    let svg = to_svg(&report);
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert_eq!(svg.matches(r#"class="slope""#).count(), 4);
    let csv = to_csv(&report);
    assert_eq!(parse_csv(&csv).unwrap(), report.rows);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("reports");
    let first = write_report(&report, &out, "zsweep").unwrap();
    let bytes: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let second = write_report(&report, &out, "zsweep").unwrap();
    assert_eq!(first, second);
    for (p, b) in second.iter().zip(&bytes) {
        assert_eq!(&std::fs::read(p).unwrap(), b);
    }
}
