//! CSV, SVG and provenance output of sweep reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ReportRow, SweepKind, SweepReport};
use crate::analysis::SlopeFit;
use crate::error::{Error, Result};

const COLUMNS: [&str; 4] = ["h1", "combined", "l2", "rmap"];
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

fn has_kappa(report: &SweepReport) -> bool {
    report.rows.iter().any(|r| r.kappa.is_some())
}

pub fn csv_header(with_kappa: bool) -> String {
    let mut h = String::from("param,h1,combined,l2,rmap");
    if with_kappa {
        h.push_str(",kappa");
    }
    h
}

/// One row per grid point, values in round-trip scientific notation.
pub fn to_csv(report: &SweepReport) -> String {
    let kappa = has_kappa(report);
    let mut s = csv_header(kappa);
    s.push('\n');
    for r in &report.rows {
        let _ = write!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.param, r.h1, r.combined, r.l2, r.rmap
        );
        if kappa {
            match r.kappa {
                Some(k) => {
                    let _ = write!(s, ",{k:.16e}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty report".into(),
    })?;
    let kappa = match header.trim() {
        h if h == csv_header(false) => false,
        h if h == csv_header(true) => true,
        h => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header {h:?}"),
            })
        }
    };
    let width = if kappa { 6 } else { 5 };
    lines
        .map(|(i, l)| {
            let line = i + 1;
            let cells: Vec<&str> = l.trim().split(',').collect();
            if cells.len() != width {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {width} cells, found {}", cells.len()),
                });
            }
            let num = |c: &str| {
                c.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse {c:?}"),
                })
            };
            Ok(ReportRow {
                param: num(cells[0])?,
                h1: num(cells[1])?,
                combined: num(cells[2])?,
                l2: num(cells[3])?,
                rmap: num(cells[4])?,
                kappa: match cells.get(5) {
                    Some(c) if !c.is_empty() => Some(num(c)?),
                    _ => None,
                },
            })
        })
        .collect()
}

fn param_name(kind: SweepKind) -> &'static str {
    match kind {
        SweepKind::Z => "beta",
        SweepKind::H(_) => "h",
    }
}

fn slope_label(name: &str, fit: Option<&SlopeFit>) -> String {
    match fit {
        Some(f) => format!("{name}: slope {:.3}", f.slope),
        None => format!("{name}: slope n/a"),
    }
}

/// Log-log plot of every error column with fitted slopes in the legend.
pub fn to_svg(report: &SweepReport) -> String {
    const W: f64 = 640.0;
    type Series<'a> = (&'a str, Vec<(f64, f64)>, Option<&'a SlopeFit>);
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 180.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 50.0;

    let fits = &report.fits;
    let mut series: Vec<Series> = COLUMNS
        .iter()
        .zip([&fits.h1, &fits.combined, &fits.l2, &fits.rmap])
        .enumerate()
        .map(|(c, (name, fit))| {
            let pts = report
                .rows
                .iter()
                .map(|r| (r.param, [r.h1, r.combined, r.l2, r.rmap][c]))
                .filter(|(x, y)| *x > 0.0 && *y > 0.0)
                .collect();
            (*name, pts, fit.as_ref())
        })
        .collect();
    if has_kappa(report) {
        let pts = report
            .rows
            .iter()
            .filter_map(|r| r.kappa.map(|k| (r.param, k)))
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .collect();
        series.push(("kappa", pts, fits.kappa.as_ref()));
    }

    let all = series.iter().flat_map(|(_, p, _)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let px = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y.log10() - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">log10 {} [{:.2}, {:.2}]</text>"#,
        LEFT + (W - LEFT - RIGHT) / 2.0,
        H - 15.0,
        param_name(report.kind),
        x0,
        x1
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">log10 error [{:.2}, {:.2}]</text>"#,
        TOP + (H - TOP - BOTTOM) / 2.0,
        TOP + (H - TOP - BOTTOM) / 2.0,
        y0,
        y1
    );
    for (i, (name, pts, fit)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-column="{name}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 20.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"/>"#,
            W - RIGHT + 10.0,
            W - RIGHT + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text class="slope" data-column="{name}" x="{}" y="{}" font-size="12">{}</text>"#,
            W - RIGHT + 35.0,
            ly + 4.0,
            slope_label(name, *fit)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fit_line(name: &str, fit: Option<&SlopeFit>) -> String {
    match fit {
        Some(f) => format!(
            "fit.{name} = slope {:.6} intercept {:.6} max_residual {:.3e} points {}",
            f.slope, f.intercept, f.max_residual, f.n_points
        ),
        None => format!("fit.{name} = insufficient data"),
    }
}

/// Human-readable record of the configuration, meshes and fitted slopes.
pub fn provenance_text(report: &SweepReport) -> String {
    let mut s = String::new();
    let kind = match report.kind {
        SweepKind::Z => "z".to_string(),
        SweepKind::H(model) => format!("h ({model})"),
    };
    let _ = writeln!(s, "sweep = {kind}");
    let _ = writeln!(s, "crate = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    for m in &report.meshes {
        let _ = writeln!(
            s,
            "mesh level {} : V {} T {} B {} h_max {:.6e} h_boundary {:.6e} h_interior {:.6e}",
            m.level, m.n_vertices, m.n_triangles, m.n_boundary_edges, m.h_max, m.h_boundary, m.h_interior
        );
    }
    let f = &report.fits;
    for (name, fit) in COLUMNS.iter().zip([&f.h1, &f.combined, &f.l2, &f.rmap]) {
        let _ = writeln!(s, "{}", fit_line(name, fit.as_ref()));
    }
    if has_kappa(report) {
        let _ = writeln!(s, "{}", fit_line("kappa", f.kappa.as_ref()));
    }
    let _ = writeln!(s, "config = {:#?}", report.config);
    s
}

/// Writes `<stem>.csv`, `<stem>.svg` and `<stem>.provenance.txt` into `dir`.
pub fn write_report(report: &SweepReport, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let outputs = [
        (format!("{stem}.csv"), to_csv(report)),
        (format!("{stem}.svg"), to_svg(report)),
        (format!("{stem}.provenance.txt"), provenance_text(report)),
    ];
    let mut paths = Vec::with_capacity(outputs.len());
    for (name, content) in outputs {
        let path = dir.join(name);
        std::fs::write(&path, content)?;
        paths.push(path);
    }
    Ok(paths)
}
