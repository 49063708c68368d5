//! Contact-impedance sweeps (CEM against the shunt model on one graded
//! mesh) and mesh-size sweeps (uniform hierarchies against a fine reference).

mod report;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::analysis::{diff_nested, diff_same_mesh, fit_loglog, spectral_norm, ErrorBundle, NormMatrices, SlopeFit};
use crate::assembly::{assemble_cem, assemble_shunt, ConductivityField, Tensor2};
use crate::error::{Error, Result};
use crate::mesh::{prolongation, ElectrodeLayout, ElectrodePattern, Mesh};
use crate::solver::{
    condition_estimate, measurement_matrix, CemSolver, ConditionOptions, FESolution, ForwardModel, ShuntSolver,
    SolverOptions,
};

pub use report::{csv_header, parse_csv, provenance_text, to_csv, to_svg, write_report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometryConfig {
    pub n_sides: usize,
    pub n_electrodes: usize,
    /// Uniform refinements of the centroid fan before boundary grading.
    pub base_level: usize,
    /// Boundary-layer rounds applied on top of `base_level` (z-sweep only).
    pub boundary_rounds: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            n_sides: 16,
            n_electrodes: 8,
            base_level: 4,
            boundary_rounds: 4,
        }
    }
}

impl GeometryConfig {
    pub fn base_mesh(&self) -> Result<Mesh> {
        Mesh::regular_polygon(self.n_sides, self.n_electrodes, ElectrodePattern::Alternating)
    }

    /// Uniform refinement to `base_level` followed by boundary grading.
    pub fn graded_mesh(&self) -> Result<Mesh> {
        self.base_mesh()?
            .refine_uniform_n(self.base_level)?
            .refine_boundary_layer(self.boundary_rounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ConductivitySpec {
    #[default]
    Identity,
    /// Constant tensor on every triangle.
    Constant(Tensor2),
}

impl ConductivitySpec {
    pub fn field(&self, mesh: &Mesh) -> Result<ConductivityField> {
        match self {
            ConductivitySpec::Identity => Ok(ConductivityField::identity(mesh.n_triangles())),
            ConductivitySpec::Constant(s) => ConductivityField::uniform(mesh.n_triangles(), *s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurrentPattern {
    /// `I_m = cos(2π·harmonic·m/M)`, `m = 1..M`. Harmonic 1 is the default
    /// excitation of both sweeps.
    Cosine {
        harmonic: usize,
    },
    Custom(Vec<f64>),
}

impl Default for CurrentPattern {
    fn default() -> Self {
        CurrentPattern::Cosine { harmonic: 1 }
    }
}

impl CurrentPattern {
    pub fn currents(&self, n_electrodes: usize) -> Result<Vec<f64>> {
        match self {
            CurrentPattern::Cosine { harmonic } => {
                if n_electrodes == 0 || harmonic % n_electrodes == 0 {
                    return Err(Error::Config(format!(
                        "cosine harmonic {harmonic} does not give a zero-sum pattern on {n_electrodes} electrodes"
                    )));
                }
                Ok((1..=n_electrodes)
                    .map(|m| (2.0 * PI * (*harmonic * m) as f64 / n_electrodes as f64).cos())
                    .collect())
            }
            CurrentPattern::Custom(v) => {
                if v.len() != n_electrodes {
                    return Err(Error::Config(format!(
                        "current pattern has {} entries for {n_electrodes} electrodes",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Which rows enter the slope fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitWindow {
    pub skip_leading: usize,
    pub skip_trailing: usize,
}

/// `count` values spaced evenly in log from `from` down to `to`.
pub fn log_spaced(from: f64, to: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![from],
        _ => {
            let (a, b) = (from.log10(), to.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub geometry: GeometryConfig,
    pub conductivity: ConductivitySpec,
    pub current: CurrentPattern,
    /// Contact impedances of the z-sweep, strictly decreasing.
    pub betas: Vec<f64>,
    /// Uniform refinement depths of the h-sweep, strictly increasing.
    pub levels: Vec<usize>,
    pub reference_level: usize,
    pub fit: FitWindow,
    pub record_condition: bool,
    pub solver: SolverOptions,
    pub condition: ConditionOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            conductivity: ConductivitySpec::Identity,
            current: CurrentPattern::default(),
            betas: log_spaced(1.0, 1e-5, 11),
            levels: (1..=5).collect(),
            reference_level: 7,
            fit: FitWindow::default(),
            record_condition: false,
            solver: SolverOptions::default(),
            condition: ConditionOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate_z(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::Config("the beta grid is empty".into()));
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::Config(format!("contact impedance must be positive, got {b}")));
        }
        if self.betas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("the beta grid must be strictly decreasing".into()));
        }
        Ok(())
    }

    pub fn validate_h(&self) -> Result<()> {
        let Some(&max_level) = self.levels.last() else {
            return Err(Error::Config("no refinement levels given".into()));
        };
        if self.levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("refinement levels must be strictly increasing".into()));
        }
        if max_level != self.reference_level && self.reference_level < max_level + 2 {
            return Err(Error::Config(format!(
                "reference level {} must be at least two levels finer than the finest level {max_level}",
                self.reference_level
            )));
        }
        if max_level > self.reference_level {
            return Err(Error::Config("levels may not exceed the reference level".into()));
        }
        Ok(())
    }
}

/// Contact model of an h-sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HModel {
    Cem { beta: f64 },
    Shunt,
}

impl std::fmt::Display for HModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HModel::Cem { beta } => write!(f, "cem(beta={beta:e})"),
            HModel::Shunt => write!(f, "shunt"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepKind {
    Z,
    H(HModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    /// β for z-sweeps, h for h-sweeps.
    pub param: f64,
    pub h1: f64,
    pub combined: f64,
    pub l2: f64,
    pub rmap: f64,
    pub kappa: Option<f64>,
}

/// Fitted slopes per column; `None` where fewer than 3 usable points exist.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColumnFits {
    pub h1: Option<SlopeFit>,
    pub combined: Option<SlopeFit>,
    pub l2: Option<SlopeFit>,
    pub rmap: Option<SlopeFit>,
    pub kappa: Option<SlopeFit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub level: usize,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_boundary_edges: usize,
    pub h_max: f64,
    pub h_boundary: f64,
    pub h_interior: f64,
}

impl MeshStats {
    pub fn of(mesh: &Mesh) -> Self {
        Self {
            level: mesh.level(),
            n_vertices: mesh.n_vertices(),
            n_triangles: mesh.n_triangles(),
            n_boundary_edges: mesh.boundary_edges().len(),
            h_max: mesh.h_max(),
            h_boundary: mesh.h_boundary(),
            h_interior: mesh.h_interior(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub rows: Vec<ReportRow>,
    /// Rows excluded from fitting regardless of the window (degenerate
    /// reference-against-itself rows).
    pub excluded: Vec<bool>,
    pub fits: ColumnFits,
    pub config: SweepConfig,
    pub meshes: Vec<MeshStats>,
}

impl SweepReport {
    fn new(
        kind: SweepKind,
        rows: Vec<ReportRow>,
        excluded: Vec<bool>,
        config: &SweepConfig,
        meshes: Vec<MeshStats>,
    ) -> Self {
        let fits = fit_columns(&rows, &excluded, config.fit);
        Self {
            kind,
            rows,
            excluded,
            fits,
            config: config.clone(),
            meshes,
        }
    }
}

fn fit_columns(rows: &[ReportRow], excluded: &[bool], window: FitWindow) -> ColumnFits {
    let end = rows.len().saturating_sub(window.skip_trailing);
    let start = window.skip_leading.min(end);
    let used: Vec<&ReportRow> = rows[start..end]
        .iter()
        .zip(&excluded[start..end])
        .filter(|(_, &ex)| !ex)
        .map(|(r, _)| r)
        .collect();
    let fit = |col: fn(&ReportRow) -> Option<f64>| {
        let pts: Option<Vec<(f64, f64)>> = used.iter().map(|r| col(r).map(|y| (r.param, y))).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts?.into_iter().unzip();
        fit_loglog(&xs, &ys).ok()
    };
    ColumnFits {
        h1: fit(|r| Some(r.h1)),
        combined: fit(|r| Some(r.combined)),
        l2: fit(|r| Some(r.l2)),
        rmap: fit(|r| Some(r.rmap)),
        kappa: fit(|r| r.kappa),
    }
}

fn row(param: f64, e: ErrorBundle, rmap: f64, kappa: Option<f64>) -> ReportRow {
    ReportRow {
        param,
        h1: e.h1,
        combined: e.combined,
        l2: e.l2,
        rmap,
        kappa,
    }
}

/// Discrepancy between the CEM with constant contact impedance β and the
/// shunt model, on one graded mesh, for every β in the grid.
pub fn sweep_z(config: &SweepConfig) -> Result<SweepReport> {
    config.validate_z()?;
    let mesh = config.geometry.graded_mesh()?;
    let m = config.geometry.n_electrodes;
    let sigma = config.conductivity.field(&mesh)?;
    let currents = config.current.currents(m)?;
    let nm = NormMatrices::new(&mesh)?;

    let shunt_system = assemble_shunt(&mesh, &sigma, m)?;
    let shunt = ShuntSolver::new(&shunt_system, config.solver)?;
    let shunt_solution = shunt.solve_currents(&currents)?;
    let shunt_r = measurement_matrix(&shunt)?.matrix;

    let rows = config
        .betas
        .par_iter()
        .map(|&beta| {
            z_point(beta, &mesh, &sigma, &currents, &nm, &shunt_solution, &shunt_r, config).map_err(|e| {
                Error::SweepPoint {
                    param: beta,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let excluded = vec![false; rows.len()];
    Ok(SweepReport::new(
        SweepKind::Z,
        rows,
        excluded,
        config,
        vec![MeshStats::of(&mesh)],
    ))
}

#[allow(clippy::too_many_arguments)]
fn z_point(
    beta: f64,
    mesh: &Mesh,
    sigma: &ConductivityField,
    currents: &[f64],
    nm: &NormMatrices,
    shunt_solution: &FESolution,
    shunt_r: &DMatrix<f64>,
    config: &SweepConfig,
) -> Result<ReportRow> {
    let layout = ElectrodeLayout::uniform(config.geometry.n_electrodes, beta)?;
    let system = assemble_cem(mesh, sigma, &layout)?;
    let cem = CemSolver::new(&system, config.solver)?;
    let solution = cem.solve_currents(currents)?;
    let r = measurement_matrix(&cem)?.matrix;
    let errors = diff_same_mesh(&solution, shunt_solution, nm)?;
    let kappa = if config.record_condition {
        Some(condition_estimate(&system.matrix, &config.condition)?.kappa())
    } else {
        None
    };
    Ok(row(beta, errors, spectral_norm(&(r - shunt_r)), kappa))
}

struct LevelSolution {
    solution: FESolution,
    r: DMatrix<f64>,
}

fn solve_level(mesh: &Mesh, model: HModel, config: &SweepConfig, currents: &[f64]) -> Result<LevelSolution> {
    let sigma = config.conductivity.field(mesh)?;
    let m = config.geometry.n_electrodes;
    match model {
        HModel::Cem { beta } => {
            let layout = ElectrodeLayout::uniform(m, beta)?;
            let system = assemble_cem(mesh, &sigma, &layout)?;
            let solver = CemSolver::new(&system, config.solver)?;
            Ok(LevelSolution {
                solution: solver.solve_currents(currents)?,
                r: measurement_matrix(&solver)?.matrix,
            })
        }
        HModel::Shunt => {
            let system = assemble_shunt(mesh, &sigma, m)?;
            let solver = ShuntSolver::new(&system, config.solver)?;
            Ok(LevelSolution {
                solution: solver.solve_currents(currents)?,
                r: measurement_matrix(&solver)?.matrix,
            })
        }
    }
}

/// Finite-element error against a reference solution on a much finer
/// uniform mesh, for each level of a uniform refinement hierarchy.
pub fn sweep_h(config: &SweepConfig, model: HModel) -> Result<SweepReport> {
    config.validate_h()?;
    if let HModel::Cem { beta } = model {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("contact impedance must be positive, got {beta}")));
        }
    }
    let currents = config.current.currents(config.geometry.n_electrodes)?;
    let mut hierarchy = vec![config.geometry.base_mesh()?];
    for _ in 0..config.reference_level {
        let next = hierarchy.last().unwrap().refine_uniform()?;
        hierarchy.push(next);
    }
    let reference_mesh = &hierarchy[config.reference_level];
    let reference = solve_level(reference_mesh, model, config, &currents)?;
    let nm = NormMatrices::new(reference_mesh)?;

    let rows = config
        .levels
        .par_iter()
        .map(|&level| {
            let mesh = &hierarchy[level];
            let param = mesh.h_max();
            let point = || -> Result<ReportRow> {
                if level == config.reference_level {
                    let zero = ErrorBundle {
                        h1: 0.0,
                        l2: 0.0,
                        combined: 0.0,
                        voltages: 0.0,
                    };
                    return Ok(row(param, zero, 0.0, None));
                }
                let coarse = solve_level(mesh, model, config, &currents)?;
                let p = prolongation(mesh, reference_mesh)?;
                let errors = diff_nested(&coarse.solution, &reference.solution, &p, &nm)?;
                Ok(row(param, errors, spectral_norm(&(coarse.r - &reference.r)), None))
            };
            point().map_err(|e| Error::SweepPoint {
                param,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let excluded = config.levels.iter().map(|&l| l == config.reference_level).collect();
    let meshes = config
        .levels
        .iter()
        .chain(std::iter::once(&config.reference_level))
        .map(|&l| MeshStats::of(&hierarchy[l]))
        .collect();
    Ok(SweepReport::new(SweepKind::H(model), rows, excluded, config, meshes))
}
