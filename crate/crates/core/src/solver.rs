//! Forward solves, measurement matrices, current recovery and conditioning.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::{Mat, Side};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_load, electrode_edge_blocks, CemSystem, DofMap, LoadVector, ShuntSystem};
use crate::error::{Error, Result};
use crate::mesh::{EdgeTag, ElectrodeLayout, Mesh};
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required `‖Ax − b‖ / ‖b‖`.
    pub rel_tol: f64,
    /// A direct solve whose relative residual stalls above `rel_tol` is still
    /// accepted when its componentwise backward error is below this. For
    /// contact impedances near zero the residual of the correctly rounded
    /// solution itself exceeds `rel_tol`.
    pub backward_tol: f64,
    /// Systems up to this many unknowns are factored; larger ones use
    /// Jacobi-preconditioned conjugate gradients.
    pub direct_limit: usize,
    /// Iterative refinement sweeps allowed after a direct solve.
    pub refinement_steps: usize,
    pub max_cg_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            backward_tol: 1e-15,
            direct_limit: 200_000,
            refinement_steps: 4,
            max_cg_iterations: 200_000,
        }
    }
}

enum Backend {
    Cholesky(Llt<usize, f64>),
    Cg { inv_diag: Vec<f64> },
}

/// A symmetric positive definite matrix prepared for repeated solves.
pub struct LinearSolver {
    matrix: CsrMatrix,
    backend: Backend,
    options: SolverOptions,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.backend {
            Backend::Cholesky(_) => "cholesky",
            Backend::Cg { .. } => "pcg",
        };
        f.debug_struct("LinearSolver")
            .field("n", &self.matrix.nrows())
            .field("backend", &kind)
            .finish()
    }
}

impl LinearSolver {
    pub fn new(matrix: CsrMatrix, options: SolverOptions) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::SizeMismatch {
                context: "linear system must be square",
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        let backend = if matrix.nrows() <= options.direct_limit {
            let llt = matrix
                .to_faer()
                .sp_cholesky(Side::Lower)
                .map_err(|e| Error::numerical(format!("Cholesky factorization failed: {e}"), f64::NAN))?;
            Backend::Cholesky(llt)
        } else {
            let diag = matrix.diagonal();
            if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
                return Err(Error::numerical(
                    format!("non-positive diagonal entry at row {i}; matrix is not SPD"),
                    f64::NAN,
                ));
            }
            Backend::Cg {
                inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
            }
        };
        Ok(Self {
            matrix,
            backend,
            options,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Cholesky(_))
    }

    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let r = self.matrix.residual(x, b);
        let nb = norm2(b);
        if nb == 0.0 {
            norm2(&r)
        } else {
            norm2(&r) / nb
        }
    }

    /// Componentwise backward error `max_i |b − Ax|_i / (|A||x| + |b|)_i`:
    /// the smallest relative perturbation of `A` and `b`, entry by entry,
    /// for which `x` is an exact solution.
    pub fn backward_error(&self, x: &[f64], b: &[f64]) -> f64 {
        let r = self.matrix.residual(x, b);
        (0..b.len())
            .map(|i| {
                let scale: f64 = self.matrix.row(i).map(|(c, v)| (v * x[c]).abs()).sum::<f64>() + b[i].abs();
                if scale == 0.0 {
                    0.0
                } else {
                    r[i].abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }

    fn factor_solve(llt: &Llt<usize, f64>, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = llt.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// One pass of the backend without a residual guarantee.
    pub fn solve_unchecked(&self, b: &[f64]) -> Result<Vec<f64>> {
        match &self.backend {
            Backend::Cholesky(llt) => Ok(Self::factor_solve(llt, b)),
            Backend::Cg { inv_diag } => self.pcg(b, inv_diag),
        }
    }

    /// Solves `Ax = b` to the configured relative residual.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.matrix.nrows() {
            return Err(Error::SizeMismatch {
                context: "right-hand side",
                expected: self.matrix.nrows(),
                actual: b.len(),
            });
        }
        let nb = norm2(b);
        if nb == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.solve_unchecked(b)?;
        let Backend::Cholesky(llt) = &self.backend else {
            return Ok(x);
        };
        let mut best = f64::INFINITY;
        for _ in 0..=self.options.refinement_steps {
            let r = self.matrix.residual(&x, b);
            let res = norm2(&r) / nb;
            if res <= self.options.rel_tol {
                return Ok(x);
            }
            if res >= best {
                break;
            }
            best = res;
            let dx = Self::factor_solve(llt, &r);
            x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        }
        let res = self.relative_residual(&x, b);
        if res <= self.options.rel_tol || self.backward_error(&x, b) <= self.options.backward_tol {
            Ok(x)
        } else {
            Err(Error::numerical("direct solve missed the residual target", res))
        }
    }

    fn pcg(&self, b: &[f64], inv_diag: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let nb = norm2(b);
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..self.options.max_cg_iterations {
            if norm2(&r) <= self.options.rel_tol * nb {
                return Ok(x);
            }
            let ap = self.matrix.mul_vec(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::numerical(
                    "conjugate gradients met a non-positive curvature; matrix is not SPD",
                    norm2(&r) / nb,
                ));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            z.iter_mut()
                .zip(r.iter().zip(inv_diag))
                .for_each(|(z, (r, d))| *z = r * d);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        }
        let res = norm2(&r) / nb;
        if res <= self.options.rel_tol {
            Ok(x)
        } else {
            Err(Error::numerical("conjugate gradients did not converge", res))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cem,
    Shunt,
}

/// Discrete potential pair: nodal values and grounded electrode voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct FESolution {
    pub model: ModelKind,
    pub nodal: Vec<f64>,
    pub voltages: Vec<f64>,
}

impl FESolution {
    fn zeros(model: ModelKind, dofmap: &DofMap) -> Self {
        Self {
            model,
            nodal: vec![0.0; dofmap.n_nodes()],
            voltages: vec![0.0; dofmap.n_electrodes()],
        }
    }

    fn from_full(model: ModelKind, dofmap: &DofMap, x: &[f64]) -> Self {
        let n = dofmap.n_nodes();
        Self {
            model,
            nodal: x[..n].to_vec(),
            voltages: dofmap.voltages_from_coefficients(&x[n..]),
        }
    }
}

/// A factored forward model that maps current patterns to potentials.
pub trait ForwardModel {
    fn kind(&self) -> ModelKind;
    fn dofmap(&self) -> &DofMap;
    fn solve_load(&self, load: &LoadVector) -> Result<FESolution>;

    fn solve_currents(&self, currents: &[f64]) -> Result<FESolution> {
        let load = assemble_load(currents, self.dofmap())?;
        self.solve_load(&load)
    }
}

fn check_load(dofmap: &DofMap, load: &LoadVector) -> Result<()> {
    if load.values.len() != dofmap.n_dofs() {
        return Err(Error::SizeMismatch {
            context: "load vector",
            expected: dofmap.n_dofs(),
            actual: load.values.len(),
        });
    }
    Ok(())
}

#[derive(Debug)]
pub struct CemSolver<'a> {
    system: &'a CemSystem,
    solver: LinearSolver,
}

impl<'a> CemSolver<'a> {
    pub fn new(system: &'a CemSystem, options: SolverOptions) -> Result<Self> {
        Ok(Self {
            system,
            solver: LinearSolver::new(system.matrix.clone(), options)?,
        })
    }

    pub fn system(&self) -> &CemSystem {
        self.system
    }

    pub fn linear_solver(&self) -> &LinearSolver {
        &self.solver
    }
}

impl ForwardModel for CemSolver<'_> {
    fn kind(&self) -> ModelKind {
        ModelKind::Cem
    }

    fn dofmap(&self) -> &DofMap {
        &self.system.dofmap
    }

    fn solve_load(&self, load: &LoadVector) -> Result<FESolution> {
        check_load(&self.system.dofmap, load)?;
        if load.values.iter().all(|&v| v == 0.0) {
            return Ok(FESolution::zeros(ModelKind::Cem, &self.system.dofmap));
        }
        let x = self.solver.solve(&load.values)?;
        Ok(FESolution::from_full(ModelKind::Cem, &self.system.dofmap, &x))
    }
}

#[derive(Debug)]
pub struct ShuntSolver<'a> {
    system: &'a ShuntSystem,
    solver: LinearSolver,
}

impl<'a> ShuntSolver<'a> {
    pub fn new(system: &'a ShuntSystem, options: SolverOptions) -> Result<Self> {
        Ok(Self {
            system,
            solver: LinearSolver::new(system.matrix.clone(), options)?,
        })
    }

    pub fn system(&self) -> &ShuntSystem {
        self.system
    }

    pub fn linear_solver(&self) -> &LinearSolver {
        &self.solver
    }
}

impl ForwardModel for ShuntSolver<'_> {
    fn kind(&self) -> ModelKind {
        ModelKind::Shunt
    }

    fn dofmap(&self) -> &DofMap {
        &self.system.dofmap
    }

    fn solve_load(&self, load: &LoadVector) -> Result<FESolution> {
        check_load(&self.system.dofmap, load)?;
        if load.values.iter().all(|&v| v == 0.0) {
            return Ok(FESolution::zeros(ModelKind::Shunt, &self.system.dofmap));
        }
        let reduced = self.system.reduce_load(load)?;
        let y = self.solver.solve(&reduced)?;
        let x = self.system.constraint.mul_vec(&y);
        Ok(FESolution::from_full(ModelKind::Shunt, &self.system.dofmap, &x))
    }
}

/// One-shot CEM solve with default options.
pub fn solve_cem(system: &CemSystem, load: &LoadVector) -> Result<FESolution> {
    CemSolver::new(system, SolverOptions::default())?.solve_load(load)
}

/// One-shot shunt solve with default options.
pub fn solve_shunt(system: &ShuntSystem, load: &LoadVector) -> Result<FESolution> {
    ShuntSolver::new(system, SolverOptions::default())?.solve_load(load)
}

/// Current-to-voltage map on `ℝ^M_⋄`, extended by `R·1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    pub matrix: DMatrix<f64>,
    /// `‖R − Rᵀ‖_F / ‖R‖_F` before symmetrization.
    pub symmetry_defect: f64,
}

/// Largest relative asymmetry accepted before `R` is symmetrized.
pub const MAX_SYMMETRY_DEFECT: f64 = 1e-10;

/// Solves for every voltage-basis current `n_k` and assembles the unique `R`
/// with `R n_k = U(n_k)` and `R·1 = 0`.
pub fn measurement_matrix(model: &impl ForwardModel) -> Result<MeasurementMatrix> {
    let basis = model.dofmap().voltage_basis().clone();
    let m = basis.nrows();
    let mut images = DMatrix::zeros(m, m - 1);
    for k in 0..m - 1 {
        let currents: Vec<f64> = basis.column(k).iter().copied().collect();
        let sol = model.solve_currents(&currents)?;
        images.set_column(k, &nalgebra::DVector::from_vec(sol.voltages));
    }
    // R = U (BᵀB)⁻¹ Bᵀ annihilates 1 because every basis column sums to zero
    let gram = basis.transpose() * &basis;
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::numerical("voltage basis Gram matrix is singular", f64::NAN))?;
    let r = images * gram_inv * basis.transpose();
    let norm = r.norm();
    let defect = if norm == 0.0 {
        0.0
    } else {
        (&r - r.transpose()).norm() / norm
    };
    if defect > MAX_SYMMETRY_DEFECT {
        return Err(Error::numerical(
            format!("measurement matrix violates reciprocity (defect {defect:e})"),
            defect,
        ));
    }
    let sym = (&r + r.transpose()) * 0.5;
    Ok(MeasurementMatrix {
        matrix: sym,
        symmetry_defect: defect,
    })
}

/// Electrode currents recovered from a CEM solution through the Robin
/// condition, `Î_m = (1/z_m) ∫_{E_m} (U_m − u_h) dS`.
pub fn electrode_currents(solution: &FESolution, mesh: &Mesh, layout: &ElectrodeLayout) -> Result<Vec<f64>> {
    if solution.model == ModelKind::Shunt {
        return Err(Error::Unsupported(
            "electrode currents of the shunt model are defined only through a weak pairing".into(),
        ));
    }
    if solution.nodal.len() != mesh.n_vertices() {
        return Err(Error::SizeMismatch {
            context: "nodal solution vs mesh vertices",
            expected: mesh.n_vertices(),
            actual: solution.nodal.len(),
        });
    }
    if solution.voltages.len() != layout.n_electrodes() || mesh.n_electrodes() != layout.n_electrodes() {
        return Err(Error::SizeMismatch {
            context: "electrode count",
            expected: layout.n_electrodes(),
            actual: solution.voltages.len(),
        });
    }
    let z = layout.impedances();
    let mut currents = vec![0.0; layout.n_electrodes()];
    for e in mesh.boundary_edges() {
        let EdgeTag::Electrode(m) = e.tag else { continue };
        let [a, b] = e.vertices;
        let blocks = electrode_edge_blocks(mesh.vertices()[a], mesh.vertices()[b])?;
        let trace = blocks.load[0] * solution.nodal[a] + blocks.load[1] * solution.nodal[b];
        currents[m] += (solution.voltages[m] * blocks.length - trace) / z[m];
    }
    Ok(currents)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    /// Power iterations stop once the Rayleigh quotient changes by less than
    /// this relative amount between sweeps.
    pub rel_change: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        Self {
            rel_change: 1e-7,
            max_iterations: 50_000,
            seed: 0x5eed_cafe,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEstimate {
    pub lambda_max: f64,
    pub lambda_min: f64,
}

impl ConditionEstimate {
    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

fn power_iteration(
    apply: impl Fn(&[f64]) -> Result<Vec<f64>>,
    start: Vec<f64>,
    options: &ConditionOptions,
) -> Result<f64> {
    let mut v = start;
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut rho = f64::NAN;
    for _ in 0..options.max_iterations {
        let w = apply(&v)?;
        let next = dot(&v, &w);
        let nw = norm2(&w);
        if !(nw > 0.0) || !next.is_finite() {
            return Err(Error::numerical(
                "power iteration produced a null or non-finite iterate",
                nw,
            ));
        }
        if (next - rho).abs() <= options.rel_change * next.abs() {
            return Ok(next);
        }
        rho = next;
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(Error::numerical(
        "power iteration stagnated before reaching its tolerance",
        rho,
    ))
}

/// `λ_max / λ_min` of an SPD matrix by power iteration on `A` and on `A⁻¹`.
pub fn condition_estimate(matrix: &CsrMatrix, options: &ConditionOptions) -> Result<ConditionEstimate> {
    let solver = LinearSolver::new(
        matrix.clone(),
        SolverOptions {
            direct_limit: usize::MAX,
            ..SolverOptions::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let start: Vec<f64> = (0..matrix.nrows()).map(|_| rng.random::<f64>() - 0.5).collect();
    let lambda_max = power_iteration(|v| Ok(matrix.mul_vec(v)), start.clone(), options)?;
    let inv = power_iteration(|v| solver.solve_unchecked(v), start, options)?;
    if !(lambda_max > 0.0 && inv > 0.0) {
        return Err(Error::numerical("matrix is not positive definite", f64::NAN));
    }
    Ok(ConditionEstimate {
        lambda_max,
        lambda_min: 1.0 / inv,
    })
}
