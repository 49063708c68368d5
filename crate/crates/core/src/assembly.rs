//! Galerkin systems for the complete electrode model on `P1 ⊕ ℝ^M_⋄` and for
//! the shunt model on its constrained subspace.
//!
//! Unknowns are ordered as the `N` nodal values followed by the `M − 1`
//! coefficients of the electrode voltages in the voltage basis of the
//! [`DofMap`]. Every integral is evaluated in closed form: gradients of P1
//! functions are constant per triangle and σ is piecewise constant.

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::{EdgeTag, ElectrodeLayout, Mesh, Point};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Triangles with area at or below this are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

pub type Tensor2 = [[f64; 2]; 2];

/// Piecewise constant, symmetric positive definite conductivity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField {
    tensors: Vec<Tensor2>,
}

fn tensor_eigenvalues(s: &Tensor2) -> (f64, f64) {
    let mean = 0.5 * (s[0][0] + s[1][1]);
    let half_diff = 0.5 * (s[0][0] - s[1][1]);
    let r = half_diff.hypot(s[0][1]);
    (mean - r, mean + r)
}

impl ConductivityField {
    pub fn from_tensors(tensors: Vec<Tensor2>) -> Result<Self> {
        for (t, s) in tensors.iter().enumerate() {
            if s.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("conductivity on triangle {t} is not finite")));
            }
            let scale = s[0][0].abs().max(s[1][1].abs()).max(f64::MIN_POSITIVE);
            if (s[0][1] - s[1][0]).abs() > 1e-14 * scale {
                return Err(Error::Domain(format!("conductivity on triangle {t} is not symmetric")));
            }
            let (lo, _) = tensor_eigenvalues(s);
            if !(lo > 0.0) {
                return Err(Error::Domain(format!(
                    "conductivity on triangle {t} is not positive definite (smallest eigenvalue {lo:e})"
                )));
            }
        }
        Ok(Self { tensors })
    }

    pub fn uniform(n_triangles: usize, sigma: Tensor2) -> Result<Self> {
        Self::from_tensors(vec![sigma; n_triangles])
    }

    pub fn identity(n_triangles: usize) -> Self {
        Self {
            tensors: vec![[[1.0, 0.0], [0.0, 1.0]]; n_triangles],
        }
    }

    pub fn tensors(&self) -> &[Tensor2] {
        &self.tensors
    }

    /// `(σ₋, σ₊)`: extreme eigenvalues over all triangles.
    pub fn bounds(&self) -> (f64, f64) {
        self.tensors.iter().fold((f64::INFINITY, 0.0), |(lo, hi), s| {
            let (a, b) = tensor_eigenvalues(s);
            (lo.min(a), hi.max(b))
        })
    }

    fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for s in &self.tensors {
            for v in s.iter().flatten() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Layout of the unknowns and the basis of the zero-sum voltage space.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    n_nodes: usize,
    basis: DMatrix<f64>,
}

impl DofMap {
    /// Default basis `n_k = e_k − e_M`, `k = 1..M−1`.
    pub fn new(n_nodes: usize, n_electrodes: usize) -> Result<Self> {
        if n_electrodes < 2 {
            return Err(Error::Config(format!(
                "at least 2 electrodes are required, got {n_electrodes}"
            )));
        }
        let m = n_electrodes;
        let basis = DMatrix::from_fn(m, m - 1, |i, k| {
            if i == k {
                1.0
            } else if i == m - 1 {
                -1.0
            } else {
                0.0
            }
        });
        Ok(Self { n_nodes, basis })
    }

    /// Any `M × (M−1)` basis of the zero-sum subspace.
    pub fn with_basis(n_nodes: usize, basis: DMatrix<f64>) -> Result<Self> {
        let m = basis.nrows();
        if m < 2 || basis.ncols() != m - 1 {
            return Err(Error::Config(format!(
                "voltage basis must be M x (M-1) with M >= 2, got {} x {}",
                m,
                basis.ncols()
            )));
        }
        for (k, col) in basis.column_iter().enumerate() {
            if col.sum().abs() > 1e-12 * col.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::Domain(format!("voltage basis column {k} does not sum to zero")));
            }
        }
        let sv = basis.clone().singular_values();
        let (lo, hi) = sv
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        if !(lo > 1e-10 * hi) {
            return Err(Error::Domain("voltage basis columns are linearly dependent".into()));
        }
        Ok(Self { n_nodes, basis })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_electrodes(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_voltage_dofs(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes + self.n_voltage_dofs()
    }

    pub fn voltage_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Electrode voltages `U = basis · c`.
    ///
    /// Zero basis entries are skipped, so the sum for electrode `m` uses the
    /// same terms in the same order as the shunt constraint rows.
    pub fn voltages_from_coefficients(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.n_electrodes())
            .map(|m| {
                (0..self.n_voltage_dofs())
                    .filter(|&k| self.basis[(m, k)] != 0.0)
                    .map(|k| self.basis[(m, k)] * coeffs[k])
                    .sum()
            })
            .collect()
    }
}

/// Load `φ_I(W) = I·W` expressed in the unknowns of a [`DofMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector {
    pub values: Vec<f64>,
}

/// Builds the load for the current pattern `currents`, which must sum to
/// zero (current conservation).
pub fn assemble_load(currents: &[f64], dofmap: &DofMap) -> Result<LoadVector> {
    let m = dofmap.n_electrodes();
    if currents.len() != m {
        return Err(Error::SizeMismatch {
            context: "current pattern length",
            expected: m,
            actual: currents.len(),
        });
    }
    if currents.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("current pattern has non-finite entries".into()));
    }
    let sum: f64 = currents.iter().sum();
    let norm = currents.iter().map(|c| c * c).sum::<f64>().sqrt();
    if sum.abs() > 1e-12 * norm {
        return Err(Error::Domain(format!(
            "injected currents must sum to zero (current conservation); sum = {sum:e}"
        )));
    }
    let mut values = vec![0.0; dofmap.n_dofs()];
    let proj = dofmap.voltage_basis().transpose() * DVector::from_column_slice(currents);
    values[dofmap.n_nodes()..].copy_from_slice(proj.as_slice());
    Ok(LoadVector { values })
}

/// `K_T[i][j] = |T| ∇λ_iᵀ σ_T ∇λ_j` for the barycentric basis of `p`.
pub fn element_stiffness(p: [Point; 3], sigma: &Tensor2) -> Result<[[f64; 3]; 3]> {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det;
    if !(area > MIN_TRIANGLE_AREA) {
        return Err(Error::Geometry(format!("degenerate triangle with area {area:e}")));
    }
    // ∇λ_i = (y_j − y_k, x_k − x_j) / (2|T|) with (i, j, k) cyclic
    let grads: [[f64; 2]; 3] = std::array::from_fn(|i| {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        [(p[j][1] - p[k][1]) / det, (p[k][0] - p[j][0]) / det]
    });
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        let sg = [
            sigma[0][0] * grads[i][0] + sigma[0][1] * grads[i][1],
            sigma[1][0] * grads[i][0] + sigma[1][1] * grads[i][1],
        ];
        for j in i..3 {
            k[i][j] = area * (sg[0] * grads[j][0] + sg[1] * grads[j][1]);
            k[j][i] = k[i][j];
        }
    }
    Ok(k)
}

/// Exact boundary integrals of the two hat functions living on one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeBlocks {
    /// `∫ φ_i φ_j dS`
    pub mass: [[f64; 2]; 2],
    /// `∫ φ_i dS`
    pub load: [f64; 2],
    /// `∫ 1 dS`
    pub length: f64,
}

pub fn electrode_edge_blocks(p: Point, q: Point) -> Result<EdgeBlocks> {
    let len = (q[0] - p[0]).hypot(q[1] - p[1]);
    if !(len > 0.0) {
        return Err(Error::Geometry("zero-length boundary edge".into()));
    }
    Ok(EdgeBlocks {
        mass: [[len / 3.0, len / 6.0], [len / 6.0, len / 3.0]],
        load: [len / 2.0, len / 2.0],
        length: len,
    })
}

/// Where a system came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub mesh_fingerprint: u64,
    pub conductivity_fingerprint: u64,
    pub impedances: Option<Vec<f64>>,
}

fn mesh_fingerprint(mesh: &Mesh) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for p in mesh.vertices() {
        p[0].to_bits().hash(&mut h);
        p[1].to_bits().hash(&mut h);
    }
    mesh.triangles().hash(&mut h);
    h.finish()
}

fn provenance(mesh: &Mesh, sigma: &ConductivityField, z: Option<&[f64]>) -> Provenance {
    Provenance {
        n_vertices: mesh.n_vertices(),
        n_triangles: mesh.n_triangles(),
        mesh_fingerprint: mesh_fingerprint(mesh),
        conductivity_fingerprint: sigma.fingerprint(),
        impedances: z.map(<[f64]>::to_vec),
    }
}

fn check_conductivity(mesh: &Mesh, sigma: &ConductivityField) -> Result<()> {
    if sigma.tensors.len() != mesh.n_triangles() {
        return Err(Error::SizeMismatch {
            context: "conductivity tensors per triangle",
            expected: mesh.n_triangles(),
            actual: sigma.tensors.len(),
        });
    }
    Ok(())
}

/// Pure stiffness matrix `∫ σ∇φ_i·∇φ_j` on the nodal space.
pub fn assemble_stiffness(mesh: &Mesh, sigma: &ConductivityField) -> Result<CsrMatrix> {
    check_conductivity(mesh, sigma)?;
    let n = mesh.n_vertices();
    let mut t = TripletBuilder::with_capacity(n, n, 9 * mesh.n_triangles());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let ke = element_stiffness(mesh.triangle_points(k), &sigma.tensors[k])?;
        for i in 0..3 {
            for j in 0..3 {
                t.push(tri[i], tri[j], ke[i][j]);
            }
        }
    }
    Ok(t.build_symmetric_from_upper())
}

/// Discretized complete electrode model.
#[derive(Debug, Clone)]
pub struct CemSystem {
    pub matrix: CsrMatrix,
    pub dofmap: DofMap,
    pub layout: ElectrodeLayout,
    pub provenance: Provenance,
}

/// Assembles the CEM system with the default voltage basis.
pub fn assemble_cem(mesh: &Mesh, sigma: &ConductivityField, layout: &ElectrodeLayout) -> Result<CemSystem> {
    let dofmap = DofMap::new(mesh.n_vertices(), layout.n_electrodes())?;
    assemble_cem_with(mesh, sigma, layout, dofmap)
}

pub fn assemble_cem_with(
    mesh: &Mesh,
    sigma: &ConductivityField,
    layout: &ElectrodeLayout,
    dofmap: DofMap,
) -> Result<CemSystem> {
    check_conductivity(mesh, sigma)?;
    if mesh.n_electrodes() > layout.n_electrodes() {
        return Err(Error::Config(format!(
            "mesh tags {} electrodes but only {} contact impedances were given",
            mesh.n_electrodes(),
            layout.n_electrodes()
        )));
    }
    if mesh.n_electrodes() != layout.n_electrodes() {
        return Err(Error::Config(format!(
            "{} contact impedances given for a mesh with {} electrodes",
            layout.n_electrodes(),
            mesh.n_electrodes()
        )));
    }
    if dofmap.n_nodes() != mesh.n_vertices() || dofmap.n_electrodes() != layout.n_electrodes() {
        return Err(Error::Config("dof map does not match mesh and electrode layout".into()));
    }
    let z = layout.impedances();
    if let Some(m) = z.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "contact impedance of electrode {} must be positive",
            m + 1
        )));
    }

    let n = mesh.n_vertices();
    let n_dofs = dofmap.n_dofs();
    let basis = dofmap.voltage_basis();
    let mut t = TripletBuilder::with_capacity(n_dofs, n_dofs, 9 * mesh.n_triangles());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let ke = element_stiffness(mesh.triangle_points(k), &sigma.tensors[k])?;
        for i in 0..3 {
            for j in 0..3 {
                t.push(tri[i], tri[j], ke[i][j]);
            }
        }
    }

    let mut electrode_length = vec![0.0; layout.n_electrodes()];
    for e in mesh.boundary_edges() {
        let EdgeTag::Electrode(m) = e.tag else { continue };
        let [a, b] = e.vertices;
        let blocks = electrode_edge_blocks(mesh.vertices()[a], mesh.vertices()[b])?;
        let w = 1.0 / z[m];
        electrode_length[m] += blocks.length;
        let nodes = [a, b];
        for i in 0..2 {
            for j in 0..2 {
                t.push(nodes[i], nodes[j], w * blocks.mass[i][j]);
            }
            for (kv, &coef) in basis.row(m).iter().enumerate() {
                if coef != 0.0 {
                    t.push(nodes[i], n + kv, -w * coef * blocks.load[i]);
                }
            }
        }
    }
    for k in 0..dofmap.n_voltage_dofs() {
        for l in k..dofmap.n_voltage_dofs() {
            let v: f64 = (0..layout.n_electrodes())
                .map(|m| electrode_length[m] / z[m] * basis[(m, k)] * basis[(m, l)])
                .sum();
            if v != 0.0 {
                t.push(n + k, n + l, v);
            }
        }
    }

    Ok(CemSystem {
        matrix: t.build_symmetric_from_upper(),
        dofmap,
        layout: layout.clone(),
        provenance: provenance(mesh, sigma, Some(z)),
    })
}

/// Discretized shunt model: the CEM space with every electrode node tied to
/// its electrode voltage.
#[derive(Debug, Clone)]
pub struct ShuntSystem {
    /// `Cᵀ K C` on the reduced unknowns.
    pub matrix: CsrMatrix,
    /// Full unknowns = `constraint` · reduced unknowns.
    pub constraint: CsrMatrix,
    pub dofmap: DofMap,
    /// Reduced index of each free node; `None` for electrode nodes.
    pub free_node_index: Vec<Option<usize>>,
    pub node_electrode: Vec<Option<usize>>,
    pub provenance: Provenance,
}

impl ShuntSystem {
    pub fn n_free_nodes(&self) -> usize {
        self.free_node_index.iter().flatten().count()
    }

    pub fn n_reduced_dofs(&self) -> usize {
        self.constraint.ncols()
    }

    /// `Cᵀ b`
    pub fn reduce_load(&self, load: &LoadVector) -> Result<Vec<f64>> {
        if load.values.len() != self.constraint.nrows() {
            return Err(Error::SizeMismatch {
                context: "shunt load vector",
                expected: self.constraint.nrows(),
                actual: load.values.len(),
            });
        }
        Ok(self.constraint.transpose().mul_vec(&load.values))
    }
}

pub fn assemble_shunt(mesh: &Mesh, sigma: &ConductivityField, n_electrodes: usize) -> Result<ShuntSystem> {
    let dofmap = DofMap::new(mesh.n_vertices(), n_electrodes)?;
    assemble_shunt_with(mesh, sigma, dofmap)
}

pub fn assemble_shunt_with(mesh: &Mesh, sigma: &ConductivityField, dofmap: DofMap) -> Result<ShuntSystem> {
    check_conductivity(mesh, sigma)?;
    if mesh.n_electrodes() != dofmap.n_electrodes() {
        return Err(Error::Config(format!(
            "shunt model built for {} electrodes on a mesh with {}",
            dofmap.n_electrodes(),
            mesh.n_electrodes()
        )));
    }
    let node_electrode = mesh.electrode_of_vertex()?;
    let n = mesh.n_vertices();
    let mut free_node_index = vec![None; n];
    let mut n_free = 0;
    for (v, owner) in node_electrode.iter().enumerate() {
        if owner.is_none() {
            free_node_index[v] = Some(n_free);
            n_free += 1;
        }
    }
    let nv = dofmap.n_voltage_dofs();
    let n_red = n_free + nv;
    let basis = dofmap.voltage_basis();

    // reduced unknowns reachable from each node, with weights
    let node_map: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|v| match (free_node_index[v], node_electrode[v]) {
            (Some(r), _) => vec![(r, 1.0)],
            (None, Some(m)) => (0..nv)
                .filter(|&k| basis[(m, k)] != 0.0)
                .map(|k| (n_free + k, basis[(m, k)]))
                .collect(),
            (None, None) => unreachable!(),
        })
        .collect();

    let mut c = TripletBuilder::new(dofmap.n_dofs(), n_red);
    for (v, entries) in node_map.iter().enumerate() {
        for &(r, w) in entries {
            c.push(v, r, w);
        }
    }
    for k in 0..nv {
        c.push(n + k, n_free + k, 1.0);
    }

    let mut t = TripletBuilder::with_capacity(n_red, n_red, 9 * mesh.n_triangles());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let ke = element_stiffness(mesh.triangle_points(k), &sigma.tensors[k])?;
        for i in 0..3 {
            for j in 0..3 {
                for &(a, wa) in &node_map[tri[i]] {
                    for &(b, wb) in &node_map[tri[j]] {
                        t.push(a, b, wa * ke[i][j] * wb);
                    }
                }
            }
        }
    }

    Ok(ShuntSystem {
        matrix: t.build_symmetric_from_upper(),
        constraint: c.build(),
        dofmap,
        free_node_index,
        node_electrode,
        provenance: provenance(mesh, sigma, None),
    })
}
