//! Norms of discrete potentials, error functionals and log-log rate fits.

use nalgebra::DMatrix;

use crate::assembly::{assemble_stiffness, ConductivityField};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::solver::FESolution;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// P1 mass and (σ = identity) stiffness matrices of a mesh.
#[derive(Debug, Clone)]
pub struct NormMatrices {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

impl NormMatrices {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let n = mesh.n_vertices();
        let mut t = TripletBuilder::with_capacity(n, n, 9 * mesh.n_triangles());
        for (k, tri) in mesh.triangles().iter().enumerate() {
            let p = mesh.triangle_points(k);
            let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
            for i in 0..3 {
                for j in 0..3 {
                    let w = if i == j { area / 6.0 } else { area / 12.0 };
                    t.push(tri[i], tri[j], w);
                }
            }
        }
        Ok(Self {
            mass: t.build_symmetric_from_upper(),
            stiffness: assemble_stiffness(mesh, &ConductivityField::identity(mesh.n_triangles()))?,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.mass.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub h1: f64,
    /// `√(‖u‖²_{H¹} + |U|²)`
    pub combined: f64,
}

fn check_len(nm: &NormMatrices, u: &[f64]) -> Result<()> {
    if u.len() != nm.n_nodes() {
        return Err(Error::SizeMismatch {
            context: "nodal vector vs norm matrices",
            expected: nm.n_nodes(),
            actual: u.len(),
        });
    }
    Ok(())
}

/// Exact norms of the P1 function `u` together with the voltage part `voltages`.
pub fn norms(nm: &NormMatrices, u: &[f64], voltages: &[f64]) -> Result<Norms> {
    check_len(nm, u)?;
    // clamp tiny negative round-off before the square roots
    let l2_sq = nm.mass.bilinear(u, u).max(0.0);
    let semi_sq = nm.stiffness.bilinear(u, u).max(0.0);
    let v_sq: f64 = voltages.iter().map(|v| v * v).sum();
    Ok(Norms {
        l2: l2_sq.sqrt(),
        h1_semi: semi_sq.sqrt(),
        h1: (l2_sq + semi_sq).sqrt(),
        combined: (l2_sq + semi_sq + v_sq).sqrt(),
    })
}

/// Error of one discrete potential pair against another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBundle {
    pub h1: f64,
    pub l2: f64,
    pub combined: f64,
    /// Euclidean norm of the voltage difference.
    pub voltages: f64,
}

fn bundle(nm: &NormMatrices, du: &[f64], dv: &[f64]) -> Result<ErrorBundle> {
    let n = norms(nm, du, dv)?;
    Ok(ErrorBundle {
        h1: n.h1,
        l2: n.l2,
        combined: n.combined,
        voltages: dv.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

fn voltage_diff(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            context: "electrode voltages",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Difference of two solutions living on the same mesh.
pub fn diff_same_mesh(a: &FESolution, b: &FESolution, nm: &NormMatrices) -> Result<ErrorBundle> {
    check_len(nm, &a.nodal)?;
    check_len(nm, &b.nodal)?;
    let du: Vec<f64> = a.nodal.iter().zip(&b.nodal).map(|(x, y)| x - y).collect();
    bundle(nm, &du, &voltage_diff(&a.voltages, &b.voltages)?)
}

/// Error of a coarse solution against a fine reference, measured on the fine
/// mesh after prolongation.
pub fn diff_nested(
    coarse: &FESolution,
    reference: &FESolution,
    prolongation: &CsrMatrix,
    fine: &NormMatrices,
) -> Result<ErrorBundle> {
    if prolongation.ncols() != coarse.nodal.len() {
        return Err(Error::SizeMismatch {
            context: "prolongation columns vs coarse nodal vector",
            expected: prolongation.ncols(),
            actual: coarse.nodal.len(),
        });
    }
    check_len(fine, &reference.nodal)?;
    let lifted = prolongation.mul_vec(&coarse.nodal);
    check_len(fine, &lifted)?;
    let du: Vec<f64> = lifted.iter().zip(&reference.nodal).map(|(x, y)| x - y).collect();
    bundle(fine, &du, &voltage_diff(&coarse.voltages, &reference.voltages)?)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual of the fit in log space.
    pub max_residual: f64,
    pub n_points: usize,
}

impl SlopeFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch {
            context: "fit abscissae vs ordinates",
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "a slope fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "log-log fit needs positive finite values, got {v}"
        )));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain(
            "log-log fit needs at least two distinct abscissae".into(),
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(SlopeFit {
        slope,
        intercept,
        max_residual,
        n_points: xs.len(),
    })
}
