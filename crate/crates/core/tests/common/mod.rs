//! Test support: a dense brute-force quadrature assembly of the CEM and
//! shunt bilinear forms, plus a corpus of small meshes.
//!
//! The oracle evaluates basis functions pointwise from barycentric
//! coordinates and integrates with a 7-point triangle rule and a 3-point
//! Gauss edge rule. It shares no code with the library assembly.

#![allow(dead_code)]

use eit_cem::{BoundaryEdge, EdgeTag, ElectrodePattern, Mesh, Tensor2};

/// Degree-5 rule: (barycentric point, weight relative to the area).
const TRI_RULE: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

fn edge_rule() -> [(f64, f64); 3] {
    let d = 0.5 * (0.6f64).sqrt();
    [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
}

/// A function of the discrete space: nodal values plus electrode voltages.
#[derive(Debug, Clone)]
pub struct DiscreteFn {
    pub nodal: Vec<f64>,
    pub voltages: Vec<f64>,
}

/// Value of the P1 interpolant of `nodal` at `x`, located in triangle `t`.
fn eval_in(mesh: &Mesh, t: usize, nodal: &[f64], x: [f64; 2]) -> f64 {
    let [a, b, c] = mesh.triangles()[t];
    let (pa, pb, pc) = (mesh.vertices()[a], mesh.vertices()[b], mesh.vertices()[c]);
    let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
    let l1 = ((x[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (x[1] - pa[1])) / det;
    let l2 = ((pb[0] - pa[0]) * (x[1] - pa[1]) - (x[0] - pa[0]) * (pb[1] - pa[1])) / det;
    let l0 = 1.0 - l1 - l2;
    l0 * nodal[a] + l1 * nodal[b] + l2 * nodal[c]
}

fn grad_in(mesh: &Mesh, t: usize, nodal: &[f64]) -> [f64; 2] {
    let [a, b, c] = mesh.triangles()[t];
    let (pa, pb, pc) = (mesh.vertices()[a], mesh.vertices()[b], mesh.vertices()[c]);
    // J g = (f_b - f_a, f_c - f_a) with J rows = edge vectors
    let j = [[pb[0] - pa[0], pb[1] - pa[1]], [pc[0] - pa[0], pc[1] - pa[1]]];
    let rhs = [nodal[b] - nodal[a], nodal[c] - nodal[a]];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    [
        (rhs[0] * j[1][1] - rhs[1] * j[0][1]) / det,
        (j[0][0] * rhs[1] - j[1][0] * rhs[0]) / det,
    ]
}

fn area(mesh: &Mesh, t: usize) -> f64 {
    let [a, b, c] = mesh.triangles()[t].map(|i| mesh.vertices()[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn point_at(mesh: &Mesh, t: usize, bary: [f64; 3]) -> [f64; 2] {
    let p = mesh.triangles()[t].map(|i| mesh.vertices()[i]);
    [
        bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
        bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
    ]
}

/// Triangle owning each boundary edge.
fn edge_owner(mesh: &Mesh, e: &BoundaryEdge) -> usize {
    let [i, j] = e.vertices;
    mesh.triangles()
        .iter()
        .position(|t| t.contains(&i) && t.contains(&j))
        .expect("boundary edge without triangle")
}

/// `∫ σ∇f·∇g`
pub fn energy(mesh: &Mesh, sigma: &[Tensor2], f: &[f64], g: &[f64]) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| {
            let (gf, gg) = (grad_in(mesh, t, f), grad_in(mesh, t, g));
            let s = sigma[t];
            let sg = [s[0][0] * gg[0] + s[0][1] * gg[1], s[1][0] * gg[0] + s[1][1] * gg[1]];
            let w: f64 = TRI_RULE.iter().map(|(_, w)| w).sum();
            area(mesh, t) * w * (gf[0] * sg[0] + gf[1] * sg[1])
        })
        .sum()
}

/// `∫ f g`
pub fn mass(mesh: &Mesh, f: &[f64], g: &[f64]) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| {
            area(mesh, t)
                * TRI_RULE
                    .iter()
                    .map(|(bary, w)| {
                        let x = point_at(mesh, t, *bary);
                        w * eval_in(mesh, t, f, x) * eval_in(mesh, t, g, x)
                    })
                    .sum::<f64>()
        })
        .sum()
}

/// `Σ_m (1/z_m) ∫_{E_m} (f − F_m)(g − G_m)`
pub fn contact(mesh: &Mesh, z: &[f64], f: &DiscreteFn, g: &DiscreteFn) -> f64 {
    let mut total = 0.0;
    for e in mesh.boundary_edges() {
        let EdgeTag::Electrode(m) = e.tag else { continue };
        let t = edge_owner(mesh, e);
        let (p, q) = (mesh.vertices()[e.vertices[0]], mesh.vertices()[e.vertices[1]]);
        let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        for (s, w) in edge_rule() {
            let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
            let fv = eval_in(mesh, t, &f.nodal, x) - f.voltages[m];
            let gv = eval_in(mesh, t, &g.nodal, x) - g.voltages[m];
            total += w * len * fv * gv / z[m];
        }
    }
    total
}

pub fn cem_form(mesh: &Mesh, sigma: &[Tensor2], z: &[f64], f: &DiscreteFn, g: &DiscreteFn) -> f64 {
    energy(mesh, sigma, &f.nodal, &g.nodal) + contact(mesh, z, f, g)
}

/// Grounding basis `e_k − e_M`, `k = 1..M−1`.
pub fn ground_vector(m: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[k] = 1.0;
    v[m - 1] = -1.0;
    v
}

/// Basis of the CEM space in solver order: nodal hats, then voltage vectors.
pub fn cem_basis(mesh: &Mesh) -> Vec<DiscreteFn> {
    let (n, m) = (mesh.n_vertices(), mesh.n_electrodes());
    let mut basis = Vec::with_capacity(n + m - 1);
    for i in 0..n {
        let mut nodal = vec![0.0; n];
        nodal[i] = 1.0;
        basis.push(DiscreteFn {
            nodal,
            voltages: vec![0.0; m],
        });
    }
    for k in 0..m - 1 {
        basis.push(DiscreteFn {
            nodal: vec![0.0; n],
            voltages: ground_vector(m, k),
        });
    }
    basis
}

/// Electrode owning each vertex, from the boundary tags.
pub fn vertex_electrodes(mesh: &Mesh) -> Vec<Option<usize>> {
    let mut owner = vec![None; mesh.n_vertices()];
    for e in mesh.boundary_edges() {
        if let EdgeTag::Electrode(m) = e.tag {
            owner[e.vertices[0]] = Some(m);
            owner[e.vertices[1]] = Some(m);
        }
    }
    owner
}

/// Basis of the shunt subspace: hats of vertices off the electrodes in
/// increasing vertex order, then for each grounding vector the function equal
/// to that voltage on every electrode and zero at the free vertices.
pub fn shunt_basis(mesh: &Mesh) -> Vec<DiscreteFn> {
    let (n, m) = (mesh.n_vertices(), mesh.n_electrodes());
    let owner = vertex_electrodes(mesh);
    let mut basis = Vec::new();
    for i in (0..n).filter(|&i| owner[i].is_none()) {
        let mut nodal = vec![0.0; n];
        nodal[i] = 1.0;
        basis.push(DiscreteFn {
            nodal,
            voltages: vec![0.0; m],
        });
    }
    for k in 0..m - 1 {
        let v = ground_vector(m, k);
        let nodal = (0..n).map(|i| owner[i].map_or(0.0, |e| v[e])).collect();
        basis.push(DiscreteFn { nodal, voltages: v });
    }
    basis
}

pub fn dense_cem(mesh: &Mesh, sigma: &[Tensor2], z: &[f64]) -> Vec<Vec<f64>> {
    let basis = cem_basis(mesh);
    gram(&basis, |f, g| cem_form(mesh, sigma, z, f, g))
}

/// The contact term vanishes identically on the shunt subspace.
pub fn dense_shunt(mesh: &Mesh, sigma: &[Tensor2]) -> Vec<Vec<f64>> {
    let basis = shunt_basis(mesh);
    gram(&basis, |f, g| energy(mesh, sigma, &f.nodal, &g.nodal))
}

pub fn dense_mass(mesh: &Mesh) -> Vec<Vec<f64>> {
    let hats: Vec<Vec<f64>> = (0..mesh.n_vertices())
        .map(|i| (0..mesh.n_vertices()).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    gram(&hats, |f, g| mass(mesh, f, g))
}

pub fn dense_stiffness(mesh: &Mesh) -> Vec<Vec<f64>> {
    let id = vec![[[1.0, 0.0], [0.0, 1.0]]; mesh.n_triangles()];
    let hats: Vec<Vec<f64>> = (0..mesh.n_vertices())
        .map(|i| (0..mesh.n_vertices()).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    gram(&hats, |f, g| energy(mesh, &id, f, g))
}

fn gram<T>(basis: &[T], form: impl Fn(&T, &T) -> f64) -> Vec<Vec<f64>> {
    basis
        .iter()
        .map(|f| basis.iter().map(|g| form(f, g)).collect())
        .collect()
}

/// Two triangles on the unit square, electrodes on the bottom and top sides.
pub fn unit_square() -> Mesh {
    let edge = |a, b, tag| BoundaryEdge { vertices: [a, b], tag };
    Mesh::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![[0, 1, 2], [0, 2, 3]],
        vec![
            edge(0, 1, EdgeTag::Electrode(0)),
            edge(1, 2, EdgeTag::Insulated),
            edge(2, 3, EdgeTag::Electrode(1)),
            edge(3, 0, EdgeTag::Insulated),
        ],
        2,
    )
    .unwrap()
}

pub fn polygon(n_sides: usize, n_electrodes: usize) -> Mesh {
    Mesh::regular_polygon(n_sides, n_electrodes, ElectrodePattern::Alternating).unwrap()
}

pub fn hexadecagon(level: usize) -> Mesh {
    polygon(16, 8).refine_uniform_n(level).unwrap()
}

/// Every corpus mesh with at most 50 CEM unknowns.
pub fn small_meshes() -> Vec<(&'static str, Mesh)> {
    let all = vec![
        ("unit square", unit_square()),
        ("square fan", polygon(4, 2)),
        ("hexagon fan", polygon(6, 3)),
        ("octagon fan m2", polygon(8, 2)),
        ("octagon fan m4", polygon(8, 4)),
        ("dodecagon fan", polygon(12, 6)),
        ("hexadecagon fan", polygon(16, 8)),
        ("square level 1", polygon(4, 2).refine_uniform().unwrap()),
        ("square level 2", polygon(4, 2).refine_uniform_n(2).unwrap()),
        ("octagon level 1", polygon(8, 4).refine_uniform().unwrap()),
        (
            "square graded",
            polygon(4, 2)
                .refine_uniform()
                .unwrap()
                .refine_boundary_layer(1)
                .unwrap(),
        ),
        (
            "hexagon graded",
            polygon(6, 3)
                .refine_uniform()
                .unwrap()
                .refine_boundary_layer(1)
                .unwrap(),
        ),
    ];
    all.into_iter()
        .filter(|(_, m)| m.n_vertices() + m.n_electrodes() - 1 <= 50)
        .collect()
}

/// Conductivities exercised by the oracle tests.
pub fn conductivities(n_triangles: usize) -> Vec<(&'static str, Vec<Tensor2>)> {
    vec![
        ("identity", vec![[[1.0, 0.0], [0.0, 1.0]]; n_triangles]),
        ("diag(1,3)", vec![[[1.0, 0.0], [0.0, 3.0]]; n_triangles]),
        ("full", vec![[[2.0, 0.5], [0.5, 1.0]]; n_triangles]),
        (
            "piecewise",
            (0..n_triangles)
                .map(|t| {
                    let s = 1.0 + 0.25 * (t % 5) as f64;
                    [[s, 0.1], [0.1, 2.0 - 0.1 * (t % 3) as f64]]
                })
                .collect(),
        ),
    ]
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| {
            assert_eq!(r.len(), s.len());
            r.iter().zip(s).map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `I^(h)_m = cos(2π h m / M)`, `m = 1..M`.
pub fn cosine_currents(m: usize, harmonic: usize) -> Vec<f64> {
    (1..=m)
        .map(|k| (2.0 * std::f64::consts::PI * (harmonic * k) as f64 / m as f64).cos())
        .collect()
}
