use std::collections::HashMap;
use std::sync::Arc;

use super::{edge_key, BoundaryEdge, EdgeTag, Mesh, Point};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const LOCAL_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

/// Four congruent children of `t`; `mids` are the midpoints of the local
/// edges 01, 12 and 20. Orientation is preserved.
fn red_children(t: [usize; 3], mids: [usize; 3]) -> [[usize; 3]; 4] {
    let [a, b, c] = t;
    let [m01, m12, m20] = mids;
    [[a, m01, m20], [m01, b, m12], [m20, m12, c], [m01, m12, m20]]
}

fn midpoint(p: Point, q: Point) -> Point {
    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
}

/// Nonconforming red-refinement state; green closure is applied only when a
/// conforming mesh is extracted, so green elements are never refined again.
struct RedForest {
    vertices: Vec<Point>,
    on_boundary: Vec<bool>,
    mids: HashMap<(usize, usize), usize>,
    boundary_keys: HashMap<(usize, usize), ()>,
    leaves: Vec<[usize; 3]>,
}

impl RedForest {
    fn new(mesh: &Mesh) -> Self {
        Self {
            vertices: mesh.vertices.clone(),
            on_boundary: mesh.boundary_vertex_mask(),
            mids: HashMap::new(),
            boundary_keys: mesh
                .boundary
                .iter()
                .map(|e| (edge_key(e.vertices[0], e.vertices[1]), ()))
                .collect(),
            leaves: mesh.triangles.clone(),
        }
    }

    fn midpoint_of(&mut self, a: usize, b: usize) -> usize {
        let key = edge_key(a, b);
        if let Some(&m) = self.mids.get(&key) {
            return m;
        }
        let m = self.vertices.len();
        self.vertices.push(midpoint(self.vertices[a], self.vertices[b]));
        let on_boundary = self.boundary_keys.remove(&key).is_some();
        if on_boundary {
            self.boundary_keys.insert(edge_key(a, m), ());
            self.boundary_keys.insert(edge_key(m, b), ());
        }
        self.on_boundary.push(on_boundary);
        self.mids.insert(key, m);
        m
    }

    fn refine_marked(&mut self, marked: &[bool]) {
        let leaves = std::mem::take(&mut self.leaves);
        let mut next = Vec::with_capacity(leaves.len() + 3 * marked.iter().filter(|m| **m).count());
        for (t, &mark) in leaves.into_iter().zip(marked) {
            if mark {
                let mids = LOCAL_EDGES.map(|(i, j)| self.midpoint_of(t[i], t[j]));
                next.extend(red_children(t, mids));
            } else {
                next.push(t);
            }
        }
        self.leaves = next;
    }

    fn hanging(&self, a: usize, b: usize) -> Option<usize> {
        self.mids.get(&edge_key(a, b)).copied()
    }

    /// A leaf must be red-refined when two of its edges carry hanging nodes
    /// or when a hanging edge is split more than once.
    fn needs_red(&self, t: &[usize; 3]) -> bool {
        let mut count = 0;
        for (i, j) in LOCAL_EDGES {
            if let Some(m) = self.hanging(t[i], t[j]) {
                if self.hanging(t[i], m).is_some() || self.hanging(m, t[j]).is_some() {
                    return true;
                }
                count += 1;
            }
        }
        count >= 2
    }

    /// Red-refine the marked leaves, then keep refining until every leaf has
    /// at most one singly split edge.
    fn refine_with_closure(&mut self, mut marked: Vec<bool>) {
        while marked.iter().any(|&m| m) {
            self.refine_marked(&marked);
            marked = self.leaves.iter().map(|t| self.needs_red(t)).collect();
        }
    }

    fn conforming_triangles(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::with_capacity(self.leaves.len() * 3 / 2);
        for t in &self.leaves {
            let split = LOCAL_EDGES
                .iter()
                .enumerate()
                .find_map(|(e, &(i, j))| self.hanging(t[i], t[j]).map(|m| (e, m)));
            match split {
                None => out.push(*t),
                Some((e, m)) => {
                    // green bisection from the vertex opposite the split edge
                    let a = t[e];
                    let b = t[(e + 1) % 3];
                    let c = t[(e + 2) % 3];
                    out.push([a, m, c]);
                    out.push([m, b, c]);
                }
            }
        }
        out
    }

    fn expand_boundary(&self, edges: &[BoundaryEdge]) -> Vec<BoundaryEdge> {
        fn expand(f: &RedForest, a: usize, b: usize, tag: EdgeTag, out: &mut Vec<BoundaryEdge>) {
            match f.hanging(a, b) {
                Some(m) => {
                    expand(f, a, m, tag, out);
                    expand(f, m, b, tag, out);
                }
                None => out.push(BoundaryEdge { vertices: [a, b], tag }),
            }
        }
        let mut out = Vec::with_capacity(edges.len());
        for e in edges {
            expand(self, e.vertices[0], e.vertices[1], e.tag, &mut out);
        }
        out
    }
}

impl Mesh {
    /// Red refinement of every triangle. The child keeps the parent's
    /// vertices as its first vertices and records where each new midpoint
    /// came from, which makes the pair nested.
    pub fn refine_uniform(&self) -> Result<Mesh> {
        let mut vertices = self.vertices.clone();
        let mut mids: HashMap<(usize, usize), usize> =
            HashMap::with_capacity(3 * self.triangles.len() / 2 + self.boundary.len());
        let mut midpoint_parents = Vec::new();
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &t in &self.triangles {
            let m = LOCAL_EDGES.map(|(i, j)| {
                let (a, b) = (t[i], t[j]);
                *mids.entry(edge_key(a, b)).or_insert_with(|| {
                    vertices.push(midpoint(self.vertices[a], self.vertices[b]));
                    midpoint_parents.push([a, b]);
                    vertices.len() - 1
                })
            });
            triangles.extend(red_children(t, m));
        }
        let boundary = self
            .boundary
            .iter()
            .flat_map(|e| {
                let [a, b] = e.vertices;
                let m = mids[&edge_key(a, b)];
                [
                    BoundaryEdge {
                        vertices: [a, m],
                        tag: e.tag,
                    },
                    BoundaryEdge {
                        vertices: [m, b],
                        tag: e.tag,
                    },
                ]
            })
            .collect();
        let fine = Mesh {
            vertices,
            triangles,
            boundary,
            n_electrodes: self.n_electrodes,
            level: self.level + 1,
            parent: Some(Arc::new(self.clone())),
            midpoint_parents,
        };
        fine.validate()?;
        Ok(fine)
    }

    /// `levels` successive uniform refinements.
    pub fn refine_uniform_n(&self, levels: usize) -> Result<Mesh> {
        let mut mesh = self.clone();
        for _ in 0..levels {
            mesh = mesh.refine_uniform()?;
        }
        Ok(mesh)
    }

    /// Grades the mesh towards the boundary: each round red-refines every
    /// triangle touching the boundary, and conformity is restored by red
    /// closure plus green bisection. The result is not nested in the input
    /// in the sense of [`prolongation`], so it carries no parent.
    pub fn refine_boundary_layer(&self, rounds: usize) -> Result<Mesh> {
        if rounds == 0 {
            return Ok(self.clone());
        }
        let mut forest = RedForest::new(self);
        for _ in 0..rounds {
            let marked = forest
                .leaves
                .iter()
                .map(|t| t.iter().any(|&v| forest.on_boundary[v]))
                .collect();
            forest.refine_with_closure(marked);
        }
        let triangles = forest.conforming_triangles();
        let boundary = forest.expand_boundary(&self.boundary);
        let mesh = Mesh {
            vertices: forest.vertices,
            triangles,
            boundary,
            n_electrodes: self.n_electrodes,
            level: self.level,
            parent: None,
            midpoint_parents: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Interpolation matrix (fine vertices × coarse vertices) embedding P1
/// functions on `coarse` into P1 on `fine`. `fine` must descend from
/// `coarse` by uniform refinement.
pub fn prolongation(coarse: &Mesh, fine: &Mesh) -> Result<CsrMatrix> {
    let mut chain = Vec::new();
    let mut current = fine;
    while !current.same_geometry(coarse) {
        if current.n_vertices() <= coarse.n_vertices() {
            return Err(Error::Structural(
                "fine mesh does not descend from the coarse mesh by uniform refinement".into(),
            ));
        }
        let p = current.parent_interpolation().ok_or_else(|| {
            Error::Structural("fine mesh has no refinement genealogy reaching the coarse mesh".into())
        })?;
        chain.push(p);
        current = current.parent.as_deref().expect("interpolation implies a parent");
    }
    let mut p = CsrMatrix::identity(fine.n_vertices());
    for step in &chain {
        p = p.matmul(step)?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ElectrodePattern;

    fn fan16() -> Mesh {
        Mesh::regular_polygon(16, 8, ElectrodePattern::Alternating).unwrap()
    }

    #[test]
    fn uniform_refinement_counts() {
        let m1 = fan16().refine_uniform().unwrap();
        assert_eq!(m1.n_triangles(), 64);
        assert_eq!(m1.n_vertices(), 49);
        assert_eq!(m1.boundary_edges().len(), 32);
        assert_eq!(m1.level(), 1);
        assert_eq!(m1.n_vertices() as i64 - m1.edges().len() as i64 + 64, 1);
    }

    #[test]
    fn uniform_refinement_halves_h() {
        let mut m = fan16();
        for _ in 0..3 {
            let f = m.refine_uniform().unwrap();
            assert!((f.h_max() - 0.5 * m.h_max()).abs() <= 1e-14);
            assert_eq!(f.n_triangles(), 4 * m.n_triangles());
            assert_eq!(&f.vertices()[..m.n_vertices()], m.vertices());
            m = f;
        }
    }

    #[test]
    fn electrode_tags_are_inherited() {
        let m1 = fan16().refine_uniform().unwrap();
        let b = m1.boundary_edges();
        assert_eq!(b[0].tag, EdgeTag::Electrode(0));
        assert_eq!(b[1].tag, EdgeTag::Electrode(0));
        assert_eq!(b[0].vertices[1], b[1].vertices[0]);
        assert_eq!(b[2].tag, EdgeTag::Insulated);
    }

    #[test]
    fn boundary_layer_zero_rounds_is_identity() {
        let m = fan16().refine_uniform().unwrap();
        let g = m.refine_boundary_layer(0).unwrap();
        assert!(g.same_geometry(&m));
    }

    #[test]
    fn boundary_layer_one_round_on_fan_equals_uniform() {
        let m = fan16();
        let g = m.refine_boundary_layer(1).unwrap();
        let u = m.refine_uniform().unwrap();
        assert!(g.same_geometry(&u));
    }

    #[test]
    fn boundary_layer_grades_h() {
        let base = fan16().refine_uniform_n(2).unwrap();
        let g = base.refine_boundary_layer(2).unwrap();
        assert!((g.h_interior() - base.h_max()).abs() < 1e-12);
        assert!((g.h_boundary() - base.h_max() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn prolongation_identity_and_constants() {
        let c = fan16();
        let p = prolongation(&c, &c).unwrap();
        assert_eq!(p, CsrMatrix::identity(17));
        let f = c.refine_uniform_n(2).unwrap();
        let p = prolongation(&c, &f).unwrap();
        assert_eq!(p.nrows(), f.n_vertices());
        assert!(p.mul_vec(&[1.0; 17]).iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn prolongation_reproduces_linear_functions() {
        let c = fan16().refine_uniform().unwrap();
        let f = c.refine_uniform_n(2).unwrap();
        let p = prolongation(&c, &f).unwrap();
        let lin = |q: &Point| 0.3 + 2.0 * q[0] - 1.5 * q[1];
        let uc: Vec<f64> = c.vertices().iter().map(lin).collect();
        let uf = p.mul_vec(&uc);
        for (v, q) in uf.iter().zip(f.vertices()) {
            assert!((v - lin(q)).abs() < 1e-13);
        }
    }

    #[test]
    fn prolongation_rejects_unrelated_meshes() {
        let c = fan16().refine_uniform().unwrap();
        let other = Mesh::regular_polygon(32, 8, ElectrodePattern::Alternating)
            .unwrap()
            .refine_uniform_n(2)
            .unwrap();
        assert!(matches!(prolongation(&c, &other), Err(Error::Structural(_))));
        let graded = c.refine_boundary_layer(1).unwrap();
        assert!(matches!(prolongation(&c, &graded), Err(Error::Structural(_))));
        // coarse finer than fine
        let f = c.refine_uniform().unwrap();
        assert!(matches!(prolongation(&f, &c), Err(Error::Structural(_))));
    }
}
