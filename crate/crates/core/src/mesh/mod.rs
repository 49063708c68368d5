//! Conforming triangulations of regular polygons with electrode-tagged
//! boundary edges.

mod io;
mod refine;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub use refine::prolongation;

pub type Point = [f64; 2];

/// Tag carried by a boundary edge. Electrode indices are zero based; the
/// text format writes them one based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    Insulated,
    Electrode(usize),
}

impl EdgeTag {
    pub fn electrode(self) -> Option<usize> {
        match self {
            EdgeTag::Electrode(m) => Some(m),
            EdgeTag::Insulated => None,
        }
    }
}

/// Boundary edge oriented counter-clockwise along the boundary (the domain
/// lies to its left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: EdgeTag,
}

/// How electrodes are laid out along the polygon boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ElectrodePattern {
    /// The boundary is cut into `2M` equal arcs which alternate between
    /// electrode and insulated, electrode 1 first.
    #[default]
    Alternating,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    n_electrodes: usize,
    level: usize,
    parent: Option<Arc<Mesh>>,
    /// For vertex `parent.n_vertices() + k`, the two parent vertices whose
    /// midpoint it is. Empty when there is no parent.
    midpoint_parents: Vec<[usize; 2]>,
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(p: [Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Mesh {
    /// Assembles and validates a level-0 mesh from raw parts.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        n_electrodes: usize,
    ) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            boundary,
            n_electrodes,
            level: 0,
            parent: None,
            midpoint_parents: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Centroid fan of the regular `n_sides`-gon inscribed in the unit circle.
    ///
    /// Corner `k` sits at angle `2πk/n`; the centre is vertex 0. Electrode 1
    /// starts at the edge between corners 0 and 1, whose midpoint has the
    /// smallest positive polar angle.
    pub fn regular_polygon(n_sides: usize, n_electrodes: usize, pattern: ElectrodePattern) -> Result<Self> {
        if n_sides < 3 {
            return Err(Error::Config(format!(
                "a polygon needs at least 3 sides, got {n_sides}"
            )));
        }
        if n_electrodes < 2 {
            return Err(Error::Config(format!(
                "at least 2 electrodes are required for zero-sum (current-conserving) \
                 patterns, got {n_electrodes}"
            )));
        }
        let ElectrodePattern::Alternating = pattern;
        if !n_sides.is_multiple_of(2 * n_electrodes) {
            return Err(Error::Config(format!(
                "alternating layout needs n_sides ({n_sides}) to be a multiple of \
                 2 * n_electrodes ({})",
                2 * n_electrodes
            )));
        }
        let arc = n_sides / (2 * n_electrodes);

        let mut vertices = Vec::with_capacity(n_sides + 1);
        vertices.push([0.0, 0.0]);
        for k in 0..n_sides {
            let theta = 2.0 * PI * k as f64 / n_sides as f64;
            vertices.push([theta.cos(), theta.sin()]);
        }
        let corner = |k: usize| 1 + k % n_sides;
        let triangles = (0..n_sides).map(|k| [0, corner(k), corner(k + 1)]).collect();
        let boundary = (0..n_sides)
            .map(|k| {
                let segment = k / arc;
                let tag = if segment.is_multiple_of(2) {
                    EdgeTag::Electrode(segment / 2)
                } else {
                    EdgeTag::Insulated
                };
                BoundaryEdge {
                    vertices: [corner(k), corner(k + 1)],
                    tag,
                }
            })
            .collect();
        Self::from_parts(vertices, triangles, boundary, n_electrodes)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_electrodes(&self) -> usize {
        self.n_electrodes
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn parent(&self) -> Option<&Arc<Mesh>> {
        self.parent.as_ref()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    /// Same vertex coordinates, triangles and boundary tags. Genealogy and
    /// level are ignored.
    pub fn same_geometry(&self, other: &Mesh) -> bool {
        self.vertices.len() == other.vertices.len()
            && self.triangles.len() == other.triangles.len()
            && self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.boundary == other.boundary
    }

    /// Unique undirected edges in order of first appearance.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::with_capacity(3 * self.triangles.len() / 2 + self.boundary.len());
        let mut out = Vec::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if seen.insert(edge_key(a, b), ()).is_none() {
                    out.push([a, b]);
                }
            }
        }
        out
    }

    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for e in &self.boundary {
            mask[e.vertices[0]] = true;
            mask[e.vertices[1]] = true;
        }
        mask
    }

    /// Electrode owning each vertex: a vertex belongs to electrode `m` when
    /// it lies on the closure of an edge tagged `m`.
    pub fn electrode_of_vertex(&self) -> Result<Vec<Option<usize>>> {
        let mut owner = vec![None; self.vertices.len()];
        for e in &self.boundary {
            if let EdgeTag::Electrode(m) = e.tag {
                for &v in &e.vertices {
                    match owner[v] {
                        Some(other) if other != m => {
                            return Err(Error::Invariant(format!(
                                "vertex {v} lies on electrodes {} and {}",
                                other + 1,
                                m + 1
                            )))
                        }
                        _ => owner[v] = Some(m),
                    }
                }
            }
        }
        Ok(owner)
    }

    /// Largest edge length over the whole mesh.
    pub fn h_max(&self) -> f64 {
        self.h_where(|_| true)
    }

    /// Largest edge length over triangles with at least one boundary vertex.
    pub fn h_boundary(&self) -> f64 {
        let mask = self.boundary_vertex_mask();
        self.h_where(|t| t.iter().any(|&v| mask[v]))
    }

    /// Largest edge length over triangles with no boundary vertex (0 if none).
    pub fn h_interior(&self) -> f64 {
        let mask = self.boundary_vertex_mask();
        self.h_where(|t| t.iter().all(|&v| !mask[v]))
    }

    fn h_where(&self, keep: impl Fn(&[usize; 3]) -> bool) -> f64 {
        self.triangles
            .iter()
            .filter(|t| keep(t))
            .flat_map(|t| {
                let p = t.map(|i| self.vertices[i]);
                [dist(p[0], p[1]), dist(p[1], p[2]), dist(p[2], p[0])]
            })
            .fold(0.0, f64::max)
    }

    /// Checks conformity, orientation, the Euler characteristic and the
    /// electrode layout.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        let mut used = vec![false; nv];
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= nv) {
                return Err(Error::Invariant(format!("triangle {k} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Invariant(format!("triangle {k} repeats a vertex")));
            }
            let area = signed_area(self.triangle_points(k));
            if !(area > 0.0) {
                return Err(Error::Invariant(format!(
                    "triangle {k} has non-positive signed area {area:e}"
                )));
            }
            t.iter().for_each(|&i| used[i] = true);
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Invariant(format!("vertex {v} belongs to no triangle")));
        }

        // directed edge -> count of owning triangles for the undirected edge
        let mut edges: HashMap<(usize, usize), (usize, (usize, usize))> =
            HashMap::with_capacity(3 * self.triangles.len() / 2 + self.boundary.len());
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let entry = edges.entry(edge_key(a, b)).or_insert((0, (a, b)));
                entry.0 += 1;
            }
        }
        let mut n_boundary_from_triangles = 0;
        for (&key, &(count, _)) in &edges {
            match count {
                1 => n_boundary_from_triangles += 1,
                2 => {}
                _ => return Err(Error::Invariant(format!("edge {key:?} is shared by {count} triangles"))),
            }
        }
        if n_boundary_from_triangles != self.boundary.len() {
            return Err(Error::Invariant(format!(
                "{} boundary edges listed but {} edges belong to a single triangle",
                self.boundary.len(),
                n_boundary_from_triangles
            )));
        }
        let mut listed = HashMap::with_capacity(self.boundary.len());
        for e in &self.boundary {
            let [a, b] = e.vertices;
            let key = edge_key(a, b);
            if listed.insert(key, ()).is_some() {
                return Err(Error::Invariant(format!("boundary edge {key:?} listed twice")));
            }
            match edges.get(&key) {
                Some(&(1, directed)) if directed == (a, b) => {}
                Some(&(1, _)) => {
                    return Err(Error::Invariant(format!(
                        "boundary edge {key:?} is not oriented counter-clockwise"
                    )))
                }
                _ => {
                    return Err(Error::Invariant(format!(
                        "boundary edge {key:?} is not a boundary edge of the triangulation"
                    )))
                }
            }
        }

        let euler = nv as i64 - edges.len() as i64 + self.triangles.len() as i64;
        if euler != 1 {
            return Err(Error::Invariant(format!("Euler characteristic is {euler}, expected 1")));
        }

        self.validate_electrodes()
    }

    fn validate_electrodes(&self) -> Result<()> {
        if self.n_electrodes < 2 {
            return Err(Error::Invariant(format!(
                "at least 2 electrodes required, got {}",
                self.n_electrodes
            )));
        }
        let mut per_electrode: Vec<Vec<[usize; 2]>> = vec![Vec::new(); self.n_electrodes];
        for e in &self.boundary {
            if let EdgeTag::Electrode(m) = e.tag {
                if m >= self.n_electrodes {
                    return Err(Error::Invariant(format!(
                        "edge tagged with electrode {} but the mesh has {}",
                        m + 1,
                        self.n_electrodes
                    )));
                }
                per_electrode[m].push(e.vertices);
            }
        }
        for (m, edges) in per_electrode.iter().enumerate() {
            if edges.is_empty() {
                return Err(Error::Invariant(format!("electrode {} has no edges", m + 1)));
            }
            // an open polyline: V = E + 1, degrees <= 2 and connected
            let mut degree: HashMap<usize, usize> = HashMap::new();
            for &[a, b] in edges {
                *degree.entry(a).or_default() += 1;
                *degree.entry(b).or_default() += 1;
            }
            if degree.len() != edges.len() + 1 || degree.values().any(|&d| d > 2) {
                return Err(Error::Invariant(format!(
                    "electrode {} is not a simple open polyline",
                    m + 1
                )));
            }
            let mut parent: HashMap<usize, usize> = degree.keys().map(|&v| (v, v)).collect();
            fn find(p: &mut HashMap<usize, usize>, v: usize) -> usize {
                let mut r = v;
                while p[&r] != r {
                    r = p[&r];
                }
                p.insert(v, r);
                r
            }
            for &[a, b] in edges {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent.insert(ra, rb);
            }
            let keys: Vec<usize> = parent.keys().copied().collect();
            let root = find(&mut parent, keys[0]);
            if keys.iter().any(|&v| find(&mut parent, v) != root) {
                return Err(Error::Invariant(format!("electrode {} is not connected", m + 1)));
            }
        }
        self.electrode_of_vertex().map(|_| ())
    }

    /// Interpolation from the parent mesh; `None` at level 0 or for meshes
    /// without genealogy.
    pub(crate) fn parent_interpolation(&self) -> Option<CsrMatrix> {
        let parent = self.parent.as_ref()?;
        let nc = parent.n_vertices();
        let mut t =
            crate::sparse::TripletBuilder::with_capacity(self.n_vertices(), nc, nc + 2 * self.midpoint_parents.len());
        for i in 0..nc {
            t.push(i, i, 1.0);
        }
        for (k, &[a, b]) in self.midpoint_parents.iter().enumerate() {
            t.push(nc + k, a, 0.5);
            t.push(nc + k, b, 0.5);
        }
        Some(t.build())
    }
}

/// Contact impedances of the `M` electrodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeLayout {
    impedances: Vec<f64>,
}

impl ElectrodeLayout {
    pub fn new(impedances: Vec<f64>) -> Result<Self> {
        if impedances.len() < 2 {
            return Err(Error::Config(format!(
                "at least 2 electrodes are required, got {}",
                impedances.len()
            )));
        }
        if let Some((m, z)) = impedances
            .iter()
            .enumerate()
            .find(|(_, z)| !(**z > 0.0 && z.is_finite()))
        {
            return Err(Error::Domain(format!(
                "contact impedance of electrode {} must be positive and finite, got {z}",
                m + 1
            )));
        }
        Ok(Self { impedances })
    }

    /// Constant contact impedance `beta` on all electrodes.
    pub fn uniform(n_electrodes: usize, beta: f64) -> Result<Self> {
        Self::new(vec![beta; n_electrodes])
    }

    pub fn n_electrodes(&self) -> usize {
        self.impedances.len()
    }

    pub fn impedances(&self) -> &[f64] {
        &self.impedances
    }

    pub fn z_min(&self) -> f64 {
        self.impedances.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn z_max(&self) -> f64 {
        self.impedances.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fan16() -> Mesh {
        Mesh::regular_polygon(16, 8, ElectrodePattern::Alternating).unwrap()
    }

    #[test]
    fn hexadecagon_fan_counts() {
        let m = fan16();
        assert_eq!(m.n_vertices(), 17);
        assert_eq!(m.n_triangles(), 16);
        assert_eq!(m.boundary_edges().len(), 16);
        assert_eq!(m.edges().len(), 32);
        assert_eq!(17 - 32 + 16, 1);
        for e in 0..8 {
            let n = m
                .boundary_edges()
                .iter()
                .filter(|b| b.tag == EdgeTag::Electrode(e))
                .count();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn first_electrode_has_smallest_positive_midpoint_angle() {
        let m = fan16();
        let angle = |b: &BoundaryEdge| {
            let [p, q] = b.vertices.map(|i| m.vertices()[i]);
            let a = (0.5 * (p[1] + q[1])).atan2(0.5 * (p[0] + q[0]));
            if a <= 0.0 {
                a + 2.0 * PI
            } else {
                a
            }
        };
        let first = m
            .boundary_edges()
            .iter()
            .min_by(|a, b| angle(a).partial_cmp(&angle(b)).unwrap())
            .unwrap();
        assert_eq!(first.tag, EdgeTag::Electrode(0));
    }

    #[test]
    fn square_fan_by_hand() {
        let m = Mesh::regular_polygon(4, 2, ElectrodePattern::Alternating).unwrap();
        assert_eq!(m.n_vertices(), 5);
        assert_eq!(m.n_triangles(), 4);
        let tags: Vec<_> = m.boundary_edges().iter().map(|b| b.tag).collect();
        assert_eq!(
            tags,
            vec![
                EdgeTag::Electrode(0),
                EdgeTag::Insulated,
                EdgeTag::Electrode(1),
                EdgeTag::Insulated
            ]
        );
        // edges 0 and 2 are opposite sides of the square
        let e0 = m.boundary_edges()[0].vertices;
        let e2 = m.boundary_edges()[2].vertices;
        assert!(e0.iter().all(|v| !e2.contains(v)));
    }

    #[test]
    fn configuration_errors() {
        assert!(matches!(
            Mesh::regular_polygon(16, 1, ElectrodePattern::Alternating),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Mesh::regular_polygon(16, 3, ElectrodePattern::Alternating),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Mesh::regular_polygon(2, 1, ElectrodePattern::Alternating),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn validate_rejects_clockwise_triangle() {
        let m = fan16();
        let mut tris = m.triangles().to_vec();
        tris[3].swap(1, 2);
        let r = Mesh::from_parts(m.vertices().to_vec(), tris, m.boundary_edges().to_vec(), 8);
        assert!(matches!(r, Err(Error::Invariant(_))));
    }

    #[test]
    fn validate_rejects_touching_electrodes() {
        let m = Mesh::regular_polygon(8, 4, ElectrodePattern::Alternating).unwrap();
        let mut b = m.boundary_edges().to_vec();
        // retag the insulated gap after electrode 1 as electrode 2
        b[1].tag = EdgeTag::Electrode(1);
        let r = Mesh::from_parts(m.vertices().to_vec(), m.triangles().to_vec(), b, 4);
        assert!(matches!(r, Err(Error::Invariant(_))));
    }

    #[test]
    fn validate_rejects_missing_boundary_edge() {
        let m = fan16();
        let mut b = m.boundary_edges().to_vec();
        b.pop();
        let r = Mesh::from_parts(m.vertices().to_vec(), m.triangles().to_vec(), b, 8);
        assert!(matches!(r, Err(Error::Invariant(_))));
    }

    #[test]
    fn layout_bounds() {
        let l = ElectrodeLayout::new(vec![0.5, 2.0, 1.0]).unwrap();
        assert_eq!(l.z_min(), 0.5);
        assert_eq!(l.z_max(), 2.0);
        assert!(matches!(ElectrodeLayout::new(vec![1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(ElectrodeLayout::new(vec![1.0, -1.0]), Err(Error::Domain(_))));
        assert!(matches!(ElectrodeLayout::new(vec![1.0]), Err(Error::Config(_))));
    }
}
