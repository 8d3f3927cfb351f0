//! Nested triangulations of convex polygons.
//!
//! The unit square is meshed as a structured grid of `(2^j)^2` squares, each
//! split along its southwest-northeast diagonal. Uniform refinement splits
//! every triangle into four congruent children through its edge midpoints, so
//! the P1 space on a coarse mesh is a subspace of the P1 space on its
//! refinement. Each refined mesh records where its vertices came from, which
//! makes prolongation an exact interpolation.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::scalar::Real;

/// Highest unit-square level accepted by [`Mesh::unit_square`].
pub const MAX_LEVEL: u32 = 12;

/// Smallest triangle area accepted before a triangle counts as degenerate.
pub const MIN_AREA: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vertex<T> {
    pub fn new(x: T, y: T) -> Self {
        Vertex { x, y }
    }

    pub fn midpoint(&self, other: &Self) -> Self {
        let half = T::lit(0.5);
        Vertex {
            x: (self.x + other.x) * half,
            y: (self.y + other.y) * half,
        }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn cmp_yx(&self, other: &Self) -> Ordering {
        self.y
            .partial_cmp(&other.y)
            .and_then(|o| Some(o.then(self.x.partial_cmp(&other.x)?)))
            .expect("finite coordinates")
    }
}

/// Counter-clockwise vertex indices of a triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triangle(pub [usize; 3]);

impl Triangle {
    pub fn vertices(&self) -> [usize; 3] {
        self.0
    }

    /// The three edges as `(start, end)` in counter-clockwise order.
    pub fn edges(&self) -> [(usize, usize); 3] {
        let [a, b, c] = self.0;
        [(a, b), (b, c), (c, a)]
    }
}

/// Where a vertex of a refined mesh comes from in its parent mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Vertex of a mesh that was not produced by refinement.
    Root,
    /// Copy of the parent vertex with this index.
    Inherited(usize),
    /// Midpoint of the parent edge between these two vertices.
    Midpoint(usize, usize),
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    level: u32,
    vertices: Vec<Vertex<T>>,
    triangles: Vec<Triangle>,
    is_boundary: Vec<bool>,
    origin: Vec<Origin>,
    parent_vertex_count: Option<usize>,
    h: T,
    h_label: T,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<T: Real> Mesh<T> {
    /// Builds a level-0 mesh from raw parts and validates it.
    pub fn new(
        vertices: Vec<Vertex<T>>,
        triangles: Vec<Triangle>,
        is_boundary: Vec<bool>,
    ) -> Result<Self> {
        Error::check_len(vertices.len(), is_boundary.len())?;
        let n = vertices.len();
        let h = longest_edge(&vertices, &triangles)?;
        let mesh = Mesh {
            level: 0,
            vertices,
            triangles,
            is_boundary,
            origin: vec![Origin::Root; n],
            parent_vertex_count: None,
            h,
            h_label: h,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Structured triangulation of `[0,1]^2` with `2^level` squares per side.
    ///
    /// Vertices are ordered lexicographically by `(y, x)`. For `level >= 1`
    /// the genealogy relative to `unit_square(level - 1)` is filled in, so the
    /// result is interchangeable with refining the coarser mesh.
    pub fn unit_square(level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::Config(format!(
                "unit square level {level} out of range 0..={MAX_LEVEL}"
            )));
        }
        let n = 1usize << level;
        let np = n + 1;
        let nf = T::from_count(n);
        let idx = |ix: usize, iy: usize| iy * np + ix;

        let mut vertices = Vec::with_capacity(np * np);
        let mut is_boundary = Vec::with_capacity(np * np);
        let mut origin = Vec::with_capacity(np * np);
        let cp = n / 2 + 1;
        for iy in 0..np {
            for ix in 0..np {
                vertices.push(Vertex::new(T::from_count(ix) / nf, T::from_count(iy) / nf));
                is_boundary.push(ix == 0 || iy == 0 || ix == n || iy == n);
                let o = if level == 0 {
                    Origin::Root
                } else {
                    let c = |x: usize, y: usize| y * cp + x;
                    match (ix % 2, iy % 2) {
                        (0, 0) => Origin::Inherited(c(ix / 2, iy / 2)),
                        (1, 0) => Origin::Midpoint(c(ix / 2, iy / 2), c(ix / 2 + 1, iy / 2)),
                        (0, _) => Origin::Midpoint(c(ix / 2, iy / 2), c(ix / 2, iy / 2 + 1)),
                        _ => Origin::Midpoint(c(ix / 2, iy / 2), c(ix / 2 + 1, iy / 2 + 1)),
                    }
                };
                origin.push(o);
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for iy in 0..n {
            for ix in 0..n {
                let sw = idx(ix, iy);
                let se = idx(ix + 1, iy);
                let ne = idx(ix + 1, iy + 1);
                let nw = idx(ix, iy + 1);
                triangles.push(Triangle([sw, se, ne]));
                triangles.push(Triangle([sw, ne, nw]));
            }
        }

        let leg = T::one() / nf;
        Ok(Mesh {
            level,
            vertices,
            triangles,
            is_boundary,
            origin,
            parent_vertex_count: (level > 0).then_some(cp * cp),
            h: leg * T::lit(2.0).sqrt(),
            h_label: leg,
        })
    }

    /// Splits every triangle into four through its edge midpoints.
    ///
    /// Fine vertices are sorted lexicographically by `(y, x)`; the parent of
    /// each one is recorded in [`Mesh::origin`].
    pub fn refine_uniform(&self) -> Mesh<T> {
        let nc = self.vertices.len();

        // Count edge incidences to tell boundary edges from interior ones.
        let mut edge_tris: HashMap<(usize, usize), u8> =
            HashMap::with_capacity(3 * self.triangles.len());
        for t in &self.triangles {
            for (a, b) in t.edges() {
                *edge_tris.entry(edge_key(a, b)).or_insert(0) += 1;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut is_boundary = self.is_boundary.clone();
        let mut origin: Vec<Origin> = (0..nc).map(Origin::Inherited).collect();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(edge_tris.len());
        let mut children = Vec::with_capacity(4 * self.triangles.len());

        for t in &self.triangles {
            let mut mids = [0usize; 3];
            for (k, (a, b)) in t.edges().into_iter().enumerate() {
                let key = edge_key(a, b);
                mids[k] = *midpoint.entry(key).or_insert_with(|| {
                    vertices.push(self.vertices[key.0].midpoint(&self.vertices[key.1]));
                    is_boundary.push(edge_tris[&key] == 1);
                    origin.push(Origin::Midpoint(key.0, key.1));
                    vertices.len() - 1
                });
            }
            let [a, b, c] = t.0;
            let [mab, mbc, mca] = mids;
            children.push(Triangle([a, mab, mca]));
            children.push(Triangle([mab, b, mbc]));
            children.push(Triangle([mca, mbc, c]));
            children.push(Triangle([mab, mbc, mca]));
        }

        // Renumber by (y, x).
        let mut order: Vec<usize> = (0..vertices.len()).collect();
        order.sort_by(|&i, &j| vertices[i].cmp_yx(&vertices[j]));
        let mut new_index = vec![0usize; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let two = T::lit(2.0);
        Mesh {
            level: self.level + 1,
            vertices: order.iter().map(|&i| vertices[i]).collect(),
            triangles: children
                .into_iter()
                .map(|t| Triangle(t.0.map(|v| new_index[v])))
                .collect(),
            is_boundary: order.iter().map(|&i| is_boundary[i]).collect(),
            origin: order.iter().map(|&i| origin[i]).collect(),
            parent_vertex_count: Some(nc),
            h: self.h / two,
            h_label: self.h_label / two,
        }
    }

    /// Exact P1 interpolation of a field on the parent mesh onto this mesh.
    pub fn prolongate(&self, coarse: &NodalField<T>) -> Result<NodalField<T>> {
        let nc = self
            .parent_vertex_count
            .ok_or_else(|| Error::Mesh("mesh was not produced by refinement".into()))?;
        Error::check_len(nc, coarse.len())?;
        let half = T::lit(0.5);
        Ok(NodalField::from(
            self.origin
                .iter()
                .map(|o| match *o {
                    Origin::Inherited(i) => coarse[i],
                    Origin::Midpoint(a, b) => (coarse[a] + coarse[b]) * half,
                    Origin::Root => unreachable!("refined meshes have no root vertices"),
                })
                .collect::<Vec<_>>(),
        ))
    }

    /// Checks index ranges, orientation, areas and edge manifoldness.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        Error::check_len(n, self.is_boundary.len())?;
        Error::check_len(n, self.origin.len())?;
        if self
            .vertices
            .iter()
            .any(|v| !v.x.is_finite() || !v.y.is_finite())
        {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }
        let min_area = T::lit(MIN_AREA);
        let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            if t.0.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!(
                    "triangle {k} references a missing vertex"
                )));
            }
            let [a, b, c] = t.0;
            if a == b || b == c || a == c {
                return Err(Error::Mesh(format!("triangle {k} repeats a vertex")));
            }
            let area = self.triangle_area(k);
            if area < min_area {
                return Err(Error::Mesh(format!(
                    "triangle {k} is degenerate or clockwise (signed area {area:e})"
                )));
            }
            for (a, b) in t.edges() {
                *edges.entry(edge_key(a, b)).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &edges {
            let on_boundary = self.is_boundary[a] && self.is_boundary[b];
            match count {
                2 => {}
                1 if on_boundary => {}
                1 => {
                    return Err(Error::Mesh(format!(
                        "edge ({a}, {b}) has one triangle but interior endpoints"
                    )))
                }
                _ => {
                    return Err(Error::Mesh(format!(
                        "edge ({a}, {b}) shared by {count} triangles"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Signed area of triangle `k` (positive for counter-clockwise).
    pub fn triangle_area(&self, k: usize) -> T {
        let [a, b, c] = self.triangles[k].0;
        signed_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertices(&self) -> &[Vertex<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn is_boundary(&self) -> &[bool] {
        &self.is_boundary
    }

    pub fn origin(&self) -> &[Origin] {
        &self.origin
    }

    /// Parent edge of a midpoint vertex, `None` for inherited and root vertices.
    pub fn parent_edge(&self, v: usize) -> Option<(usize, usize)> {
        match self.origin[v] {
            Origin::Midpoint(a, b) => Some((a, b)),
            _ => None,
        }
    }

    pub fn parent_vertex_count(&self) -> Option<usize> {
        self.parent_vertex_count
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_interior(&self) -> usize {
        self.is_boundary.iter().filter(|b| !**b).count()
    }

    /// Longest edge length.
    pub fn h(&self) -> T {
        self.h
    }

    /// Nominal mesh size: the leg length `2^-j` for the unit square.
    pub fn h_label(&self) -> T {
        self.h_label
    }

    pub fn area(&self) -> T {
        (0..self.triangles.len())
            .map(|k| self.triangle_area(k))
            .sum()
    }

    /// Number of distinct edges.
    pub fn num_edges(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| t.edges().map(|(a, b)| edge_key(a, b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }
}

pub(crate) fn signed_area<T: Real>(a: &Vertex<T>, b: &Vertex<T>, c: &Vertex<T>) -> T {
    ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)) * T::lit(0.5)
}

fn longest_edge<T: Real>(vertices: &[Vertex<T>], triangles: &[Triangle]) -> Result<T> {
    let mut h = T::zero();
    for (k, t) in triangles.iter().enumerate() {
        for (a, b) in t.edges() {
            let (va, vb) = match (vertices.get(a), vertices.get(b)) {
                (Some(va), Some(vb)) => (va, vb),
                _ => {
                    return Err(Error::Mesh(format!(
                        "triangle {k} references a missing vertex"
                    )))
                }
            };
            h = h.max(va.distance(vb));
        }
    }
    Ok(h)
}
