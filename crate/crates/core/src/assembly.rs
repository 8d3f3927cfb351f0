//! P1 assembly: stiffness, consistent mass, weighted mass and the nonlinear
//! load `F_i = ∫ |u|^{p-2} u φ_i`.
//!
//! Element contributions are accumulated in triangle index order into a
//! fixed sparsity pattern, so repeated assemblies are bitwise identical.

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::mesh::{Mesh, Vertex, MIN_AREA};
use crate::quadrature::QuadratureRule;
use crate::scalar::Real;
use crate::sparse::SparseOperator;

/// Area and barycentric gradients of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry<T> {
    pub area: T,
    pub grads: [[T; 2]; 3],
}

impl<T: Real> ElementGeometry<T> {
    pub fn new(p: [Vertex<T>; 3]) -> Result<Self> {
        let area = crate::mesh::signed_area(&p[0], &p[1], &p[2]);
        if !(area >= T::lit(MIN_AREA)) {
            return Err(Error::Mesh(format!(
                "degenerate triangle (signed area {area:e})"
            )));
        }
        let two_a = area + area;
        // ∇λ_i is the inward normal of the opposite edge over twice the area.
        let mut grads = [[T::zero(); 2]; 3];
        for (i, g) in grads.iter_mut().enumerate() {
            let a = p[(i + 1) % 3];
            let b = p[(i + 2) % 3];
            *g = [(a.y - b.y) / two_a, (b.x - a.x) / two_a];
        }
        Ok(ElementGeometry { area, grads })
    }

    pub fn local_stiffness(&self) -> [[T; 3]; 3] {
        let mut k = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let g = &self.grads;
                k[i][j] = self.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
        k
    }

    pub fn local_mass(&self) -> [[T; 3]; 3] {
        let d = self.area / T::lit(6.0);
        let o = self.area / T::lit(12.0);
        [[d, o, o], [o, d, o], [o, o, d]]
    }
}

pub fn element_geometry<T: Real>(mesh: &Mesh<T>, k: usize) -> Result<ElementGeometry<T>> {
    let v = mesh.vertices();
    let t = mesh.triangles()[k].0;
    ElementGeometry::new([v[t[0]], v[t[1]], v[t[2]]])
        .map_err(|e| Error::Mesh(format!("triangle {k}: {e}")))
}

/// Vertex adjacency (including the diagonal) in compressed-row form.
fn pattern<T: Real>(mesh: &Mesh<T>) -> (Vec<usize>, Vec<usize>) {
    let n = mesh.num_vertices();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in mesh.triangles() {
        for &i in &t.0 {
            adj[i].extend_from_slice(&t.0);
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for mut row in adj {
        row.sort_unstable();
        row.dedup();
        col_idx.extend(row);
        row_ptr.push(col_idx.len());
    }
    (row_ptr, col_idx)
}

/// Sums per-element 3x3 matrices into a global operator over all vertices.
pub fn assemble_matrix<T, F>(mesh: &Mesh<T>, mut local: F) -> Result<SparseOperator<T>>
where
    T: Real,
    F: FnMut(usize, &ElementGeometry<T>) -> [[T; 3]; 3],
{
    let (row_ptr, col_idx) = pattern(mesh);
    let mut values = vec![T::zero(); col_idx.len()];
    for (k, t) in mesh.triangles().iter().enumerate() {
        let geom = element_geometry(mesh, k)?;
        let m = local(k, &geom);
        for (a, &i) in t.0.iter().enumerate() {
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for (b, &j) in t.0.iter().enumerate() {
                let pos = row.binary_search(&j).expect("pattern covers element");
                values[row_ptr[i] + pos] += m[a][b];
            }
        }
    }
    let mut op = SparseOperator::from_raw(mesh.num_vertices(), row_ptr, col_idx, values);
    op.prune_zeros();
    Ok(op)
}

/// Stiffness matrix `∫ ∇φ_i · ∇φ_j` over all vertices.
pub fn assemble_stiffness<T: Real>(mesh: &Mesh<T>) -> Result<SparseOperator<T>> {
    assemble_matrix(mesh, |_, g| g.local_stiffness())
}

/// Consistent mass matrix `∫ φ_i φ_j`.
pub fn assemble_mass<T: Real>(mesh: &Mesh<T>) -> Result<SparseOperator<T>> {
    assemble_matrix(mesh, |_, g| g.local_mass())
}

/// Weighted mass `∫ |w|^exponent φ_i φ_j`, with `w` evaluated as its P1
/// interpolant at the quadrature points.
pub fn assemble_weighted_mass<T: Real>(
    mesh: &Mesh<T>,
    w: &[T],
    exponent: T,
    rule: &QuadratureRule<T>,
) -> Result<SparseOperator<T>> {
    Error::check_len(mesh.num_vertices(), w.len())?;
    if !(exponent >= T::zero()) {
        return Err(Error::Config(format!(
            "weight exponent must be nonnegative, got {exponent}"
        )));
    }
    let tris = mesh.triangles();
    assemble_matrix(mesh, |k, g| {
        let t = tris[k].0;
        let mut m = [[T::zero(); 3]; 3];
        for (l, wq) in rule.iter() {
            let wv = l[0] * w[t[0]] + l[1] * w[t[1]] + l[2] * w[t[2]];
            let c = g.area * wq * wv.abs().powf(exponent);
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += c * l[i] * l[j];
                }
            }
        }
        m
    })
}

/// `F_i = ∫ |u|^{p-2} u φ_i` over all vertices.
pub fn nonlinear_load<T: Real>(
    mesh: &Mesh<T>,
    u: &[T],
    p: T,
    rule: &QuadratureRule<T>,
) -> Result<NodalField<T>> {
    Error::check_len(mesh.num_vertices(), u.len())?;
    let pm2 = p - T::lit(2.0);
    let mut f = NodalField::zeros(mesh.num_vertices());
    for (k, t) in mesh.triangles().iter().enumerate() {
        let g = element_geometry(mesh, k)?;
        let t = t.0;
        let mut local = [T::zero(); 3];
        for (l, wq) in rule.iter() {
            let uq = l[0] * u[t[0]] + l[1] * u[t[1]] + l[2] * u[t[2]];
            let c = g.area * wq * uq.abs().powf(pm2) * uq;
            for i in 0..3 {
                local[i] += c * l[i];
            }
        }
        for i in 0..3 {
            f[t[i]] += local[i];
        }
    }
    Ok(f)
}

/// `∫ |u|^p` by quadrature on the P1 interpolant.
pub fn lp_power<T: Real>(mesh: &Mesh<T>, u: &[T], p: T, rule: &QuadratureRule<T>) -> Result<T> {
    Error::check_len(mesh.num_vertices(), u.len())?;
    let mut total = T::zero();
    for (k, t) in mesh.triangles().iter().enumerate() {
        let g = element_geometry(mesh, k)?;
        let t = t.0;
        let mut acc = T::zero();
        for (l, wq) in rule.iter() {
            let uq = l[0] * u[t[0]] + l[1] * u[t[1]] + l[2] * u[t[2]];
            acc += wq * uq.abs().powf(p);
        }
        total += g.area * acc;
    }
    Ok(total)
}

/// `||u||_{L^p}` by quadrature on the P1 interpolant.
pub fn lp_norm<T: Real>(mesh: &Mesh<T>, u: &[T], p: T, rule: &QuadratureRule<T>) -> Result<T> {
    Ok(lp_power(mesh, u, p, rule)?.powf(T::one() / p))
}

/// Interior (Dirichlet-free) degrees of freedom of a mesh.
#[derive(Clone, Debug)]
pub struct InteriorMap {
    interior: Vec<usize>,
    n_vertices: usize,
}

impl InteriorMap {
    pub fn new<T: Real>(mesh: &Mesh<T>) -> Self {
        InteriorMap {
            interior: (0..mesh.num_vertices())
                .filter(|&v| !mesh.is_boundary()[v])
                .collect(),
            n_vertices: mesh.num_vertices(),
        }
    }

    /// Vertex index of each interior unknown.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Drops boundary rows and columns.
    pub fn restrict_matrix<T: Real>(&self, a: &SparseOperator<T>) -> Result<SparseOperator<T>> {
        Error::check_len(self.n_vertices, a.dim())?;
        a.submatrix(&self.interior)
    }

    pub fn restrict<T: Real>(&self, f: &[T]) -> Result<Vec<T>> {
        Error::check_len(self.n_vertices, f.len())?;
        Ok(self.interior.iter().map(|&v| f[v]).collect())
    }

    /// Pads boundary entries with zero.
    pub fn extend_zero<T: Real>(&self, x: &[T]) -> Result<NodalField<T>> {
        Error::check_len(self.interior.len(), x.len())?;
        let mut f = NodalField::zeros(self.n_vertices);
        for (&v, &xi) in self.interior.iter().zip(x) {
            f[v] = xi;
        }
        Ok(f)
    }
}

/// Restricts a matrix to the interior vertices of `mesh`.
pub fn restrict_interior<T: Real>(
    a: &SparseOperator<T>,
    mesh: &Mesh<T>,
) -> Result<SparseOperator<T>> {
    InteriorMap::new(mesh).restrict_matrix(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Triangle;

    fn reference() -> Mesh<f64> {
        let v = vec![
            Vertex::new(0.0, 0.0),
            Vertex::new(1.0, 0.0),
            Vertex::new(0.0, 1.0),
        ];
        Mesh::new(v, vec![Triangle([0, 1, 2])], vec![true; 3]).unwrap()
    }

    #[test]
    fn reference_local_matrices() {
        let m = reference();
        let k = assemble_stiffness(&m).unwrap().to_dense();
        let ek = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let mm = assemble_mass(&m).unwrap().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - ek[i][j]).abs() <= 1e-14);
                let em = if i == j { 2.0 / 24.0 } else { 1.0 / 24.0 };
                assert!((mm[i][j] - em).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let g = ElementGeometry::new([
            Vertex::new(0.0, 0.0),
            Vertex::new(1.0, 0.0),
            Vertex::new(2.0, 0.0),
        ]);
        assert!(matches!(g, Err(Error::Mesh(_))));
    }

    #[test]
    fn constants_in_stiffness_kernel() {
        let m = Mesh::<f64>::unit_square(2).unwrap();
        let k = assemble_stiffness(&m).unwrap();
        let ku = k.mul_vec(&vec![3.0; m.num_vertices()]);
        assert!(ku.iter().all(|v| v.abs() < 1e-13));
        for i in 0..m.num_vertices() {
            let s: f64 = k.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-13);
        }
    }

    #[test]
    fn mass_partition_of_unity_and_x_squared() {
        for j in 1..5 {
            let m = Mesh::<f64>::unit_square(j).unwrap();
            let mass = assemble_mass(&m).unwrap();
            let ones = vec![1.0; m.num_vertices()];
            assert!((mass.quadratic_form(&ones) - 1.0).abs() < 1e-12);
            let x: Vec<f64> = m.vertices().iter().map(|v| v.x).collect();
            assert!((mass.quadratic_form(&x) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_matrices() {
        let m = Mesh::<f64>::unit_square(4).unwrap();
        assert!(assemble_stiffness(&m).unwrap().asymmetry() <= 1e-14);
        assert!(assemble_mass(&m).unwrap().asymmetry() <= 1e-14);
    }

    #[test]
    fn weighted_mass_cases() {
        let rule = QuadratureRule::<f64>::with_degree(5).unwrap();
        let m = Mesh::<f64>::unit_square(3).unwrap();
        let mass = assemble_mass(&m).unwrap().to_dense();
        let ones = vec![1.0; m.num_vertices()];
        let w1 = assemble_weighted_mass(&m, &ones, 3.7, &rule)
            .unwrap()
            .to_dense();
        for (r1, r2) in w1.iter().zip(&mass) {
            for (a, b) in r1.iter().zip(r2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let zeros = vec![0.0; m.num_vertices()];
        let w0 = assemble_weighted_mass(&m, &zeros, 2.0, &rule).unwrap();
        assert_eq!(w0.nnz(), 0);
        assert!(assemble_weighted_mass(&m, &ones, -1.0, &rule).is_err());

        // ∫ x^2 (1-x-y)^2 over the reference triangle = 1/180
        let r = reference();
        let x: Vec<f64> = r.vertices().iter().map(|v| v.x).collect();
        let w = assemble_weighted_mass(&r, &x, 2.0, &rule).unwrap();
        assert!((w.get(0, 0) - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn nonlinear_load_cases() {
        let rule = QuadratureRule::<f64>::with_degree(5).unwrap();
        let r = reference();
        let f = nonlinear_load(&r, &[1.0, 1.0, 1.0], 4.0, &rule).unwrap();
        for v in f.iter() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        let m = Mesh::<f64>::unit_square(3).unwrap();
        let u: Vec<f64> = m
            .vertices()
            .iter()
            .map(|v| (v.x - 0.3) * (v.y + 0.2))
            .collect();
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let fp = nonlinear_load(&m, &u, 3.5, &rule).unwrap();
        let fm = nonlinear_load(&m, &neg, 3.5, &rule).unwrap();
        assert!(fp.iter().zip(fm.iter()).all(|(a, b)| *a == -*b));
        let z = nonlinear_load(&m, &vec![0.0; m.num_vertices()], 4.0, &rule).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn restriction_level_one() {
        let m = Mesh::<f64>::unit_square(1).unwrap();
        let map = InteriorMap::new(&m);
        assert_eq!(map.len(), 1);
        let k = map
            .restrict_matrix(&assemble_stiffness(&m).unwrap())
            .unwrap();
        assert_eq!(k.dim(), 1);
        assert!((k.get(0, 0) - 4.0).abs() < 1e-14);
        assert!(map.restrict(&[0.0; 3]).is_err());
    }

    #[test]
    fn extend_restrict_identity() {
        let m = Mesh::<f64>::unit_square(3).unwrap();
        let map = InteriorMap::new(&m);
        let f: Vec<f64> = m
            .vertices()
            .iter()
            .map(|v| v.x * (1.0 - v.x) * v.y * (1.0 - v.y))
            .collect();
        let back = map.extend_zero(&map.restrict(&f).unwrap()).unwrap();
        assert_eq!(back.values(), &f[..]);
    }
}
