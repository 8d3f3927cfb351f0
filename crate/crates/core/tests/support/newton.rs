//! Dense damped Newton solve of `K U = F(U)`, written independently of the
//! library's assembly and solvers. Shared by several test targets.

use sobolev_fem::{Mesh, QuadratureRule};

pub struct Dense {
    pub mesh: Mesh<f64>,
    interior: Vec<usize>,
    slot: Vec<Option<usize>>,
    p: f64,
    rule: QuadratureRule<f64>,
}

impl Dense {
    pub fn new(level: u32, p: f64) -> Self {
        let mesh = Mesh::unit_square(level).unwrap();
        let interior: Vec<usize> = (0..mesh.num_vertices())
            .filter(|&i| !mesh.is_boundary()[i])
            .collect();
        let mut slot = vec![None; mesh.num_vertices()];
        for (k, &i) in interior.iter().enumerate() {
            slot[i] = Some(k);
        }
        Dense {
            mesh,
            interior,
            slot,
            p,
            rule: QuadratureRule::with_degree(5).unwrap(),
        }
    }

    fn n(&self) -> usize {
        self.interior.len()
    }

    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.mesh.num_vertices()];
        for (k, &i) in self.interior.iter().enumerate() {
            u[i] = x[k];
        }
        u
    }

    /// Residual `K x - F(x)` and Jacobian `K - (p-1) W(x)` on interior nodes.
    fn system(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n();
        let u = self.full(x);
        let mut g = vec![0.0; n];
        let mut jac = vec![vec![0.0; n]; n];
        for t in self.mesh.triangles() {
            let idx = t.0;
            let [a, b, c] = idx.map(|i| self.mesh.vertices()[i]);
            let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
            let area = 0.5 * det;
            let grads = [
                [(b.y - c.y) / det, (c.x - b.x) / det],
                [(c.y - a.y) / det, (a.x - c.x) / det],
                [(a.y - b.y) / det, (b.x - a.x) / det],
            ];
            for i in 0..3 {
                let Some(si) = self.slot[idx[i]] else {
                    continue;
                };
                for j in 0..3 {
                    let kij = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                    g[si] += kij * u[idx[j]];
                    if let Some(sj) = self.slot[idx[j]] {
                        jac[si][sj] += kij;
                    }
                }
            }
            for (l, w) in self.rule.iter() {
                let uq: f64 = (0..3).map(|i| l[i] * u[idx[i]]).sum();
                let f = uq.abs().powf(self.p - 2.0) * uq;
                let df = (self.p - 1.0) * uq.abs().powf(self.p - 2.0);
                for i in 0..3 {
                    let Some(si) = self.slot[idx[i]] else {
                        continue;
                    };
                    g[si] -= area * w * f * l[i];
                    for j in 0..3 {
                        if let Some(sj) = self.slot[idx[j]] {
                            jac[si][sj] -= area * w * df * l[i] * l[j];
                        }
                    }
                }
            }
        }
        (g, jac)
    }

    pub fn solve(&self) -> Vec<f64> {
        // start from the sine bump scaled so that its projection onto
        // itself satisfies the equation: s a = s^{p-1} b
        let phi: Vec<f64> = self
            .interior
            .iter()
            .map(|&i| {
                let v = self.mesh.vertices()[i];
                (std::f64::consts::PI * v.x).sin() * (std::f64::consts::PI * v.y).sin()
            })
            .collect();
        let along = |s: f64| -> f64 {
            let x: Vec<f64> = phi.iter().map(|v| s * v).collect();
            self.system(&x).0.iter().zip(&phi).map(|(g, f)| g * f).sum()
        };
        // along(s) = s a - s^{p-1} b
        let (g1, g_half) = (along(1.0), along(0.5));
        let b = (0.5 * g1 - g_half) / (0.5f64.powf(self.p - 1.0) - 0.5);
        let a = g1 + b;
        let s = (a / b).powf(1.0 / (self.p - 2.0));
        let mut x: Vec<f64> = phi.iter().map(|v| s * v).collect();

        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for _ in 0..100 {
            let (g, jac) = self.system(&x);
            let gn = norm(&g);
            if gn < 1e-15 * norm(&x) {
                break;
            }
            let dx = gauss(jac, g.iter().map(|v| -v).collect());
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + t * d).collect();
                if norm(&self.system(&trial).0) < (1.0 - 1e-4 * t) * gn || t < 1e-6 {
                    x = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        self.full(&x)
    }
}

fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(row);
            for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * y;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d / n).sqrt()
}
