//! Compressed-row symmetric matrices, Jacobi-preconditioned conjugate
//! gradients and a constrained inverse iteration.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm2, Real};

/// Rows below this count are multiplied sequentially.
const PAR_ROWS: usize = 4096;

/// Square sparse matrix in compressed-row layout.
///
/// Column indices are strictly increasing within each row. Matrices built by
/// the assembly routines are structurally symmetric and hold no explicit zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseOperator<T> {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed in
    /// input order and exact zeros are dropped.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::dimension(n, i.max(j) + 1));
            }
        }
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = SparseOperator {
            n,
            row_ptr,
            col_idx,
            values,
        };
        m.prune_zeros();
        Ok(m)
    }

    pub(crate) fn from_raw(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        SparseOperator {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let mut m = SparseOperator {
            n: d.len(),
            row_ptr: (0..=d.len()).collect(),
            col_idx: (0..d.len()).collect(),
            values: d.to_vec(),
        };
        m.prune_zeros();
        m
    }

    /// Row-major dense input; zeros are not stored.
    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut trips = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            Error::check_len(n, r.len())?;
            for (j, &v) in r.iter().enumerate() {
                if v != T::zero() {
                    trips.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &trips)
    }

    /// Removes stored entries that are exactly zero.
    pub fn prune_zeros(&mut self) {
        let mut write = 0;
        let mut start = 0;
        for i in 0..self.n {
            let end = self.row_ptr[i + 1];
            for k in start..end {
                if self.values[k] != T::zero() {
                    self.col_idx[write] = self.col_idx[k];
                    self.values[write] = self.values[k];
                    write += 1;
                }
            }
            start = end;
            self.row_ptr[i + 1] = write;
        }
        self.col_idx.truncate(write);
        self.values.truncate(write);
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// `y = A x`. Rows are independent, so the parallel and sequential paths
    /// give bit-identical results.
    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let row = |i: usize| {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            acc
        };
        if self.n >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        dot(x, &self.mul_vec(y))
    }

    pub fn quadratic_form(&self, x: &[T]) -> T {
        self.bilinear(x, x)
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Keeps the rows and columns listed in `keep`, renumbered in that order.
    pub fn submatrix(&self, keep: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.n {
                return Err(Error::dimension(self.n, old + 1));
            }
            map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &old in keep {
            let mut row: Vec<(usize, T)> = self
                .row(old)
                .filter(|(j, _)| map[*j] != usize::MAX)
                .map(|(j, v)| (map[j], v))
                .collect();
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseOperator::from_raw(
            keep.len(),
            row_ptr,
            col_idx,
            values,
        ))
    }

    /// `P A P^T` for the permutation sending index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Error::check_len(self.n, perm.len())?;
        let mut inverse = vec![usize::MAX; self.n];
        for (i, &p) in perm.iter().enumerate() {
            if p >= self.n || inverse[p] != usize::MAX {
                return Err(Error::Config("not a permutation".into()));
            }
            inverse[p] = i;
        }
        self.submatrix(&inverse)
    }

    /// `self + alpha * other`; the result is pruned of exact zeros.
    pub fn add_scaled(&self, alpha: T, other: &Self) -> Result<Self> {
        Error::check_len(self.n, other.n)?;
        let mut trips = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            trips.extend(self.row(i).map(|(j, v)| (i, j, v)));
            trips.extend(other.row(i).map(|(j, v)| (i, j, alpha * v)));
        }
        Self::from_triplets(self.n, &trips)
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// `||b - A x||_2 / ||b||_2` at exit.
    pub relative_residual: f64,
    pub converged: bool,
    /// Relative residual norms, starting with the initial guess.
    pub history: Vec<f64>,
}

/// Solves `A x = b` from `x = 0`. See [`cg_solve_from`].
pub fn cg_solve<T: Real>(
    a: &SparseOperator<T>,
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, CgReport)> {
    let x0 = vec![T::zero(); a.dim()];
    cg_solve_from(a, b, x0, tol, max_iter)
}

/// Jacobi-preconditioned conjugate gradients starting from `x0`.
///
/// The returned iterate is smoothed by minimal-residual smoothing: each step
/// takes the combination of the previous smoothed iterate and the CG iterate
/// with the smallest residual, so the residual history never increases.
/// Stops once the smoothed residual satisfies `||r||_2 <= tol ||b||_2`.
/// `b = 0` returns `x = 0` immediately.
pub fn cg_solve_from<T: Real>(
    a: &SparseOperator<T>,
    b: &[T],
    x0: Vec<T>,
    tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, CgReport)> {
    Error::check_len(a.dim(), b.len())?;
    let inv_diag = jacobi(a);
    match pcg(|x, y| a.mul_vec_into(x, y), &inv_diag, b, x0, tol, max_iter)? {
        Pcg::Done(x, report) if report.converged => Ok((x, report)),
        Pcg::Done(_, report) => Err(Error::CgNotConverged(report)),
        Pcg::NegativeCurvature { curvature, .. } => Err(Error::Numerical(format!(
            "matrix is not positive definite (p^T A p = {curvature:e})"
        ))),
    }
}

pub(crate) fn jacobi<T: Real>(a: &SparseOperator<T>) -> Vec<T> {
    a.diagonal()
        .into_iter()
        .map(|d| {
            if d > T::zero() {
                T::one() / d
            } else {
                T::one()
            }
        })
        .collect()
}

enum Pcg<T> {
    Done(Vec<T>, CgReport),
    /// A search direction with `p^T A p <= 0`.
    NegativeCurvature {
        direction: Vec<T>,
        curvature: T,
    },
}

fn pcg<T: Real, F>(
    apply: F,
    inv_diag: &[T],
    b: &[T],
    x0: Vec<T>,
    tol: T,
    max_iter: usize,
) -> Result<Pcg<T>>
where
    F: Fn(&[T], &mut [T]),
{
    let n = inv_diag.len();
    Error::check_len(n, b.len())?;
    Error::check_len(n, x0.len())?;
    if !(tol > T::zero()) {
        return Err(Error::Config(format!(
            "CG tolerance must be positive, got {tol}"
        )));
    }
    let bnorm = norm2(b);
    if !bnorm.is_finite() {
        return Err(Error::Numerical("non-finite right-hand side".into()));
    }
    if bnorm == T::zero() {
        let report = CgReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            history: vec![0.0],
        };
        return Ok(Pcg::Done(vec![T::zero(); n], report));
    }

    let mut x = x0;
    let mut r = vec![T::zero(); n];
    apply(&x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<T> = r.iter().zip(inv_diag).map(|(&ri, &d)| ri * d).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    // smoothed iterate and its residual
    let mut xs = x.clone();
    let mut rs = r.clone();
    let mut d = vec![T::zero(); n];

    let mut rel = norm2(&rs) / bnorm;
    let mut history = vec![rel.to_f64().unwrap_or(f64::NAN)];
    let mut iterations = 0;

    while rel > tol && iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::Numerical(
                "non-finite value in conjugate gradients".into(),
            ));
        }
        if pap <= T::zero() {
            return Ok(Pcg::NegativeCurvature {
                direction: p,
                curvature: pap,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;

        for ((di, &ri), &si) in d.iter_mut().zip(&r).zip(&rs) {
            *di = ri - si;
        }
        let dd = dot(&d, &d);
        if dd > T::zero() {
            let eta = -dot(&rs, &d) / dd;
            axpy(eta, &d, &mut rs);
            for (si, &xi) in xs.iter_mut().zip(&x) {
                *si += eta * (xi - *si);
            }
        }
        rel = norm2(&rs) / bnorm;
        if !rel.is_finite() {
            return Err(Error::Numerical(
                "non-finite residual in conjugate gradients".into(),
            ));
        }
        history.push(rel.to_f64().unwrap_or(f64::NAN));

        for ((zi, &ri), &dg) in z.iter_mut().zip(&r).zip(inv_diag) {
            *zi = ri * dg;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }

    let report = CgReport {
        iterations,
        relative_residual: rel.to_f64().unwrap_or(f64::NAN),
        converged: rel <= tol,
        history,
    };
    Ok(Pcg::Done(xs, report))
}

/// Result of [`smallest_eig_constrained`].
#[derive(Clone, Debug, PartialEq)]
pub struct EigenEstimate<T> {
    /// Smallest generalized Rayleigh quotient found.
    pub value: T,
    /// Corresponding vector, normalized in the `B` inner product.
    pub vector: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// The inner solve met a direction with non-positive curvature; `value`
    /// is then the (non-positive) Rayleigh quotient of that direction.
    pub breakdown: bool,
}

const EIG_MAX_ITERS: usize = 2000;

/// Smallest generalized eigenvalue of `A x = mu B x` restricted to
/// `{x : x^T B c = 0}`, by shift-free inverse iteration.
///
/// Every step solves the deflated system `P^T A P y = P^T B x` with CG, where
/// `P` is the `B`-orthogonal projector removing `c`. Iteration stops when the
/// relative change of the Rayleigh quotient is at most `tol`. A direction of
/// non-positive curvature in the inner solve ends the iteration with a
/// non-positive value and `breakdown` set.
pub fn smallest_eig_constrained<T: Real>(
    a: &SparseOperator<T>,
    b: &SparseOperator<T>,
    c: &[T],
    tol: T,
) -> Result<EigenEstimate<T>> {
    if norm2(c) == T::zero() {
        return Err(Error::Config("constraint vector must be nonzero".into()));
    }
    if a.dim() < 2 {
        return Err(Error::Config("constrained subspace is empty".into()));
    }
    constrained_inverse_iteration(a, b, Some(c), tol)
}

/// Unconstrained counterpart of [`smallest_eig_constrained`]; requires `A`
/// positive definite.
pub fn smallest_eig<T: Real>(
    a: &SparseOperator<T>,
    b: &SparseOperator<T>,
    tol: T,
) -> Result<EigenEstimate<T>> {
    constrained_inverse_iteration(a, b, None, tol)
}

fn constrained_inverse_iteration<T: Real>(
    a: &SparseOperator<T>,
    b: &SparseOperator<T>,
    c: Option<&[T]>,
    tol: T,
) -> Result<EigenEstimate<T>> {
    let n = a.dim();
    Error::check_len(n, b.dim())?;
    if !(tol > T::zero()) {
        return Err(Error::Config(format!(
            "eigenvalue tolerance must be positive, got {tol}"
        )));
    }
    let deflation = match c {
        Some(c) => {
            Error::check_len(n, c.len())?;
            let bc = b.mul_vec(c);
            let gamma = dot(c, &bc);
            if !(gamma > T::zero()) {
                return Err(Error::Numerical(
                    "constraint vector has non-positive B-norm".into(),
                ));
            }
            Some((c.to_vec(), bc, gamma))
        }
        None => None,
    };
    // P v = v - c (Bc . v) / gamma
    let project = |v: &mut [T]| {
        if let Some((c, bc, gamma)) = &deflation {
            let s = dot(bc, v) / *gamma;
            axpy(-s, c, v);
        }
    };
    // P^T w = w - Bc (c . w) / gamma
    let project_t = |w: &mut [T]| {
        if let Some((c, bc, gamma)) = &deflation {
            let s = dot(c, w) / *gamma;
            axpy(-s, bc, w);
        }
    };
    let b_normalize = |v: &mut Vec<T>| -> Result<T> {
        let nb = b.quadratic_form(v);
        if !(nb > T::zero()) {
            return Err(Error::Numerical("iterate vanished in the B-norm".into()));
        }
        crate::scalar::scale(T::one() / nb.sqrt(), v);
        Ok(nb)
    };

    let mut x: Vec<T> = (0..n).map(|i| T::lit(hash_unit(i as u64))).collect();
    project(&mut x);
    b_normalize(&mut x)?;
    let inv_diag = jacobi(a);
    let inner_tol = T::lit(1e-11).max(T::epsilon() * T::lit(64.0));
    let mut mu = a.quadratic_form(&x);

    let operator = |v: &[T], out: &mut [T]| {
        let mut pv = v.to_vec();
        project(&mut pv);
        a.mul_vec_into(&pv, out);
        project_t(out);
    };

    for it in 1..=EIG_MAX_ITERS {
        let mut rhs = b.mul_vec(&x);
        project_t(&mut rhs);
        let x0 = x.clone();
        let mut y = match pcg(operator, &inv_diag, &rhs, x0, inner_tol, 20 * n + 100)? {
            Pcg::Done(y, _) => y,
            Pcg::NegativeCurvature { mut direction, .. } => {
                project(&mut direction);
                let num = a.quadratic_form(&direction);
                let den = b.quadratic_form(&direction);
                let value = if den > T::zero() {
                    (num / den).min(T::zero())
                } else {
                    T::zero()
                };
                b_normalize(&mut direction).ok();
                return Ok(EigenEstimate {
                    value,
                    vector: direction,
                    iterations: it,
                    converged: false,
                    breakdown: true,
                });
            }
        };
        project(&mut y);
        b_normalize(&mut y)?;
        let mu_new = a.quadratic_form(&y);
        x = y;
        let change = (mu_new - mu).abs();
        mu = mu_new;
        if change <= tol * mu.abs() {
            return Ok(EigenEstimate {
                value: mu,
                vector: x,
                iterations: it,
                converged: true,
                breakdown: mu <= T::zero(),
            });
        }
    }
    Ok(EigenEstimate {
        value: mu,
        vector: x,
        iterations: EIG_MAX_ITERS,
        converged: false,
        breakdown: mu <= T::zero(),
    })
}

/// Deterministic pseudo-random value in `(-1, 1)` (splitmix64 finalizer).
fn hash_unit(i: u64) -> f64 {
    let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Preconditioned MINRES for symmetric, possibly indefinite `A`, with a
/// positive diagonal preconditioner given by its inverse `inv_diag`.
///
/// Stops when the preconditioned residual estimate drops below `tol` times
/// its initial value; the report carries the true relative 2-norm residual.
pub fn minres_solve<T: Real>(
    a: &SparseOperator<T>,
    inv_diag: &[T],
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, CgReport)> {
    let n = a.dim();
    Error::check_len(n, b.len())?;
    Error::check_len(n, inv_diag.len())?;
    if inv_diag.iter().any(|d| !(*d > T::zero())) {
        return Err(Error::Config(
            "MINRES preconditioner must be positive".into(),
        ));
    }
    let bnorm = norm2(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
                history: vec![0.0],
            },
        ));
    }

    let precond = |r: &[T]| -> Vec<T> { r.iter().zip(inv_diag).map(|(&ri, &d)| ri * d).collect() };
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = precond(&r1);
    let beta1 = dot(&r1, &y).sqrt();
    let mut beta = beta1;
    let mut oldb = T::zero();
    let mut dbar = T::zero();
    let mut epsln = T::zero();
    let mut phibar = beta1;
    let mut cs = -T::one();
    let mut sn = T::zero();
    let mut w = vec![T::zero(); n];
    let mut w1 = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut history = vec![1.0];
    let mut iterations = 0;

    while phibar > tol * beta1 && iterations < max_iter {
        iterations += 1;
        let s = T::one() / beta;
        for (vi, &yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        a.mul_vec_into(&v, &mut y);
        if iterations >= 2 {
            axpy(-(beta / oldb), &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-(alfa / beta), &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        y = precond(&r2);
        oldb = beta;
        let b2 = dot(&r2, &y);
        if !b2.is_finite() || b2 < T::zero() {
            return Err(Error::Numerical("MINRES breakdown".into()));
        }
        beta = b2.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(T::epsilon());
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar = sn * phibar;

        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for k in 0..n {
            w[k] = (v[k] - oldeps * w1[k] - delta * w2[k]) / gamma;
        }
        axpy(phi, &w, &mut x);
        history.push((phibar / beta1).to_f64().unwrap_or(f64::NAN));
        if beta == T::zero() {
            break;
        }
    }

    let mut r = a.mul_vec(&x);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let rel = norm2(&r) / bnorm;
    if !rel.is_finite() {
        return Err(Error::Numerical("non-finite MINRES residual".into()));
    }
    let converged = phibar <= tol * beta1;
    let report = CgReport {
        iterations,
        relative_residual: rel.to_f64().unwrap_or(f64::NAN),
        converged,
        history,
    };
    if converged {
        Ok((x, report))
    } else {
        Err(Error::CgNotConverged(report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, assemble_stiffness, InteriorMap};
    use crate::mesh::Mesh;
    use std::f64::consts::PI;

    fn poisson(level: u32) -> (Mesh<f64>, InteriorMap, SparseOperator<f64>) {
        let mesh = Mesh::unit_square(level).unwrap();
        let map = InteriorMap::new(&mesh);
        let k = map
            .restrict_matrix(&assemble_stiffness(&mesh).unwrap())
            .unwrap();
        (mesh, map, k)
    }

    /// Lumped load of f = 1: on the structured mesh every interior vertex
    /// carries six triangles of area h²/2, so b_i = h².
    fn unit_load(mesh: &Mesh<f64>, n: usize) -> Vec<f64> {
        vec![mesh.h_label() * mesh.h_label(); n]
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = SparseOperator::from_triplets(
            2,
            &[
                (0, 0, 1.0),
                (0, 0, 2.0),
                (0, 1, 1.0),
                (0, 1, -1.0),
                (1, 1, 5.0),
            ],
        )
        .unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert!(SparseOperator::from_triplets(2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let b = [0.3, -1.0, 2.5, 7.0];
        let (x, r) = cg_solve(&SparseOperator::identity(4), &b, 1e-12, 10).unwrap();
        assert_eq!(x, b.to_vec());
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
    }

    #[test]
    fn one_by_one_restricted_stiffness() {
        let (_, _, k) = poisson(1);
        assert_eq!(k.dim(), 1);
        let (x, _) = cg_solve(&k, &[1.0], 1e-12, 10).unwrap();
        assert_eq!(x, vec![0.25]);
    }

    #[test]
    fn zero_rhs_and_nan() {
        let a = SparseOperator::<f64>::from_diagonal(&[2.0, 3.0]);
        let (x, r) = cg_solve(&a, &[0.0, 0.0], 1e-10, 5).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert!(r.converged);
        assert!(matches!(
            cg_solve(&a, &[f64::NAN, 1.0], 1e-10, 5),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn not_converged_carries_report() {
        let (mesh, map, k) = poisson(4);
        match cg_solve(&k, &unit_load(&mesh, map.len()), 1e-12, 3) {
            Err(Error::CgNotConverged(r)) => {
                assert_eq!(r.iterations, 3);
                assert!(!r.converged);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = SparseOperator::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            cg_solve(&a, &[1.0, 1.0], 1e-10, 10),
            Err(Error::Numerical(_))
        ));
    }

    /// Value at the center of the solution of -Δu = 1 with zero boundary data.
    fn fourier_center_value() -> f64 {
        let mut s = 0.0;
        for m in (1..400).step_by(2) {
            for n in (1..400).step_by(2) {
                let sign = if ((m + n) / 2) % 2 == 1 { 1.0 } else { -1.0 };
                let (m, n) = (m as f64, n as f64);
                s += sign / (m * n * (m * m + n * n));
            }
        }
        16.0 / PI.powi(4) * s
    }

    #[test]
    fn poisson_center_value() {
        let oracle = fourier_center_value();
        assert!((oracle - 0.0736714).abs() < 1e-6, "{oracle}");
        let (mesh, map, k) = poisson(6);
        let b = unit_load(&mesh, map.len());
        let (x, r) = cg_solve(&k, &b, 1e-12, 10 * map.len()).unwrap();
        assert!(r.relative_residual <= 1e-12);
        let u = map.extend_zero(&x).unwrap();
        let c = mesh
            .vertices()
            .iter()
            .position(|v| v.x == 0.5 && v.y == 0.5)
            .unwrap();
        assert!((u[c] - oracle).abs() < 5e-5, "{} vs {oracle}", u[c]);
    }

    #[test]
    fn residual_history_is_monotone() {
        for level in 3..=6 {
            let (mesh, map, k) = poisson(level);
            let b: Vec<f64> = map
                .interior()
                .iter()
                .map(|&i| {
                    let v = mesh.vertices()[i];
                    1.0 + v.x * (1.0 - v.y)
                })
                .collect();
            let (_, r) = cg_solve(&k, &b, 1e-12, 10 * map.len()).unwrap();
            for w in r.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-14, "level {level}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn residual_history_matches_true_residual() {
        let (mesh, map, k) = poisson(5);
        let b = unit_load(&mesh, map.len());
        let (x, r) = cg_solve(&k, &b, 1e-10, 10 * map.len()).unwrap();
        let ax = k.mul_vec(&x);
        let res: Vec<f64> = ax.iter().zip(&b).map(|(a, b)| a - b).collect();
        let true_rel = norm2(&res) / norm2(&b);
        assert!((true_rel - r.relative_residual).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariance() {
        let (mesh, map, k) = poisson(4);
        let n = map.len();
        let b = unit_load(&mesh, n);
        let tol = 1e-12;
        let (x, _) = cg_solve(&k, &b, tol, 10 * n).unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
        let kp = k.permuted(&perm).unwrap();
        let mut bp = vec![0.0; n];
        for (old, &new) in perm.iter().enumerate() {
            bp[new] = b[old];
        }
        let (xp, _) = cg_solve(&kp, &bp, tol, 10 * n).unwrap();
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = perm
            .iter()
            .enumerate()
            .fold(0.0f64, |m, (old, &new)| m.max((xp[new] - x[old]).abs()));
        assert!(worst <= 10.0 * tol * scale, "{worst:e} vs scale {scale:e}");
    }

    #[test]
    fn parallel_product_matches_sequential() {
        let (_, map, k) = poisson(7);
        assert!(k.dim() >= PAR_ROWS);
        let x: Vec<f64> = (0..map.len()).map(|i| hash_unit(i as u64)).collect();
        let y = k.mul_vec(&x);
        for (i, yi) in y.iter().enumerate() {
            let mut acc = 0.0;
            for (j, v) in k.row(i) {
                acc += v * x[j];
            }
            assert_eq!(acc.to_bits(), yi.to_bits());
        }
    }

    #[test]
    fn eigen_examples() {
        let id = SparseOperator::<f64>::identity(3);
        let e1 = [1.0, 0.0, 0.0];
        let r = smallest_eig_constrained(&id, &id, &e1, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        let a = SparseOperator::from_diagonal(&[1.0, 2.0, 3.0]);
        let r = smallest_eig_constrained(&a, &id, &e1, 1e-12).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
        assert!(r.vector[0].abs() < 1e-12);
        assert!(smallest_eig_constrained(&a, &id, &[0.0; 3], 1e-10).is_err());
        let r = smallest_eig(&a, &id, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn second_dirichlet_eigenvalue() {
        let (mesh, map, k) = poisson(5);
        let m = map.restrict_matrix(&assemble_mass(&mesh).unwrap()).unwrap();
        let ground: Vec<f64> = map
            .interior()
            .iter()
            .map(|&i| {
                let v = mesh.vertices()[i];
                (PI * v.x).sin() * (PI * v.y).sin()
            })
            .collect();
        let lam2 = smallest_eig_constrained(&k, &m, &ground, 1e-8).unwrap();
        assert!(lam2.converged);
        let exact = 5.0 * PI * PI;
        assert!(
            (lam2.value - exact).abs() < 0.02 * exact,
            "{} vs {exact}",
            lam2.value
        );

        // Courant-Fischer: lambda_1 <= constrained minimum <= lambda_2
        let lam1 = smallest_eig(&k, &m, 1e-10).unwrap();
        assert!((lam1.value - 2.0 * PI * PI).abs() < 0.01 * 2.0 * PI * PI);
        assert!(lam2.value >= lam1.value - 1e-8);
        let e1 = {
            let mut v = vec![0.0; map.len()];
            v[map.len() / 2] = 1.0;
            v
        };
        let other = smallest_eig_constrained(&k, &m, &e1, 1e-10).unwrap();
        assert!(other.value >= lam1.value - 1e-8 * lam1.value);
        assert!(other.value <= lam2.value * (1.0 + 1e-6));
    }

    #[test]
    fn negative_curvature_reported_as_breakdown() {
        let a = SparseOperator::from_diagonal(&[1.0, -2.0, 3.0]);
        let id = SparseOperator::identity(3);
        let r = smallest_eig_constrained(&a, &id, &[1.0, 0.0, 0.0], 1e-10).unwrap();
        assert!(r.value <= 0.0);
        assert!(r.breakdown);
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let rows = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, -3.0, 1.0],
            vec![0.0, 1.0, 1.0],
        ];
        let a = SparseOperator::from_dense(&rows).unwrap();
        let b = [1.0f64, 2.0, 3.0];
        let (x, r) = minres_solve(&a, &[1.0; 3], &b, 1e-13, 50).unwrap();
        assert!(r.relative_residual < 1e-12);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-11);
        }
    }

    #[test]
    fn minres_matches_cg_on_spd() {
        let (mesh, map, k) = poisson(4);
        let b = unit_load(&mesh, map.len());
        let (x1, _) = cg_solve(&k, &b, 1e-13, 1000).unwrap();
        let (x2, _) = minres_solve(&k, &jacobi(&k), &b, 1e-13, 1000).unwrap();
        for (a, b) in x1.iter().zip(&x2) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn submatrix_and_add_scaled() {
        let a = SparseOperator::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 5.0, 2.0],
            vec![0.0, 2.0, 6.0],
        ])
        .unwrap();
        let s = a.submatrix(&[2, 0]).unwrap();
        assert_eq!(s.to_dense(), vec![vec![6.0, 0.0], vec![0.0, 4.0]]);
        let d = a.add_scaled(-1.0, &a).unwrap();
        assert_eq!(d.nnz(), 0);
        assert_eq!(a.asymmetry(), 0.0);
        assert!(a.permuted(&[0, 0, 1]).is_err());
        let p = a.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.get(2, 2), 4.0);
        assert_eq!(p.get(2, 0), 1.0);
    }
}
