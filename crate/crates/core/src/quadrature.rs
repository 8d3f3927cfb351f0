//! Quadrature on triangles in barycentric coordinates.
//!
//! Degree 5 uses the symmetric 7-point Radon rule, degrees 1 and 2 the
//! symmetric centroid and 3-point rules. The remaining degrees up to
//! [`MAX_DEGREE`] use a collapsed (Duffy) tensor product of Gauss-Legendre
//! rules, which has positive weights and interior points.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAX_DEGREE: usize = 10;
pub const DEFAULT_DEGREE: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule<T> {
    degree: usize,
    points: Vec<[T; 3]>,
    weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    /// Rule integrating every polynomial of total degree `<= degree` exactly.
    /// Weights sum to one; multiply by the triangle area at use.
    pub fn with_degree(degree: usize) -> Result<Self> {
        match degree {
            1 => Ok(Self::centroid()),
            2 => Ok(Self::strang_fix3()),
            5 => Ok(Self::radon7()),
            d if (3..=MAX_DEGREE).contains(&d) => Ok(Self::collapsed(d)),
            d => Err(Error::Config(format!(
                "quadrature degree {d} not available (1..={MAX_DEGREE})"
            ))),
        }
    }

    fn centroid() -> Self {
        let t = T::one() / T::lit(3.0);
        QuadratureRule {
            degree: 1,
            points: vec![[t, t, t]],
            weights: vec![T::one()],
        }
    }

    fn strang_fix3() -> Self {
        let a = T::lit(2.0) / T::lit(3.0);
        let b = T::one() / T::lit(6.0);
        let w = T::one() / T::lit(3.0);
        QuadratureRule {
            degree: 2,
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![w; 3],
        }
    }

    fn radon7() -> Self {
        let s15 = T::lit(15.0).sqrt();
        let c21 = T::lit(21.0);
        let a1 = (T::lit(6.0) - s15) / c21;
        let a2 = (T::lit(6.0) + s15) / c21;
        let b1 = T::one() - a1 - a1;
        let b2 = T::one() - a2 - a2;
        let w1 = (T::lit(155.0) - s15) / T::lit(1200.0);
        let w2 = (T::lit(155.0) + s15) / T::lit(1200.0);
        let third = T::one() / T::lit(3.0);
        QuadratureRule {
            degree: 5,
            points: vec![
                [third, third, third],
                [b1, a1, a1],
                [a1, b1, a1],
                [a1, a1, b1],
                [b2, a2, a2],
                [a2, b2, a2],
                [a2, a2, b2],
            ],
            weights: vec![T::lit(9.0) / T::lit(40.0), w1, w1, w1, w2, w2, w2],
        }
    }

    /// Duffy map `(s, t) -> (s, t (1 - s))` of Gauss-Legendre rules on the
    /// unit square; the Jacobian `(1 - s)` adds one degree in `s`.
    fn collapsed(degree: usize) -> Self {
        let ns = (degree + 2).div_ceil(2);
        let nt = (degree + 1).div_ceil(2);
        let (xs, ws) = gauss_legendre_unit::<T>(ns);
        let (xt, wt) = gauss_legendre_unit::<T>(nt);
        let two = T::lit(2.0);
        let mut points = Vec::with_capacity(ns * nt);
        let mut weights = Vec::with_capacity(ns * nt);
        for (&s, &w_s) in xs.iter().zip(&ws) {
            for (&t, &w_t) in xt.iter().zip(&wt) {
                let l1 = s;
                let l2 = t * (T::one() - s);
                points.push([T::one() - l1 - l2, l1, l2]);
                // reference area is 1/2
                weights.push(two * w_s * w_t * (T::one() - s));
            }
        }
        QuadratureRule {
            degree,
            points,
            weights,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(barycentric point, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[T; 3], T)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let half = T::lit(0.5);
    let (x, w) = gauss_legendre::<T>(n);
    (
        x.into_iter().map(|xi| (xi + T::one()) * half).collect(),
        w.into_iter().map(|wi| wi * half).collect(),
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence (computed in `f64`, then converted).
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (
        x.into_iter().map(T::lit).collect(),
        w.into_iter().map(T::lit).collect(),
    )
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
