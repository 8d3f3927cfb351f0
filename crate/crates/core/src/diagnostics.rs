//! Numerical checks of the structural hypotheses behind the convergence
//! rates: coercivity of the linearized operator away from the solution, and
//! the size of the sup norm.

use crate::assembly::{assemble_weighted_mass, InteriorMap};
use crate::error::{Error, Result};
use crate::minimizer::ExtremalProblem;
use crate::scalar::{norm2, Real};
use crate::sparse::{smallest_eig, smallest_eig_constrained};

/// Default relative tolerance of the gap eigenvalue.
pub const GAP_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport<T> {
    pub level: u32,
    pub p: T,
    /// Minimum of `φ^T (K - (p-1) W) φ / φ^T K φ` over `φ` with `φ^T K U = 0`.
    pub gap: T,
    pub positive: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Non-degeneracy gap of the linearized operator `-Δ - (p-1)|U|^{p-2}` at
/// the multiplier-one solution `u`, on the `H^1_0`-orthogonal complement of
/// `u`.
pub fn nondegeneracy_gap<T: Real>(
    problem: &ExtremalProblem<'_, T>,
    u: &[T],
) -> Result<GapReport<T>> {
    scaled_gap(problem, u, T::one(), T::lit(GAP_TOL))
}

/// Gap with the potential term multiplied by `factor`.
pub fn scaled_gap<T: Real>(
    problem: &ExtremalProblem<'_, T>,
    u: &[T],
    factor: T,
    tol: T,
) -> Result<GapReport<T>> {
    let mesh = problem.mesh();
    Error::check_len(mesh.num_vertices(), u.len())?;
    let p = problem.p();
    let map: &InteriorMap = problem.interior();
    let k = problem.stiffness_interior();
    let w = assemble_weighted_mass(mesh, u, p - T::lit(2.0), problem.rule())?;
    let a = k.add_scaled(-(p - T::one()) * factor, &map.restrict_matrix(&w)?)?;
    let c = map.restrict(u)?;
    let est = if norm2(&c) == T::zero() {
        smallest_eig(&a, k, tol)?
    } else {
        smallest_eig_constrained(&a, k, &c, tol)?
    };
    Ok(GapReport {
        level: mesh.level(),
        p,
        gap: est.value,
        positive: est.value > T::zero(),
        iterations: est.iterations,
        converged: est.converged,
    })
}

/// Sup norm of a P1 field: the largest absolute vertex value.
pub fn linf_norm<T: Real>(u: &[T]) -> T {
    u.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    #[test]
    fn zero_potential_gives_unit_gap() {
        let mesh = Mesh::<f64>::unit_square(3).unwrap();
        let prob = ExtremalProblem::new(&mesh, 4.0, 5).unwrap();
        let r = nondegeneracy_gap(&prob, &vec![0.0; mesh.num_vertices()]).unwrap();
        assert!((r.gap - 1.0).abs() < 1e-12, "{}", r.gap);
        assert!(r.positive);
    }

    #[test]
    fn gap_positive_and_monotone_in_potential() {
        let mesh = Mesh::<f64>::unit_square(5).unwrap();
        let prob = ExtremalProblem::new(&mesh, 4.0, 5).unwrap();
        let sol = prob
            .solve(&crate::minimizer::MinimizerConfig::new(4.0), None)
            .unwrap();
        let base = nondegeneracy_gap(&prob, &sol.field).unwrap();
        assert!(
            base.positive && base.gap > 0.0 && base.gap < 1.0,
            "{}",
            base.gap
        );
        assert!(base.converged);
        let again = nondegeneracy_gap(&prob, &sol.field).unwrap();
        assert!((again.gap - base.gap).abs() <= 1e-6);
        let mut prev = base.gap;
        for factor in [2.0, 4.0] {
            let g = scaled_gap(&prob, &sol.field, factor, GAP_TOL).unwrap().gap;
            assert!(g < prev, "factor {factor}: {g} vs {prev}");
            prev = g;
        }
    }

    #[test]
    fn linf_of_simple_fields() {
        assert_eq!(linf_norm::<f64>(&[0.0; 5]), 0.0);
        assert_eq!(linf_norm(&[0.0, -2.5, 1.0]), 2.5);
        let mesh = Mesh::<f64>::unit_square(3).unwrap();
        let prob = ExtremalProblem::new(&mesh, 4.0, 5).unwrap();
        let u = prob.initial_guess().unwrap();
        let chi: Vec<f64> = u.iter().map(|&v| v / u.max_abs()).collect();
        assert_eq!(linf_norm(&chi), 1.0);
    }
}
