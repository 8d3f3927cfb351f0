//! Normalized gradient descent for the discrete extremal function.
//!
//! One step with the energy `E(u) = ½||∇u||² - (1/p)∫|u|^p`:
//!
//! 1. solve `K w = F(u)` on the interior nodes, with `F_i = ∫|u|^{p-2} u φ_i`;
//! 2. `u ← u - η (u - w)`;
//! 3. `u ← u / ||u||_{L^p}`.
//!
//! The minimizer of `||∇u|| / ||u||_{L^p}` over the P1 space is a fixed point
//! of this map. After convergence the iterate is rescaled so that the
//! Euler-Lagrange multiplier equals one, `K U = F(U)`.

use crate::assembly::{
    assemble_stiffness, assemble_weighted_mass, lp_norm, lp_power, nonlinear_load, InteriorMap,
};
use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::mesh::Mesh;
use crate::quadrature::{QuadratureRule, DEFAULT_DEGREE};
use crate::scalar::{norm2, Real};
use crate::sparse::{cg_solve_from, jacobi, minres_solve, SparseOperator};

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizerConfig<T> {
    /// Exponent: nonlinearity `|u|^{p-2} u`, normalization in `L^p`.
    pub p: T,
    /// Descent step size.
    pub eta: T,
    pub max_iters: usize,
    /// Run exactly this many steps and skip the stagnation test.
    pub iters_fixed: Option<usize>,
    /// Stop when `|q_k - q_{k-1}| <= quotient_tol * q_k`.
    pub quotient_tol: T,
    /// Relative residual tolerance of the inner CG solves.
    pub inner_tol: T,
    pub quad_degree: usize,
    /// Finish with Newton steps on `K U = F(U)` once the descent slows down.
    /// Ignored when `iters_fixed` is set.
    pub polish: bool,
    /// Relative quotient change per step below which the descent hands over
    /// to the Newton polish.
    pub polish_switch: T,
    /// Target fixed-point residual of the Newton polish.
    pub newton_tol: T,
}

impl<T: Real> MinimizerConfig<T> {
    pub fn new(p: T) -> Self {
        MinimizerConfig {
            p,
            eta: T::lit(0.2),
            max_iters: 200,
            iters_fixed: None,
            quotient_tol: T::lit(1e-10),
            inner_tol: T::lit(1e-12),
            quad_degree: DEFAULT_DEGREE,
            polish: true,
            polish_switch: T::lit(1e-6),
            newton_tol: T::lit(1e-10),
        }
    }

    /// Fixed number of plain descent steps, no polish.
    pub fn fixed_steps(p: T, steps: usize) -> Self {
        MinimizerConfig {
            iters_fixed: Some(steps),
            polish: false,
            ..Self::new(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > T::lit(2.0)) || !self.p.is_finite() {
            return Err(Error::Config(format!(
                "exponent p must exceed 2, got {}",
                self.p
            )));
        }
        if !(self.eta > T::zero() && self.eta < T::one()) {
            return Err(Error::Config(format!(
                "step size eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        if !(self.quotient_tol > T::zero()) {
            return Err(Error::Config("quotient tolerance must be positive".into()));
        }
        if !(self.inner_tol > T::zero() && self.inner_tol <= T::lit(1e-2)) {
            return Err(Error::Config(format!(
                "inner tolerance must lie in (0, 1e-2], got {}",
                self.inner_tol
            )));
        }
        if !(self.polish_switch > T::zero()) || !(self.newton_tol > T::zero()) {
            return Err(Error::Config("polish tolerances must be positive".into()));
        }
        if self.max_iters == 0 && self.iters_fixed.is_none() {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        QuadratureRule::<T>::with_degree(self.quad_degree).map(|_| ())
    }
}

/// Discrete extremal function.
#[derive(Clone, Debug)]
pub struct ExtremalSolution<T> {
    /// Solution scaled so that `K U = F(U)` (multiplier one).
    pub field: NodalField<T>,
    /// Same function with unit `L^p` norm.
    pub normalized_field: NodalField<T>,
    /// Discrete best constant `min ||∇u|| / ||u||_{L^p}`.
    pub c_h: T,
    /// Descent steps taken.
    pub iterations: usize,
    /// Newton steps of the polish phase.
    pub newton_steps: usize,
    /// `||K U - F(U)||_2 / ||F(U)||_2` over interior nodes.
    pub fixed_point_residual: T,
    pub linf: T,
    pub converged: bool,
    /// Rayleigh quotient after every step, starting with the initial guess.
    pub quotient_history: Vec<T>,
}

/// Mesh-dependent data of the extremal problem for one exponent.
pub struct ExtremalProblem<'m, T: Real> {
    mesh: &'m Mesh<T>,
    p: T,
    rule: QuadratureRule<T>,
    map: InteriorMap,
    stiffness: SparseOperator<T>,
    stiffness_int: SparseOperator<T>,
}

impl<'m, T: Real> ExtremalProblem<'m, T> {
    pub fn new(mesh: &'m Mesh<T>, p: T, quad_degree: usize) -> Result<Self> {
        if !(p > T::lit(2.0)) {
            return Err(Error::Config(format!("exponent p must exceed 2, got {p}")));
        }
        let rule = QuadratureRule::with_degree(quad_degree)?;
        let map = InteriorMap::new(mesh);
        if map.is_empty() {
            return Err(Error::Config("mesh has no interior vertices".into()));
        }
        let stiffness = assemble_stiffness(mesh)?;
        let stiffness_int = map.restrict_matrix(&stiffness)?;
        Ok(ExtremalProblem {
            mesh,
            p,
            rule,
            map,
            stiffness,
            stiffness_int,
        })
    }

    pub fn mesh(&self) -> &Mesh<T> {
        self.mesh
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn rule(&self) -> &QuadratureRule<T> {
        &self.rule
    }

    pub fn interior(&self) -> &InteriorMap {
        &self.map
    }

    pub fn stiffness(&self) -> &SparseOperator<T> {
        &self.stiffness
    }

    pub fn stiffness_interior(&self) -> &SparseOperator<T> {
        &self.stiffness_int
    }

    pub fn lp_norm(&self, u: &[T]) -> Result<T> {
        lp_norm(self.mesh, u, self.p, &self.rule)
    }

    /// `||∇u||² = u^T K u`.
    pub fn dirichlet_energy(&self, u: &[T]) -> Result<T> {
        Error::check_len(self.mesh.num_vertices(), u.len())?;
        Ok(self.stiffness.quadratic_form(u))
    }

    pub fn load(&self, u: &[T]) -> Result<NodalField<T>> {
        nonlinear_load(self.mesh, u, self.p, &self.rule)
    }

    /// One on interior vertices, zero on the boundary, scaled to unit `L^p` norm.
    pub fn initial_guess(&self) -> Result<NodalField<T>> {
        let chi = NodalField::from_fn(self.mesh.num_vertices(), |v| {
            if self.mesh.is_boundary()[v] {
                T::zero()
            } else {
                T::one()
            }
        });
        let norm = self.lp_norm(&chi)?;
        Ok(chi.scaled(T::one() / norm))
    }

    /// `||∇u||_{L^2} / ||u||_{L^p}`.
    pub fn rayleigh_quotient(&self, u: &[T]) -> Result<T> {
        let norm = self.lp_norm(u)?;
        if norm == T::zero() {
            return Err(Error::Numerical(
                "Rayleigh quotient of the zero field".into(),
            ));
        }
        Ok(self.dirichlet_energy(u)?.sqrt() / norm)
    }

    /// One normalized descent step from `u`.
    pub fn descent_step(&self, u: &NodalField<T>, eta: T, inner_tol: T) -> Result<NodalField<T>> {
        let mut warm = None;
        self.step_with(u, eta, inner_tol, &mut warm)
    }

    /// `warm` carries the previous inner solution as CG starting guess.
    fn step_with(
        &self,
        u: &NodalField<T>,
        eta: T,
        inner_tol: T,
        warm: &mut Option<Vec<T>>,
    ) -> Result<NodalField<T>> {
        Error::check_len(self.mesh.num_vertices(), u.len())?;
        if eta == T::zero() {
            return Ok(u.clone());
        }
        let f = self.map.restrict(&self.load(u)?)?;
        let n = self.map.len();
        let x0 = warm.take().unwrap_or_else(|| vec![T::zero(); n]);
        let (w, _) = cg_solve_from(&self.stiffness_int, &f, x0, inner_tol, 10 * n.max(10))?;
        let ui = self.map.restrict(u)?;
        let next: Vec<T> = ui
            .iter()
            .zip(&w)
            .map(|(&a, &b)| a - eta * (a - b))
            .collect();
        *warm = Some(w);
        let next = self.map.extend_zero(&next)?;
        let norm = self.lp_norm(&next)?;
        if !(norm >= T::lit(1e-14)) {
            return Err(Error::Numerical(format!(
                "descent iterate degenerated (L^p norm {norm:e})"
            )));
        }
        Ok(next.scaled(T::one() / norm))
    }

    /// `||K U - F(U)||_2 / ||F(U)||_2` on interior nodes.
    pub fn fixed_point_residual(&self, u: &[T]) -> Result<T> {
        let ku = self.map.restrict(&self.stiffness.mul_vec(u))?;
        let f = self.map.restrict(&self.load(u)?)?;
        let diff: Vec<T> = ku.iter().zip(&f).map(|(&a, &b)| a - b).collect();
        let fn2 = norm2(&f);
        if fn2 == T::zero() {
            return Ok(if norm2(&diff) == T::zero() {
                T::zero()
            } else {
                T::infinity()
            });
        }
        Ok(norm2(&diff) / fn2)
    }

    /// Factor `s` with `K (s u) = F(s u)` for a unit-norm field `u`:
    /// `s = (||∇u||² / ||u||_p^p)^{1/(p-2)}`.
    pub fn multiplier_scale(&self, u: &[T]) -> Result<T> {
        let energy = self.dirichlet_energy(u)?;
        let power = lp_power(self.mesh, u, self.p, &self.rule)?;
        Ok((energy / power).powf(T::one() / (self.p - T::lit(2.0))))
    }

    /// Iterates [`Self::descent_step`] from `start` (or the constant initial
    /// guess) and rescales the result to multiplier one.
    pub fn solve(
        &self,
        config: &MinimizerConfig<T>,
        start: Option<NodalField<T>>,
    ) -> Result<ExtremalSolution<T>> {
        config.validate()?;
        let mut u = match start {
            Some(s) => {
                Error::check_len(self.mesh.num_vertices(), s.len())?;
                let s = self.map.extend_zero(&self.map.restrict(&s)?)?;
                let norm = self.lp_norm(&s)?;
                if norm == T::zero() {
                    return Err(Error::Numerical("zero starting field".into()));
                }
                s.scaled(T::one() / norm)
            }
            None => self.initial_guess()?,
        };
        let mut q = self.rayleigh_quotient(&u)?;
        let mut history = vec![q];
        let mut warm = None;
        let fixed = config.iters_fixed.is_some();
        let polish = config.polish && !fixed;
        let budget = config.iters_fixed.unwrap_or(config.max_iters);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < budget {
            u = self.step_with(&u, config.eta, config.inner_tol, &mut warm)?;
            iterations += 1;
            let q_new = self.rayleigh_quotient(&u)?;
            history.push(q_new);
            let change = (q_new - q).abs();
            q = q_new;
            if fixed {
                // the step count is prescribed; report whether it stagnated
                converged = change <= config.quotient_tol * q;
                continue;
            }
            if change <= config.quotient_tol * q {
                converged = true;
                break;
            }
            if polish && change <= config.polish_switch * q {
                break;
            }
        }

        let mut newton_steps = 0;
        if polish {
            if let Some((polished, steps)) = self.newton_polish(&u, config)? {
                let norm = self.lp_norm(&polished)?;
                let candidate = polished.scaled(T::one() / norm);
                let q_new = self.rayleigh_quotient(&candidate)?;
                // The ground state minimizes the quotient; a larger value
                // means Newton landed on another critical point.
                if q_new <= q * (T::one() + T::lit(1e-8)) {
                    u = candidate;
                    q = q_new;
                    newton_steps = steps;
                    converged = true;
                    history.push(q);
                }
            }
        }
        let mut sol = self.finish(u, q, iterations, converged, history)?;
        sol.newton_steps = newton_steps;
        Ok(sol)
    }

    /// Damped Newton iteration on `G(U) = K U - F(U) = 0` from the
    /// multiplier-one scaling of `u`. The Jacobian `K - (p-1) W(U)` is
    /// indefinite, so each step is solved with MINRES. Returns `None` if the
    /// target residual is not reached.
    fn newton_polish(
        &self,
        u: &NodalField<T>,
        config: &MinimizerConfig<T>,
    ) -> Result<Option<(NodalField<T>, usize)>> {
        const MAX_STEPS: usize = 30;
        let n = self.map.len();
        let inv_diag = jacobi(&self.stiffness_int);
        let pm1 = self.p - T::one();
        let mut field = u.scaled(self.multiplier_scale(u)?);
        let mut res = self.residual_parts(&field)?;
        for step in 0..=MAX_STEPS {
            let rel = res.1 / res.2;
            if rel <= config.newton_tol {
                return Ok(Some((field, step)));
            }
            if step == MAX_STEPS {
                break;
            }
            let w = assemble_weighted_mass(self.mesh, &field, self.p - T::lit(2.0), &self.rule)?;
            let jac = self
                .stiffness_int
                .add_scaled(-pm1, &self.map.restrict_matrix(&w)?)?;
            let rhs: Vec<T> = res.0.iter().map(|&g| -g).collect();
            let forcing = rel.min(T::lit(1e-3)).max(T::lit(1e-12));
            let delta = match minres_solve(&jac, &inv_diag, &rhs, forcing, 20 * n + 100) {
                Ok((d, _)) => d,
                Err(Error::CgNotConverged(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let base = self.map.restrict(&field)?;
            let mut t = T::one();
            let accepted = loop {
                let trial: Vec<T> = base.iter().zip(&delta).map(|(&b, &d)| b + t * d).collect();
                let trial = self.map.extend_zero(&trial)?;
                let trial_res = self.residual_parts(&trial)?;
                if trial_res.1 < (T::one() - T::lit(1e-4) * t) * res.1 {
                    field = trial;
                    res = trial_res;
                    break true;
                }
                t *= T::lit(0.5);
                if t < T::lit(1.0 / 64.0) {
                    break false;
                }
            };
            if !accepted {
                return Ok(None);
            }
        }
        Ok(None)
    }

    /// Interior residual `K U - F(U)`, its norm and the norm of `F(U)`.
    fn residual_parts(&self, field: &[T]) -> Result<(Vec<T>, T, T)> {
        let ku = self.map.restrict(&self.stiffness.mul_vec(field))?;
        let f = self.map.restrict(&self.load(field)?)?;
        let g: Vec<T> = ku.iter().zip(&f).map(|(&a, &b)| a - b).collect();
        let gn = norm2(&g);
        let fnorm = norm2(&f);
        if fnorm == T::zero() {
            return Err(Error::Numerical("nonlinear load vanished".into()));
        }
        Ok((g, gn, fnorm))
    }

    fn finish(
        &self,
        mut u: NodalField<T>,
        c_h: T,
        iterations: usize,
        converged: bool,
        quotient_history: Vec<T>,
    ) -> Result<ExtremalSolution<T>> {
        if u.mean() < T::zero() {
            u = u.scaled(-T::one());
        }
        let s = self.multiplier_scale(&u)?;
        let field = u.scaled(s);
        let fixed_point_residual = self.fixed_point_residual(&field)?;
        Ok(ExtremalSolution {
            linf: field.max_abs(),
            field,
            normalized_field: u,
            c_h,
            iterations,
            newton_steps: 0,
            fixed_point_residual,
            converged,
            quotient_history,
        })
    }
}

/// Convenience wrapper: builds the problem on `mesh` and solves it.
pub fn solve_extremal<T: Real>(
    mesh: &Mesh<T>,
    config: &MinimizerConfig<T>,
) -> Result<ExtremalSolution<T>> {
    config.validate()?;
    ExtremalProblem::new(mesh, config.p, config.quad_degree)?.solve(config, None)
}
