//! Mesh-refinement studies: inter-level errors, observed rates and a
//! manufactured-solution check of the linear solver.
//!
//! Without a closed-form extremal function, errors are measured between
//! consecutive nested levels, `||u_{h_j} - u_{h_{j+1}}||`, and the observed
//! rate in row `j` is `log2(e_{j-1} / e_j)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::assembly::{assemble_mass, assemble_stiffness, element_geometry, InteriorMap};
use crate::diagnostics::nondegeneracy_gap;
use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::mesh::Mesh;
use crate::minimizer::{ExtremalProblem, ExtremalSolution, MinimizerConfig};
use crate::quadrature::{QuadratureRule, MAX_DEGREE};
use crate::scalar::Real;
use crate::sparse::cg_solve;

/// CSV header of [`rows_to_csv`].
pub const CSV_HEADER: &str = "j,h,err_l2,rate_l2,err_h1,rate_h1,c_h,linf,gap,residual,iters";

/// Which normalization of the discrete solution enters the error norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    /// Multiplier one: `K U = F(U)`.
    Lambda1,
    /// Unit `L^p` norm.
    UnitNorm,
}

impl Scaling {
    pub fn select<'a, T>(&self, sol: &'a ExtremalSolution<T>) -> &'a NodalField<T> {
        match self {
            Scaling::Lambda1 => &sol.field,
            Scaling::UnitNorm => &sol.normalized_field,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig<T> {
    pub minimizer: MinimizerConfig<T>,
    pub scaling: Scaling,
    /// Start each level from the prolongated solution of the previous one.
    /// Ignored in fixed-step mode, which always starts from the constant guess.
    pub warm_start: bool,
    /// Compute the non-degeneracy gap up to this level (inclusive). Levels
    /// whose fixed-point residual exceeds `1e-4` get no gap.
    pub gap_max_level: Option<u32>,
}

impl<T: Real> StudyConfig<T> {
    pub fn new(p: T) -> Self {
        StudyConfig {
            minimizer: MinimizerConfig::new(p),
            scaling: Scaling::Lambda1,
            warm_start: true,
            gap_max_level: Some(7),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow<T> {
    pub j: u32,
    /// Nominal mesh size `2^-j` (leg length on the unit square).
    pub h_label: T,
    pub err_l2: T,
    pub rate_l2: Option<T>,
    pub err_h1: T,
    pub rate_h1: Option<T>,
    pub c_h: T,
    pub linf: T,
    pub gap: Option<T>,
    pub residual: T,
    pub iters: usize,
}

/// Rows of a study, plus the error that stopped it early, if any.
#[derive(Debug)]
pub struct StudyReport<T> {
    pub p: T,
    pub rows: Vec<RateRow<T>>,
    /// `c_h` of every solved level, starting with level 1.
    pub c_h_by_level: Vec<T>,
    pub converged_by_level: Vec<bool>,
    pub failure: Option<Error>,
}

impl<T: Real> StudyReport<T> {
    /// Whether `c_h` never increases from one level to the next by more than `slack`.
    pub fn c_h_nonincreasing(&self, slack: T) -> bool {
        self.c_h_by_level.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    pub fn row(&self, j: u32) -> Option<&RateRow<T>> {
        self.rows.iter().find(|r| r.j == j)
    }
}

/// `log2(err_prev / err_curr)`; `None` if either error is not positive.
pub fn observed_rate<T: Real>(err_prev: T, err_curr: T) -> Option<T> {
    if err_prev > T::zero() && err_curr > T::zero() {
        Some((err_prev / err_curr).log2())
    } else {
        None
    }
}

/// L² norm and H¹ seminorm of `coarse - fine` on the fine mesh, after
/// prolongating `coarse` from the parent of `fine_mesh`.
pub fn inter_level_error<T: Real>(coarse: &[T], fine: &[T], fine_mesh: &Mesh<T>) -> Result<(T, T)> {
    let mass = assemble_mass(fine_mesh)?;
    let stiffness = assemble_stiffness(fine_mesh)?;
    inter_level_error_with(coarse, fine, fine_mesh, &mass, &stiffness)
}

fn inter_level_error_with<T: Real>(
    coarse: &[T],
    fine: &[T],
    fine_mesh: &Mesh<T>,
    mass: &crate::sparse::SparseOperator<T>,
    stiffness: &crate::sparse::SparseOperator<T>,
) -> Result<(T, T)> {
    match fine_mesh.parent_vertex_count() {
        Some(n) if n == coarse.len() => {}
        Some(n) => return Err(Error::dimension(n, coarse.len())),
        None => {
            return Err(Error::Config(
                "meshes are not consecutive nested levels".into(),
            ))
        }
    }
    Error::check_len(fine_mesh.num_vertices(), fine.len())?;
    let up = fine_mesh.prolongate(&NodalField::from(coarse.to_vec()))?;
    let d: Vec<T> = up.iter().zip(fine).map(|(&a, &b)| a - b).collect();
    let l2 = mass.quadratic_form(&d).max(T::zero()).sqrt();
    let h1 = stiffness.quadratic_form(&d).max(T::zero()).sqrt();
    Ok((l2, h1))
}

/// The gap is only meaningful near a solution of the Euler-Lagrange system.
const GAP_MAX_RESIDUAL: f64 = 1e-4;

struct LevelResult<T: Real> {
    mesh: Mesh<T>,
    solution: ExtremalSolution<T>,
    gap: Option<T>,
}

fn solve_level<T: Real>(
    mesh: Mesh<T>,
    config: &StudyConfig<T>,
    start: Option<NodalField<T>>,
) -> Result<LevelResult<T>> {
    let mc = &config.minimizer;
    let problem = ExtremalProblem::new(&mesh, mc.p, mc.quad_degree)?;
    let solution = problem.solve(mc, start)?;
    let gap = match config.gap_max_level {
        Some(max)
            if mesh.level() <= max
                && mesh.num_interior() > 1
                && solution.fixed_point_residual <= T::lit(GAP_MAX_RESIDUAL) =>
        {
            Some(nondegeneracy_gap(&problem, &solution.field)?.gap)
        }
        _ => None,
    };
    drop(problem);
    Ok(LevelResult {
        mesh,
        solution,
        gap,
    })
}

/// Solves the extremal problem on `base` refined `1..=j_max + 1` times and
/// tabulates rows `j = 1..=j_max`.
///
/// For the unit square pass `Mesh::unit_square(0)`; level `j` then has leg
/// length `2^-j`. A failing level stops the study; rows completed so far
/// are kept in the report.
pub fn run_study<T: Real>(base: &Mesh<T>, j_max: u32, config: &StudyConfig<T>) -> StudyReport<T> {
    let mut report = StudyReport {
        p: config.minimizer.p,
        rows: Vec::new(),
        c_h_by_level: Vec::new(),
        converged_by_level: Vec::new(),
        failure: None,
    };
    if let Err(e) = validate_study(j_max, config) {
        report.failure = Some(e);
        return report;
    }
    if let Err(e) = study_levels(base, j_max, config, &mut report) {
        report.failure = Some(e);
    }
    report
}

fn validate_study<T: Real>(j_max: u32, config: &StudyConfig<T>) -> Result<()> {
    if !(2..=9).contains(&j_max) {
        return Err(Error::Config(format!(
            "study needs 2 <= j_max <= 9, got {j_max}"
        )));
    }
    config.minimizer.validate()
}

fn study_levels<T: Real>(
    base: &Mesh<T>,
    j_max: u32,
    config: &StudyConfig<T>,
    report: &mut StudyReport<T>,
) -> Result<()> {
    let fixed = config.minimizer.iters_fixed.is_some();
    let mut mesh = base.clone();
    while mesh.level() < base.level() + 1 {
        mesh = mesh.refine_uniform();
    }
    let mut prev = solve_level(mesh, config, None)?;
    report.c_h_by_level.push(prev.solution.c_h);
    report.converged_by_level.push(prev.solution.converged);

    let mut prev_err: Option<(T, T)> = None;
    for j in 1..=j_max {
        let fine_mesh = prev.mesh.refine_uniform();
        let start = if config.warm_start && !fixed {
            Some(fine_mesh.prolongate(&prev.solution.normalized_field)?)
        } else {
            None
        };
        let next = solve_level(fine_mesh, config, start)?;
        report.c_h_by_level.push(next.solution.c_h);
        report.converged_by_level.push(next.solution.converged);

        let (err_l2, err_h1) = inter_level_error(
            config.scaling.select(&prev.solution),
            config.scaling.select(&next.solution),
            &next.mesh,
        )?;
        let (rate_l2, rate_h1) = match prev_err {
            Some((pl2, ph1)) => (observed_rate(pl2, err_l2), observed_rate(ph1, err_h1)),
            None => (None, None),
        };
        prev_err = Some((err_l2, err_h1));
        report.rows.push(RateRow {
            j,
            h_label: prev.mesh.h_label(),
            err_l2,
            rate_l2,
            err_h1,
            rate_h1,
            c_h: prev.solution.c_h,
            linf: prev.solution.linf,
            gap: prev.gap,
            residual: prev.solution.fixed_point_residual,
            iters: prev.solution.iterations + prev.solution.newton_steps,
        });
        prev = next;
    }
    Ok(())
}

fn opt<T: Real>(v: Option<T>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

pub fn rows_to_csv<T: Real>(rows: &[RateRow<T>]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{:.6e},{:.6e},{},{:.6e},{},{:.12e},{:.6e},{},{:.3e},{}",
            r.j,
            r.h_label,
            r.err_l2,
            opt(r.rate_l2),
            r.err_h1,
            opt(r.rate_h1),
            r.c_h,
            r.linf,
            opt(r.gap),
            r.residual,
            r.iters
        )
        .unwrap();
    }
    out
}

/// Solves on `base` refined up to `level` times, warm-starting each level
/// from the one below. Returns the finest mesh and its solution.
pub fn solve_nested<T: Real>(
    base: &Mesh<T>,
    level: u32,
    config: &MinimizerConfig<T>,
) -> Result<(Mesh<T>, ExtremalSolution<T>)> {
    config.validate()?;
    if level < base.level() {
        return Err(Error::Config(format!(
            "level {level} is below the base mesh level {}",
            base.level()
        )));
    }
    let fixed = config.iters_fixed.is_some();
    let mut mesh = base.clone();
    let mut start: Option<NodalField<T>> = None;
    while mesh.level() < level {
        let fine = mesh.refine_uniform();
        start = if !fixed && mesh.num_interior() > 0 {
            let sol = ExtremalProblem::new(&mesh, config.p, config.quad_degree)?
                .solve(config, start.take())?;
            Some(fine.prolongate(&sol.normalized_field)?)
        } else {
            None
        };
        mesh = fine;
    }
    let sol = ExtremalProblem::new(&mesh, config.p, config.quad_degree)?.solve(config, start)?;
    Ok((mesh, sol))
}

/// Errors of the linear Poisson solve against the exact solution at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonRow<T> {
    pub level: u32,
    pub h_label: T,
    pub err_l2: T,
    pub err_h1: T,
    pub rate_l2: Option<T>,
    pub rate_h1: Option<T>,
    pub cg_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonReport<T> {
    pub rows: Vec<PoissonRow<T>>,
    /// Discrete solution of `-Δu = 1` at `(1/2, 1/2)` on `center_level`.
    pub center_value: T,
    pub center_level: u32,
}

/// Manufactured-solution check of the linear pipeline on the unit square:
/// `u = sin(πx) sin(πy)`, `f = 2π² u`. Errors against the exact solution
/// are integrated with the highest-degree quadrature rule.
pub fn poisson_check<T: Real>(
    levels: std::ops::RangeInclusive<u32>,
    center_level: u32,
    tol: T,
) -> Result<PoissonReport<T>> {
    let rule = QuadratureRule::<T>::with_degree(MAX_DEGREE)?;
    let pi = T::lit(PI);
    let exact = move |x: T, y: T| (pi * x).sin() * (pi * y).sin();
    let grad = move |x: T, y: T| {
        [
            pi * (pi * x).cos() * (pi * y).sin(),
            pi * (pi * x).sin() * (pi * y).cos(),
        ]
    };
    let two_pi2 = T::lit(2.0 * PI * PI);

    let mut rows: Vec<PoissonRow<T>> = Vec::new();
    for level in levels {
        let mesh = Mesh::<T>::unit_square(level)?;
        let (u, iters) = solve_poisson(&mesh, &rule, |x, y| two_pi2 * exact(x, y), tol)?;
        let mut l2 = T::zero();
        let mut h1 = T::zero();
        for (k, t) in mesh.triangles().iter().enumerate() {
            let g = element_geometry(&mesh, k)?;
            let t = t.0;
            let v = t.map(|i| mesh.vertices()[i]);
            let gu = [0, 1].map(|d| (0..3).map(|i| u[t[i]] * g.grads[i][d]).sum::<T>());
            for (l, w) in rule.iter() {
                let x = l[0] * v[0].x + l[1] * v[1].x + l[2] * v[2].x;
                let y = l[0] * v[0].y + l[1] * v[1].y + l[2] * v[2].y;
                let uh = l[0] * u[t[0]] + l[1] * u[t[1]] + l[2] * u[t[2]];
                let e = uh - exact(x, y);
                let ge = grad(x, y);
                let (dx, dy) = (gu[0] - ge[0], gu[1] - ge[1]);
                l2 += g.area * w * e * e;
                h1 += g.area * w * (dx * dx + dy * dy);
            }
        }
        let (err_l2, err_h1) = (l2.sqrt(), h1.sqrt());
        let (rate_l2, rate_h1) = match rows.last() {
            Some(prev) => (
                observed_rate(prev.err_l2, err_l2),
                observed_rate(prev.err_h1, err_h1),
            ),
            None => (None, None),
        };
        rows.push(PoissonRow {
            level,
            h_label: mesh.h_label(),
            err_l2,
            err_h1,
            rate_l2,
            rate_h1,
            cg_iterations: iters,
        });
    }

    let mesh = Mesh::<T>::unit_square(center_level)?;
    let (u, _) = solve_poisson(&mesh, &rule, |_, _| T::one(), tol)?;
    let half = T::lit(0.5);
    let center = mesh
        .vertices()
        .iter()
        .position(|v| v.x == half && v.y == half)
        .ok_or_else(|| Error::Mesh("no vertex at the center".into()))?;
    Ok(PoissonReport {
        rows,
        center_value: u[center],
        center_level,
    })
}

/// Solves `-Δu = f` with zero Dirichlet data; the load `∫ f φ_i` is
/// integrated with `rule`.
pub fn solve_poisson<T: Real, F: Fn(T, T) -> T>(
    mesh: &Mesh<T>,
    rule: &QuadratureRule<T>,
    f: F,
    tol: T,
) -> Result<(NodalField<T>, usize)> {
    let map = InteriorMap::new(mesh);
    let k = map.restrict_matrix(&assemble_stiffness(mesh)?)?;
    let mut load = vec![T::zero(); mesh.num_vertices()];
    for (e, t) in mesh.triangles().iter().enumerate() {
        let g = element_geometry(mesh, e)?;
        let v = t.0.map(|i| mesh.vertices()[i]);
        for (l, w) in rule.iter() {
            let x = l[0] * v[0].x + l[1] * v[1].x + l[2] * v[2].x;
            let y = l[0] * v[0].y + l[1] * v[1].y + l[2] * v[2].y;
            let c = g.area * w * f(x, y);
            for i in 0..3 {
                load[t.0[i]] += c * l[i];
            }
        }
    }
    let b = map.restrict(&load)?;
    let (x, report) = cg_solve(&k, &b, tol, 10 * map.len().max(10))?;
    Ok((map.extend_zero(&x)?, report.iterations))
}
