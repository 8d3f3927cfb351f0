//! Extremal functions against an independent dense damped Newton solve of
//! `K U = F(U)` (same mesh, same quadrature).

#[path = "support/newton.rs"]
mod newton;

use newton::{relative_l2, Dense};
use sobolev_fem::{solve_extremal, MinimizerConfig};

#[test]
fn level_two_matches_newton() {
    let oracle = Dense::new(2, 4.0);
    let expected = oracle.solve();
    assert!(expected.iter().all(|&v| v >= 0.0));
    let sol = solve_extremal(&oracle.mesh, &MinimizerConfig::new(4.0)).unwrap();
    let err = relative_l2(&sol.field, &expected);
    assert!(err <= 1e-8, "relative nodal error {err:e}");
}

#[test]
fn level_three_matches_newton() {
    let oracle = Dense::new(3, 4.0);
    let expected = oracle.solve();
    let sol = solve_extremal(&oracle.mesh, &MinimizerConfig::new(4.0)).unwrap();
    assert!(relative_l2(&sol.field, &expected) <= 1e-8);
}

#[test]
fn descent_alone_reaches_the_same_point() {
    let oracle = Dense::new(2, 4.0);
    let expected = oracle.solve();
    let mut config = MinimizerConfig::new(4.0);
    config.polish = false;
    config.max_iters = 5000;
    config.quotient_tol = 1e-15;
    let sol = solve_extremal(&oracle.mesh, &config).unwrap();
    assert!(relative_l2(&sol.field, &expected) <= 1e-6);
}
