//! Numerical checks of the differential identities of the evolution operator:
//! `∂_t^α Ψ(t, s) + A(t) Ψ(t, s) = 0` and `∂_s^α Ψ(t, s) v = Ψ(t, s) A(s) v`.
//!
//! Since `T_α f = t^(1−α) f′(t) = df/dτ`, both α-derivatives are τ-derivatives
//! and are taken by central differences on the uniform τ-grid (five-point where
//! the stencil fits, three-point otherwise).

use nalgebra::DMatrix;

use super::family::OperatorFamily;
use super::propagator::PropagatorTable;
use crate::error::{Error, Result};

fn tau_derivative(at: impl Fn(isize) -> DMatrix<f64>, wide: bool, h: f64) -> DMatrix<f64> {
    if wide {
        (at(-2) - at(-1) * 8.0 + at(1) * 8.0 - at(2)) / (12.0 * h)
    } else {
        (at(1) - at(-1)) / (2.0 * h)
    }
}

fn offset(i: usize, k: isize) -> usize {
    (i as isize + k) as usize
}

/// `‖∂_t^α Ψ(t_i, t_j) + A(t_i) Ψ(t_i, t_j)‖_F` at an interior node `i > j`.
pub fn conformable_residual(table: &PropagatorTable, family: &OperatorFamily, i: usize, j: usize) -> Result<f64> {
    let n = table.grid().n_nodes();
    if i == 0 || i + 1 >= n || j >= i {
        return Err(Error::Index(format!("need 0 < i < {} and j < i, got i = {i}, j = {j}", n - 1)));
    }
    let wide = i >= j + 2 && i + 2 < n;
    let d = tau_derivative(|k| table.matrix(offset(i, k), j), wide, table.grid().h());
    let a = family.generator(table.grid().t(i));
    Ok((d + a * table.matrix(i, j)).norm())
}

/// `‖∂_s^α Ψ(t_i, t_j) − Ψ(t_i, t_j) A(t_j)‖_F`, i.e. the adjoint identity over the canonical basis.
pub fn adjoint_residual(table: &PropagatorTable, family: &OperatorFamily, i: usize, j: usize) -> Result<f64> {
    let n = table.grid().n_nodes();
    if j == 0 || j >= i || i >= n {
        return Err(Error::Index(format!("need 0 < j < i < {n}, got i = {i}, j = {j}")));
    }
    let wide = j >= 2 && j + 2 <= i;
    let d = tau_derivative(|k| table.matrix(i, offset(j, k)), wide, table.grid().h());
    let a = family.generator(table.grid().t(j));
    Ok((d - table.matrix(i, j) * a).norm())
}

/// Conformable residual of the regularized operator whose kernel integral stops `cut`
/// nodes before `t`; it tends to the plain residual as `cut → 0`.
pub fn regularized_residual(
    table: &PropagatorTable,
    family: &OperatorFamily,
    i: usize,
    j: usize,
    cut: usize,
) -> Result<f64> {
    let n = table.grid().n_nodes();
    if table.kernel().is_none() {
        return Err(Error::Domain("regularized operator needs the dense backend".into()));
    }
    if i + 1 >= n || i < j + cut + 2 {
        return Err(Error::Index(format!("node {i} too close to {j} or the boundary for cut {cut}")));
    }
    let wide = i >= j + cut + 3 && i + 2 < n;
    let at = |k: isize| table.truncated(offset(i, k), j, cut).unwrap();
    let d = tau_derivative(at, wide, table.grid().h());
    let a = family.generator(table.grid().t(i));
    Ok((d + a * table.truncated(i, j, cut).unwrap()).norm())
}

/// `max_{i>j} ‖A(t_i) Ψ(t_i, t_j)‖₂ · (τ_i − τ_j)`: finite when the generator bound
/// blows up no faster than `1/(τ_i − τ_j)`.
pub fn generator_envelope(table: &PropagatorTable, family: &OperatorFamily, j: usize) -> f64 {
    let grid = table.grid();
    (j + 1..grid.n_nodes())
        .map(|i| {
            let m = family.generator(grid.t(i)) * table.matrix(i, j);
            m.singular_values().max() * (grid.tau(i) - grid.tau(j))
        })
        .fold(0.0, f64::max)
}
