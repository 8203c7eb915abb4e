//! Mild solutions of the semilinear system
//! `T_α x + A(t) x = B u + F(t, x)` by Picard iteration on the variation-of-constants
//! equation, and the small-gain contraction check.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::control::GramianSolve;
use crate::error::{Error, Result};
use crate::evolution::{OperatorFamily, PropagatorTable};
use crate::grid::{GridFunction, TimeGrid};

/// `F(t, x)`, evaluated at physical time `t`.
pub type Nonlinearity = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Data of the controlled semilinear problem on one horizon.
#[derive(Clone)]
pub struct ControlProblem {
    pub family: OperatorFamily,
    pub grid: TimeGrid,
    pub x0: DVector<f64>,
    pub b: DMatrix<f64>,
    pub f: Option<Nonlinearity>,
    pub u: Option<GridFunction>,
    pub picard_tol: f64,
    pub max_iter: usize,
    /// Linear growth constant of `F` on the working ball.
    pub gamma_growth: f64,
    pub null_tol: f64,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("family", &self.family)
            .field("grid", &self.grid)
            .field("x0", &self.x0)
            .field("b", &self.b)
            .field("has_f", &self.f.is_some())
            .field("has_u", &self.u.is_some())
            .field("picard_tol", &self.picard_tol)
            .field("max_iter", &self.max_iter)
            .field("gamma_growth", &self.gamma_growth)
            .field("null_tol", &self.null_tol)
            .finish()
    }
}

impl ControlProblem {
    /// A problem with `F = 0`, no control and default tolerances.
    pub fn new(family: OperatorFamily, grid: TimeGrid, x0: DVector<f64>, b: DMatrix<f64>) -> Result<Self> {
        let problem = Self {
            family,
            grid,
            x0,
            b,
            f: None,
            u: None,
            picard_tol: 1e-10,
            max_iter: 200,
            gamma_growth: 0.0,
            null_tol: 1e-6,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_nonlinearity(
        mut self,
        f: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        gamma_growth: f64,
    ) -> Self {
        self.f = Some(Arc::new(f));
        self.gamma_growth = gamma_growth;
        self
    }

    /// `F(t, x) = c x`, with growth constant `|c|`.
    pub fn with_linear_gain(self, c: f64) -> Self {
        self.with_nonlinearity(move |_, x| x * c, c.abs())
    }

    pub fn with_control(mut self, u: GridFunction) -> Self {
        self.u = Some(u);
        self
    }

    pub fn with_tolerances(mut self, picard_tol: f64, max_iter: usize, null_tol: f64) -> Self {
        self.picard_tol = picard_tol;
        self.max_iter = max_iter;
        self.null_tol = null_tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// Number of control inputs (columns of `B`).
    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.x0.len() != d {
            return Err(Error::Dimension(format!("x0 has length {}, system dimension {d}", self.x0.len())));
        }
        if self.b.nrows() != d {
            return Err(Error::Dimension(format!("B has {} rows, system dimension {d}", self.b.nrows())));
        }
        if let Some(u) = &self.u {
            if !u.grid().same_as(&self.grid) {
                return Err(Error::Dimension("control lives on a different grid".into()));
            }
            if u.dim() != self.b.ncols() {
                return Err(Error::Dimension(format!("control has {} inputs, B has {} columns", u.dim(), self.b.ncols())));
            }
        }
        if let Some(f) = &self.f {
            let probe = f(self.grid.t(0), &self.x0);
            if probe.len() != d {
                return Err(Error::Dimension(format!("F returns length {}, system dimension {d}", probe.len())));
            }
        }
        if !(self.picard_tol > 0.0) || !(self.null_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        if !(self.gamma_growth >= 0.0) {
            return Err(Error::Domain("growth constant must be non-negative".into()));
        }
        Ok(())
    }

    /// `F(t_k, x_k)` at every node (zeros when `F` is absent).
    pub(crate) fn forcing_of(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        match &self.f {
            Some(f) => x.iter().enumerate().map(|(k, xk)| f(self.grid.t(k), xk)).collect(),
            None => vec![DVector::zeros(self.dim()); x.len()],
        }
    }
}

/// `x(t_i) = Ψ(t_i, t_0) x0 + ∫_{τ_0}^{τ_i} Ψ(t_i, s) g(s) dτ` by the trapezoid rule on every node.
pub fn variation_of_constants(propagator: &PropagatorTable, x0: &DVector<f64>, g: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let grid = propagator.grid();
    let n = grid.n_nodes();
    let h = grid.h();
    assert_eq!(g.len(), n, "forcing must have one sample per node");
    let mut out = Vec::with_capacity(n);
    out.push(x0.clone());
    if propagator.is_spectral() {
        // Diagonal factors compose exactly, so the history integral obeys a one-step recurrence.
        let d = propagator.dim();
        let mut hom = x0.clone();
        let mut acc = &g[0] * (0.5 * h);
        for i in 1..n {
            let step = DVector::from_fn(d, |m, _| propagator.mode_factor(m + 1, i, i - 1).unwrap());
            hom.component_mul_assign(&step);
            acc.component_mul_assign(&step);
            acc += &g[i] * h;
            out.push(&hom + &acc - &g[i] * (0.5 * h));
        }
    } else {
        for i in 1..n {
            let mut x = propagator.apply(i, 0, x0);
            for (k, gk) in g.iter().enumerate().take(i + 1) {
                x += propagator.apply(i, k, gk) * grid.trapezoid_weight(k, 0, i);
            }
            out.push(x);
        }
    }
    out
}

/// Outcome of [`picard_solve`].
#[derive(Clone, Debug)]
pub struct PicardOutcome {
    pub trajectory: GridFunction,
    pub iterations: usize,
    /// `sup_i ‖G(x)(t_i) − x(t_i)‖` for the returned trajectory.
    pub residual: f64,
    /// Sup-norm update of every iteration.
    pub update_norms: Vec<f64>,
}

fn check_propagator(problem: &ControlProblem, propagator: &PropagatorTable) -> Result<()> {
    if !propagator.grid().same_as(&problem.grid) {
        return Err(Error::Dimension("propagator was built on a different grid".into()));
    }
    if propagator.dim() != problem.dim() {
        return Err(Error::Dimension(format!(
            "propagator dimension {}, problem dimension {}",
            propagator.dim(),
            problem.dim()
        )));
    }
    Ok(())
}

fn sup_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// The fixed-point map `G(x) = Ψ x0 + ∫ Ψ (B u + F(·, x))` on grid values.
fn mild_map(problem: &ControlProblem, propagator: &PropagatorTable, bu: &[DVector<f64>], x: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut g = problem.forcing_of(x);
    for (gk, bk) in g.iter_mut().zip(bu) {
        *gk += bk;
    }
    variation_of_constants(propagator, &problem.x0, &g)
}

/// Solves the mild equation by Picard iteration started from the homogeneous trajectory.
pub fn picard_solve(problem: &ControlProblem, propagator: &PropagatorTable) -> Result<PicardOutcome> {
    picard_solve_from(problem, propagator, None)
}

/// [`picard_solve`] from a caller-supplied first iterate.
pub fn picard_solve_from(
    problem: &ControlProblem,
    propagator: &PropagatorTable,
    initial: Option<&GridFunction>,
) -> Result<PicardOutcome> {
    problem.validate()?;
    check_propagator(problem, propagator)?;
    let n = problem.grid.n_nodes();
    let d = problem.dim();
    let bu: Vec<DVector<f64>> = match &problem.u {
        Some(u) => u.values().iter().map(|uk| &problem.b * uk).collect(),
        None => vec![DVector::zeros(d); n],
    };
    let mut x = match initial {
        Some(init) => {
            if !init.grid().same_as(&problem.grid) || init.dim() != d {
                return Err(Error::Dimension("initial iterate does not match the problem".into()));
            }
            init.values().to_vec()
        }
        None => variation_of_constants(propagator, &problem.x0, &vec![DVector::zeros(d); n]),
    };
    let mut update_norms = Vec::new();
    for it in 1..=problem.max_iter {
        let next = mild_map(problem, propagator, &bu, &x);
        let update = sup_diff(&next, &x);
        update_norms.push(update);
        x = next;
        if !update.is_finite() {
            return Err(Error::Convergence { what: "picard iteration", iterations: it, last_norm: update });
        }
        if update <= problem.picard_tol {
            let residual = sup_diff(&mild_map(problem, propagator, &bu, &x), &x);
            return Ok(PicardOutcome {
                trajectory: GridFunction::new(problem.grid.clone(), x)?,
                iterations: it,
                residual,
                update_norms,
            });
        }
    }
    Err(Error::Convergence {
        what: "picard iteration",
        iterations: problem.max_iter,
        last_norm: *update_norms.last().unwrap(),
    })
}

/// `N = (t₂^(2α−1) − t₁^(2α−1)) / (2α − 1)`, with the limit `ln(t₂/t₁)` near `α = 1/2`.
pub fn n_constant(alpha: f64, t1: f64, t2: f64) -> f64 {
    let e = 2.0 * alpha - 1.0;
    if e.abs() < 1e-8 {
        (t2 / t1).ln()
    } else {
        (t2.powf(e) - t1.powf(e)) / e
    }
}

/// Terms of the small-gain condition `‖B‖‖H‖MγN + γMN < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionReport {
    pub m_est: f64,
    pub n_const: f64,
    pub gamma_growth: f64,
    pub b_norm: f64,
    pub h_norm: f64,
    pub lhs: f64,
    pub satisfied: bool,
}

pub fn contraction_report(
    problem: &ControlProblem,
    propagator: &PropagatorTable,
    gramian: &GramianSolve,
) -> Result<ContractionReport> {
    check_propagator(problem, propagator)?;
    let grid = propagator.grid();
    let m_est = propagator.m_est();
    let n_const = n_constant(grid.alpha(), grid.t_start(), grid.t_end());
    let gamma = problem.gamma_growth;
    let b_norm = spectral_norm(&problem.b);
    let h_norm = gramian.h_norm_est();
    let lhs = if gamma == 0.0 { 0.0 } else { b_norm * h_norm * m_est * gamma * n_const + gamma * m_est * n_const };
    Ok(ContractionReport {
        m_est,
        n_const,
        gamma_growth: gamma,
        b_norm,
        h_norm,
        lhs,
        satisfied: lhs < 1.0,
    })
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.singular_values().max()
    }
}

/// Samples `‖F(t, x)‖ / ‖x‖` at grid times and random `x` with `0 < ‖x‖ <= radius`,
/// returning the largest ratio seen.
pub fn estimate_growth(
    f: &dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
    grid: &TimeGrid,
    dim: usize,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(radius > 0.0) || samples == 0 || dim == 0 {
        return Err(Error::Domain("growth sampling needs radius > 0, samples >= 1 and dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let t = grid.t(rng.random_range(0..grid.n_nodes()));
        let mut x = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        x *= radius * rng.random_range(0.0..1.0f64).max(1e-3) / norm;
        worst = worst.max(f(t, &x).norm() / x.norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{build_propagator, propagate_oracle, PropagatorOptions};
    use crate::grid::FractionalOrder;

    fn heat(n_modes: usize, alpha: f64, n_nodes: usize) -> (OperatorFamily, TimeGrid, PropagatorTable) {
        let family = OperatorFamily::spectral_heat(|t| 1.0 + 0.5 * t, n_modes).unwrap();
        let grid = TimeGrid::from_tau(FractionalOrder::new(alpha).unwrap(), 0.0, 1.0, n_nodes).unwrap();
        let table = build_propagator(&family, &grid, PropagatorOptions::default()).unwrap();
        (family, grid, table)
    }

    #[test]
    fn homogeneous_case_takes_one_iteration() {
        let (family, grid, table) = heat(5, 0.7, 51);
        let x0 = DVector::from_fn(5, |i, _| 1.0 / (i + 1) as f64);
        let problem = ControlProblem::new(family, grid, x0.clone(), DMatrix::identity(5, 5)).unwrap();
        let out = picard_solve(&problem, &table).unwrap();
        assert_eq!(out.iterations, 1);
        for i in 0..51 {
            assert!((out.trajectory.value(i) - table.apply(i, 0, &x0)).norm() < 1e-14);
        }
    }

    #[test]
    fn scalar_linear_gain_matches_exponential() {
        let (lambda, c) = (1.3, 0.4);
        let family = OperatorFamily::constant(DMatrix::from_element(1, 1, lambda)).unwrap();
        let grid = TimeGrid::from_tau(FractionalOrder::new(0.6).unwrap(), 0.2, 1.2, 401).unwrap();
        let table = build_propagator(&family, &grid, PropagatorOptions::default()).unwrap();
        let x0 = DVector::from_element(1, 1.5);
        let problem = ControlProblem::new(family, grid.clone(), x0, DMatrix::zeros(1, 1)).unwrap().with_linear_gain(c);
        let out = picard_solve(&problem, &table).unwrap();
        for i in 0..grid.n_nodes() {
            let exact = 1.5 * ((c - lambda) * (grid.tau(i) - grid.tau(0))).exp();
            assert!((out.trajectory.value(i)[0] - exact).abs() < 1e-6);
        }
        assert!(out.residual <= 10.0 * problem.picard_tol);
    }

    #[test]
    fn spectral_recurrence_matches_direct_sum() {
        let (_, grid, table) = heat(4, 0.8, 31);
        let x0 = DVector::from_vec(vec![1.0, -1.0, 0.5, 0.2]);
        let g: Vec<_> = (0..31).map(|k| DVector::from_fn(4, |m, _| ((k + m) as f64).sin())).collect();
        let fast = variation_of_constants(&table, &x0, &g);
        for i in 0..31 {
            let mut x = table.apply(i, 0, &x0);
            for k in 0..=i {
                x += table.apply(i, k, &g[k]) * grid.trapezoid_weight(k, 0, i);
            }
            assert!((&fast[i] - x).norm() < 1e-13);
        }
    }

    #[test]
    fn heat_gain_is_absorbed_into_potential() {
        let c = 0.1;
        let (family, grid, table) = heat(8, 0.8, 2001);
        let x0 = DVector::from_fn(8, |i, _| 1.0 / (1 + i * i) as f64);
        let problem =
            ControlProblem::new(family.clone(), grid.clone(), x0.clone(), DMatrix::identity(8, 8)).unwrap().with_linear_gain(c);
        let out = picard_solve(&problem, &table).unwrap();
        let absorbed = family.shifted_potential(-c).unwrap();
        let order = grid.order();
        let expected = propagate_oracle(&absorbed, order, grid.t_start(), grid.t_end(), &x0, 4000).unwrap();
        assert!((out.trajectory.last() - expected).norm() < 1e-6);
    }

    #[test]
    fn non_convergence_is_reported() {
        let (family, grid, table) = heat(3, 1.0, 21);
        let problem = ControlProblem::new(family, grid, DVector::from_element(3, 1.0), DMatrix::identity(3, 3))
            .unwrap()
            .with_linear_gain(5.0)
            .with_tolerances(1e-14, 3, 1e-6);
        match picard_solve(&problem, &table) {
            Err(Error::Convergence { iterations: 3, last_norm, .. }) => assert!(last_norm > 0.0),
            other => panic!("expected a convergence error, got {other:?}"),
        }
    }

    #[test]
    fn n_constant_closed_forms() {
        assert!((n_constant(1.0, 0.0, 2.5) - 2.5).abs() < 1e-15);
        assert!((n_constant(0.75, 0.5, 1.0) - (1.0 - 0.5f64.sqrt()) / 0.5).abs() < 1e-15);
        assert!((n_constant(0.5, 0.5, 2.0) - 4.0f64.ln()).abs() < 1e-15);
        let near = n_constant(0.5 + 1e-7, 0.5, 2.0);
        assert!((near - 4.0f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn validation_catches_shape_errors() {
        let (family, grid, _) = heat(3, 0.9, 11);
        assert!(ControlProblem::new(family.clone(), grid.clone(), DVector::zeros(2), DMatrix::identity(3, 3)).is_err());
        assert!(ControlProblem::new(family.clone(), grid.clone(), DVector::zeros(3), DMatrix::identity(2, 2)).is_err());
        let p = ControlProblem::new(family, grid, DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        assert!(p.clone().with_tolerances(0.0, 10, 1e-6).validate().is_err());
        assert!(p.with_tolerances(1e-8, 0, 1e-6).validate().is_err());
    }

    #[test]
    fn growth_estimate_of_linear_gain() {
        let grid = TimeGrid::from_tau(FractionalOrder::new(0.5).unwrap(), 0.0, 1.0, 11).unwrap();
        let g = estimate_growth(&|_, x: &DVector<f64>| x * -0.3, &grid, 4, 2.0, 50, 7).unwrap();
        assert!((g - 0.3).abs() < 1e-12);
    }
}
