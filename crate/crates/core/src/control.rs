//! Minimum-norm null controls via the controllability Gramian.
//!
//! On the grid, `L u = Σ_k w_k Ψ(T, t_k) B u_k` and the adjoint with respect to the
//! weighted inner product `⟨u, v⟩ = Σ_k w_k u_k·v_k` is `(L* y)_k = Bᵀ Ψ(T, t_k)ᵀ y`, so
//! `W = L L* = Σ_k w_k Ψ_k B Bᵀ Ψ_kᵀ`. The null control for a target `y` is `u = −L* W⁻¹ y`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::evolution::{OperatorFamily, PropagatorTable};
use crate::grid::{GridFunction, TimeGrid};
use crate::mild::{picard_solve, variation_of_constants, ControlProblem};

/// Relative slack allowed on the null-controllability inequality.
pub const TOL_INEQ: f64 = 1e-6;
/// Largest jitter, relative to `trace(W)/d`, before the Gramian is declared singular.
pub const JITTER_CAP: f64 = 1e-8;
const JITTER_START: f64 = 1e-14;

/// Discretized control operators and the factorized Gramian.
#[derive(Clone, Debug)]
pub struct GramianSolve {
    grid: TimeGrid,
    b: DMatrix<f64>,
    propagator: Arc<PropagatorTable>,
    weights: Vec<f64>,
    /// `Ψ(T, t_k)` for every node.
    psi_final: Vec<DMatrix<f64>>,
    w: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    jitter: f64,
    h_norm_est: f64,
}

/// Control, closed-loop trajectory and summary numbers of a null-control synthesis.
#[derive(Clone, Debug)]
pub struct NullControlResult {
    pub control: GridFunction,
    pub final_state_norm: f64,
    pub control_energy: f64,
    pub closed_loop_trajectory: GridFunction,
    /// Outer fixed-point iterations (1 for the linear synthesis).
    pub iterations: usize,
    /// Sup-norm trajectory change of every outer iteration.
    pub outer_updates: Vec<f64>,
}

/// Assembles `L`, `N` and `W` from the propagator and factorizes `W`.
pub fn build_gramian(family: &OperatorFamily, b: &DMatrix<f64>, propagator: &PropagatorTable) -> Result<GramianSolve> {
    let d = propagator.dim();
    if family.dim() != d || b.nrows() != d {
        return Err(Error::Dimension(format!(
            "family dimension {}, propagator dimension {d}, B has {} rows",
            family.dim(),
            b.nrows()
        )));
    }
    let grid = propagator.grid().clone();
    let last = grid.last();
    let weights: Vec<f64> = (0..grid.n_nodes()).map(|k| grid.trapezoid_weight(k, 0, last)).collect();
    let psi_final: Vec<DMatrix<f64>> = (0..grid.n_nodes()).map(|k| propagator.matrix(last, k)).collect();

    let bbt = b * b.transpose();
    let mut w = DMatrix::zeros(d, d);
    let mut k_n = DMatrix::zeros(d, d);
    for (psi, &wk) in psi_final.iter().zip(&weights) {
        w += psi * &bbt * psi.transpose() * wk;
        k_n += psi * psi.transpose() * wk;
    }
    w = (&w + w.transpose()) * 0.5;

    let (factor, jitter) = factorize(&w)?;

    // ‖H‖² = λ_max(W^{-1/2} (Ψ₀Ψ₀ᵀ + N N*) W^{-1/2}), with N N* = Σ w_k Ψ_k Ψ_kᵀ.
    let k_total = &psi_final[0] * psi_final[0].transpose() + k_n;
    let l = factor.l();
    let lk = l.solve_lower_triangular(&k_total).expect("cholesky factor is invertible");
    let m = l.solve_lower_triangular(&lk.transpose()).expect("cholesky factor is invertible");
    let m = (&m + m.transpose()) * 0.5;
    let h_norm_est = SymmetricEigen::new(m).eigenvalues.max().max(0.0).sqrt();

    Ok(GramianSolve {
        grid,
        b: b.clone(),
        propagator: Arc::new(propagator.clone()),
        weights,
        psi_final,
        w,
        factor,
        jitter,
        h_norm_est,
    })
}

/// Cholesky of `W + jI` with `j` escalated from 0 through `10^k · 1e−14 · trace/d` up to the cap.
/// Every eigenvalue of `W` must clear the cap, otherwise the system is not controllable
/// at this truncation.
fn factorize(w: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let d = w.nrows();
    let scale = w.trace() / d as f64;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Controllability(format!("Gramian has trace {:.3e}; no control authority", w.trace())));
    }
    let cap = JITTER_CAP * scale;
    let lambda_min = SymmetricEigen::new(w.clone()).eigenvalues.min();
    if lambda_min <= cap {
        return Err(Error::Controllability(format!(
            "Gramian smallest eigenvalue {lambda_min:.3e} is below the regularization cap {cap:.3e}"
        )));
    }
    let mut jitter = 0.0;
    loop {
        let shifted = w + DMatrix::identity(d, d) * jitter;
        if let Some(c) = Cholesky::new(shifted) {
            return Ok((c, jitter));
        }
        jitter = if jitter == 0.0 { JITTER_START * scale } else { jitter * 10.0 };
        if jitter > cap {
            return Err(Error::Controllability(format!("Gramian not positive definite with jitter up to {cap:.3e}")));
        }
    }
}

impl GramianSolve {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn propagator(&self) -> &PropagatorTable {
        &self.propagator
    }

    /// The Gramian `W = L L*`.
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Jitter added to `W` before factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn h_norm_est(&self) -> f64 {
        self.h_norm_est
    }

    /// Quadrature weights of the control inner product.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The `k`-th block `Ψ(T, t_k) B` of `L` (unweighted).
    pub fn l_block(&self, k: usize) -> DMatrix<f64> {
        &self.psi_final[k] * &self.b
    }

    /// `L u`.
    pub fn apply_l(&self, u: &GridFunction) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        for (k, uk) in u.values().iter().enumerate() {
            y += &self.psi_final[k] * (&self.b * uk) * self.weights[k];
        }
        y
    }

    /// `L* y` as a control trajectory.
    pub fn apply_l_adjoint(&self, y: &DVector<f64>) -> GridFunction {
        let bt = self.b.transpose();
        let values = self.psi_final.iter().map(|psi| &bt * (psi.transpose() * y)).collect();
        GridFunction::new(self.grid.clone(), values).expect("one value per node")
    }

    /// `N(z0, f) = Ψ(T, t_0) z0 + Σ_k w_k Ψ(T, t_k) f_k`.
    pub fn apply_n(&self, z0: &DVector<f64>, forcing: &GridFunction) -> DVector<f64> {
        let mut y = &self.psi_final[0] * z0;
        for (k, fk) in forcing.values().iter().enumerate() {
            y += &self.psi_final[k] * fk * self.weights[k];
        }
        y
    }

    /// `W⁻¹ y` through the (jittered) factorization.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(y)
    }

    /// `u − L* W⁻¹ L u`, the component of `u` in the discrete kernel of `L`.
    pub fn project_to_kernel(&self, u: &GridFunction) -> GridFunction {
        let back = self.apply_l_adjoint(&self.solve(&self.apply_l(u)));
        let values = u.values().iter().zip(back.values()).map(|(a, b)| a - b).collect();
        GridFunction::new(self.grid.clone(), values).expect("one value per node")
    }

    /// `(Σ_k w_k ‖u_k‖²)^(1/2)`.
    pub fn energy(&self, u: &GridFunction) -> f64 {
        u.values().iter().zip(&self.weights).map(|(uk, w)| w * uk.norm_squared()).sum::<f64>().sqrt()
    }

    /// `‖W − Wᵀ‖_F / ‖W‖_F` of the assembled Gramian.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.w - self.w.transpose()).norm() / self.w.norm()
    }

    fn check_state(&self, z0: &DVector<f64>, forcing: &GridFunction) -> Result<()> {
        if z0.len() != self.dim() {
            return Err(Error::Dimension(format!("state has length {}, system dimension {}", z0.len(), self.dim())));
        }
        if !forcing.grid().same_as(&self.grid) || forcing.dim() != self.dim() {
            return Err(Error::Dimension("forcing does not match the Gramian grid and dimension".into()));
        }
        Ok(())
    }
}

/// The minimum-norm control steering `z0` under `forcing` to zero at the final time,
/// with the linear closed loop simulated on the grid.
pub fn synthesize_null_control(gramian: &GramianSolve, z0: &DVector<f64>, forcing: &GridFunction) -> Result<NullControlResult> {
    gramian.check_state(z0, forcing)?;
    let target = gramian.apply_n(z0, forcing);
    let mut control = gramian.apply_l_adjoint(&gramian.solve(&target));
    let values: Vec<_> = control.values().iter().map(|u| -u).collect();
    control = GridFunction::new(gramian.grid.clone(), values)?;

    let g: Vec<_> =
        control.values().iter().zip(forcing.values()).map(|(uk, fk)| &gramian.b * uk + fk).collect();
    let trajectory = variation_of_constants(&gramian.propagator, z0, &g);
    let closed_loop_trajectory = GridFunction::new(gramian.grid.clone(), trajectory)?;
    Ok(NullControlResult {
        final_state_norm: closed_loop_trajectory.last().norm(),
        control_energy: gramian.energy(&control),
        control,
        closed_loop_trajectory,
        iterations: 1,
        outer_updates: Vec::new(),
    })
}

/// Empirical constant of the null-controllability inequality
/// `∫‖B*Ψ*(T,s)z‖² ≥ γ (‖Ψ*(T,0)z‖² + ∫‖Ψ*(T,s)z‖²)` over `trials` random unit vectors;
/// passes when it is at least `T/(T+1) − TOL_INEQ`.
pub fn verify_null_inequality(
    gramian: &GramianSolve,
    propagator: &PropagatorTable,
    t_final: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, bool)> {
    if trials == 0 || !(t_final > 0.0) {
        return Err(Error::Domain("need at least one trial and T > 0".into()));
    }
    if !propagator.grid().same_as(&gramian.grid) {
        return Err(Error::Dimension("propagator and Gramian grids differ".into()));
    }
    let d = gramian.dim();
    let last = propagator.grid().last();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gamma_emp = f64::INFINITY;
    for _ in 0..trials {
        let mut z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        while z.norm() == 0.0 {
            z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        }
        z.normalize_mut();
        let mut lhs = 0.0;
        let mut inner = propagator.apply_transpose(last, 0, &z).norm_squared();
        for k in 0..=last {
            let adj = propagator.apply_transpose(last, k, &z);
            lhs += gramian.weights[k] * (gramian.b.transpose() * &adj).norm_squared();
            inner += gramian.weights[k] * adj.norm_squared();
        }
        gamma_emp = gamma_emp.min(lhs / inner);
    }
    let gamma = t_final / (t_final + 1.0);
    Ok((gamma_emp, gamma_emp >= gamma - TOL_INEQ))
}

/// Closed-loop null control of the semilinear problem: alternates `u_m = −H(x0, F(·, x_m))`
/// with the mild solve for `x_{m+1}` until the trajectory settles.
pub fn exact_null_control_semilinear(
    problem: &ControlProblem,
    gramian: &GramianSolve,
    propagator: &PropagatorTable,
) -> Result<NullControlResult> {
    problem.validate()?;
    if !propagator.grid().same_as(&gramian.grid) || !problem.grid.same_as(&gramian.grid) {
        return Err(Error::Dimension("problem, propagator and Gramian grids differ".into()));
    }
    if problem.b != gramian.b {
        return Err(Error::Dimension("problem and Gramian use different B".into()));
    }
    let d = problem.dim();
    let grid = problem.grid.clone();
    let mut x = GridFunction::new(
        grid.clone(),
        variation_of_constants(propagator, &problem.x0, &vec![DVector::zeros(d); grid.n_nodes()]),
    )?;
    let mut outer_updates = Vec::new();
    for it in 1..=problem.max_iter {
        let forcing = GridFunction::new(grid.clone(), problem.forcing_of(x.values()))?;
        let linear = synthesize_null_control(gramian, &problem.x0, &forcing)?;
        let inner = problem.clone().with_control(linear.control.clone());
        let solved = picard_solve(&inner, propagator).map_err(|e| match e {
            Error::Convergence { iterations, last_norm, .. } => {
                Error::Convergence { what: "inner picard iteration of the closed loop", iterations, last_norm }
            }
            other => other,
        })?;
        let next = solved.trajectory;
        let update = next.sup_distance(&x);
        outer_updates.push(update);
        x = next;
        if !update.is_finite() {
            break;
        }
        if update <= problem.picard_tol {
            let final_state_norm = x.last().norm();
            let tol = problem.null_tol * problem.x0.norm().max(1.0);
            if !(final_state_norm <= tol) {
                return Err(Error::Unreached { final_norm: final_state_norm, tol });
            }
            return Ok(NullControlResult {
                control_energy: gramian.energy(&linear.control),
                control: linear.control,
                final_state_norm,
                closed_loop_trajectory: x,
                iterations: it,
                outer_updates,
            });
        }
    }
    Err(Error::Convergence {
        what: "closed-loop outer iteration",
        iterations: outer_updates.len(),
        last_norm: *outer_updates.last().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{build_propagator, PropagatorOptions};
    use crate::grid::FractionalOrder;

    fn scalar(lambda: f64, n: usize) -> (OperatorFamily, PropagatorTable) {
        let family = OperatorFamily::constant(DMatrix::from_element(1, 1, lambda)).unwrap();
        let grid = TimeGrid::from_tau(FractionalOrder::new(0.7).unwrap(), 0.0, 1.0, n).unwrap();
        let table = build_propagator(&family, &grid, PropagatorOptions::default()).unwrap();
        (family, table)
    }

    #[test]
    fn scalar_gramian_matches_closed_form() {
        let lambda = 0.9;
        let (family, table) = scalar(lambda, 801);
        let g = build_gramian(&family, &DMatrix::identity(1, 1), &table).unwrap();
        let exact = (1.0 - (-2.0 * lambda).exp()) / (2.0 * lambda);
        assert!((g.w()[(0, 0)] - exact).abs() < 1e-6);
        assert_eq!(g.jitter(), 0.0);
    }

    #[test]
    fn scalar_null_control_closed_form() {
        let lambda = 0.9;
        let (family, table) = scalar(lambda, 201);
        let g = build_gramian(&family, &DMatrix::identity(1, 1), &table).unwrap();
        let z0 = DVector::from_element(1, 1.0);
        let res = synthesize_null_control(&g, &z0, &GridFunction::zeros(g.grid().clone(), 1)).unwrap();
        assert!(res.final_state_norm <= 1e-8);
        let w = g.w()[(0, 0)];
        let grid = g.grid();
        for k in 0..grid.n_nodes() {
            let expected = -(-lambda * (1.0 - grid.tau(k))).exp() / w * (-lambda).exp();
            assert!((res.control.value(k)[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_state_gives_zero_control() {
        let (family, table) = scalar(2.0, 21);
        let g = build_gramian(&family, &DMatrix::identity(1, 1), &table).unwrap();
        let res = synthesize_null_control(&g, &DVector::zeros(1), &GridFunction::zeros(g.grid().clone(), 1)).unwrap();
        assert_eq!(res.final_state_norm, 0.0);
        assert_eq!(res.control_energy, 0.0);
    }

    #[test]
    fn zero_b_is_uncontrollable() {
        let family = OperatorFamily::spectral_heat(|_| 1.0, 4).unwrap();
        let grid = TimeGrid::from_tau(FractionalOrder::new(0.8).unwrap(), 0.0, 1.0, 21).unwrap();
        let table = build_propagator(&family, &grid, PropagatorOptions::default()).unwrap();
        let err = build_gramian(&family, &DMatrix::zeros(4, 4), &table).unwrap_err();
        assert_eq!(err.code(), "E_CONTROLLABILITY");
        let err = build_gramian(&family, &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 1.0])), &table)
            .unwrap_err();
        assert_eq!(err.code(), "E_CONTROLLABILITY");
    }

    #[test]
    fn kernel_projection_is_orthogonal() {
        let family = OperatorFamily::random_smooth(3, 4).unwrap();
        let grid = TimeGrid::from_tau(FractionalOrder::new(0.9).unwrap(), 0.5, 1.5, 41).unwrap();
        let table = build_propagator(&family, &grid, PropagatorOptions::default()).unwrap();
        let b = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.5, 0.0, 1.0, -0.3]);
        let g = build_gramian(&family, &b, &table).unwrap();
        let v = GridFunction::sample(grid.clone(), |t| DVector::from_vec(vec![t.sin(), (2.0 * t).cos()])).unwrap();
        let kv = g.project_to_kernel(&v);
        assert!(g.apply_l(&kv).norm() < 1e-10 * g.energy(&v));
        assert!(g.symmetry_defect() <= 1e-12);
    }

    #[test]
    fn single_mode_inequality_ratio() {
        // A ≡ 1, T = 1: ratio = (1 − e^{−2})/2 / (e^{−2} + (1 − e^{−2})/2).
        let family = OperatorFamily::spectral_heat(|_| 0.0, 1).unwrap();
        let grid = TimeGrid::from_tau(FractionalOrder::new(1.0).unwrap(), 0.0, 1.0, 2001).unwrap();
        let table = build_propagator(&family, &grid, PropagatorOptions::default()).unwrap();
        let g = build_gramian(&family, &DMatrix::identity(1, 1), &table).unwrap();
        let (gamma, passes) = verify_null_inequality(&g, &table, 1.0, 10, 1).unwrap();
        let lhs = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((gamma - lhs / ((-2.0f64).exp() + lhs)).abs() < 1e-6);
        assert!(passes);
    }
}
