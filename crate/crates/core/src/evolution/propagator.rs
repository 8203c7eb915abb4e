use nalgebra::{DMatrix, DVector};

use super::blocks::{block_norm, gemm_acc, BlockTable};
use super::family::OperatorFamily;
use super::kernel::{build_with_route, KernelRoute, KernelTable};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Options for [`build_propagator`]; only the dense backend reads them.
#[derive(Clone, Copy, Debug)]
pub struct PropagatorOptions {
    pub kernel_route: KernelRoute,
    pub max_terms: usize,
    pub kernel_tol: f64,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        Self { kernel_route: KernelRoute::Direct, max_terms: 200, kernel_tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
enum Backend {
    /// Mode factors `exp(−n²(τ_i − τ_j) − (P_i − P_j))` with `P` the cumulative p-integral.
    Spectral { n_modes: usize, p_cumulative: Vec<f64> },
    Dense { psi: BlockTable, kernel: KernelTable },
}

/// The evolution operator `Ψ_α(t_i, t_j)` on every grid pair `i >= j`.
#[derive(Clone, Debug)]
pub struct PropagatorTable {
    grid: TimeGrid,
    backend: Backend,
    m_est: f64,
}

/// Builds the table for `family` on `grid`.
///
/// The spectral backend evaluates the mode factors in closed form with the
/// potential integrated by the cumulative τ-trapezoid rule. The dense backend
/// assembles `Ψ(t, s) = S_s(t − s) + ∫ S_σ(t − σ) R(σ, s) dσ` by the τ-trapezoid rule.
pub fn build_propagator(family: &OperatorFamily, grid: &TimeGrid, opts: PropagatorOptions) -> Result<PropagatorTable> {
    let backend = match family {
        OperatorFamily::SpectralHeat { potential, n_modes } => {
            let h = grid.h();
            let mut p_cumulative = Vec::with_capacity(grid.n_nodes());
            let mut acc = 0.0;
            let mut prev = potential(grid.t(0));
            p_cumulative.push(0.0);
            for i in 1..grid.n_nodes() {
                let cur = potential(grid.t(i));
                acc += 0.5 * h * (prev + cur);
                p_cumulative.push(acc);
                prev = cur;
            }
            if !acc.is_finite() {
                return Err(Error::Numeric("potential integral is not finite".into()));
            }
            Backend::Spectral { n_modes: *n_modes, p_cumulative }
        }
        OperatorFamily::DenseMatrix { .. } => {
            let kernel = build_with_route(family, grid, opts.kernel_route, opts.max_terms, opts.kernel_tol)?;
            let psi = assemble_dense(grid, &kernel, grid.n_nodes());
            Backend::Dense { psi, kernel }
        }
    };
    let mut table = PropagatorTable { grid: grid.clone(), backend, m_est: 0.0 };
    table.m_est = table.max_norm();
    if !table.m_est.is_finite() {
        return Err(Error::Numeric("propagator is not finite".into()));
    }
    Ok(table)
}

/// Trapezoid assembly of `Ψ(i, j)`, integrating the kernel term only up to node
/// `i − cut` when `cut > 0` (the truncated operator used in the regularization check).
fn assemble_block(grid: &TimeGrid, kernel: &KernelTable, i: usize, j: usize, cut: usize, out: &mut [f64]) {
    let d = kernel.dim();
    let h = grid.h();
    out.copy_from_slice(kernel.frozen.block(i, j));
    if i <= j + cut {
        return;
    }
    let upper = i - cut;
    for k in j + 1..=upper {
        let w = if k == upper { 0.5 * h } else { h };
        gemm_acc(out, kernel.frozen.block(i, k), kernel.r_block(k, j), d, w);
    }
}

fn assemble_dense(grid: &TimeGrid, kernel: &KernelTable, n: usize) -> BlockTable {
    let d = kernel.dim();
    let mut psi = BlockTable::zeros(n, d);
    let mut buf = vec![0.0; d * d];
    for i in 0..n {
        for j in 0..=i {
            assemble_block(grid, kernel, i, j, 0, &mut buf);
            psi.block_mut(i, j).copy_from_slice(&buf);
        }
    }
    psi
}

impl PropagatorTable {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        match &self.backend {
            Backend::Spectral { n_modes, .. } => *n_modes,
            Backend::Dense { psi, .. } => psi.dim(),
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.backend, Backend::Spectral { .. })
    }

    /// Recorded `max_{i>=j} ‖Ψ(t_i, t_j)‖₂`.
    pub fn m_est(&self) -> f64 {
        self.m_est
    }

    /// Kernel table of the dense backend.
    pub fn kernel(&self) -> Option<&KernelTable> {
        match &self.backend {
            Backend::Dense { kernel, .. } => Some(kernel),
            Backend::Spectral { .. } => None,
        }
    }

    fn check(&self, i: usize, j: usize) {
        assert!(j <= i && i < self.grid.n_nodes(), "propagator index ({i}, {j}) out of range");
    }

    /// Factor of mode `n` (1-based) over `(t_j, t_i]` for the spectral backend.
    pub fn mode_factor(&self, n: usize, i: usize, j: usize) -> Option<f64> {
        self.check(i, j);
        match &self.backend {
            Backend::Spectral { p_cumulative, .. } => {
                let dtau = self.grid.tau(i) - self.grid.tau(j);
                Some((-((n * n) as f64) * dtau - (p_cumulative[i] - p_cumulative[j])).exp())
            }
            Backend::Dense { .. } => None,
        }
    }

    fn spectral_factors(&self, i: usize, j: usize) -> Option<DVector<f64>> {
        match &self.backend {
            Backend::Spectral { n_modes, .. } => {
                Some(DVector::from_fn(*n_modes, |n, _| self.mode_factor(n + 1, i, j).unwrap()))
            }
            Backend::Dense { .. } => None,
        }
    }

    /// `Ψ(t_i, t_j)`.
    pub fn matrix(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.check(i, j);
        match &self.backend {
            Backend::Spectral { .. } => DMatrix::from_diagonal(&self.spectral_factors(i, j).unwrap()),
            Backend::Dense { psi, .. } => psi.matrix(i, j),
        }
    }

    /// `Ψ(t_i, t_j) x`.
    pub fn apply(&self, i: usize, j: usize, x: &DVector<f64>) -> DVector<f64> {
        self.check(i, j);
        match &self.backend {
            Backend::Spectral { .. } => self.spectral_factors(i, j).unwrap().component_mul(x),
            Backend::Dense { psi, .. } => psi.apply(i, j, x),
        }
    }

    /// `Ψ(t_i, t_j)ᵀ x`.
    pub fn apply_transpose(&self, i: usize, j: usize, x: &DVector<f64>) -> DVector<f64> {
        self.check(i, j);
        match &self.backend {
            Backend::Spectral { .. } => self.spectral_factors(i, j).unwrap().component_mul(x),
            Backend::Dense { psi, .. } => psi.apply_transpose(i, j, x),
        }
    }

    /// Dense-backend variant of `Ψ(t_i, t_j)` whose kernel integral stops `cut` nodes
    /// before `t_i`.
    pub fn truncated(&self, i: usize, j: usize, cut: usize) -> Option<DMatrix<f64>> {
        self.check(i, j);
        match &self.backend {
            Backend::Dense { kernel, .. } => {
                let d = kernel.dim();
                let mut buf = vec![0.0; d * d];
                assemble_block(&self.grid, kernel, i, j, cut, &mut buf);
                Some(DMatrix::from_column_slice(d, d, &buf))
            }
            Backend::Spectral { .. } => None,
        }
    }

    fn max_norm(&self) -> f64 {
        let n = self.grid.n_nodes();
        let mut worst = 0.0f64;
        match &self.backend {
            Backend::Spectral { n_modes, .. } => {
                for i in 0..n {
                    for j in 0..=i {
                        for m in 1..=*n_modes {
                            worst = worst.max(self.mode_factor(m, i, j).unwrap());
                        }
                    }
                }
            }
            Backend::Dense { psi, .. } => {
                for i in 0..n {
                    for j in 0..=i {
                        let m = psi.matrix(i, j);
                        let two_norm = m.singular_values().max();
                        worst = worst.max(if two_norm.is_finite() { two_norm } else { block_norm(psi.block(i, j)) });
                    }
                }
            }
        }
        worst
    }

    /// `max_{j<=r<=i} ‖Ψ(i,j) − Ψ(i,r) Ψ(r,j)‖_F` over every grid triple.
    pub fn composition_defect(&self) -> f64 {
        let n = self.grid.n_nodes();
        let d = self.dim();
        let mut worst = 0.0f64;
        match &self.backend {
            Backend::Spectral { n_modes, .. } => {
                for i in 0..n {
                    for r in 0..=i {
                        for j in 0..=r {
                            let mut sq = 0.0;
                            for m in 1..=*n_modes {
                                let direct = self.mode_factor(m, i, j).unwrap();
                                let composed = self.mode_factor(m, i, r).unwrap() * self.mode_factor(m, r, j).unwrap();
                                sq += (direct - composed).powi(2);
                            }
                            worst = worst.max(sq.sqrt());
                        }
                    }
                }
            }
            Backend::Dense { psi, .. } => {
                let mut buf = vec![0.0; d * d];
                for i in 0..n {
                    for r in 0..=i {
                        for j in 0..=r {
                            buf.copy_from_slice(psi.block(i, j));
                            gemm_acc(&mut buf, psi.block(i, r), psi.block(r, j), d, -1.0);
                            worst = worst.max(block_norm(&buf));
                        }
                    }
                }
            }
        }
        worst
    }

    /// `max_{i,j} ‖Ψ(t_{i+1}, t_j) − Ψ(t_i, t_j)‖_F` over `j <= i`.
    pub fn max_step_change(&self) -> f64 {
        let n = self.grid.n_nodes();
        let mut worst = 0.0f64;
        for i in 0..n - 1 {
            for j in 0..=i {
                worst = worst.max((self.matrix(i + 1, j) - self.matrix(i, j)).norm());
            }
        }
        worst
    }
}

/// Richardson estimate of the table's quadrature error: `max ‖Ψ_h − Ψ_{2h}‖_F / 3` over the
/// pairs shared with the coarsened grid, floored at the rounding level of the table.
pub fn quadrature_error_estimate(
    family: &OperatorFamily,
    table: &PropagatorTable,
    opts: PropagatorOptions,
) -> Result<f64> {
    let grid = table.grid();
    let n = grid.n_nodes();
    if n % 2 == 0 || n < 5 {
        return Err(Error::Domain(format!("error estimate needs an odd node count >= 5, got {n}")));
    }
    let coarse_grid = grid.with_nodes((n - 1) / 2 + 1)?;
    let coarse = build_propagator(family, &coarse_grid, opts)?;
    let mut worst = 0.0f64;
    for i in 0..coarse_grid.n_nodes() {
        for j in 0..=i {
            worst = worst.max((table.matrix(2 * i, 2 * j) - coarse.matrix(i, j)).norm());
        }
    }
    let rounding = 64.0 * f64::EPSILON * table.m_est().max(1.0) * (table.dim() as f64).sqrt();
    Ok((worst / 3.0).max(rounding))
}
