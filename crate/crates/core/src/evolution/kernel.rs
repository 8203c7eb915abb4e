//! The correction kernel `R(t, s)` solving the Volterra equation
//! `R(t, s) = R₁(t, s) + ∫_{τ_s}^{τ_t} R₁(t, σ) R(σ, s) dσ`
//! with `R₁(t, s) = (A(s) − A(t)) S_s(t − s)`, discretized by the τ-trapezoid rule.
//!
//! Both `R₁(t, t)` and `R(s, s)` vanish, so only interior nodes carry weight
//! and the discrete system is explicit in the row index.

use nalgebra::DMatrix;

use super::blocks::{block_norm, gemm_acc, BlockTable};
use super::family::{frozen_semigroup, OperatorFamily};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KernelRoute {
    /// Sum of iterated kernels `R = Σ_m R_m`.
    Series,
    /// Forward substitution of the block lower-triangular discrete system.
    #[default]
    Direct,
}

/// Discretized `R₁` and `R` on all grid pairs `i > j`, together with the
/// frozen semigroups `exp(−(τ_i − τ_j) A(t_j))` they were built from.
#[derive(Clone, Debug)]
pub struct KernelTable {
    grid: TimeGrid,
    pub(crate) frozen: BlockTable,
    r1: BlockTable,
    r: BlockTable,
    route: KernelRoute,
    n_terms_used: usize,
    series_tail_norm: f64,
    term_norms: Vec<f64>,
}

impl KernelTable {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn route(&self) -> KernelRoute {
        self.route
    }

    /// Number of iterated kernels summed (0 for the direct route).
    pub fn n_terms_used(&self) -> usize {
        self.n_terms_used
    }

    /// Max norm of the last summed iterated kernel (0 for the direct route).
    pub fn series_tail_norm(&self) -> f64 {
        self.series_tail_norm
    }

    /// `max_{i,j} ‖R_m(t_i, t_j)‖_F` for each summed term `m = 1, 2, …`.
    pub fn term_norms(&self) -> &[f64] {
        &self.term_norms
    }

    pub fn r1(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.r1.matrix(i, j)
    }

    pub fn r(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.r.matrix(i, j)
    }

    pub(crate) fn r_block(&self, i: usize, j: usize) -> &[f64] {
        self.r.block(i, j)
    }

    /// `max_{i>j} ‖R(i,j) − R₁(i,j) − h Σ_k R₁(i,k) R(k,j)‖_F`.
    pub fn residual(&self) -> f64 {
        let n = self.grid.n_nodes();
        let d = self.dim();
        let h = self.grid.h();
        let mut worst = 0.0f64;
        let mut acc = vec![0.0; d * d];
        for i in 1..n {
            for j in 0..i {
                acc.copy_from_slice(self.r.block(i, j));
                for (a, b) in acc.iter_mut().zip(self.r1.block(i, j)) {
                    *a -= b;
                }
                for k in j + 1..i {
                    gemm_acc(&mut acc, self.r1.block(i, k), self.r.block(k, j), d, -h);
                }
                worst = worst.max(block_norm(&acc));
            }
        }
        worst
    }

    /// `max_{i>j} ‖R(t_i, t_j)‖_F`.
    pub fn max_norm(&self) -> f64 {
        max_block_norm(&self.r)
    }
}

fn max_block_norm(t: &BlockTable) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..t.n() {
        for j in 0..=i {
            worst = worst.max(block_norm(t.block(i, j)));
        }
    }
    worst
}

/// `E(i, j) = exp(−(τ_i − τ_j) A(t_j))`, built as powers of the one-step exponential.
pub(crate) fn frozen_table(family: &OperatorFamily, grid: &TimeGrid) -> Result<BlockTable> {
    let n = grid.n_nodes();
    let d = family.dim();
    let mut table = BlockTable::zeros(n, d);
    let identity = DMatrix::<f64>::identity(d, d);
    for j in 0..n {
        table.set(j, j, &identity);
        if j + 1 == n {
            break;
        }
        let step = frozen_semigroup(family, grid.t(j), grid.h())?;
        let mut current = identity.clone();
        for i in j + 1..n {
            current = &current * &step;
            table.set(i, j, &current);
        }
    }
    Ok(table)
}

fn r1_table(family: &OperatorFamily, grid: &TimeGrid, frozen: &BlockTable) -> BlockTable {
    let n = grid.n_nodes();
    let d = family.dim();
    let generators: Vec<DMatrix<f64>> = grid.t_nodes().iter().map(|&t| family.generator(t)).collect();
    let mut r1 = BlockTable::zeros(n, d);
    for i in 1..n {
        for j in 0..i {
            let diff = &generators[j] - &generators[i];
            gemm_acc(r1.block_mut(i, j), diff.as_slice(), frozen.block(i, j), d, 1.0);
        }
    }
    r1
}

fn check_grid(grid: &TimeGrid) -> Result<()> {
    if grid.n_nodes() < 3 {
        return Err(Error::Domain(format!("kernel construction needs >= 3 nodes, got {}", grid.n_nodes())));
    }
    Ok(())
}

/// Builds `R` by successive approximation, stopping once the newest term's max norm
/// is `<= kernel_tol`.
pub fn build_kernel(
    family: &OperatorFamily,
    grid: &TimeGrid,
    max_terms: usize,
    kernel_tol: f64,
) -> Result<KernelTable> {
    check_grid(grid)?;
    let frozen = frozen_table(family, grid)?;
    let r1 = r1_table(family, grid, &frozen);
    series_from_parts(grid, frozen, r1, max_terms, kernel_tol)
}

fn series_from_parts(
    grid: &TimeGrid,
    frozen: BlockTable,
    r1: BlockTable,
    max_terms: usize,
    kernel_tol: f64,
) -> Result<KernelTable> {
    let n = grid.n_nodes();
    let d = r1.dim();
    let h = grid.h();
    let mut sum = r1.clone();
    let mut term = r1.clone();
    let mut norms = vec![max_block_norm(&term)];
    let mut m = 1;
    while norms[m - 1] > kernel_tol {
        if m >= max_terms {
            return Err(Error::Convergence {
                what: "kernel series",
                iterations: m,
                last_norm: norms[m - 1],
            });
        }
        let mut next = BlockTable::zeros(n, d);
        // R_m(i,j) vanishes for i − j < m.
        for i in m..n {
            for j in 0..=i - m {
                let out = next.block_mut(i, j);
                for k in j + m - 1..i {
                    gemm_acc(out, r1.block(i, k), term.block(k, j), d, h);
                }
            }
        }
        for i in 0..n {
            for j in 0..=i {
                for (s, t) in sum.block_mut(i, j).iter_mut().zip(next.block(i, j)) {
                    *s += t;
                }
            }
        }
        norms.push(max_block_norm(&next));
        term = next;
        m += 1;
    }
    Ok(KernelTable {
        grid: grid.clone(),
        frozen,
        r1,
        r: sum,
        route: KernelRoute::Series,
        n_terms_used: m,
        series_tail_norm: norms[m - 1],
        term_norms: norms,
    })
}

/// Solves the discrete Volterra system directly by block forward substitution.
pub fn solve_kernel_direct(family: &OperatorFamily, grid: &TimeGrid) -> Result<KernelTable> {
    check_grid(grid)?;
    let frozen = frozen_table(family, grid)?;
    let r1 = r1_table(family, grid, &frozen);
    Ok(direct_from_parts(grid, frozen, r1))
}

fn direct_from_parts(grid: &TimeGrid, frozen: BlockTable, r1: BlockTable) -> KernelTable {
    let n = grid.n_nodes();
    let d = r1.dim();
    let h = grid.h();
    let mut r = BlockTable::zeros(n, d);
    let mut acc = vec![0.0; d * d];
    for i in 1..n {
        for j in 0..i {
            acc.copy_from_slice(r1.block(i, j));
            for k in j + 1..i {
                gemm_acc(&mut acc, r1.block(i, k), r.block(k, j), d, h);
            }
            r.block_mut(i, j).copy_from_slice(&acc);
        }
    }
    KernelTable {
        grid: grid.clone(),
        frozen,
        r1,
        r,
        route: KernelRoute::Direct,
        n_terms_used: 0,
        series_tail_norm: 0.0,
        term_norms: Vec::new(),
    }
}

pub(crate) fn build_with_route(
    family: &OperatorFamily,
    grid: &TimeGrid,
    route: KernelRoute,
    max_terms: usize,
    kernel_tol: f64,
) -> Result<KernelTable> {
    match route {
        KernelRoute::Series => build_kernel(family, grid, max_terms, kernel_tol),
        KernelRoute::Direct => solve_kernel_direct(family, grid),
    }
}
