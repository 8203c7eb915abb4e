//! Evolution operators `Ψ_α(t, s)` of `T_α x + A(t) x = 0`.

mod blocks;
mod family;
mod kernel;
mod oracle;
mod propagator;
mod residual;

pub use family::{frozen_semigroup, MatrixFn, OperatorFamily, ScalarFn};
pub use kernel::{build_kernel, solve_kernel_direct, KernelRoute, KernelTable};
pub use oracle::{oracle_matrix, propagate_forced_oracle, propagate_oracle};
pub use propagator::{build_propagator, quadrature_error_estimate, PropagatorOptions, PropagatorTable};
pub use residual::{adjoint_residual, conformable_residual, generator_envelope, regularized_residual};
