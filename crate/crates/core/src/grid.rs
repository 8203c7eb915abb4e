//! Fractional order, the τ-uniform time grid and grid-sampled functions.
//!
//! Every conformable integral `∫ f(s) d(s, α) = ∫ f(s) s^(α-1) ds` becomes an
//! ordinary integral under `τ = s^α / α`, so grids are uniform in τ and all
//! quadrature happens there.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Order `α ∈ (0, 1]` of a conformable derivative, plus the base point `a`
/// of left derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionalOrder {
    alpha: f64,
    base_point: f64,
}

impl FractionalOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_base_point(alpha, 0.0)
    }

    pub fn with_base_point(alpha: f64, base_point: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("order alpha must lie in (0, 1], got {alpha}")));
        }
        if !(base_point >= 0.0) || !base_point.is_finite() {
            return Err(Error::Domain(format!("base point must be >= 0, got {base_point}")));
        }
        Ok(Self { alpha, base_point })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn base_point(&self) -> f64 {
        self.base_point
    }

    /// `τ = t^α / α`.
    pub fn tau_of(&self, t: f64) -> f64 {
        t.powf(self.alpha) / self.alpha
    }

    /// Inverse substitution `t = (α τ)^(1/α)`.
    pub fn t_of(&self, tau: f64) -> f64 {
        (self.alpha * tau).powf(1.0 / self.alpha)
    }

    /// Density of the measure `d(t, α)` with respect to `dt`.
    pub fn weight(&self, t: f64) -> f64 {
        t.powf(self.alpha - 1.0)
    }
}

/// Discretization of a horizon `[t₁, t₂]`, uniform in `τ`.
#[derive(Clone, Debug)]
pub struct TimeGrid {
    order: FractionalOrder,
    tau_nodes: Vec<f64>,
    t_nodes: Vec<f64>,
    h: f64,
}

impl TimeGrid {
    /// Grid on the τ-horizon `[tau_start, tau_end]`.
    pub fn from_tau(order: FractionalOrder, tau_start: f64, tau_end: f64, n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::Domain(format!("grid needs at least 2 nodes, got {n_nodes}")));
        }
        if !(tau_start >= 0.0) || !tau_start.is_finite() {
            return Err(Error::Domain(format!("horizon start must be >= 0, got {tau_start}")));
        }
        if !(tau_end > tau_start) || !tau_end.is_finite() {
            return Err(Error::Domain(format!(
                "horizon end {tau_end} must exceed horizon start {tau_start}"
            )));
        }
        let h = (tau_end - tau_start) / (n_nodes - 1) as f64;
        let tau_nodes: Vec<f64> = (0..n_nodes)
            .map(|i| if i + 1 == n_nodes { tau_end } else { tau_start + i as f64 * h })
            .collect();
        let t_nodes = tau_nodes.iter().map(|&tau| order.t_of(tau)).collect();
        Ok(Self { order, tau_nodes, t_nodes, h })
    }

    /// Grid on the physical horizon `[t_start, t_end]`.
    pub fn from_t(order: FractionalOrder, t_start: f64, t_end: f64, n_nodes: usize) -> Result<Self> {
        if !(t_start >= 0.0) || !(t_end > t_start) {
            return Err(Error::Domain(format!("invalid horizon [{t_start}, {t_end}]")));
        }
        Self::from_tau(order, order.tau_of(t_start), order.tau_of(t_end), n_nodes)
    }

    /// Same horizon and order with a different node count.
    pub fn with_nodes(&self, n_nodes: usize) -> Result<Self> {
        Self::from_tau(self.order, self.tau_start(), self.tau_end(), n_nodes)
    }

    pub fn order(&self) -> FractionalOrder {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.order.alpha()
    }

    pub fn n_nodes(&self) -> usize {
        self.tau_nodes.len()
    }

    /// Uniform τ-spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.tau_nodes[i]
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t_nodes[i]
    }

    pub fn tau_nodes(&self) -> &[f64] {
        &self.tau_nodes
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn tau_start(&self) -> f64 {
        self.tau_nodes[0]
    }

    pub fn tau_end(&self) -> f64 {
        *self.tau_nodes.last().unwrap()
    }

    pub fn t_start(&self) -> f64 {
        self.t_nodes[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t_nodes.last().unwrap()
    }

    pub fn last(&self) -> usize {
        self.n_nodes() - 1
    }

    /// Composite-trapezoid weight of node `k` for an integral over `[τ_from, τ_to]`
    /// (node indices, `from <= k <= to`).
    pub fn trapezoid_weight(&self, k: usize, from: usize, to: usize) -> f64 {
        debug_assert!(from <= k && k <= to);
        if from == to {
            0.0
        } else if k == from || k == to {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// True when both grids share order, horizon and node count.
    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.order == other.order
            && self.n_nodes() == other.n_nodes()
            && self.tau_start() == other.tau_start()
            && self.tau_end() == other.tau_end()
    }
}

/// Vector-valued samples, one per grid node.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: TimeGrid,
    values: Vec<DVector<f64>>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::Dimension(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if let Some(first) = values.first() {
            let dim = first.len();
            if values.iter().any(|v| v.len() != dim) {
                return Err(Error::Dimension("samples have differing lengths".into()));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        let values = vec![DVector::zeros(dim); grid.n_nodes()];
        Self { grid, values }
    }

    /// Samples `f(t_i)` at every node.
    pub fn sample(grid: TimeGrid, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        let values = grid.t_nodes().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &DVector<f64> {
        &self.values[i]
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn last(&self) -> &DVector<f64> {
        self.values.last().unwrap()
    }

    pub fn into_values(self) -> Vec<DVector<f64>> {
        self.values
    }

    /// `max_i ‖f(t_i)‖`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max_i ‖f(t_i) − g(t_i)‖`.
    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `(∫ ‖f‖² d(s, α))^(1/2)` by the τ-trapezoid rule.
    pub fn l2_norm(&self) -> f64 {
        let last = self.grid.last();
        self.values
            .iter()
            .enumerate()
            .map(|(k, v)| self.grid.trapezoid_weight(k, 0, last) * v.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}
