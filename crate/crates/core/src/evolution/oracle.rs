//! Brute-force reference: classical RK4 on `du/dτ = −A(t(τ)) u + g(τ)`.

use nalgebra::{DMatrix, DVector};

use super::family::OperatorFamily;
use crate::error::{Error, Result};
use crate::grid::FractionalOrder;

/// `Ψ(t, s) x` by RK4 in τ with `steps` uniform steps.
pub fn propagate_oracle(
    family: &OperatorFamily,
    order: FractionalOrder,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    steps: usize,
) -> Result<DVector<f64>> {
    propagate_forced_oracle(family, order, s, t, x, |_| None, steps)
}

/// Solution at `t` of `du/dτ = −A(t(τ)) u + g(τ)`, `u(s) = x`; `forcing` returns `None` for `g = 0`.
pub fn propagate_forced_oracle(
    family: &OperatorFamily,
    order: FractionalOrder,
    s: f64,
    t: f64,
    x: &DVector<f64>,
    forcing: impl Fn(f64) -> Option<DVector<f64>>,
    steps: usize,
) -> Result<DVector<f64>> {
    if x.len() != family.dim() {
        return Err(Error::Dimension(format!("state has length {}, family dimension {}", x.len(), family.dim())));
    }
    if !(t >= s) || s < 0.0 {
        return Err(Error::Domain(format!("oracle needs 0 <= s <= t, got s = {s}, t = {t}")));
    }
    if steps == 0 {
        return Err(Error::Domain("oracle needs at least one step".into()));
    }
    let (tau0, tau1) = (order.tau_of(s), order.tau_of(t));
    let h = (tau1 - tau0) / steps as f64;
    let rhs = |tau: f64, u: &DVector<f64>| -> DVector<f64> {
        let a = family.generator(order.t_of(tau));
        let mut du = -(a * u);
        if let Some(g) = forcing(tau) {
            du += g;
        }
        du
    };
    let mut u = x.clone();
    for k in 0..steps {
        let tau = tau0 + k as f64 * h;
        let k1 = rhs(tau, &u);
        let k2 = rhs(tau + 0.5 * h, &(&u + &k1 * (0.5 * h)));
        let k3 = rhs(tau + 0.5 * h, &(&u + &k2 * (0.5 * h)));
        let k4 = rhs(tau + h, &(&u + &k3 * h));
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if u.iter().all(|v| v.is_finite()) {
        Ok(u)
    } else {
        Err(Error::Numeric("oracle integration overflowed".into()))
    }
}

/// Full matrix `Ψ(t, s)` by propagating the canonical basis.
pub fn oracle_matrix(
    family: &OperatorFamily,
    order: FractionalOrder,
    s: f64,
    t: f64,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let d = family.dim();
    let mut m = DMatrix::zeros(d, d);
    for c in 0..d {
        let mut e = DVector::zeros(d);
        e[c] = 1.0;
        m.set_column(c, &propagate_oracle(family, order, s, t, &e, steps)?);
    }
    Ok(m)
}
