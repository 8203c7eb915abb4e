//! Conformable derivative and integral operators.
//!
//! For differentiable `f` the left conformable derivative with base point `a`
//! is `T_α^a f(t) = (t − a)^(1−α) f′(t)`; the limit quotient
//! `(f(t + ε (t − a)^(1−α)) − f(t)) / ε` is available as an independent route.
//! Integrals against `d(s, α) = s^(α−1) ds` are evaluated in `τ = s^α / α`.

use nalgebra::DMatrix;

use crate::error::{ensure_finite, Error, Result};
use crate::grid::FractionalOrder;

/// Smallest ε used by the limit-quotient route.
pub const LIMIT_EPS_MIN: f64 = 1e-7;

/// Relative step of the central differences used by the factor rule.
pub const CENTRAL_STEP: f64 = 1e-6;

const RICHARDSON_LEVELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DerivativeMethod {
    /// ε-quotient of the definition, Richardson-extrapolated over a halving ε sequence.
    LimitDefinition,
    /// `(t − a)^(1−α) f′(t)` with `f′` by central difference.
    #[default]
    FactorRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    Simpson,
}

fn central_step(t: f64) -> f64 {
    CENTRAL_STEP * t.abs().max(1e-3)
}

/// Classical derivative by central difference with a step relative to `t`.
pub fn central_difference(f: impl Fn(f64) -> f64, t: f64) -> Result<f64> {
    let h = central_step(t);
    let d = (f(t + h) - f(t - h)) / (2.0 * h);
    ensure_finite(d, "central difference")
}

/// `T_α^a f(t)`.
pub fn conformable_derivative(
    f: impl Fn(f64) -> f64,
    order: FractionalOrder,
    t: f64,
    method: DerivativeMethod,
) -> Result<f64> {
    let a = order.base_point();
    if !(t > a) {
        return Err(Error::Domain(format!("derivative point t = {t} must exceed the base point {a}")));
    }
    ensure_finite(f(t), "f(t)")?;
    let alpha = order.alpha();
    let scale = (t - a).powf(1.0 - alpha);
    match method {
        DerivativeMethod::FactorRule => {
            let h = central_step(t).min(0.5 * (t - a));
            let d = (f(t + h) - f(t - h)) / (2.0 * h);
            ensure_finite(scale * d, "conformable derivative")
        }
        DerivativeMethod::LimitDefinition => {
            let step_ratio = (1u32 << (RICHARDSON_LEVELS - 1)) as f64;
            let eps0 = (1e-3 * (t - a).powf(alpha)).max(LIMIT_EPS_MIN * step_ratio);
            let ft = f(t);
            // Neville table in ε with ratio 2; the quotient has an expansion in integer powers of ε.
            let mut table = [[0.0f64; RICHARDSON_LEVELS]; RICHARDSON_LEVELS];
            for j in 0..RICHARDSON_LEVELS {
                let eps = eps0 / (1u32 << j) as f64;
                table[j][0] = (f(t + eps * scale) - ft) / eps;
                for m in 1..=j {
                    let factor = ((1u32 << m) - 1) as f64;
                    table[j][m] = table[j][m - 1] + (table[j][m - 1] - table[j - 1][m - 1]) / factor;
                }
            }
            ensure_finite(table[RICHARDSON_LEVELS - 1][RICHARDSON_LEVELS - 1], "limit quotient")
        }
    }
}

/// `I_α(f)(a, b) = ∫_a^b f(x) x^(α−1) dx`, integrated as `∫ f(x(τ)) dτ` over the τ-image of `[a, b]`.
pub fn conformable_integral(
    f: impl Fn(f64) -> f64,
    order: FractionalOrder,
    a: f64,
    b: f64,
    n_panels: usize,
    rule: QuadratureRule,
) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::Domain(format!("lower limit must be >= 0, got {a}")));
    }
    if !(b > a) {
        return Err(Error::Domain(format!("upper limit {b} must exceed lower limit {a}")));
    }
    if n_panels == 0 {
        return Err(Error::Domain("at least one quadrature panel is required".into()));
    }
    if rule == QuadratureRule::Simpson && n_panels % 2 == 1 {
        return Err(Error::Domain(format!("Simpson's rule needs an even panel count, got {n_panels}")));
    }
    let (ta, tb) = (order.tau_of(a), order.tau_of(b));
    let h = (tb - ta) / n_panels as f64;
    let g = |k: usize| {
        let tau = if k == n_panels { tb } else { ta + k as f64 * h };
        f(order.t_of(tau))
    };
    let sum = match rule {
        QuadratureRule::Trapezoid => {
            let inner: f64 = (1..n_panels).map(g).sum();
            h * (0.5 * (g(0) + g(n_panels)) + inner)
        }
        QuadratureRule::Simpson => {
            let inner: f64 = (1..n_panels)
                .map(|k| if k % 2 == 1 { 4.0 * g(k) } else { 2.0 * g(k) })
                .sum();
            h / 3.0 * (g(0) + g(n_panels) + inner)
        }
    };
    ensure_finite(sum, "conformable integral")
}

const LEIBNIZ_PANELS: usize = 2000;

/// Which boundary terms the Leibniz residual uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeibnizForm {
    /// Boundary terms carry the measure density: `h(t, b) b^(α−1) T_α b(t)`.
    Weighted,
    /// Boundary terms as `h(t, b) T_α b(t)`; exact only for fixed limits or where `b(t) = 1`.
    Unweighted,
}

/// `|T_α(∫_{a(t)}^{b(t)} h(t, s) d(s, α)) − RHS|` with RHS the integral of `T_α h`
/// plus the moving-boundary terms.
pub fn leibniz_check(
    h: impl Fn(f64, f64) -> f64,
    lower: impl Fn(f64) -> f64,
    upper: impl Fn(f64) -> f64,
    order: FractionalOrder,
    t: f64,
    form: LeibnizForm,
) -> Result<f64> {
    let (a_t, b_t) = (lower(t), upper(t));
    if !(a_t < b_t) {
        return Err(Error::Domain(format!("need a(t) < b(t), got [{a_t}, {b_t}]")));
    }
    let simpson = QuadratureRule::Simpson;
    let integral_at = |x: f64| {
        conformable_integral(|s| h(x, s), order, lower(x), upper(x), LEIBNIZ_PANELS, simpson)
            .unwrap_or(f64::NAN)
    };
    let lhs = conformable_derivative(integral_at, order, t, DerivativeMethod::FactorRule)?;

    let inner = conformable_integral(
        |s| {
            conformable_derivative(|x| h(x, s), order, t, DerivativeMethod::FactorRule)
                .unwrap_or(f64::NAN)
        },
        order,
        a_t,
        b_t,
        LEIBNIZ_PANELS,
        simpson,
    )?;
    let boundary = |limit: &dyn Fn(f64) -> f64, at: f64| -> Result<f64> {
        let d = conformable_derivative(limit, order, t, DerivativeMethod::FactorRule)?;
        if d == 0.0 {
            return Ok(0.0);
        }
        let density = match form {
            LeibnizForm::Weighted => order.weight(at),
            LeibnizForm::Unweighted => 1.0,
        };
        ensure_finite(h(t, at) * density * d, "Leibniz boundary term")
    };
    let rhs = inner + boundary(&upper, b_t)? - boundary(&lower, a_t)?;
    Ok((lhs - rhs).abs())
}

/// Entrywise factor-rule derivative of a matrix function.
pub fn matrix_conformable_derivative(
    u: impl Fn(f64) -> DMatrix<f64>,
    order: FractionalOrder,
    t: f64,
) -> Result<DMatrix<f64>> {
    let a = order.base_point();
    if !(t > a) {
        return Err(Error::Domain(format!("derivative point t = {t} must exceed the base point {a}")));
    }
    let h = central_step(t).min(0.5 * (t - a));
    let d = (u(t + h) - u(t - h)) * ((t - a).powf(1.0 - order.alpha()) / (2.0 * h));
    if d.iter().all(|x| x.is_finite()) {
        Ok(d)
    } else {
        Err(Error::Numeric("matrix derivative is not finite".into()))
    }
}

fn checked_inverse(m: DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let scale = m.norm();
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::Numeric(format!("matrix is singular at t = {t}")))?;
    if inv.norm() * scale > 1e12 {
        return Err(Error::Numeric(format!("matrix is numerically singular at t = {t}")));
    }
    Ok(inv)
}

/// `‖(U⁻¹)^(α)(t) + U⁻¹(t) U^(α)(t) U⁻¹(t)‖_F`, with the left term differenced directly.
pub fn inverse_matrix_derivative_check(
    u: impl Fn(f64) -> DMatrix<f64>,
    order: FractionalOrder,
    t: f64,
) -> Result<f64> {
    let inv = checked_inverse(u(t), t)?;
    let d_inv = matrix_conformable_derivative(|x| u(x).try_inverse().unwrap_or_else(|| u(x) * f64::NAN), order, t)?;
    let du = matrix_conformable_derivative(&u, order, t)?;
    Ok((d_inv + &inv * du * &inv).norm())
}

/// Residual of the chain rule `T_α(f∘g)(t) = T_α f(g(t)) · T_α g(t) · (g(t) − a)^(α−1)`.
pub fn chain_rule_residual(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    order: FractionalOrder,
    t: f64,
) -> Result<f64> {
    let a = order.base_point();
    let gt = g(t);
    if !(gt > a) {
        return Err(Error::Domain(format!("chain rule needs g(t) > a, got g(t) = {gt}")));
    }
    let method = DerivativeMethod::FactorRule;
    let lhs = conformable_derivative(|x| f(g(x)), order, t, method)?;
    let rhs = conformable_derivative(&f, order, gt, method)?
        * conformable_derivative(&g, order, t, method)?
        * (gt - a).powf(order.alpha() - 1.0);
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(alpha: f64) -> FractionalOrder {
        FractionalOrder::new(alpha).unwrap()
    }

    #[test]
    fn constant_has_zero_derivative() {
        for method in [DerivativeMethod::FactorRule, DerivativeMethod::LimitDefinition] {
            let d = conformable_derivative(|_| 3.7, order(0.5), 2.0, method).unwrap();
            assert!(d.abs() < 1e-12, "{method:?}: {d}");
        }
    }

    #[test]
    fn tau_map_has_unit_derivative() {
        for alpha in [0.2, 0.5, 0.9, 1.0] {
            let o = order(alpha);
            for method in [DerivativeMethod::FactorRule, DerivativeMethod::LimitDefinition] {
                let d = conformable_derivative(|t| t.powf(alpha) / alpha, o, 1.0, method).unwrap();
                assert!((d - 1.0).abs() < 1e-8, "alpha {alpha} {method:?}: {d}");
            }
        }
    }

    #[test]
    fn square_at_half_order() {
        // Richardson oracle built from raw quotients at ε = 1e-4, 1e-5, 1e-6.
        let f = |t: f64| t * t;
        let q = |eps: f64| (f(1.0 + eps) - f(1.0)) / eps;
        let (q1, q2, q3) = (q(1e-4), q(1e-5), q(1e-6));
        let r1 = (10.0 * q2 - q1) / 9.0;
        let r2 = (10.0 * q3 - q2) / 9.0;
        let oracle = (100.0 * r2 - r1) / 99.0;
        assert!((oracle - 2.0).abs() < 1e-8);
        for method in [DerivativeMethod::FactorRule, DerivativeMethod::LimitDefinition] {
            let d = conformable_derivative(f, order(0.5), 1.0, method).unwrap();
            assert!((d - oracle).abs() < 1e-8, "{method:?}: {d}");
        }
    }

    #[test]
    fn derivative_rejects_points_at_base() {
        let o = FractionalOrder::with_base_point(0.5, 1.0).unwrap();
        assert!(matches!(
            conformable_derivative(|t| t, o, 1.0, DerivativeMethod::FactorRule),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            conformable_derivative(|_| f64::NAN, order(0.5), 1.0, DerivativeMethod::FactorRule),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn base_point_shifts_the_factor() {
        let o = FractionalOrder::with_base_point(0.5, 1.0).unwrap();
        // T^a((t − a)^α / α) = 1
        let d = conformable_derivative(|t| (t - 1.0).sqrt() / 0.5, o, 3.0, DerivativeMethod::LimitDefinition)
            .unwrap();
        assert!((d - 1.0).abs() < 1e-8);
    }

    #[test]
    fn integral_examples() {
        let i = conformable_integral(|_| 1.0, order(0.5), 0.0, 1.0, 10, QuadratureRule::Trapezoid).unwrap();
        assert!((i - 2.0).abs() < 1e-12);
        let i = conformable_integral(|_| 1.0, order(1.0), 0.0, 3.0, 1, QuadratureRule::Trapezoid).unwrap();
        assert!((i - 3.0).abs() < 1e-12);
        let i = conformable_integral(|x| x.sqrt(), order(0.5), 0.0, 2.0, 64, QuadratureRule::Simpson).unwrap();
        assert!((i - 2.0).abs() < 1e-12);
    }

    #[test]
    fn integral_rejects_bad_limits() {
        let o = order(0.5);
        assert!(conformable_integral(|_| 1.0, o, -1.0, 1.0, 4, QuadratureRule::Trapezoid).is_err());
        assert!(conformable_integral(|_| 1.0, o, 1.0, 1.0, 4, QuadratureRule::Trapezoid).is_err());
        assert!(conformable_integral(|_| 1.0, o, 0.0, 1.0, 0, QuadratureRule::Trapezoid).is_err());
        assert!(conformable_integral(|_| 1.0, o, 0.0, 1.0, 3, QuadratureRule::Simpson).is_err());
    }

    #[test]
    fn leibniz_examples() {
        let r = leibniz_check(|_, _| 1.0, |_| 0.0, |t| t, order(1.0), 1.3, LeibnizForm::Unweighted).unwrap();
        assert!(r <= 1e-8, "{r}");
        let r = leibniz_check(|t, s| t * s, |_| 1.0, |_| 2.0, order(0.5), 1.5, LeibnizForm::Unweighted).unwrap();
        assert!(r <= 1e-6, "{r}");
        for form in [LeibnizForm::Weighted, LeibnizForm::Unweighted] {
            let r = leibniz_check(|_, s| (-s).exp(), |_| 0.0, |t| t, order(0.7), 1.0, form).unwrap();
            assert!(r <= 1e-6, "{form:?}: {r}");
        }
    }

    #[test]
    fn unweighted_boundary_terms_fail_away_from_unit_upper_limit() {
        let o = order(0.7);
        let h = |_: f64, s: f64| (-s).exp();
        let weighted = leibniz_check(h, |_| 0.0, |t| t, o, 2.0, LeibnizForm::Weighted).unwrap();
        let unweighted = leibniz_check(h, |_| 0.0, |t| t, o, 2.0, LeibnizForm::Unweighted).unwrap();
        assert!(weighted <= 1e-6);
        // e^{-2} (2^{0.3} − 1) ≈ 0.0312
        assert!((unweighted - (-2.0f64).exp() * (2f64.powf(0.3) - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn inverse_matrix_rule() {
        let r = inverse_matrix_derivative_check(|_| DMatrix::identity(3, 3), order(0.5), 1.0).unwrap();
        assert!(r < 1e-12);
        let u = |t: f64| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![t, 1.0]));
        // closed form of the (0,0) entry: (1/t)^(α) = −t^{1−α}/t²
        let d = matrix_conformable_derivative(|t| u(t).try_inverse().unwrap(), order(0.5), 1.0).unwrap();
        assert!((d[(0, 0)] + 1.0).abs() < 1e-8);
        assert!(inverse_matrix_derivative_check(u, order(0.5), 1.0).unwrap() <= 1e-6);
        let singular = |_: f64| DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            inverse_matrix_derivative_check(singular, order(0.5), 1.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn chain_rule_holds() {
        let r = chain_rule_residual(|x| x.sin(), |t| t * t + 1.0, order(0.6), 1.2).unwrap();
        assert!(r < 1e-6, "{r}");
        assert!(chain_rule_residual(|x| x, |_| -1.0, order(0.6), 1.2).is_err());
    }

    #[test]
    fn trapezoid_is_second_order_in_tau() {
        let o = order(0.6);
        let exact = {
            // ∫_{0.5}^{2} cos(x) x^{α−1} dx by fine Simpson
            conformable_integral(|x| x.cos(), o, 0.5, 2.0, 20000, QuadratureRule::Simpson).unwrap()
        };
        let e1 = (conformable_integral(|x| x.cos(), o, 0.5, 2.0, 40, QuadratureRule::Trapezoid).unwrap() - exact).abs();
        let e2 = (conformable_integral(|x| x.cos(), o, 0.5, 2.0, 80, QuadratureRule::Trapezoid).unwrap() - exact).abs();
        let ratio = e1 / e2;
        assert!((3.8..4.2).contains(&ratio), "{ratio}");
    }
}
