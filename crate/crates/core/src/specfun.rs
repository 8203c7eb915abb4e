//! Conformable Pochhammer symbol, gamma `Γ_k^α` and beta `B_k^α`.
//!
//! With `s = (p + α − 1) / (αk)` the gamma integral reduces to
//! `Γ_k^α(p) = (αk)^(s−1) Γ(s)`, and the beta integral to
//! `B_k^α(x, y) = B(x/(αk) + α − 1, y/(αk)) / (αk)`. The quadrature routes
//! integrate the defining integrals directly and serve as the cross-check.

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{ensure_finite, Error, Result};

/// The `(α, k)` pair shared by the conformable special functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecfunParams {
    alpha: f64,
    k: f64,
}

impl SpecfunParams {
    pub fn new(alpha: f64, k: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Domain(format!("k must be positive, got {k}")));
        }
        Ok(Self { alpha, k })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// `αk`, the step of the Pochhammer product.
    pub fn step(&self) -> f64 {
        self.alpha * self.k
    }

    /// Classical-gamma argument `(p + α − 1) / (αk)`.
    pub fn gamma_argument(&self, p: f64) -> f64 {
        (p + self.alpha - 1.0) / self.step()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SpecfunMethod {
    #[default]
    Reduction,
    Quadrature,
}

/// `(p)^α_{n,k} = ∏_{j<n} (p + α − 1 + jαk)`.
pub fn pochhammer(p: f64, n: u32, params: SpecfunParams) -> f64 {
    let base = p + params.alpha - 1.0;
    (0..n).map(|j| base + j as f64 * params.step()).product()
}

/// Classical `Γ(x)` for `x > 0`.
pub fn classical_gamma(x: f64) -> f64 {
    gamma(x)
}

/// Classical `B(a, b)` for `a, b > 0`.
pub fn classical_beta(a: f64, b: f64) -> f64 {
    if a + b < 150.0 {
        gamma(a) * gamma(b) / gamma(a + b)
    } else {
        (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
    }
}

/// k-gamma `Γ_k(x) = k^(x/k − 1) Γ(x/k)`.
pub fn k_gamma(x: f64, k: f64) -> f64 {
    k.powf(x / k - 1.0) * gamma(x / k)
}

/// k-beta `B_k(x, y) = B(x/k, y/k) / k`.
pub fn k_beta(x: f64, y: f64, k: f64) -> f64 {
    classical_beta(x / k, y / k) / k
}

fn gamma_pole_check(p: f64, params: SpecfunParams) -> Result<f64> {
    let s = params.gamma_argument(p);
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "(p + alpha - 1)/(alpha k) = {s} must be positive (pole of the classical gamma)"
        )));
    }
    Ok(s)
}

/// `Γ_k^α(p)`.
pub fn conformable_gamma(p: f64, params: SpecfunParams, method: SpecfunMethod) -> Result<f64> {
    let s = gamma_pole_check(p, params)?;
    let value = match method {
        SpecfunMethod::Reduction => {
            if s < 150.0 {
                params.step().powf(s - 1.0) * gamma(s)
            } else {
                ((s - 1.0) * params.step().ln() + ln_gamma(s)).exp()
            }
        }
        SpecfunMethod::Quadrature => scaled_gamma_integral(p, 1.0, params)?,
    };
    ensure_finite(value, "conformable gamma")
}

/// `a^((p+α−1)/(αk)) ∫_0^∞ t^(p−1) exp(−a t^(αk)/(αk)) d(t, α)`, which equals `Γ_k^α(p)` for every `a > 0`.
pub fn scaled_gamma_integral(p: f64, a: f64, params: SpecfunParams) -> Result<f64> {
    let s = gamma_pole_check(p, params)?;
    if !(a > 0.0) {
        return Err(Error::Domain(format!("scale a must be positive, got {a}")));
    }
    let (alpha, step) = (params.alpha, params.step());
    // τ = t^α/α, then v = ln τ: the measure becomes e^v dv and the integrand is smooth on ℝ.
    let log_integrand = |v: f64| {
        let ln_t = (alpha.ln() + v) / alpha;
        (p - 1.0) * ln_t - a * (step * ln_t).exp() / step + v
    };
    let h = 0.02 / params.k.max(1.0);
    let integral = real_line_trapezoid(log_integrand, h)?;
    ensure_finite(a.powf(s) * integral, "gamma integral")
}

/// `∫_ℝ exp(g(v)) dv` by the trapezoid rule, for `g` concave-like with decaying tails.
/// The range is truncated where the integrand falls below `e^-40` of its peak.
fn real_line_trapezoid(log_g: impl Fn(f64) -> f64, h: f64) -> Result<f64> {
    const DROP: f64 = 40.0;
    let mut peak = log_g(0.0);
    if !peak.is_finite() {
        return Err(Error::Numeric("quadrature integrand is not finite at the origin".into()));
    }
    let mut march = |dir: f64| -> Result<f64> {
        let mut v = 0.0;
        let mut unit = 1.0;
        loop {
            v += dir * unit;
            let g = log_g(v);
            if g.is_nan() {
                return Err(Error::Numeric(format!("quadrature integrand is NaN at v = {v}")));
            }
            peak = peak.max(g);
            if g < peak - DROP {
                return Ok(v);
            }
            if v.abs() > 1e7 {
                return Err(Error::Numeric("quadrature tail does not decay".into()));
            }
            unit = (unit * 1.05).min(64.0);
        }
    };
    let hi = march(1.0)?;
    let lo = march(-1.0)?;
    let n = ((hi - lo) / h).ceil() as usize;
    let step = (hi - lo) / n as f64;
    let peak = (0..=n).map(|i| log_g(lo + i as f64 * step)).fold(peak, f64::max);
    let sum: f64 = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * (log_g(lo + i as f64 * step) - peak).exp()
        })
        .sum();
    Ok(sum * step * peak.exp())
}

/// Slow product-limit definition of `Γ_k^α`, error O(1/n); a test oracle only.
pub fn conformable_gamma_limit(p: f64, params: SpecfunParams, n: u32) -> Result<f64> {
    let s = gamma_pole_check(p, params)?;
    let step = params.step();
    let nf = n as f64;
    let log_poch: f64 = (0..n).map(|j| (p + params.alpha - 1.0 + j as f64 * step).ln()).sum();
    let log_value = ln_gamma(nf + 1.0) + nf * step.ln() + (s - 1.0) * (nf * step).ln() - log_poch;
    ensure_finite(log_value.exp(), "gamma product limit")
}

/// Classical-beta arguments `(x/(αk) + α − 1, y/(αk))`, validated.
fn beta_arguments(x: f64, y: f64, params: SpecfunParams) -> Result<(f64, f64)> {
    let a = x / params.step() + params.alpha - 1.0;
    let b = y / params.step();
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!(
            "beta integral diverges: need x/(alpha k) + alpha - 1 > 0 and y/(alpha k) > 0, got {a} and {b}"
        )));
    }
    Ok((a, b))
}

/// `B_k^α(x, y)`.
pub fn conformable_beta(x: f64, y: f64, params: SpecfunParams, method: SpecfunMethod) -> Result<f64> {
    let (a, b) = beta_arguments(x, y, params)?;
    let value = match method {
        SpecfunMethod::Reduction => classical_beta(a, b) / params.step(),
        SpecfunMethod::Quadrature => {
            // t = 1/(1 + e^{-v}) turns both endpoint singularities into exponential tails.
            let log_integrand = |v: f64| {
                let ln_t = -softplus(-v);
                let ln_1mt = -softplus(v);
                a * ln_t + b * ln_1mt
            };
            real_line_trapezoid(log_integrand, 0.05)? / params.step()
        }
    };
    ensure_finite(value, "conformable beta")
}

/// `B_k^α(p, q)` through the k-beta: `B_k((p + αk(α−1))/α, q/α) / α`.
pub fn conformable_beta_via_k_beta(p: f64, q: f64, params: SpecfunParams) -> Result<f64> {
    beta_arguments(p, q, params)?;
    let alpha = params.alpha;
    let value = k_beta((p + params.step() * (alpha - 1.0)) / alpha, q / alpha, params.k) / alpha;
    ensure_finite(value, "conformable beta")
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}
