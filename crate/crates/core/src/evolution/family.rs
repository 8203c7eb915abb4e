use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// A family of generators `A(t)` for the homogeneous system `T_α x + A(t) x = 0`,
/// i.e. `dx/dτ = −A(t(τ)) x`.
#[derive(Clone)]
pub enum OperatorFamily {
    /// Dirichlet heat operator on `[0, π]` with potential `p(t)`, truncated to
    /// the sine modes `e_n = √2 sin(n x)`, `n = 1..=n_modes`; mode `n` decays at rate `n² + p(t)`.
    SpectralHeat { potential: ScalarFn, n_modes: usize },
    /// General `d × d` generator.
    DenseMatrix { generator: MatrixFn, dim: usize },
}

impl fmt::Debug for OperatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorFamily::SpectralHeat { n_modes, .. } => {
                f.debug_struct("SpectralHeat").field("n_modes", n_modes).finish_non_exhaustive()
            }
            OperatorFamily::DenseMatrix { dim, .. } => {
                f.debug_struct("DenseMatrix").field("dim", dim).finish_non_exhaustive()
            }
        }
    }
}

impl OperatorFamily {
    pub fn spectral_heat(potential: impl Fn(f64) -> f64 + Send + Sync + 'static, n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Domain("spectral family needs at least one mode".into()));
        }
        Ok(OperatorFamily::SpectralHeat { potential: Arc::new(potential), n_modes })
    }

    pub fn dense(dim: usize, generator: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dense family needs a positive dimension".into()));
        }
        let probe = generator(1.0);
        if probe.shape() != (dim, dim) {
            return Err(Error::Dimension(format!(
                "generator returns a {}x{} matrix, expected {dim}x{dim}",
                probe.nrows(),
                probe.ncols()
            )));
        }
        Ok(OperatorFamily::DenseMatrix { generator: Arc::new(generator), dim })
    }

    /// Constant generator `A(t) ≡ a`.
    pub fn constant(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension("constant generator must be square".into()));
        }
        let dim = a.nrows();
        Self::dense(dim, move |_| a.clone())
    }

    /// Smooth random family `A(t) = A₀ + cos(t) A₁ + t A₂` with Gaussian
    /// blocks scaled to unit order; `A₀` is shifted by `I/2`.
    pub fn random_smooth(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut gaussian = |s: f64| {
            DMatrix::from_fn(dim, dim, |_, _| s * scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        };
        let a0 = gaussian(0.3) + DMatrix::identity(dim, dim) * 0.5;
        let a1 = gaussian(0.3);
        let a2 = gaussian(0.2);
        Self::dense(dim, move |t| &a0 + &a1 * t.cos() + &a2 * t)
    }

    /// State dimension (mode count for the spectral family).
    pub fn dim(&self) -> usize {
        match self {
            OperatorFamily::SpectralHeat { n_modes, .. } => *n_modes,
            OperatorFamily::DenseMatrix { dim, .. } => *dim,
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, OperatorFamily::SpectralHeat { .. })
    }

    /// Decay rates `n² + p(t)` of the spectral family.
    pub fn mode_rates(&self, t: f64) -> Option<DVector<f64>> {
        match self {
            OperatorFamily::SpectralHeat { potential, n_modes } => {
                let p = potential(t);
                Some(DVector::from_fn(*n_modes, |n, _| ((n + 1) * (n + 1)) as f64 + p))
            }
            OperatorFamily::DenseMatrix { .. } => None,
        }
    }

    /// `A(t)` as a matrix.
    pub fn generator(&self, t: f64) -> DMatrix<f64> {
        match self {
            OperatorFamily::SpectralHeat { .. } => DMatrix::from_diagonal(&self.mode_rates(t).unwrap()),
            OperatorFamily::DenseMatrix { generator, .. } => generator(t),
        }
    }

    /// The same family viewed as a general matrix family.
    pub fn to_dense(&self) -> OperatorFamily {
        match self {
            OperatorFamily::DenseMatrix { .. } => self.clone(),
            OperatorFamily::SpectralHeat { .. } => {
                let this = self.clone();
                OperatorFamily::DenseMatrix { generator: Arc::new(move |t| this.generator(t)), dim: self.dim() }
            }
        }
    }

    /// The spectral family with its potential shifted by `shift` (used to absorb linear forcing).
    pub fn shifted_potential(&self, shift: f64) -> Option<OperatorFamily> {
        match self {
            OperatorFamily::SpectralHeat { potential, n_modes } => {
                let p = potential.clone();
                Some(OperatorFamily::SpectralHeat { potential: Arc::new(move |t| p(t) + shift), n_modes: *n_modes })
            }
            OperatorFamily::DenseMatrix { .. } => None,
        }
    }
}

/// `S_s(t − s) = exp(−Δτ A(s))`, the propagator with the generator frozen at `s`.
pub fn frozen_semigroup(family: &OperatorFamily, s: f64, dt_tau: f64) -> Result<DMatrix<f64>> {
    if !(dt_tau >= 0.0) || !dt_tau.is_finite() {
        return Err(Error::Domain(format!("elapsed tau must be finite and >= 0, got {dt_tau}")));
    }
    let m = match family.mode_rates(s) {
        Some(rates) => DMatrix::from_diagonal(&rates.map(|r| (-r * dt_tau).exp())),
        None => {
            if dt_tau == 0.0 {
                DMatrix::identity(family.dim(), family.dim())
            } else {
                (family.generator(s) * -dt_tau).exp()
            }
        }
    };
    if m.iter().all(|x| x.is_finite()) {
        Ok(m)
    } else {
        Err(Error::Numeric(format!("frozen semigroup overflowed at s = {s}, dt = {dt_tau}")))
    }
}
