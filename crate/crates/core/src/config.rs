//! Scenario files: TOML with a `schema_version` field.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//! alpha = 0.8
//! t0 = 0.0          # τ-horizon
//! tf = 1.0
//! n_nodes = 201
//!
//! [system]
//! backend = "spectral"
//! n_modes = 6
//! potential = { kind = "constant", value = 1.0 }
//!
//! [b]
//! kind = "identity"
//!
//! [f]
//! kind = "linear"
//! c = 0.05
//!
//! [x0]
//! kind = "mode"
//! index = 1
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evolution::{OperatorFamily, PropagatorOptions};
use crate::grid::{FractionalOrder, TimeGrid};
use crate::mild::ControlProblem;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub alpha: f64,
    /// Second parameter of the special functions.
    #[serde(default = "one")]
    pub k: f64,
    pub t0: f64,
    pub tf: f64,
    pub n_nodes: usize,
    pub system: SystemSpec,
    #[serde(default)]
    pub b: BSpec,
    #[serde(default)]
    pub f: FSpec,
    pub x0: X0Spec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    /// `A(t) = diag(n² + p(t))`, `n = 1..n_modes`.
    Spectral { n_modes: usize, potential: PotentialSpec },
    Dense { family: DenseFamilySpec },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant { value: f64 },
    /// `p = a + b τ`.
    Affine { a: f64, b: f64 },
    /// Piecewise linear in τ through `(tau[i], values[i])`, constant outside.
    Tabulated { tau: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenseFamilySpec {
    Random { dim: usize, seed: u64 },
    Constant { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BSpec {
    #[default]
    Identity,
    Zero,
    Diagonal { values: Vec<f64> },
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FSpec {
    #[default]
    Zero,
    /// `F(t, x) = c x`.
    Linear { c: f64 },
    /// `F(t, x) = c sin(x)` componentwise.
    Sine { c: f64 },
    /// `F(t, x) = c tanh(x)` componentwise.
    Tanh { c: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum X0Spec {
    /// `amplitude · e_index` (1-based).
    Mode {
        index: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Vector { values: Vec<f64> },
    /// Gaussian vector drawn from the scenario seed, scaled to norm `norm`.
    Random {
        #[serde(default = "one")]
        norm: f64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub kernel_tol: f64,
    pub max_terms: usize,
    pub picard_tol: f64,
    pub max_iter: usize,
    pub null_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { kernel_tol: 1e-10, max_terms: 200, picard_tol: 1e-10, max_iter: 200, null_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub trials: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self { trials: 500 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
    pub trajectory: String,
    pub control: String,
    pub summary: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: "trajectory.csv".into(),
            control: "control.csv".into(),
            summary: "summary.txt".into(),
        }
    }
}

fn config_error(text: &str, err: toml::de::Error) -> Error {
    let msg = err.message().trim().replace('\n', " ");
    match err.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            Error::Config(format!("line {line}: {msg}"))
        }
        None => Error::Config(msg),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| config_error(text, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.k > 0.0) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !(self.t0 >= 0.0 && self.tf > self.t0 && self.tf.is_finite()) {
            return bad(format!("horizon must satisfy 0 <= t0 < tf, got [{}, {}]", self.t0, self.tf));
        }
        if self.n_nodes < 3 {
            return bad(format!("n_nodes must be at least 3, got {}", self.n_nodes));
        }
        let t = &self.tolerances;
        if !(t.kernel_tol > 0.0 && t.picard_tol > 0.0 && t.null_tol > 0.0) || t.max_iter == 0 || t.max_terms == 0 {
            return bad("tolerances must be positive and iteration caps at least 1".into());
        }
        if self.verify.trials == 0 {
            return bad("verify.trials must be at least 1".into());
        }
        match &self.system {
            SystemSpec::Spectral { n_modes, potential } => {
                if *n_modes == 0 {
                    return bad("n_modes must be at least 1".into());
                }
                if let PotentialSpec::Tabulated { tau, values } = potential {
                    if tau.is_empty() || tau.len() != values.len() {
                        return bad("tabulated potential needs equally many (>= 1) tau and values entries".into());
                    }
                    if tau.windows(2).any(|w| !(w[1] > w[0])) {
                        return bad("tabulated potential tau must be strictly increasing".into());
                    }
                }
            }
            SystemSpec::Dense { family: DenseFamilySpec::Random { dim, .. } } if *dim == 0 => {
                return bad("dense family dimension must be at least 1".into());
            }
            SystemSpec::Dense { family: DenseFamilySpec::Constant { matrix } } => {
                let d = matrix.len();
                if d == 0 || matrix.iter().any(|r| r.len() != d) {
                    return bad("constant generator must be a non-empty square matrix".into());
                }
            }
            SystemSpec::Dense { .. } => {}
        }
        let d = self.dim();
        match &self.b {
            BSpec::Diagonal { values } if values.len() != d => {
                return bad(format!("b.values has {} entries, system dimension {d}", values.len()));
            }
            BSpec::Matrix { rows } if rows.len() != d || rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) => {
                return bad(format!("b.rows must be {d} rows of equal length"));
            }
            _ => {}
        }
        match &self.x0 {
            X0Spec::Mode { index, .. } if *index == 0 || *index > d => {
                return bad(format!("x0.index must lie in 1..={d}, got {index}"));
            }
            X0Spec::Vector { values } if values.len() != d => {
                return bad(format!("x0.values has {} entries, system dimension {d}", values.len()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.system {
            SystemSpec::Spectral { n_modes, .. } => *n_modes,
            SystemSpec::Dense { family: DenseFamilySpec::Random { dim, .. } } => *dim,
            SystemSpec::Dense { family: DenseFamilySpec::Constant { matrix } } => matrix.len(),
        }
    }

    pub fn order(&self) -> Result<FractionalOrder> {
        FractionalOrder::new(self.alpha)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_tau(self.order()?, self.t0, self.tf, self.n_nodes)
    }

    pub fn family(&self) -> Result<OperatorFamily> {
        match &self.system {
            SystemSpec::Spectral { n_modes, potential } => {
                let order = self.order()?;
                match potential.clone() {
                    PotentialSpec::Constant { value } => OperatorFamily::spectral_heat(move |_| value, *n_modes),
                    PotentialSpec::Affine { a, b } => {
                        OperatorFamily::spectral_heat(move |t| a + b * order.tau_of(t), *n_modes)
                    }
                    PotentialSpec::Tabulated { tau, values } => OperatorFamily::spectral_heat(
                        move |t| interpolate(&tau, &values, order.tau_of(t)),
                        *n_modes,
                    ),
                }
            }
            SystemSpec::Dense { family: DenseFamilySpec::Random { dim, seed } } => OperatorFamily::random_smooth(*dim, *seed),
            SystemSpec::Dense { family: DenseFamilySpec::Constant { matrix } } => {
                let d = matrix.len();
                OperatorFamily::constant(DMatrix::from_fn(d, d, |i, j| matrix[i][j]))
            }
        }
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        match &self.b {
            BSpec::Identity => DMatrix::identity(d, d),
            BSpec::Zero => DMatrix::zeros(d, d),
            BSpec::Diagonal { values } => DMatrix::from_diagonal(&DVector::from_column_slice(values)),
            BSpec::Matrix { rows } => DMatrix::from_fn(d, rows[0].len(), |i, j| rows[i][j]),
        }
    }

    pub fn x0(&self, seed: u64) -> DVector<f64> {
        let d = self.dim();
        match &self.x0 {
            X0Spec::Mode { index, amplitude } => {
                let mut x = DVector::zeros(d);
                x[index - 1] = *amplitude;
                x
            }
            X0Spec::Vector { values } => DVector::from_column_slice(values),
            X0Spec::Random { norm } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let scale = *norm / x.norm().max(f64::MIN_POSITIVE);
                x * scale
            }
        }
    }

    pub fn propagator_options(&self) -> PropagatorOptions {
        PropagatorOptions {
            max_terms: self.tolerances.max_terms,
            kernel_tol: self.tolerances.kernel_tol,
            ..Default::default()
        }
    }

    /// The control problem described by the file; `seed` feeds random initial states.
    pub fn problem(&self, seed: u64) -> Result<ControlProblem> {
        let t = &self.tolerances;
        let base = ControlProblem::new(self.family()?, self.grid()?, self.x0(seed), self.b_matrix())?
            .with_tolerances(t.picard_tol, t.max_iter, t.null_tol);
        Ok(match self.f {
            FSpec::Zero => base,
            FSpec::Linear { c } => base.with_linear_gain(c),
            FSpec::Sine { c } => base.with_nonlinearity(move |_, x| x.map(|v| c * v.sin()), c.abs()),
            FSpec::Tanh { c } => base.with_nonlinearity(move |_, x| x.map(|v| c * v.tanh()), c.abs()),
        })
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] * (1.0 - w) + ys[i + 1] * w
}
