//! Latent temporal components and the name-keyed registry that builds them.
//!
//! Every component variant sits behind the [`LatentComponent`] trait: it owns
//! a block of the latent vector, declares the hyperparameter slots it
//! consumes, produces its prior precision block (with rank and generalized
//! log-determinant), and contributes a row to the time design. Components are
//! selected at runtime by name through [`ComponentRegistry`], so a model is
//! assembled from strings like `["intercept", "rw1"]` in a configuration
//! file.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::ModelError;
use crate::model::precision::{ar1_precision, structure_matrix, PrecisionStructure, StructureKind};
use crate::model::{HyperSlot, PriorSpec};

/// Fixed prior precision for intercepts and fixed-effect coefficients
/// (variance 1000): weakly informative and proper, so these blocks never
/// contribute rank deficiency.
pub const FIXED_EFFECT_PRECISION: f64 = 1e-3;

/// A block of the shared latent vector for one cluster.
pub trait LatentComponent: Send + Sync + std::fmt::Debug {
    /// Registry name of the component kind.
    fn kind(&self) -> &'static str;

    /// Instance label; prefixes the component's hyperparameter slot names.
    fn label(&self) -> &str {
        self.kind()
    }

    /// Dimension of this component's latent block.
    fn dim(&self) -> usize;

    /// Hyperparameter slots this component consumes, in a fixed order.
    fn hyper_slots(&self) -> Vec<HyperSlot>;

    /// Prior precision block for the given slot values (internal scale,
    /// ordered as in [`LatentComponent::hyper_slots`]).
    fn precision_block(&self, theta: &[f64]) -> Result<PrecisionStructure, ModelError>;

    /// Writes the weight of each block coordinate in the predictor at time
    /// index `t` into `out` (length `dim`).
    fn design_row(&self, t: usize, out: &mut [f64]);

    /// Whether a sum-to-zero constraint may be applied to this block
    /// (intrinsic models whose level is not identified by the prior).
    fn constrainable(&self) -> bool {
        false
    }
}

#[derive(Debug)]
pub struct Intercept;

impl LatentComponent for Intercept {
    fn kind(&self) -> &'static str {
        "intercept"
    }

    fn dim(&self) -> usize {
        1
    }

    fn hyper_slots(&self) -> Vec<HyperSlot> {
        Vec::new()
    }

    fn precision_block(&self, _theta: &[f64]) -> Result<PrecisionStructure, ModelError> {
        Ok(PrecisionStructure {
            matrix: DMatrix::from_element(1, 1, FIXED_EFFECT_PRECISION),
            rank: 1,
            log_gdet: FIXED_EFFECT_PRECISION.ln(),
        })
    }

    fn design_row(&self, _t: usize, out: &mut [f64]) {
        out[0] = 1.0;
    }
}

/// Cluster-level fixed effects with respect to a `T x p` covariate basis
/// (for example monomials of standardized time, or a B-spline basis).
#[derive(Debug)]
pub struct FixedEffects {
    basis: DMatrix<f64>,
}

impl FixedEffects {
    pub fn new(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }
}

impl LatentComponent for FixedEffects {
    fn kind(&self) -> &'static str {
        "fixed_effects"
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn hyper_slots(&self) -> Vec<HyperSlot> {
        Vec::new()
    }

    fn precision_block(&self, _theta: &[f64]) -> Result<PrecisionStructure, ModelError> {
        let p = self.basis.ncols();
        Ok(PrecisionStructure {
            matrix: DMatrix::identity(p, p) * FIXED_EFFECT_PRECISION,
            rank: p,
            log_gdet: p as f64 * FIXED_EFFECT_PRECISION.ln(),
        })
    }

    fn design_row(&self, t: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.basis[(t, j)];
        }
    }
}

/// Shared structure for the scaled-structure components (iid, rw1, seasonal):
/// precision `nu * S` with `nu = exp(slot value)`.
#[derive(Debug)]
struct ScaledStructure {
    kind: &'static str,
    structure: PrecisionStructure,
    constrainable: bool,
    prior: PriorSpec,
    init: f64,
}

impl LatentComponent for ScaledStructure {
    fn kind(&self) -> &'static str {
        self.kind
    }

    fn dim(&self) -> usize {
        self.structure.matrix.nrows()
    }

    fn hyper_slots(&self) -> Vec<HyperSlot> {
        vec![HyperSlot {
            name: format!("{}.log_prec", self.kind),
            prior: self.prior.clone(),
            init: self.init,
        }]
    }

    fn precision_block(&self, theta: &[f64]) -> Result<PrecisionStructure, ModelError> {
        Ok(self.structure.scaled(theta[0].exp()))
    }

    fn design_row(&self, t: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[t] = 1.0;
    }

    fn constrainable(&self) -> bool {
        self.constrainable
    }
}

/// Stationary AR(1) temporal effect. Internal parameterisation follows the
/// usual convention for this model: the first slot is the log precision of
/// the stationary marginal, `log(v (1 - rho^2))`, and the second is the
/// transformed correlation `log((1 + rho) / (1 - rho))`.
#[derive(Debug)]
pub struct Ar1 {
    t_len: usize,
}

impl Ar1 {
    pub fn new(t_len: usize) -> Self {
        Self { t_len }
    }

    /// Maps internal slot values to the natural `(v, rho)` parameters.
    pub fn natural_params(theta: &[f64]) -> (f64, f64) {
        let rho = (theta[1] / 2.0).tanh();
        let v = theta[0].exp() / (1.0 - rho * rho);
        (v, rho)
    }
}

impl LatentComponent for Ar1 {
    fn kind(&self) -> &'static str {
        "ar1"
    }

    fn dim(&self) -> usize {
        self.t_len
    }

    fn hyper_slots(&self) -> Vec<HyperSlot> {
        vec![
            HyperSlot {
                name: "ar1.log_prec".to_string(),
                prior: PriorSpec::LogGamma {
                    shape: 1.0,
                    rate: 1e-5,
                },
                init: 0.0,
            },
            HyperSlot {
                name: "ar1.rho_trans".to_string(),
                prior: PriorSpec::Gaussian {
                    mean: 0.0,
                    precision: 0.15,
                },
                init: 0.0,
            },
        ]
    }

    fn precision_block(&self, theta: &[f64]) -> Result<PrecisionStructure, ModelError> {
        let (v, rho) = Self::natural_params(theta);
        ar1_precision(self.t_len, v, rho)
    }

    fn design_row(&self, t: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[t] = 1.0;
    }
}

/// Everything a component builder may need.
pub struct ComponentContext<'a> {
    pub t_len: usize,
    pub seasonal_period: Option<usize>,
    pub covariate_basis: Option<&'a DMatrix<f64>>,
}

type BuildFn = fn(&ComponentContext) -> Result<Box<dyn LatentComponent>, ModelError>;

/// Builds latent components by name. Ships with the built-in kinds
/// (`intercept`, `fixed_effects`, `iid`, `rw1`, `ar1`, `seasonal`); further
/// kinds can be registered at runtime.
pub struct ComponentRegistry {
    builders: BTreeMap<String, BuildFn>,
}

impl ComponentRegistry {
    pub fn builtin() -> Self {
        let mut reg = Self {
            builders: BTreeMap::new(),
        };
        reg.register("intercept", |_ctx| Ok(Box::new(Intercept)));
        reg.register("fixed_effects", |ctx| {
            let basis = ctx
                .covariate_basis
                .ok_or(ModelError::MissingComponentInput(
                    "fixed_effects",
                    "a covariate basis",
                ))?;
            if basis.nrows() != ctx.t_len {
                return Err(ModelError::ShapeMismatch(format!(
                    "covariate basis has {} rows, expected {}",
                    basis.nrows(),
                    ctx.t_len
                )));
            }
            Ok(Box::new(FixedEffects::new(basis.clone())))
        });
        reg.register("iid", |ctx| {
            Ok(Box::new(ScaledStructure {
                kind: "iid",
                structure: structure_matrix(StructureKind::Iid, ctx.t_len, None)?,
                constrainable: false,
                prior: PriorSpec::LogGamma {
                    shape: 1.0,
                    rate: 1e-5,
                },
                init: 0.0,
            }))
        });
        reg.register("rw1", |ctx| {
            Ok(Box::new(ScaledStructure {
                kind: "rw1",
                structure: structure_matrix(StructureKind::Rw1, ctx.t_len, None)?,
                constrainable: true,
                prior: PriorSpec::LogGamma {
                    shape: 1.0,
                    rate: 1e-5,
                },
                init: 0.0,
            }))
        });
        reg.register("seasonal", |ctx| {
            Ok(Box::new(ScaledStructure {
                kind: "seasonal",
                structure: structure_matrix(StructureKind::Seasonal, ctx.t_len, ctx.seasonal_period)?,
                constrainable: true,
                prior: PriorSpec::LogGamma {
                    shape: 1.0,
                    rate: 1e-5,
                },
                init: 0.0,
            }))
        });
        reg.register("ar1", |ctx| Ok(Box::new(Ar1::new(ctx.t_len))));
        reg
    }

    pub fn register(&mut self, name: &str, build: BuildFn) {
        self.builders.insert(name.to_string(), build);
    }

    pub fn build(
        &self,
        name: &str,
        ctx: &ComponentContext,
    ) -> Result<Box<dyn LatentComponent>, ModelError> {
        let build = self
            .builders
            .get(name)
            .ok_or_else(|| ModelError::UnknownComponent(name.to_string()))?;
        build(ctx)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(|s| s.as_str())
    }
}
