//! Within-cluster latent Gaussian models.
//!
//! A [`ModelSpec`] pairs an observation family with an ordered list of latent
//! components (built by name from the [`components::ComponentRegistry`]),
//! plus the optional per-observation error term. It owns the ordered list of
//! hyperparameter slots and resolves the sum-to-zero constraint policy for
//! intrinsic components.

pub mod basis;
pub mod components;
pub mod data;
pub mod design;
pub mod family;
pub mod precision;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::ModelError;
pub use components::{ComponentContext, ComponentRegistry, LatentComponent};
pub use data::{ClusterData, Panel};
pub use design::DesignMap;
pub use family::{FamilyRegistry, Link, ObservationFamily};
pub use precision::{ar1_precision, structure_matrix, PrecisionStructure, StructureKind};

const LN_2PI: f64 = 1.8378770664093453;

/// Prior for one hyperparameter, parameterized on the internal
/// (log / logit-transformed) scale the slot lives on.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorSpec {
    /// `x` such that `exp(x) ~ Gamma(shape, rate)`; the standard prior for
    /// log precisions. Density `shape*x - rate*e^x + shape*ln(rate) - lnG(shape)`.
    LogGamma { shape: f64, rate: f64 },
    /// Gaussian on the internal scale, parameterized by precision.
    Gaussian { mean: f64, precision: f64 },
    /// Pinned value: excluded from optimisation and integration.
    Fixed { value: f64 },
}

impl PriorSpec {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            PriorSpec::LogGamma { shape, rate } => {
                shape * x - rate * x.exp() + shape * rate.ln() - ln_gamma(shape)
            }
            PriorSpec::Gaussian { mean, precision } => {
                0.5 * (precision.ln() - LN_2PI) - 0.5 * precision * (x - mean) * (x - mean)
            }
            PriorSpec::Fixed { .. } => 0.0,
        }
    }

    pub fn validate(&self, slot: &str) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidPrior {
            slot: slot.to_string(),
            reason: reason.to_string(),
        };
        match *self {
            PriorSpec::LogGamma { shape, rate } => {
                if !(shape > 0.0) || !(rate > 0.0) {
                    return Err(bad("log-gamma shape and rate must be positive"));
                }
            }
            PriorSpec::Gaussian { precision, .. } => {
                if !(precision > 0.0) {
                    return Err(bad("gaussian precision must be positive"));
                }
            }
            PriorSpec::Fixed { value } => {
                if !value.is_finite() {
                    return Err(bad("fixed value must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// One named hyperparameter on its internal scale.
#[derive(Debug, Clone)]
pub struct HyperSlot {
    pub name: String,
    pub prior: PriorSpec,
    /// Starting point for the outer optimisation.
    pub init: f64,
}

/// Hyperparameter values aligned with [`ModelSpec::hyper_slots`].
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    values: Vec<f64>,
}

impl HyperParams {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != spec.hyper_slots().len() {
            return Err(ModelError::HyperLength {
                got: values.len(),
                expected: spec.hyper_slots().len(),
            });
        }
        for (slot, v) in spec.hyper_slots().iter().zip(&values) {
            if !v.is_finite() {
                return Err(ModelError::UnboundHyper(slot.name.clone()));
            }
        }
        Ok(Self { values })
    }

    /// Builds from a name → value map; every non-fixed slot must be present,
    /// fixed slots are filled from their pinned values.
    pub fn from_map(spec: &ModelSpec, map: &BTreeMap<String, f64>) -> Result<Self, ModelError> {
        let mut values = Vec::with_capacity(spec.hyper_slots().len());
        for slot in spec.hyper_slots() {
            match (&slot.prior, map.get(&slot.name)) {
                (_, Some(&v)) => values.push(v),
                (PriorSpec::Fixed { value }, None) => values.push(*value),
                (_, None) => return Err(ModelError::UnboundHyper(slot.name.clone())),
            }
        }
        Self::new(spec, values)
    }

    /// Slot initial values (pinned values for fixed slots).
    pub fn initial(spec: &ModelSpec) -> Self {
        let values = spec
            .hyper_slots()
            .iter()
            .map(|s| match s.prior {
                PriorSpec::Fixed { value } => value,
                _ => s.init,
            })
            .collect();
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, spec: &ModelSpec, name: &str) -> Option<f64> {
        spec.hyper_slots()
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.values[i])
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Covariate basis choice for the `fixed_effects` component.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum BasisConfig {
    Monomial { degree: usize },
    Bspline { k: usize, degree: usize },
}

/// Declarative model description, mirroring the run-configuration keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: String,
    pub components: Vec<String>,
    pub t_len: usize,
    #[serde(default)]
    pub seasonal_period: Option<usize>,
    /// Shorthand for `basis = monomial(degree)`.
    #[serde(default)]
    pub monomial_degree: Option<usize>,
    #[serde(default)]
    pub bspline_basis: Option<(usize, usize)>,
    /// Per-observation error term; defaults to the family convention
    /// (on for poisson, off for gaussian).
    #[serde(default)]
    pub error_term: Option<bool>,
    /// Sum-to-zero constraint on intrinsic components; default: applied
    /// whenever an intercept is present alongside a constrainable component.
    #[serde(default)]
    pub sum_to_zero: Option<bool>,
    /// Prior overrides by slot name.
    #[serde(default)]
    pub priors: BTreeMap<String, PriorSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: "gaussian".to_string(),
            components: vec!["intercept".to_string()],
            t_len: 2,
            seasonal_period: None,
            monomial_degree: None,
            bspline_basis: None,
            error_term: None,
            sum_to_zero: None,
            priors: BTreeMap::new(),
        }
    }
}

/// A fully resolved within-cluster model.
#[derive(Debug)]
pub struct ModelSpec {
    family: Arc<dyn ObservationFamily>,
    components: Vec<Box<dyn LatentComponent>>,
    has_error_term: bool,
    sum_to_zero: bool,
    t_len: usize,
    slots: Vec<HyperSlot>,
    /// Slot range per component, `(offset, len)` into `slots`.
    component_slot_ranges: Vec<(usize, usize)>,
    /// Index of the error-term log precision slot, if present.
    eps_slot: Option<usize>,
    /// Slot range for the family's own slots.
    obs_slot_range: (usize, usize),
    shared_dim: usize,
}

impl ModelSpec {
    /// Builds a model from its declarative description with the built-in
    /// registries.
    pub fn from_config(config: &ModelConfig) -> Result<Self, ModelError> {
        Self::from_config_with(
            config,
            &ComponentRegistry::builtin(),
            &FamilyRegistry::builtin(),
        )
    }

    pub fn from_config_with(
        config: &ModelConfig,
        registry: &ComponentRegistry,
        families: &FamilyRegistry,
    ) -> Result<Self, ModelError> {
        if config.t_len < 2 {
            return Err(ModelError::TooFewTimePoints(2));
        }
        let family = families.build(&config.family)?;
        let times = basis::standardized_times(config.t_len);
        let covariate_basis = match (&config.monomial_degree, &config.bspline_basis) {
            (Some(d), None) => Some(basis::monomial_basis(&times, *d)?),
            (None, Some((k, d))) => Some(basis::bspline_basis(&times, *k, *d)?),
            (None, None) => None,
            (Some(_), Some(_)) => {
                return Err(ModelError::ShapeMismatch(
                    "specify either monomial_degree or bspline_basis, not both".to_string(),
                ))
            }
        };
        let ctx = ComponentContext {
            t_len: config.t_len,
            seasonal_period: config.seasonal_period,
            covariate_basis: covariate_basis.as_ref(),
        };
        let mut components = Vec::with_capacity(config.components.len());
        let mut seen = std::collections::BTreeSet::new();
        for name in &config.components {
            if !seen.insert(name.clone()) {
                return Err(ModelError::DuplicateLabel(name.clone()));
            }
            components.push(registry.build(name, &ctx)?);
        }
        let has_error_term = config.error_term.unwrap_or_else(|| family.default_error_term());
        let has_intercept = components.iter().any(|c| c.kind() == "intercept");
        let any_constrainable = components.iter().any(|c| c.constrainable());
        let sum_to_zero = config
            .sum_to_zero
            .unwrap_or(has_intercept && any_constrainable);

        let mut slots = Vec::new();
        let mut component_slot_ranges = Vec::with_capacity(components.len());
        for comp in &components {
            let own = comp.hyper_slots();
            component_slot_ranges.push((slots.len(), own.len()));
            slots.extend(own);
        }
        let eps_slot = if has_error_term {
            slots.push(HyperSlot {
                name: "eps.log_prec".to_string(),
                prior: PriorSpec::LogGamma {
                    shape: 1.0,
                    rate: 5e-4,
                },
                init: 0.0,
            });
            Some(slots.len() - 1)
        } else {
            None
        };
        let obs_start = slots.len();
        slots.extend(family.obs_slots());
        let obs_slot_range = (obs_start, slots.len() - obs_start);

        for slot in &mut slots {
            if let Some(p) = config.priors.get(&slot.name) {
                p.validate(&slot.name)?;
                slot.prior = p.clone();
            }
        }

        let shared_dim = components.iter().map(|c| c.dim()).sum();
        Ok(Self {
            family,
            components,
            has_error_term,
            sum_to_zero,
            t_len: config.t_len,
            slots,
            component_slot_ranges,
            eps_slot,
            obs_slot_range,
            shared_dim,
        })
    }

    pub fn family(&self) -> &Arc<dyn ObservationFamily> {
        &self.family
    }

    pub fn components(&self) -> &[Box<dyn LatentComponent>] {
        &self.components
    }

    pub fn has_error_term(&self) -> bool {
        self.has_error_term
    }

    pub fn sum_to_zero(&self) -> bool {
        self.sum_to_zero
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    /// Ordered hyperparameter slots: component slots, then the error-term
    /// precision, then family observation slots.
    pub fn hyper_slots(&self) -> &[HyperSlot] {
        &self.slots
    }

    /// Indices of slots that are not pinned by a `Fixed` prior.
    pub fn free_slots(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !matches!(s.prior, PriorSpec::Fixed { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Dimension of the shared (component) part of the latent vector.
    pub fn shared_dim(&self) -> usize {
        self.shared_dim
    }

    pub(crate) fn component_theta<'a>(&self, idx: usize, theta: &'a HyperParams) -> &'a [f64] {
        let (off, len) = self.component_slot_ranges[idx];
        &theta.values()[off..off + len]
    }

    pub(crate) fn eps_log_prec(&self, theta: &HyperParams) -> Option<f64> {
        self.eps_slot.map(|i| theta.values()[i])
    }

    pub(crate) fn obs_theta<'a>(&self, theta: &'a HyperParams) -> &'a [f64] {
        let (off, len) = self.obs_slot_range;
        &theta.values()[off..off + len]
    }

    /// Sum-to-zero constraint rows over the shared latent part, if the
    /// constraint is active: one row per constrainable component with ones
    /// on that block.
    pub fn constraint_rows(&self) -> Option<DMatrix<f64>> {
        if !self.sum_to_zero {
            return None;
        }
        let rows: Vec<usize> = self
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.constrainable())
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let mut c = DMatrix::zeros(rows.len(), self.shared_dim);
        for (r, &ci) in rows.iter().enumerate() {
            let off: usize = self.components[..ci].iter().map(|x| x.dim()).sum();
            for j in 0..self.components[ci].dim() {
                c[(r, off + j)] = 1.0;
            }
        }
        Some(c)
    }
}

/// The assembled prior precision over a cluster's latent vector: the shared
/// block-diagonal part plus the optional error block `tau I`.
#[derive(Debug, Clone)]
pub struct JointPrecision {
    pub shared: DMatrix<f64>,
    pub eps_log_prec: Option<f64>,
    pub eps_dim: usize,
    /// Total rank including the error block.
    pub rank: usize,
    /// Total log generalized determinant including the error block.
    pub log_gdet: f64,
}

impl JointPrecision {
    /// Quadratic form `x^T Q x` for `x = [u, eps]`.
    pub fn quad_form(&self, u: &nalgebra::DVector<f64>, eps: Option<&DMatrix<f64>>) -> f64 {
        let mut q = (u.transpose() * &self.shared * u)[(0, 0)];
        if let (Some(x), Some(e)) = (self.eps_log_prec, eps) {
            let tau = x.exp();
            q += tau * e.iter().map(|v| v * v).sum::<f64>();
        }
        q
    }

    /// Dense precision over the full latent vector, for oracles and small
    /// problems.
    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.shared.nrows();
        let dim = m + self.eps_dim;
        let mut q = DMatrix::zeros(dim, dim);
        q.view_mut((0, 0), (m, m)).copy_from(&self.shared);
        if let Some(x) = self.eps_log_prec {
            let tau = x.exp();
            for i in 0..self.eps_dim {
                q[(m + i, m + i)] = tau;
            }
        }
        q
    }
}

/// Assembles the block-diagonal prior precision for a cluster of
/// `cluster_size` regions, with total rank and generalized log-determinant
/// `sum(rank_k ln nu_k + log|S_k|*)` over scaled blocks plus exact
/// log-determinants of full-rank blocks.
pub fn assemble_joint_precision(
    spec: &ModelSpec,
    theta: &HyperParams,
    cluster_size: usize,
) -> Result<JointPrecision, ModelError> {
    if theta.values().len() != spec.hyper_slots().len() {
        return Err(ModelError::HyperLength {
            got: theta.values().len(),
            expected: spec.hyper_slots().len(),
        });
    }
    let m = spec.shared_dim();
    let mut shared = DMatrix::zeros(m, m);
    let mut rank = 0;
    let mut log_gdet = 0.0;
    let mut off = 0;
    for (idx, comp) in spec.components().iter().enumerate() {
        let block = comp.precision_block(spec.component_theta(idx, theta))?;
        let d = comp.dim();
        shared.view_mut((off, off), (d, d)).copy_from(&block.matrix);
        rank += block.rank;
        log_gdet += block.log_gdet;
        off += d;
    }
    let (eps_log_prec, eps_dim) = if spec.has_error_term() {
        let x = spec.eps_log_prec(theta).expect("error term implies eps slot");
        let dim = cluster_size * spec.t_len();
        rank += dim;
        log_gdet += dim as f64 * x;
        (Some(x), dim)
    } else {
        (None, 0)
    };
    Ok(JointPrecision {
        shared,
        eps_log_prec,
        eps_dim,
        rank,
        log_gdet,
    })
}

/// Log prior density of the hyperparameters: the sum of per-slot prior
/// log-densities on the internal scale. Fixed slots contribute nothing.
pub fn log_hyper_prior(theta: &HyperParams, spec: &ModelSpec) -> Result<f64, ModelError> {
    if theta.values().len() != spec.hyper_slots().len() {
        return Err(ModelError::HyperLength {
            got: theta.values().len(),
            expected: spec.hyper_slots().len(),
        });
    }
    Ok(spec
        .hyper_slots()
        .iter()
        .zip(theta.values())
        .map(|(slot, &v)| slot.prior.log_density(v))
        .sum())
}

/// Log-likelihood of a cluster's data at a given predictor, with elementwise
/// first derivative and negative second derivative.
pub fn log_likelihood_terms(
    data: &ClusterData,
    eta: &DMatrix<f64>,
    spec: &ModelSpec,
    theta: &HyperParams,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>), ModelError> {
    if eta.shape() != data.y.shape() {
        return Err(ModelError::ShapeMismatch(format!(
            "eta is {:?}, y is {:?}",
            eta.shape(),
            data.y.shape()
        )));
    }
    spec.family().validate(&data.y)?;
    let mut d1 = DMatrix::zeros(data.y.nrows(), data.y.ncols());
    let mut d2 = DMatrix::zeros(data.y.nrows(), data.y.ncols());
    let ll = spec.family().loglik_terms(
        &data.y,
        &data.offset,
        eta,
        spec.obs_theta(theta),
        &mut d1,
        &mut d2,
    );
    Ok((ll, d1, d2))
}
