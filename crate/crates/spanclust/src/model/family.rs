//! Observation families: the likelihood side of the within-cluster model.
//!
//! Each family is a strategy behind [`ObservationFamily`] providing the
//! log-likelihood and its first two derivatives with respect to the linear
//! predictor, elementwise over the observation panel. Families are selected
//! by name through [`FamilyRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::ModelError;
use crate::model::{HyperSlot, PriorSpec};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Log,
}

pub trait ObservationFamily: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn link(&self) -> Link;

    /// Whether the linear predictor carries a per-observation error term by
    /// default (true for count families where the error plays the role of
    /// unstructured overdispersion).
    fn default_error_term(&self) -> bool;

    /// Hyperparameter slots owned by the likelihood itself (for example the
    /// Gaussian observation precision). These are not part of the latent
    /// prior precision.
    fn obs_slots(&self) -> Vec<HyperSlot>;

    /// Validates the observation matrix for this family.
    fn validate(&self, y: &DMatrix<f64>) -> Result<(), ModelError>;

    /// Fills `d1` with the gradient and `d2` with the negative second
    /// derivative of the log-likelihood with respect to the linear predictor
    /// `eta`, elementwise, and returns the total log-likelihood. `eta`
    /// excludes the offset; shapes must already agree.
    fn loglik_terms(
        &self,
        y: &DMatrix<f64>,
        offset: &DMatrix<f64>,
        eta: &DMatrix<f64>,
        obs_theta: &[f64],
        d1: &mut DMatrix<f64>,
        d2: &mut DMatrix<f64>,
    ) -> f64;
}

/// `y ~ N(offset + eta, 1/tau)` with the observation precision `tau` as a
/// hyperparameter slot on the log scale.
#[derive(Debug)]
pub struct GaussianFamily;

impl ObservationFamily for GaussianFamily {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn link(&self) -> Link {
        Link::Identity
    }

    fn default_error_term(&self) -> bool {
        false
    }

    fn obs_slots(&self) -> Vec<HyperSlot> {
        vec![HyperSlot {
            name: "obs.log_prec".to_string(),
            prior: PriorSpec::LogGamma {
                shape: 1.0,
                rate: 5e-4,
            },
            init: 0.0,
        }]
    }

    fn validate(&self, y: &DMatrix<f64>) -> Result<(), ModelError> {
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                if !y[(i, j)].is_finite() {
                    return Err(ModelError::MissingObservation { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    fn loglik_terms(
        &self,
        y: &DMatrix<f64>,
        offset: &DMatrix<f64>,
        eta: &DMatrix<f64>,
        obs_theta: &[f64],
        d1: &mut DMatrix<f64>,
        d2: &mut DMatrix<f64>,
    ) -> f64 {
        let log_tau = obs_theta[0];
        let tau = log_tau.exp();
        let mut loglik = 0.0;
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                let r = y[(i, j)] - offset[(i, j)] - eta[(i, j)];
                loglik += 0.5 * (log_tau - LN_2PI) - 0.5 * tau * r * r;
                d1[(i, j)] = tau * r;
                d2[(i, j)] = tau;
            }
        }
        loglik
    }
}

/// `y ~ Poisson(E * exp(eta))` with `E = exp(offset)` the expected count.
#[derive(Debug)]
pub struct PoissonFamily;

impl ObservationFamily for PoissonFamily {
    fn name(&self) -> &'static str {
        "poisson"
    }

    fn link(&self) -> Link {
        Link::Log
    }

    fn default_error_term(&self) -> bool {
        true
    }

    fn obs_slots(&self) -> Vec<HyperSlot> {
        Vec::new()
    }

    fn validate(&self, y: &DMatrix<f64>) -> Result<(), ModelError> {
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                let v = y[(i, j)];
                if !v.is_finite() {
                    return Err(ModelError::MissingObservation { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(ModelError::NegativeCount {
                        value: v,
                        row: i,
                        col: j,
                    });
                }
                if v.fract() != 0.0 {
                    return Err(ModelError::NonIntegerCount {
                        value: v,
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(())
    }

    fn loglik_terms(
        &self,
        y: &DMatrix<f64>,
        offset: &DMatrix<f64>,
        eta: &DMatrix<f64>,
        _obs_theta: &[f64],
        d1: &mut DMatrix<f64>,
        d2: &mut DMatrix<f64>,
    ) -> f64 {
        let mut loglik = 0.0;
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                let yij = y[(i, j)];
                let log_lambda = offset[(i, j)] + eta[(i, j)];
                let lambda = log_lambda.exp();
                loglik += yij * log_lambda - lambda - ln_gamma(yij + 1.0);
                d1[(i, j)] = yij - lambda;
                d2[(i, j)] = lambda;
            }
        }
        loglik
    }
}

type FamilyBuildFn = fn() -> Arc<dyn ObservationFamily>;

/// Observation families by name (`gaussian`, `poisson`).
pub struct FamilyRegistry {
    builders: BTreeMap<String, FamilyBuildFn>,
}

impl FamilyRegistry {
    pub fn builtin() -> Self {
        let mut reg = Self {
            builders: BTreeMap::new(),
        };
        reg.register("gaussian", || Arc::new(GaussianFamily));
        reg.register("poisson", || Arc::new(PoissonFamily));
        reg
    }

    pub fn register(&mut self, name: &str, build: FamilyBuildFn) {
        self.builders.insert(name.to_string(), build);
    }

    pub fn build(&self, name: &str) -> Result<Arc<dyn ObservationFamily>, ModelError> {
        let build = self
            .builders
            .get(name)
            .ok_or_else(|| ModelError::UnknownFamily(name.to_string()))?;
        Ok(build())
    }
}
