//! The linear map from a cluster's latent vector to its observation
//! predictor.
//!
//! The latent vector is `[u, eps]` where `u` stacks the component blocks
//! (shared by all regions in the cluster) and `eps` is the optional
//! per-observation error, stored as an `n x T` matrix flattened
//! column-major. The predictor is `eta[i, t] = (U u)[t] + eps[i, t]` with
//! `U` the `T x m` time design whose row `t` concatenates the component
//! design rows.

use nalgebra::{DMatrix, DVector};

use crate::model::ModelSpec;

#[derive(Debug, Clone)]
pub struct DesignMap {
    u_rows: DMatrix<f64>,
    n_regions: usize,
    has_error: bool,
}

impl DesignMap {
    pub fn new(spec: &ModelSpec, cluster_size: usize) -> Self {
        let t_len = spec.t_len();
        let m = spec.shared_dim();
        let mut u_rows = DMatrix::zeros(t_len, m);
        let mut scratch = vec![0.0; m];
        for t in 0..t_len {
            let mut off = 0;
            for comp in spec.components() {
                let d = comp.dim();
                comp.design_row(t, &mut scratch[..d]);
                for j in 0..d {
                    u_rows[(t, off + j)] = scratch[j];
                }
                off += d;
            }
        }
        Self {
            u_rows,
            n_regions: cluster_size,
            has_error: spec.has_error_term(),
        }
    }

    /// The `T x m` time design.
    pub fn time_design(&self) -> &DMatrix<f64> {
        &self.u_rows
    }

    pub fn shared_dim(&self) -> usize {
        self.u_rows.ncols()
    }

    pub fn t_len(&self) -> usize {
        self.u_rows.nrows()
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn eps_dim(&self) -> usize {
        if self.has_error {
            self.n_regions * self.t_len()
        } else {
            0
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.shared_dim() + self.eps_dim()
    }

    /// Shared curve `h(t) = (U u)(t)` for the component part `u`.
    pub fn shared_curve(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.u_rows * u
    }

    /// Applies the design: `eta[i, t] = h(t) + eps[i, t]`.
    pub fn apply(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.shared_dim();
        let u = DVector::from_column_slice(&x.as_slice()[..m]);
        let h = self.shared_curve(&u);
        let mut eta = DMatrix::zeros(self.n_regions, self.t_len());
        for t in 0..self.t_len() {
            for i in 0..self.n_regions {
                eta[(i, t)] = h[t];
            }
        }
        if self.has_error {
            let eps = &x.as_slice()[m..];
            for t in 0..self.t_len() {
                for i in 0..self.n_regions {
                    eta[(i, t)] += eps[t * self.n_regions + i];
                }
            }
        }
        eta
    }

    /// Transpose-apply: maps a per-observation weight matrix back to the
    /// latent space, `[U^T colsum(g), vec(g)]`.
    pub fn adjoint(&self, g: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.latent_dim());
        let colsum = self.column_sums(g);
        let ut_g = self.u_rows.transpose() * colsum;
        out.rows_mut(0, self.shared_dim()).copy_from(&ut_g);
        if self.has_error {
            let m = self.shared_dim();
            for t in 0..self.t_len() {
                for i in 0..self.n_regions {
                    out[m + t * self.n_regions + i] = g[(i, t)];
                }
            }
        }
        out
    }

    /// Column sums of an `n x T` matrix as a `T`-vector.
    pub fn column_sums(&self, g: &DMatrix<f64>) -> DVector<f64> {
        let mut s = DVector::zeros(self.t_len());
        for t in 0..self.t_len() {
            let mut acc = 0.0;
            for i in 0..self.n_regions {
                acc += g[(i, t)];
            }
            s[t] = acc;
        }
        s
    }
}
