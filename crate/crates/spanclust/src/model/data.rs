//! Observation panels and per-cluster data slices.

use nalgebra::DMatrix;

use crate::error::ModelError;

/// The full observation panel: one row per region, one column per time
/// point. `offset` holds the log expected count (or log population) for
/// count families and zeros otherwise.
#[derive(Debug, Clone)]
pub struct Panel {
    y: DMatrix<f64>,
    offset: DMatrix<f64>,
    times: Vec<f64>,
}

impl Panel {
    /// Missing observations are rejected: the panel must be a complete
    /// rectangle of finite values.
    pub fn new(y: DMatrix<f64>, offset: DMatrix<f64>, times: Vec<f64>) -> Result<Self, ModelError> {
        if y.shape() != offset.shape() {
            return Err(ModelError::ShapeMismatch(format!(
                "y is {:?}, offset is {:?}",
                y.shape(),
                offset.shape()
            )));
        }
        if times.len() != y.ncols() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} time labels for {} columns",
                times.len(),
                y.ncols()
            )));
        }
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                if !y[(i, j)].is_finite() {
                    return Err(ModelError::MissingObservation { row: i, col: j });
                }
                if !offset[(i, j)].is_finite() {
                    return Err(ModelError::ShapeMismatch(format!(
                        "non-finite offset at region {i}, time {j}"
                    )));
                }
            }
        }
        Ok(Self { y, offset, times })
    }

    pub fn n_regions(&self) -> usize {
        self.y.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.y.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn offset(&self) -> &DMatrix<f64> {
        &self.offset
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Extracts the rows for one cluster, in the given member order.
    pub fn cluster_data(&self, members: &[u32]) -> ClusterData {
        let n = members.len();
        let t = self.t_len();
        let mut y = DMatrix::zeros(n, t);
        let mut offset = DMatrix::zeros(n, t);
        for (row, &r) in members.iter().enumerate() {
            for col in 0..t {
                y[(row, col)] = self.y[(r as usize, col)];
                offset[(row, col)] = self.offset[(r as usize, col)];
            }
        }
        ClusterData {
            y,
            offset,
            region_indices: members.to_vec(),
        }
    }
}

/// The observation slice for one cluster.
#[derive(Debug, Clone)]
pub struct ClusterData {
    pub y: DMatrix<f64>,
    pub offset: DMatrix<f64>,
    pub region_indices: Vec<u32>,
}

impl ClusterData {
    pub fn n_regions(&self) -> usize {
        self.y.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.y.nrows() * self.y.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_missing_cells() {
        let mut y = DMatrix::zeros(2, 2);
        y[(1, 0)] = f64::NAN;
        let err = Panel::new(y, DMatrix::zeros(2, 2), vec![0.0, 1.0]).unwrap_err();
        assert!(matches!(err, ModelError::MissingObservation { row: 1, col: 0 }));
    }

    #[test]
    fn cluster_slice_selects_rows() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let panel = Panel::new(y, DMatrix::zeros(3, 2), vec![0.0, 1.0]).unwrap();
        let cd = panel.cluster_data(&[0, 2]);
        assert_eq!(cd.y, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 5.0, 6.0]));
        assert_eq!(cd.region_indices, vec![0, 2]);
    }
}
