//! Covariate bases over a standardized time grid.

use nalgebra::DMatrix;

use crate::error::ModelError;

/// `t_len` points equally spaced on [0, 1].
pub fn standardized_times(t_len: usize) -> Vec<f64> {
    if t_len == 1 {
        return vec![0.0];
    }
    (0..t_len)
        .map(|j| j as f64 / (t_len - 1) as f64)
        .collect()
}

/// Monomial basis `t, t^2, ..., t^degree` (no constant column; the intercept
/// is its own component).
pub fn monomial_basis(times: &[f64], degree: usize) -> Result<DMatrix<f64>, ModelError> {
    if degree == 0 {
        return Err(ModelError::ShapeMismatch(
            "monomial degree must be at least 1".to_string(),
        ));
    }
    let mut z = DMatrix::zeros(times.len(), degree);
    for (i, &t) in times.iter().enumerate() {
        let mut p = 1.0;
        for d in 0..degree {
            p *= t;
            z[(i, d)] = p;
        }
    }
    Ok(z)
}

/// B-spline basis with `k` functions of the given degree on [0, 1], clamped
/// knot vector with equally spaced interior knots, evaluated by the
/// Cox–de Boor recursion.
pub fn bspline_basis(times: &[f64], k: usize, degree: usize) -> Result<DMatrix<f64>, ModelError> {
    if k < degree + 1 {
        return Err(ModelError::ShapeMismatch(format!(
            "need at least degree+1 = {} basis functions, got {k}",
            degree + 1
        )));
    }
    let n_interior = k - degree - 1;
    let mut knots = vec![0.0; degree + 1];
    for j in 1..=n_interior {
        knots.push(j as f64 / (n_interior + 1) as f64);
    }
    knots.extend(std::iter::repeat(1.0).take(degree + 1));
    let mut z = DMatrix::zeros(times.len(), k);
    for (row, &t) in times.iter().enumerate() {
        let t = t.clamp(0.0, 1.0);
        for p in 0..k {
            z[(row, p)] = cox_de_boor(&knots, p, degree, t);
        }
    }
    Ok(z)
}

fn cox_de_boor(knots: &[f64], i: usize, degree: usize, t: f64) -> f64 {
    if degree == 0 {
        // Half-open spans, closed at the right end of the domain.
        let last = t >= knots[i] && knots[i + 1] >= 1.0 && t >= 1.0;
        if (t >= knots[i] && t < knots[i + 1]) || last {
            1.0
        } else {
            0.0
        }
    } else {
        let mut value = 0.0;
        let left_den = knots[i + degree] - knots[i];
        if left_den > 0.0 {
            value += (t - knots[i]) / left_den * cox_de_boor(knots, i, degree - 1, t);
        }
        let right_den = knots[i + degree + 1] - knots[i + 1];
        if right_den > 0.0 {
            value += (knots[i + degree + 1] - t) / right_den * cox_de_boor(knots, i + 1, degree - 1, t);
        }
        value
    }
}
