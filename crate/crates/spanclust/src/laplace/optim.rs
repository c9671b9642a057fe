//! Small quasi-Newton minimizer with finite-difference gradients, used for
//! the outer hyperparameter optimisation (dimension at most 3).

use nalgebra::{DMatrix, DVector};

pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iters: usize,
}

/// Central-difference gradient.
fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64) -> DVector<f64> {
    let d = x.len();
    let mut g = DVector::zeros(d);
    let mut xp = x.to_vec();
    for k in 0..d {
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    g
}

/// BFGS minimisation with backtracking line search. `f` may return
/// non-finite values for infeasible points; the line search backs away from
/// them. Returns the best point seen.
pub fn bfgs_minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    grad_step: f64,
    grad_tol: f64,
    max_iters: usize,
) -> OptimResult {
    let d = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if d == 0 || !fx.is_finite() {
        return OptimResult {
            x: x0.to_vec(),
            value: fx,
            converged: d == 0,
            iters: 0,
        };
    }
    let mut h_inv: DMatrix<f64> = DMatrix::identity(d, d);
    let mut g = fd_gradient(&mut f, x.as_slice(), grad_step);
    let mut iters = 0;
    let mut converged = false;
    while iters < max_iters {
        iters += 1;
        if g.amax() < grad_tol {
            converged = true;
            break;
        }
        let mut p = -(&h_inv * &g);
        // Guard against a corrupted inverse Hessian: fall back to steepest
        // descent when the direction is not a descent direction.
        if p.dot(&g) >= 0.0 {
            h_inv = DMatrix::identity(d, d);
            p = -g.clone();
        }
        let gp = g.dot(&p);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let x_new = &x + &p * step;
            let f_new = f(x_new.as_slice());
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * gp {
                let g_new = fd_gradient(&mut f, x_new.as_slice(), grad_step);
                let s = &x_new - &x;
                let y = &g_new - &g;
                let sy = s.dot(&y);
                if sy > 1e-12 {
                    // Standard BFGS inverse update.
                    let rho = 1.0 / sy;
                    let i = DMatrix::identity(d, d);
                    let left = &i - &s * y.transpose() * rho;
                    let right = &i - &y * s.transpose() * rho;
                    h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
                }
                x = x_new;
                fx = f_new;
                g = g_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No further progress possible along this direction.
            converged = g.amax() < 100.0 * grad_tol;
            break;
        }
    }
    if !converged && g.amax() < grad_tol {
        converged = true;
    }
    OptimResult {
        x: x.as_slice().to_vec(),
        value: fx,
        converged,
        iters,
    }
}

/// Central-difference Hessian, symmetric by construction.
pub fn fd_hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> DMatrix<f64> {
    let d = x.len();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    for k in 0..d {
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        hess[(k, k)] = (fp - 2.0 * f0 + fm) / (h * h);
    }
    for k in 0..d {
        for l in (k + 1)..d {
            xp[k] = x[k] + h;
            xp[l] = x[l] + h;
            let fpp = f(&xp);
            xp[l] = x[l] - h;
            let fpm = f(&xp);
            xp[k] = x[k] - h;
            xp[l] = x[l] + h;
            let fmp = f(&xp);
            xp[l] = x[l] - h;
            let fmm = f(&xp);
            xp[k] = x[k];
            xp[l] = x[l];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(k, l)] = v;
            hess[(l, k)] = v;
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimizes_shifted_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + 3.0;
        let res = bfgs_minimize(f, &[0.0, 0.0], 1e-5, 1e-6, 100);
        assert!(res.converged);
        assert_relative_eq!(res.x[0], 1.5, epsilon = 1e-4);
        assert_relative_eq!(res.x[1], -0.5, epsilon = 1e-4);
        assert_relative_eq!(res.value, 3.0, epsilon = 1e-8);
    }

    #[test]
    fn minimizes_nonquadratic() {
        // Smooth convex function with exponential walls.
        let f = |x: &[f64]| (x[0]).exp() + (-x[0]).exp() + 0.5 * x[0];
        let res = bfgs_minimize(f, &[2.0], 1e-5, 1e-6, 100);
        assert!(res.converged);
        // Stationary point: e^x - e^-x + 0.5 = 0.
        let g = res.x[0].exp() - (-res.x[0]).exp() + 0.5;
        assert!(g.abs() < 1e-4, "gradient {g}");
    }

    #[test]
    fn survives_infinite_regions() {
        // Infinite for x > 1; minimum at the boundary side.
        let f = |x: &[f64]| {
            if x[0] > 1.0 {
                f64::INFINITY
            } else {
                (x[0] - 0.8).powi(2)
            }
        };
        let res = bfgs_minimize(f, &[0.0], 1e-6, 1e-6, 100);
        assert_relative_eq!(res.x[0], 0.8, epsilon = 1e-3);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1] * x[1] + x[0] * x[1];
        let h = fd_hessian(f, &[0.3, -0.2], 1e-3);
        assert_relative_eq!(h[(0, 0)], 2.0, epsilon = 1e-5);
        assert_relative_eq!(h[(1, 1)], 6.0, epsilon = 1e-5);
        assert_relative_eq!(h[(0, 1)], 1.0, epsilon = 1e-5);
    }
}
