//! Integration grids over the hyperparameter space and log-sum-exp.

/// Inputs more than this far below the maximum are dropped from a
/// log-sum-exp; they cannot affect the double-precision result.
pub const LSE_FLOOR: f64 = 700.0;

pub fn logsumexp(values: &[f64]) -> f64 {
    let mx = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    let s: f64 = values
        .iter()
        .filter(|&&v| v - mx > -LSE_FLOOR)
        .map(|&v| (v - mx).exp())
        .sum();
    mx + s.ln()
}

/// Grid points (offsets from the mode already applied) and the log volume
/// element assigned to each point.
///
/// * `d = 1`: `g` points spanning mode ± 2 sigma (default `g = 9`, so the
///   familiar `{0, ±0.5, ±1, ±1.5, ±2} sigma` layout).
/// * `d = 2`: a `g x g` product grid over ± 2 sigma per axis (default 5).
/// * `d = 3`: a star design: centre, 6 axial points at ±1.5 sigma, 8
///   diagonal points at ±1.5/sqrt(3) sigma per coordinate (15 points), each
///   carrying an equal share of the ± 2 sigma box volume.
pub fn build_grid(
    mode: &[f64],
    sigma: &[f64],
    points_per_dim: Option<usize>,
) -> (Vec<Vec<f64>>, f64) {
    let d = mode.len();
    match d {
        0 => (vec![Vec::new()], 0.0),
        1 => {
            let g = normalize_points(points_per_dim.unwrap_or(9));
            let spacing = 4.0 * sigma[0] / (g - 1) as f64;
            let points = (0..g)
                .map(|i| vec![mode[0] + (i as f64 - (g - 1) as f64 / 2.0) * spacing])
                .collect();
            (points, spacing.ln())
        }
        2 => {
            let g = normalize_points(points_per_dim.unwrap_or(5));
            let sp0 = 4.0 * sigma[0] / (g - 1) as f64;
            let sp1 = 4.0 * sigma[1] / (g - 1) as f64;
            let mut points = Vec::with_capacity(g * g);
            for i in 0..g {
                for j in 0..g {
                    points.push(vec![
                        mode[0] + (i as f64 - (g - 1) as f64 / 2.0) * sp0,
                        mode[1] + (j as f64 - (g - 1) as f64 / 2.0) * sp1,
                    ]);
                }
            }
            (points, sp0.ln() + sp1.ln())
        }
        3 => {
            let mut points = vec![mode.to_vec()];
            let axial = 1.5;
            for k in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut p = mode.to_vec();
                    p[k] += s * axial * sigma[k];
                    points.push(p);
                }
            }
            let diag = axial / 3.0_f64.sqrt();
            for signs in 0..8u32 {
                let mut p = mode.to_vec();
                for k in 0..3 {
                    let s = if signs >> k & 1 == 1 { 1.0 } else { -1.0 };
                    p[k] += s * diag * sigma[k];
                }
                points.push(p);
            }
            let ln_vol: f64 =
                sigma.iter().map(|s| (4.0 * s).ln()).sum::<f64>() - (points.len() as f64).ln();
            (points, ln_vol)
        }
        _ => unreachable!("hyperparameter dimension is capped at 3"),
    }
}

fn normalize_points(g: usize) -> usize {
    let g = g.max(3);
    if g % 2 == 0 {
        g + 1
    } else {
        g
    }
}
