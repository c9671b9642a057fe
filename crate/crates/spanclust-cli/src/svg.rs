//! Minimal SVG line plots: fitted cluster curves with observed overlays.

/// One rendered series.
pub struct Series<'a> {
    pub values: &'a [f64],
    pub color: &'a str,
    pub width: f64,
    pub opacity: f64,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 46.0;

fn path_points(values: &[f64], lo: f64, hi: f64) -> String {
    let n = values.len().max(2);
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
            let y = HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * ((v - lo) / (hi - lo));
            format!("{x:.1},{y:.1}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders a band (between `lower` and `upper`) plus a set of line series
/// into a standalone SVG document.
pub fn line_plot(
    title: &str,
    band: Option<(&[f64], &[f64])>,
    series: &[Series<'_>],
) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for &v in s.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if let Some((l, u)) = band {
        for &v in l.iter().chain(u) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.0}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
        MARGIN, title
    ));
    // Axes box and range labels.
    svg.push_str(&format!(
        "<rect x=\"{m}\" y=\"{m}\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        w = WIDTH - 2.0 * MARGIN,
        h = HEIGHT - 2.0 * MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"4\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">{hi:.3}</text>\n",
        MARGIN + 4.0
    ));
    svg.push_str(&format!(
        "<text x=\"4\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">{lo:.3}</text>\n",
        HEIGHT - MARGIN
    ));

    if let Some((lower, upper)) = band {
        let mut polygon = path_points(lower, lo, hi);
        let reversed: Vec<f64> = upper.iter().rev().copied().collect();
        polygon.push(' ');
        polygon.push_str(&path_points_reversed(&reversed, upper.len(), lo, hi));
        svg.push_str(&format!(
            "<polygon points=\"{polygon}\" fill=\"#e41a1c\" opacity=\"0.15\" stroke=\"none\"/>\n"
        ));
    }
    for s in series {
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" opacity=\"{}\"/>\n",
            path_points(s.values, lo, hi),
            s.color,
            s.width,
            s.opacity
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn path_points_reversed(values: &[f64], n_total: usize, lo: f64, hi: f64) -> String {
    let n = n_total.max(2);
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let orig = n_total - 1 - i;
            let x = MARGIN + (WIDTH - 2.0 * MARGIN) * orig as f64 / (n - 1) as f64;
            let y = HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * ((v - lo) / (hi - lo));
            format!("{x:.1},{y:.1}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_svg() {
        let mean = vec![0.0, 1.0, 0.5, 1.5];
        let lower = vec![-0.2, 0.7, 0.2, 1.1];
        let upper = vec![0.2, 1.3, 0.8, 1.9];
        let observed = vec![0.1, 0.9, 0.6, 1.4];
        let svg = line_plot(
            "cluster 0 (3 regions)",
            Some((&lower, &upper)),
            &[
                Series {
                    values: &observed,
                    color: "#999999",
                    width: 1.0,
                    opacity: 0.8,
                },
                Series {
                    values: &mean,
                    color: "#e41a1c",
                    width: 2.0,
                    opacity: 1.0,
                },
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 1);
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let flat = vec![1.0; 5];
        let svg = line_plot(
            "flat",
            None,
            &[Series {
                values: &flat,
                color: "#000",
                width: 1.0,
                opacity: 1.0,
            }],
        );
        assert!(!svg.contains("NaN"));
    }
}
