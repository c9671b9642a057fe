//! `summarize`: point-estimate partition, fitted cluster curves, and
//! optional plots from a trace.

use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use spanclust::model::{Link, ModelSpec, Panel};
use spanclust::posterior::{cocluster_matrix, dahl_point_estimate, relabel_by_size};
use spanclust::sampler::{composition_sample, decode_rle, parse_trace_csv};

use crate::config::RunConfig;
use crate::ingest;
use crate::svg::{line_plot, Series};

pub fn run(config_path: &Path, trace_path: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let panel_path = config.resolve(base, &config.paths.panel);
    let edges_path = config.resolve(base, &config.paths.edges);
    let (graph, panel) = ingest::ingest(&panel_path, &edges_path, &config.model.family)?;
    let spec = ModelSpec::from_config(&config.model_config(panel.t_len()))?;

    let trace_text = std::fs::read_to_string(trace_path)
        .with_context(|| format!("reading trace {}", trace_path.display()))?;
    let records = parse_trace_csv(&trace_text)?;
    if records.is_empty() {
        anyhow::bail!("trace {} has no records", trace_path.display());
    }
    let burn = (records.len() as f64 * config.sampler.burn_in_fraction).floor() as usize;
    let kept = &records[burn.min(records.len() - 1)..];
    let memberships: Vec<Vec<u32>> = kept
        .iter()
        .map(|r| decode_rle(&r.membership_rle))
        .collect::<Result<_, _>>()?;
    let cocluster = cocluster_matrix(&memberships)?;
    let estimate = dahl_point_estimate(&memberships, &cocluster)?;
    let membership = relabel_by_size(&memberships[estimate.index]);

    let out_dir = config.resolve(base, &config.paths.output_dir);
    std::fs::create_dir_all(&out_dir)?;
    let echo = format!("# spanclust summarize config {}\n", config.echo_line());

    let region_ids = graph.region_ids().context("graph carries region ids")?;
    let mut membership_csv = echo.clone();
    membership_csv.push_str("region,cluster\n");
    for (i, &label) in membership.iter().enumerate() {
        membership_csv.push_str(&format!("{},{label}\n", region_ids[i]));
    }
    std::fs::write(out_dir.join("membership.csv"), membership_csv)?;

    // Composition sampling for the selected partition.
    let mut rng = ChaCha20Rng::seed_from_u64(config.sampler.seed);
    let chain_config = config.chain_config(1);
    let curves = composition_sample(
        &panel,
        &spec,
        &membership,
        &chain_config.laplace,
        config.sampler.posterior_draws,
        &mut rng,
    )?;

    let mut curves_csv = echo.clone();
    curves_csv.push_str("cluster,time,mean,q05,q95\n");
    for cluster in &curves {
        for t in 0..panel.t_len() {
            curves_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                cluster.label,
                panel.times()[t],
                cluster.summary.fit_mean[t],
                cluster.summary.fit_q05[t],
                cluster.summary.fit_q95[t]
            ));
        }
    }
    std::fs::write(out_dir.join("curves.csv"), curves_csv)?;

    if config.emit.plots {
        let plots_dir = out_dir.join("plots");
        std::fs::create_dir_all(&plots_dir)?;
        let log_link = matches!(spec.family().link(), Link::Log);
        for cluster in &curves {
            // Observed series on the fitted scale: relative risk for count
            // models, the raw observations otherwise.
            let observed: Vec<Vec<f64>> = cluster
                .members
                .iter()
                .map(|&r| {
                    (0..panel.t_len())
                        .map(|t| {
                            let y = panel.y()[(r as usize, t)];
                            if log_link {
                                y / panel.offset()[(r as usize, t)].exp()
                            } else {
                                y
                            }
                        })
                        .collect()
                })
                .collect();
            let mut series: Vec<Series<'_>> = observed
                .iter()
                .map(|values| Series {
                    values,
                    color: "#999999",
                    width: 1.0,
                    opacity: 0.7,
                })
                .collect();
            series.push(Series {
                values: &cluster.summary.fit_mean,
                color: "#e41a1c",
                width: 2.2,
                opacity: 1.0,
            });
            let svg = line_plot(
                &format!(
                    "cluster {} ({} regions)",
                    cluster.label,
                    cluster.members.len()
                ),
                Some((&cluster.summary.fit_q05, &cluster.summary.fit_q95)),
                &series,
            );
            std::fs::write(plots_dir.join(format!("cluster_{}.svg", cluster.label)), svg)?;
        }
    }

    println!(
        "summarize complete: {} clusters (Binder loss {:.3}), outputs in {}",
        membership.iter().max().map_or(0, |&m| m + 1),
        estimate.loss,
        out_dir.display()
    );
    Ok(())
}

// Re-exported for the round-trip tests.
pub fn _panel_t_len(panel: &Panel) -> usize {
    panel.t_len()
}
