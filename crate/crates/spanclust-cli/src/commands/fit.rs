//! `fit`: run the chain over an ingested panel and write the trace,
//! checkpoint, and diagnostics.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use spanclust::model::ModelSpec;
use spanclust::moves::MoveKind;
use spanclust::sampler::{
    records_to_csv, run_chain, run_chain_from, Checkpoint, LaplaceEvaluator,
};

use crate::config::RunConfig;
use crate::ingest;

pub struct FitOverrides {
    pub iterations: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

pub fn run(config_path: &Path, overrides: FitOverrides, threads: usize) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(iterations) = overrides.iterations {
        config.sampler.iterations = iterations;
    }
    if let Some(seed) = overrides.seed {
        config.sampler.seed = seed;
    }
    if let Some(out) = overrides.out {
        config.paths.output_dir = out;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    if config.sampler.iterations < 1 {
        anyhow::bail!("sampler.iterations must be at least 1");
    }

    let panel_path = config.resolve(base, &config.paths.panel);
    let edges_path = config.resolve(base, &config.paths.edges);
    let edge_list = ingest::read_edges(&edges_path)?;
    let (graph, panel) = ingest::ingest(&panel_path, &edges_path, &config.model.family)?;
    let graph = Arc::new(graph);
    let spec = ModelSpec::from_config(&config.model_config(panel.t_len()))
        .context("building model from config")?;
    let mut chain_config = config.chain_config(threads);
    // A weight column in the edge list seeds the tree weights.
    chain_config.initial_weights = edge_list.weights;
    let evaluator = LaplaceEvaluator {
        panel: &panel,
        spec: &spec,
        opts: chain_config.laplace.clone(),
    };

    let output = match &overrides.resume {
        Some(checkpoint_path) => {
            let text = std::fs::read_to_string(checkpoint_path)
                .with_context(|| format!("reading checkpoint {}", checkpoint_path.display()))?;
            let state = Checkpoint::from_json(&text)?.restore(chain_config.cache_cap)?;
            println!(
                "resuming from iteration {} for {} more iterations",
                state.iter, chain_config.iterations
            );
            run_chain_from(state, &evaluator, &chain_config, chain_config.iterations)?
        }
        None => run_chain(&graph, &evaluator, &chain_config)?,
    };

    let out_dir = config.resolve(base, &config.paths.output_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let comments = vec![format!("spanclust fit config {}", config.echo_line())];
    std::fs::write(
        out_dir.join("trace.csv"),
        records_to_csv(&output.records, &comments),
    )?;
    std::fs::write(out_dir.join("checkpoint.json"), output.checkpoint.to_json())?;
    std::fs::write(
        out_dir.join("config_echo.toml"),
        toml::to_string_pretty(&config)?,
    )?;
    if config.emit.diagnostics {
        let mut lines = String::new();
        for d in &output.diagnostics {
            lines.push_str(&serde_json::to_string(d)?);
            lines.push('\n');
        }
        std::fs::write(out_dir.join("diagnostics.jsonl"), lines)?;
    }

    let last = output.records.last().expect("at least one iteration");
    println!(
        "fit complete: {} iterations, final C = {}, total log marginal = {:.3}",
        output.records.len(),
        last.n_clusters,
        last.log_marginal
    );
    for kind in MoveKind::ALL {
        if let Some(rate) = output.acceptance.rate(kind) {
            println!("  {:>6} acceptance: {:.3}", kind.name(), rate);
        }
    }
    let failures = output
        .diagnostics
        .iter()
        .filter(|d| d.error.is_some())
        .count();
    if failures > 0 {
        println!("  warning: {failures} marginal evaluations failed (proposals rejected)");
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}
