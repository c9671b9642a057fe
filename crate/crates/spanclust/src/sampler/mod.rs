//! The Metropolis–Hastings chain over cluster structures.
//!
//! Each iteration draws a move kind among the feasible ones, builds a
//! proposal, evaluates marginal likelihoods only for the clusters the move
//! touches (unaffected clusters cancel from the acceptance ratio), and
//! accepts with probability
//! `min(1, exp(delta_log_marginal + log_prior_ratio + log_transition_ratio))`.
//! Hyper moves leave the membership unchanged and are always accepted.
//!
//! Marginal values live in a member-set-keyed cache, so merges that undo a
//! recent split are free, and the running total over current clusters is
//! maintained incrementally (checked against from-scratch recomputation by
//! the test suite).

pub mod cache;
pub mod trace;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LaplaceError, SamplerError};
use crate::graph::{EdgeWeights, Partition, SpanningTree, SpatialGraph};
use crate::laplace::{
    conditional_posterior, integrate_hyperparameters, LaplaceOptions, LatentSummary,
};
use crate::model::{ModelSpec, Panel};
use crate::moves::{draw_move_kind, propose, MoveConfig, MoveKind, MoveProposal};
pub use cache::{CachedMarginal, MarginalCache};
pub use trace::{
    decode_rle, encode_rle, parse_trace_csv, records_to_csv, AcceptanceStats, EvalDiagnostic,
    TraceRecord, TRACE_HEADER,
};

/// Computes the log marginal likelihood of one cluster's data. The chain is
/// generic over this so tests can drive it with synthetic likelihoods.
pub trait MarginalEvaluator: Sync {
    fn log_marginal(&self, members: &[u32]) -> Result<CachedMarginal, LaplaceError>;
}

/// The production evaluator: nested Laplace approximation over the panel
/// slice of the member set.
pub struct LaplaceEvaluator<'a> {
    pub panel: &'a Panel,
    pub spec: &'a ModelSpec,
    pub opts: LaplaceOptions,
}

impl MarginalEvaluator for LaplaceEvaluator<'_> {
    fn log_marginal(&self, members: &[u32]) -> Result<CachedMarginal, LaplaceError> {
        let data = self.panel.cluster_data(members);
        let result = integrate_hyperparameters(&data, self.spec, &self.opts)?;
        Ok(CachedMarginal {
            log_marginal: result.log_marginal,
            theta_mode: result.theta_mode.values().to_vec(),
            fallback: result.fallback,
            newton_iters_max: result.newton_iters_max,
        })
    }
}

/// Chain-level configuration.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub iterations: u64,
    /// Initial number of clusters.
    pub c0: u32,
    pub seed: u64,
    pub moves: MoveConfig,
    pub laplace: LaplaceOptions,
    /// Treat a failed marginal evaluation as a rejected proposal (with a
    /// diagnostics entry) instead of aborting the run.
    pub tolerate_nonconverged: bool,
    /// Worker threads for batched marginal evaluations (cache priming and
    /// multi-cluster proposals). Values are identical regardless.
    pub threads: usize,
    /// Optional cache size cap (entries for current clusters are never
    /// evicted).
    pub cache_cap: Option<usize>,
    /// Initial edge weights (edge-index order); fresh U(0,1) draws when
    /// absent. With `moves.freeze_weights` these stay fixed for the whole
    /// run.
    pub initial_weights: Option<Vec<f64>>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            c0: 10,
            seed: 0,
            moves: MoveConfig::default(),
            laplace: LaplaceOptions::default(),
            tolerate_nonconverged: true,
            threads: 1,
            cache_cap: None,
            initial_weights: None,
        }
    }
}

/// Current chain position: partition, tree weights, cache, and RNG state.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub partition: Partition,
    pub weights: EdgeWeights,
    pub cache: MarginalCache,
    pub iter: u64,
    pub rng: ChaCha20Rng,
    pub total_log_marginal: f64,
}

/// Evaluates a batch of member sets, optionally across threads. Results
/// come back in input order so insertion stays deterministic.
fn evaluate_batch<E: MarginalEvaluator>(
    evaluator: &E,
    keys: &[Vec<u32>],
    threads: usize,
) -> Vec<Result<CachedMarginal, LaplaceError>> {
    if threads <= 1 || keys.len() <= 1 {
        return keys.iter().map(|k| evaluator.log_marginal(k)).collect();
    }
    let mut results: Vec<Option<Result<CachedMarginal, LaplaceError>>> =
        (0..keys.len()).map(|_| None).collect();
    let workers = threads.min(keys.len());
    std::thread::scope(|scope| {
        for (chunk_idx, chunk) in results.chunks_mut(keys.len().div_ceil(workers)).enumerate() {
            let chunk_size = keys.len().div_ceil(workers);
            let start = chunk_idx * chunk_size;
            let keys = &keys[start..(start + chunk.len()).min(keys.len())];
            scope.spawn(move || {
                for (slot, key) in chunk.iter_mut().zip(keys) {
                    *slot = Some(evaluator.log_marginal(key));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

/// Initializes the chain: U(0,1) edge weights, their MST, and an initial
/// partition that removes the `c0 - 1` largest-weight tree edges. All
/// initial clusters' marginals are evaluated into the cache.
pub fn init_chain<E: MarginalEvaluator>(
    graph: &Arc<SpatialGraph>,
    evaluator: &E,
    config: &ChainConfig,
) -> Result<ChainState, SamplerError> {
    config.moves.validate()?;
    let n = graph.n_regions();
    if config.c0 < 1 || config.c0 as usize > n {
        return Err(SamplerError::InvalidInitialClusters {
            c0: config.c0,
            n_regions: n,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let weights = match &config.initial_weights {
        Some(values) => EdgeWeights::new(graph, values.clone())?,
        None => EdgeWeights::uniform_random(graph, &mut rng),
    };
    let tree = SpanningTree::minimum(graph, &weights)?;
    let mut by_weight: Vec<usize> = tree.edge_ids().to_vec();
    by_weight.sort_by(|&a, &b| weights.get(b).total_cmp(&weights.get(a)).then(a.cmp(&b)));
    let removed: Vec<usize> = by_weight
        .into_iter()
        .take(config.c0 as usize - 1)
        .collect();
    let partition = Partition::derive(&tree, &removed)?;

    let mut cache = MarginalCache::new(config.cache_cap);
    let keys: Vec<Vec<u32>> = partition.member_sets().to_vec();
    let results = evaluate_batch(evaluator, &keys, config.threads);
    let mut total = 0.0;
    for (key, result) in keys.iter().zip(results) {
        let value = result?;
        total += value.log_marginal;
        cache.insert(key, value);
    }
    Ok(ChainState {
        partition,
        weights,
        cache,
        iter: 0,
        rng,
        total_log_marginal: total,
    })
}

/// Log acceptance probability `min(0, delta + prior + transition)` for a
/// proposal. Fresh marginals must cover the proposal's affected new
/// clusters (cached values are consulted as well); affected old clusters
/// are read from the cache.
pub fn acceptance_log_prob(
    state: &ChainState,
    proposal: &MoveProposal,
    fresh_marginals: &HashMap<Vec<u32>, f64>,
) -> Result<f64, SamplerError> {
    if proposal.kind == MoveKind::Hyper {
        return Ok(0.0);
    }
    let mut delta = 0.0;
    for &label in &proposal.affected_new {
        let members = proposal.partition.members(label);
        let mut key = members.to_vec();
        key.sort_unstable();
        let value = fresh_marginals
            .get(&key)
            .copied()
            .or_else(|| state.cache.peek(members).map(|c| c.log_marginal))
            .ok_or_else(|| SamplerError::MissingMarginal(key.clone()))?;
        delta += value;
    }
    for &label in &proposal.affected_old {
        let members = state.partition.members(label);
        let value = state
            .cache
            .peek(members)
            .map(|c| c.log_marginal)
            .ok_or_else(|| SamplerError::MissingMarginal(members.to_vec()))?;
        delta -= value;
    }
    Ok((delta + proposal.log_prior_ratio + proposal.log_transition_ratio).min(0.0))
}

/// The chain output: per-iteration trace, acceptance statistics, marginal
/// evaluation diagnostics, and the final state as a resumable checkpoint.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub records: Vec<TraceRecord>,
    pub acceptance: AcceptanceStats,
    pub diagnostics: Vec<EvalDiagnostic>,
    pub checkpoint: Checkpoint,
    pub seed: u64,
}

/// Runs a fresh chain for `config.iterations` iterations.
pub fn run_chain<E: MarginalEvaluator>(
    graph: &Arc<SpatialGraph>,
    evaluator: &E,
    config: &ChainConfig,
) -> Result<ChainOutput, SamplerError> {
    let state = init_chain(graph, evaluator, config)?;
    run_chain_from(state, evaluator, config, config.iterations)
}

/// Continues a chain from an existing state for `iterations` further
/// iterations.
pub fn run_chain_from<E: MarginalEvaluator>(
    mut state: ChainState,
    evaluator: &E,
    config: &ChainConfig,
    iterations: u64,
) -> Result<ChainOutput, SamplerError> {
    let graph = Arc::clone(state.partition.graph());
    let n = graph.n_regions() as u32;
    let mut records = Vec::with_capacity(iterations as usize);
    let mut acceptance = AcceptanceStats::default();
    let mut diagnostics = Vec::new();

    for _ in 0..iterations {
        let c = state.partition.n_clusters();
        let kind = draw_move_kind(&config.moves, c, n, &mut state.rng);
        let proposal = propose(kind, &state.partition, &state.weights, &config.moves, &mut state.rng)?;

        let mut rejected_by_failure = false;
        let mut fresh: HashMap<Vec<u32>, f64> = HashMap::new();
        if kind != MoveKind::Hyper {
            let mut missing: Vec<Vec<u32>> = Vec::new();
            for &label in &proposal.affected_new {
                let members = proposal.partition.members(label);
                if state.cache.peek(members).is_none() {
                    let mut key = members.to_vec();
                    key.sort_unstable();
                    if !missing.contains(&key) {
                        missing.push(key);
                    }
                } else {
                    state.cache.touch(members);
                }
            }
            let results = evaluate_batch(evaluator, &missing, config.threads);
            for (key, result) in missing.into_iter().zip(results) {
                match result {
                    Ok(value) => {
                        diagnostics.push(EvalDiagnostic {
                            iter: state.iter + 1,
                            members: key.clone(),
                            log_marginal: value.log_marginal,
                            theta_mode: value.theta_mode.clone(),
                            newton_iters_max: value.newton_iters_max,
                            fallback: value.fallback,
                            error: None,
                        });
                        fresh.insert(key.clone(), value.log_marginal);
                        state.cache.insert(&key, value);
                    }
                    Err(err) if config.tolerate_nonconverged => {
                        diagnostics.push(EvalDiagnostic {
                            iter: state.iter + 1,
                            members: key,
                            log_marginal: f64::NAN,
                            theta_mode: Vec::new(),
                            newton_iters_max: 0,
                            fallback: false,
                            error: Some(err.to_string()),
                        });
                        rejected_by_failure = true;
                    }
                    Err(err) => return Err(err.into()),
                }
            }
        }

        let accepted = if rejected_by_failure {
            false
        } else if kind == MoveKind::Hyper {
            true
        } else {
            let log_acc = acceptance_log_prob(&state, &proposal, &fresh)?;
            log_acc >= 0.0 || state.rng.random::<f64>().ln() < log_acc
        };

        if accepted {
            for &label in &proposal.affected_old {
                let members = state.partition.members(label);
                let value = state
                    .cache
                    .peek(members)
                    .map(|c| c.log_marginal)
                    .ok_or_else(|| SamplerError::MissingMarginal(members.to_vec()))?;
                state.total_log_marginal -= value;
            }
            for &label in &proposal.affected_new {
                let members = proposal.partition.members(label);
                let value = state
                    .cache
                    .peek(members)
                    .map(|c| c.log_marginal)
                    .ok_or_else(|| SamplerError::MissingMarginal(members.to_vec()))?;
                state.total_log_marginal += value;
            }
            if let Some(weights) = proposal.weights {
                state.weights = weights;
            }
            state.partition = proposal.partition;
        }
        acceptance.record(kind, accepted);
        state.iter += 1;

        if cfg!(debug_assertions) && state.iter % 50 == 0 {
            debug_assert!(state.partition.check_invariants());
        }

        records.push(TraceRecord {
            iter: state.iter,
            kind,
            accepted,
            n_clusters: state.partition.n_clusters(),
            log_marginal: state.total_log_marginal,
            membership_rle: encode_rle(state.partition.membership()),
        });

        if config.cache_cap.is_some() {
            let protected: HashSet<Vec<u32>> =
                state.partition.member_sets().iter().cloned().collect();
            state.cache.evict_to_cap(&protected);
        }
    }

    Ok(ChainOutput {
        records,
        acceptance,
        diagnostics,
        checkpoint: Checkpoint::from_state(&state),
        seed: config.seed,
    })
}

/// Per-cluster latent curve summaries for a chosen partition.
#[derive(Debug, Clone)]
pub struct ClusterCurves {
    pub label: u32,
    pub members: Vec<u32>,
    pub summary: LatentSummary,
}

/// Composition sampling for a chosen partition: integrates each cluster's
/// hyperparameters afresh and samples the latent conditional.
pub fn composition_sample<R: Rng + ?Sized>(
    panel: &Panel,
    spec: &ModelSpec,
    membership: &[u32],
    opts: &LaplaceOptions,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<ClusterCurves>, LaplaceError> {
    let n_clusters = membership.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(n_clusters as usize);
    for label in 0..n_clusters {
        let members: Vec<u32> = membership
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i as u32)
            .collect();
        let data = panel.cluster_data(&members);
        let result = integrate_hyperparameters(&data, spec, opts)?;
        let summary = conditional_posterior(&data, spec, &result, n_draws, rng);
        out.push(ClusterCurves {
            label,
            members,
            summary,
        });
    }
    Ok(out)
}

/// A serializable snapshot of the chain, sufficient to resume it exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub iter: u64,
    pub n_regions: usize,
    pub edges: Vec<(u32, u32)>,
    pub region_ids: Option<Vec<String>>,
    pub weights: Vec<f64>,
    pub tree_edges: Vec<(u32, u32)>,
    pub removed_edges: Vec<(u32, u32)>,
    pub rng: ChaCha20Rng,
    pub cache: Vec<(Vec<u32>, CachedMarginal)>,
    pub total_log_marginal: f64,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn from_state(state: &ChainState) -> Self {
        let graph = state.partition.graph();
        let edge_pair = |e: &usize| graph.edge(*e);
        Self {
            version: Self::VERSION,
            iter: state.iter,
            n_regions: graph.n_regions(),
            edges: graph.edges().to_vec(),
            region_ids: graph.region_ids().map(|ids| ids.to_vec()),
            weights: state.weights.values().to_vec(),
            tree_edges: state.partition.tree().edge_ids().iter().map(edge_pair).collect(),
            removed_edges: state.partition.removed_edges().iter().map(edge_pair).collect(),
            rng: state.rng.clone(),
            cache: state.cache.sorted_entries(),
            total_log_marginal: state.total_log_marginal,
        }
    }

    /// Rebuilds the chain state, re-validating every structure.
    pub fn restore(self, cache_cap: Option<usize>) -> Result<ChainState, SamplerError> {
        if self.version != Self::VERSION {
            return Err(SamplerError::CheckpointCorrupt(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let graph = Arc::new(SpatialGraph::new(
            self.n_regions,
            &self.edges,
            self.region_ids,
        )?);
        let weights = EdgeWeights::new(&graph, self.weights)?;
        let resolve = |pairs: &[(u32, u32)]| -> Result<Vec<usize>, SamplerError> {
            pairs
                .iter()
                .map(|&(a, b)| {
                    graph
                        .edge_index(a, b)
                        .ok_or(SamplerError::Graph(crate::error::GraphError::UnknownEdge(a, b)))
                })
                .collect()
        };
        let tree = SpanningTree::from_edge_ids(&graph, resolve(&self.tree_edges)?)?;
        let partition = Partition::derive(&tree, &resolve(&self.removed_edges)?)?;
        let mut cache = MarginalCache::new(cache_cap);
        for (key, value) in self.cache {
            cache.insert(&key, value);
        }
        Ok(ChainState {
            partition,
            weights,
            cache,
            iter: self.iter,
            rng: self.rng,
            total_log_marginal: self.total_log_marginal,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SamplerError> {
        serde_json::from_str(text).map_err(|e| SamplerError::CheckpointCorrupt(e.to_string()))
    }
}

#[cfg(test)]
mod tests;
