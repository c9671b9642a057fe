//! Partition move proposals and their prior and transition ratios.
//!
//! Four move kinds modify the cluster structure: **birth** splits a cluster
//! by removing one more tree edge, **death** merges two adjacent clusters by
//! restoring a removed edge, **change** composes a death with a birth so the
//! cluster count stays fixed, and **hyper** resamples the spanning tree
//! compatibly with the current partition (always accepted).
//!
//! # Transition probabilities
//!
//! Birth picks uniformly among the `n - C` within-cluster tree edges and
//! death uniformly among the `C - 1` removed edges. Move kinds are drawn
//! with probabilities `(r_b, r_d, r_c, r_h)`; at boundary states (`C = 1` or
//! `C = n`) infeasible kinds are dropped and the remaining probabilities
//! renormalized by their sum `R(C)`. For a birth from a state with `C`
//! clusters the forward proposal probability is therefore
//! `r_b / (R(C) (n - C))` and the exact reversing death has probability
//! `r_d / (R(C+1) C)`, giving
//!
//! ```text
//! log q(old|new) - log q(new|old)
//!     = ln(r_d / R(C+1)) - ln C - ln(r_b / R(C)) + ln(n - C)
//! ```
//!
//! and symmetrically for death. A birth/death pair composed in either order
//! telescopes to zero, which is exercised by the reversibility tests. The
//! change move picks a removed edge uniformly (merging), then picks a
//! within-cluster edge of the merged state uniformly (splitting); its
//! forward and reverse probabilities coincide, so its transition ratio
//! vanishes identically.
//!
//! # Prior ratio
//!
//! The cluster-count prior is proportional to `(1-q)^C`, so a move from
//! `C` to `C*` contributes `(C* - C) ln(1-q)`. Given the tree and `C`, the
//! partition prior is uniform over the `binom(n-1, C-1)` choices of removed
//! edges, contributing `ln binom(n-1, C-1) - ln binom(n-1, C*-1)`; a
//! configuration flag can drop this term.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::MoveError;
use crate::graph::{changed_clusters, EdgeWeights, Partition, SpanningTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Birth,
    Death,
    Change,
    Hyper,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [
        MoveKind::Birth,
        MoveKind::Death,
        MoveKind::Change,
        MoveKind::Hyper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
            MoveKind::Change => "change",
            MoveKind::Hyper => "hyper",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Move-kind probabilities and the partition prior knobs.
#[derive(Debug, Clone)]
pub struct MoveConfig {
    /// `(r_b, r_d, r_c, r_h)`, nonnegative, summing to one.
    pub move_probs: [f64; 4],
    /// Geometric penalty `q` on the number of clusters, in `[0, 1)`.
    pub geometric_q: f64,
    /// Include the `binom(n-1, C-1)` term of the uniform partition prior.
    pub include_partition_binomial: bool,
    /// Keep the initial edge weights; hyper moves then rebuild the tree from
    /// the frozen weights instead of redrawing them.
    pub freeze_weights: bool,
}

impl Default for MoveConfig {
    fn default() -> Self {
        Self {
            move_probs: [0.3, 0.3, 0.2, 0.2],
            geometric_q: 0.5,
            include_partition_binomial: true,
            freeze_weights: false,
        }
    }
}

impl MoveConfig {
    pub fn validate(&self) -> Result<(), MoveError> {
        if self.move_probs.iter().any(|&p| p < 0.0)
            || (self.move_probs.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(MoveError::InvalidProbs(self.move_probs));
        }
        if !(0.0..1.0).contains(&self.geometric_q) {
            return Err(MoveError::InvalidQ(self.geometric_q));
        }
        Ok(())
    }

    pub fn prob(&self, kind: MoveKind) -> f64 {
        match kind {
            MoveKind::Birth => self.move_probs[0],
            MoveKind::Death => self.move_probs[1],
            MoveKind::Change => self.move_probs[2],
            MoveKind::Hyper => self.move_probs[3],
        }
    }
}

/// A proposed modification of the chain state.
#[derive(Debug, Clone)]
pub struct MoveProposal {
    pub kind: MoveKind,
    pub partition: Partition,
    /// Fresh weights drawn by a hyper move (the new tree is their MST).
    pub weights: Option<EdgeWeights>,
    pub log_prior_ratio: f64,
    pub log_transition_ratio: f64,
    /// Labels (in the current partition) of clusters whose data slices change.
    pub affected_old: Vec<u32>,
    /// Labels (in the proposed partition) of clusters whose data slices change.
    pub affected_new: Vec<u32>,
}

/// Which move kinds are feasible at `C` clusters over `n` regions.
pub fn feasible(kind: MoveKind, n_clusters: u32, n_regions: u32) -> bool {
    match kind {
        MoveKind::Birth => n_clusters < n_regions,
        MoveKind::Death => n_clusters > 1,
        MoveKind::Change => n_clusters > 1 && n_clusters < n_regions,
        MoveKind::Hyper => true,
    }
}

/// Sum of the probabilities of feasible kinds at `C` clusters; the
/// renormalizer for boundary states.
pub fn feasible_mass(config: &MoveConfig, n_clusters: u32, n_regions: u32) -> f64 {
    MoveKind::ALL
        .into_iter()
        .filter(|&k| feasible(k, n_clusters, n_regions))
        .map(|k| config.prob(k))
        .sum()
}

/// Draws a move kind among the feasible ones with renormalized
/// probabilities.
pub fn draw_move_kind<R: Rng + ?Sized>(
    config: &MoveConfig,
    n_clusters: u32,
    n_regions: u32,
    rng: &mut R,
) -> MoveKind {
    let mass = feasible_mass(config, n_clusters, n_regions);
    let u = rng.random::<f64>() * mass;
    let mut acc = 0.0;
    let mut last = MoveKind::Hyper;
    for kind in MoveKind::ALL {
        if !feasible(kind, n_clusters, n_regions) {
            continue;
        }
        acc += config.prob(kind);
        last = kind;
        if u < acc {
            return kind;
        }
    }
    last
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Log prior ratio for a move from `c_old` to `c_new` clusters over a graph
/// with `n_regions` regions: the geometric cluster-count term plus the
/// uniform-partition binomial term (optional).
pub fn log_prior_ratio(
    c_old: u32,
    c_new: u32,
    q: f64,
    n_regions: u32,
    include_binomial: bool,
) -> Result<f64, MoveError> {
    if !(0.0..1.0).contains(&q) {
        return Err(MoveError::InvalidQ(q));
    }
    for c in [c_old, c_new] {
        if c < 1 || c > n_regions {
            return Err(MoveError::InvalidClusterCount(c, n_regions));
        }
    }
    let mut ratio = (c_new as f64 - c_old as f64) * (1.0 - q).ln();
    if include_binomial && c_old != c_new {
        let n1 = (n_regions - 1) as u64;
        ratio += ln_binomial(n1, (c_old - 1) as u64) - ln_binomial(n1, (c_new - 1) as u64);
    }
    Ok(ratio)
}

/// `ln` of the effective probability of proposing `kind` at `C` clusters,
/// with boundary renormalization.
fn ln_kind_prob(config: &MoveConfig, kind: MoveKind, n_clusters: u32, n_regions: u32) -> f64 {
    (config.prob(kind) / feasible_mass(config, n_clusters, n_regions)).ln()
}

/// Transition log-ratio for a birth from `C` clusters: the reversing death
/// lives at `C + 1`.
fn birth_transition_ratio(config: &MoveConfig, c: u32, n: u32) -> f64 {
    ln_kind_prob(config, MoveKind::Death, c + 1, n) - (c as f64).ln()
        - ln_kind_prob(config, MoveKind::Birth, c, n)
        + ((n - c) as f64).ln()
}

/// Transition log-ratio for a death from `C` clusters: the reversing birth
/// lives at `C - 1`.
fn death_transition_ratio(config: &MoveConfig, c: u32, n: u32) -> f64 {
    ln_kind_prob(config, MoveKind::Birth, c - 1, n) - ((n - c + 1) as f64).ln()
        - ln_kind_prob(config, MoveKind::Death, c, n)
        + ((c - 1) as f64).ln()
}

/// Splits a cluster by removing one within-cluster tree edge chosen
/// uniformly at random.
pub fn propose_birth<R: Rng + ?Sized>(
    partition: &Partition,
    config: &MoveConfig,
    rng: &mut R,
) -> Result<MoveProposal, MoveError> {
    let n = partition.graph().n_regions() as u32;
    let c = partition.n_clusters();
    let (within, _) = partition.tree_edge_classes();
    if within.is_empty() {
        return Err(MoveError::NoEligibleEdge {
            kind: "birth",
            n_clusters: c,
        });
    }
    let edge = within[rng.random_range(0..within.len())];
    let mut removed = partition.removed_edges().to_vec();
    removed.push(edge);
    let new_partition = Partition::derive(partition.tree(), &removed)?;
    let (affected_old, affected_new) = changed_clusters(partition, &new_partition);
    Ok(MoveProposal {
        kind: MoveKind::Birth,
        partition: new_partition,
        weights: None,
        log_prior_ratio: log_prior_ratio(
            c,
            c + 1,
            config.geometric_q,
            n,
            config.include_partition_binomial,
        )?,
        log_transition_ratio: birth_transition_ratio(config, c, n),
        affected_old,
        affected_new,
    })
}

/// Merges two adjacent clusters by restoring one removed edge chosen
/// uniformly at random.
pub fn propose_death<R: Rng + ?Sized>(
    partition: &Partition,
    config: &MoveConfig,
    rng: &mut R,
) -> Result<MoveProposal, MoveError> {
    let n = partition.graph().n_regions() as u32;
    let c = partition.n_clusters();
    let removed = partition.removed_edges();
    if removed.is_empty() {
        return Err(MoveError::NoEligibleEdge {
            kind: "death",
            n_clusters: c,
        });
    }
    let edge = removed[rng.random_range(0..removed.len())];
    let kept: Vec<usize> = removed.iter().copied().filter(|&e| e != edge).collect();
    let new_partition = Partition::derive(partition.tree(), &kept)?;
    let (affected_old, affected_new) = changed_clusters(partition, &new_partition);
    Ok(MoveProposal {
        kind: MoveKind::Death,
        partition: new_partition,
        weights: None,
        log_prior_ratio: log_prior_ratio(
            c,
            c - 1,
            config.geometric_q,
            n,
            config.include_partition_binomial,
        )?,
        log_transition_ratio: death_transition_ratio(config, c, n),
        affected_old,
        affected_new,
    })
}

/// A death composed with a birth on the merged state; the cluster count is
/// unchanged. The stage transition ratios cancel exactly.
pub fn propose_change<R: Rng + ?Sized>(
    partition: &Partition,
    config: &MoveConfig,
    rng: &mut R,
) -> Result<MoveProposal, MoveError> {
    let n = partition.graph().n_regions() as u32;
    let c = partition.n_clusters();
    if c <= 1 || c >= n {
        return Err(MoveError::NoEligibleEdge {
            kind: "change",
            n_clusters: c,
        });
    }
    let removed = partition.removed_edges();
    let merge_edge = removed[rng.random_range(0..removed.len())];
    let kept: Vec<usize> = removed.iter().copied().filter(|&e| e != merge_edge).collect();
    let merged = Partition::derive(partition.tree(), &kept)?;
    let (within, _) = merged.tree_edge_classes();
    let split_edge = within[rng.random_range(0..within.len())];
    let mut final_removed = kept;
    final_removed.push(split_edge);
    let new_partition = Partition::derive(partition.tree(), &final_removed)?;
    let (affected_old, affected_new) = changed_clusters(partition, &new_partition);
    let transition =
        death_transition_ratio(config, c, n) + birth_transition_ratio(config, c - 1, n);
    Ok(MoveProposal {
        kind: MoveKind::Change,
        partition: new_partition,
        weights: None,
        log_prior_ratio: log_prior_ratio(
            c,
            c,
            config.geometric_q,
            n,
            config.include_partition_binomial,
        )?,
        log_transition_ratio: transition,
        affected_old,
        affected_new,
    })
}

/// Resamples the spanning tree compatibly with the current partition.
///
/// Fresh weights are drawn U(0,1) on within-cluster graph edges and U(1,2)
/// on between-cluster graph edges; with frozen weights the stored base
/// weights are kept and between-cluster edges are shifted by +1. Either way
/// every between-cluster edge is costlier than any within-cluster spanning
/// structure, so the MST's induced partition reproduces the membership
/// exactly and the move is always accepted.
pub fn propose_hyper<R: Rng + ?Sized>(
    partition: &Partition,
    base_weights: &EdgeWeights,
    config: &MoveConfig,
    rng: &mut R,
) -> Result<MoveProposal, MoveError> {
    let graph = partition.graph();
    let membership = partition.membership();
    let mut values = Vec::with_capacity(graph.n_edges());
    for (idx, &(a, b)) in graph.edges().iter().enumerate() {
        let between = membership[a as usize] != membership[b as usize];
        let base = if config.freeze_weights {
            base_weights.get(idx)
        } else {
            rng.random::<f64>()
        };
        values.push(if between { base + 1.0 } else { base });
    }
    let weights = EdgeWeights::new(graph, values)?;
    let tree = SpanningTree::minimum(graph, &weights)?;
    let removed: Vec<usize> = tree
        .edge_ids()
        .iter()
        .copied()
        .filter(|&e| {
            let (a, b) = graph.edge(e);
            membership[a as usize] != membership[b as usize]
        })
        .collect();
    let new_partition = Partition::derive(&tree, &removed)?;
    debug_assert_eq!(new_partition.membership(), membership);
    Ok(MoveProposal {
        kind: MoveKind::Hyper,
        partition: new_partition,
        weights: Some(weights),
        log_prior_ratio: 0.0,
        log_transition_ratio: 0.0,
        affected_old: Vec::new(),
        affected_new: Vec::new(),
    })
}

/// Dispatches to the proposal function for `kind`.
pub fn propose<R: Rng + ?Sized>(
    kind: MoveKind,
    partition: &Partition,
    base_weights: &EdgeWeights,
    config: &MoveConfig,
    rng: &mut R,
) -> Result<MoveProposal, MoveError> {
    match kind {
        MoveKind::Birth => propose_birth(partition, config, rng),
        MoveKind::Death => propose_death(partition, config, rng),
        MoveKind::Change => propose_change(partition, config, rng),
        MoveKind::Hyper => propose_hyper(partition, base_weights, config, rng),
    }
}
