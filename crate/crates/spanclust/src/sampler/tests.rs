use std::collections::HashMap;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::model::{HyperParams, ModelConfig, PriorSpec};
use crate::moves::propose_hyper;

/// Synthetic evaluator with a flat likelihood: every cluster scores zero,
/// so acceptance is driven purely by the prior and transition ratios.
struct FlatEvaluator;

impl MarginalEvaluator for FlatEvaluator {
    fn log_marginal(&self, _members: &[u32]) -> Result<CachedMarginal, LaplaceError> {
        Ok(CachedMarginal {
            log_marginal: 0.0,
            theta_mode: vec![],
            fallback: false,
            newton_iters_max: 0,
        })
    }
}

/// Evaluator that scores a cluster by how well it matches a target
/// membership: clusters that are pure under the target get a bonus per
/// member. Cheap stand-in for a real likelihood with a known optimum.
struct TargetEvaluator {
    target: Vec<u32>,
    strength: f64,
}

impl MarginalEvaluator for TargetEvaluator {
    fn log_marginal(&self, members: &[u32]) -> Result<CachedMarginal, LaplaceError> {
        let first = self.target[members[0] as usize];
        let pure = members.iter().all(|&m| self.target[m as usize] == first);
        let score = if pure {
            self.strength * members.len() as f64
        } else {
            -self.strength * members.len() as f64
        };
        Ok(CachedMarginal {
            log_marginal: score,
            theta_mode: vec![],
            fallback: false,
            newton_iters_max: 0,
        })
    }
}

fn random_graph(n: usize, seed: u64) -> Arc<SpatialGraph> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for v in 1..n as u32 {
        let u = rng.random_range(0..v);
        edges.push((u, v));
    }
    for a in 0..n as u32 {
        for b in (a + 1)..n as u32 {
            if !edges.contains(&(a, b)) && rng.random::<f64>() < 0.2 {
                edges.push((a, b));
            }
        }
    }
    Arc::new(SpatialGraph::new(n, &edges, None).unwrap())
}

#[test]
fn init_c0_one_is_single_cluster() {
    let graph = random_graph(8, 1);
    let config = ChainConfig {
        c0: 1,
        ..ChainConfig::default()
    };
    let state = init_chain(&graph, &FlatEvaluator, &config).unwrap();
    assert_eq!(state.partition.n_clusters(), 1);
    assert!(state.partition.removed_edges().is_empty());
}

#[test]
fn init_c0_n_is_all_singletons() {
    let graph = random_graph(8, 2);
    let config = ChainConfig {
        c0: 8,
        ..ChainConfig::default()
    };
    let state = init_chain(&graph, &FlatEvaluator, &config).unwrap();
    assert_eq!(state.partition.n_clusters(), 8);
    assert_eq!(state.partition.removed_edges().len(), 7);
}

#[test]
fn init_c0_fifteen_on_hundred_regions() {
    let graph = random_graph(100, 3);
    let config = ChainConfig {
        c0: 15,
        ..ChainConfig::default()
    };
    let state = init_chain(&graph, &FlatEvaluator, &config).unwrap();
    assert_eq!(state.partition.n_clusters(), 15);
    assert!(state.partition.check_invariants());
    assert_eq!(state.cache.len(), 15);
}

#[test]
fn init_rejects_bad_c0() {
    let graph = random_graph(8, 4);
    let config = ChainConfig {
        c0: 9,
        ..ChainConfig::default()
    };
    assert!(matches!(
        init_chain(&graph, &FlatEvaluator, &config),
        Err(SamplerError::InvalidInitialClusters { .. })
    ));
}

#[test]
fn zero_iterations_leaves_state_initial() {
    let graph = random_graph(8, 5);
    let config = ChainConfig {
        c0: 3,
        iterations: 0,
        ..ChainConfig::default()
    };
    let state = init_chain(&graph, &FlatEvaluator, &config).unwrap();
    let membership = state.partition.membership().to_vec();
    let out = run_chain_from(state, &FlatEvaluator, &config, 0).unwrap();
    assert!(out.records.is_empty());
    let restored = out.checkpoint.restore(None).unwrap();
    assert_eq!(restored.partition.membership(), membership.as_slice());
    assert_eq!(restored.iter, 0);
}

#[test]
fn hyper_moves_are_always_accepted() {
    let graph = random_graph(10, 6);
    let config = ChainConfig {
        c0: 4,
        iterations: 300,
        seed: 9,
        ..ChainConfig::default()
    };
    let out = run_chain(&graph, &FlatEvaluator, &config).unwrap();
    assert_eq!(out.acceptance.rate(MoveKind::Hyper), Some(1.0));
    for r in &out.records {
        if r.kind == MoveKind::Hyper {
            assert!(r.accepted);
        }
    }
}

#[test]
fn acceptance_log_prob_hyper_is_zero() {
    let graph = random_graph(9, 7);
    let config = ChainConfig {
        c0: 3,
        ..ChainConfig::default()
    };
    let mut state = init_chain(&graph, &FlatEvaluator, &config).unwrap();
    let prop = propose_hyper(
        &state.partition,
        &state.weights,
        &config.moves,
        &mut state.rng,
    )
    .unwrap();
    let log_acc = acceptance_log_prob(&state, &prop, &HashMap::new()).unwrap();
    assert_eq!(log_acc, 0.0);
}

#[test]
fn missing_marginal_is_reported() {
    let graph = random_graph(9, 8);
    let config = ChainConfig {
        c0: 2,
        ..ChainConfig::default()
    };
    let mut state = init_chain(&graph, &FlatEvaluator, &config).unwrap();
    let prop = crate::moves::propose_birth(&state.partition, &config.moves, &mut state.rng).unwrap();
    let err = acceptance_log_prob(&state, &prop, &HashMap::new()).unwrap_err();
    assert!(matches!(err, SamplerError::MissingMarginal(_)));
}

#[test]
fn identical_seed_gives_identical_trace_bytes() {
    let graph = random_graph(12, 10);
    let config = ChainConfig {
        c0: 5,
        iterations: 400,
        seed: 1234,
        ..ChainConfig::default()
    };
    let a = run_chain(&graph, &FlatEvaluator, &config).unwrap();
    let b = run_chain(&graph, &FlatEvaluator, &config).unwrap();
    let text_a = records_to_csv(&a.records, &[]);
    let text_b = records_to_csv(&b.records, &[]);
    assert_eq!(text_a.as_bytes(), text_b.as_bytes());
}

#[test]
fn checkpoint_resume_reproduces_straight_run() {
    let graph = random_graph(11, 11);
    let config = ChainConfig {
        c0: 4,
        iterations: 120,
        seed: 77,
        ..ChainConfig::default()
    };
    let straight = run_chain(&graph, &FlatEvaluator, &config).unwrap();

    let half = ChainConfig {
        iterations: 60,
        ..config.clone()
    };
    let first = run_chain(&graph, &FlatEvaluator, &half).unwrap();
    let json = first.checkpoint.to_json();
    let restored = Checkpoint::from_json(&json).unwrap().restore(None).unwrap();
    let second = run_chain_from(restored, &FlatEvaluator, &half, 60).unwrap();

    assert_eq!(straight.records.len(), 120);
    assert_eq!(&straight.records[..60], &first.records[..]);
    assert_eq!(&straight.records[60..], &second.records[..]);
}

#[test]
fn flat_likelihood_acceptance_matches_prior_driven_rates() {
    // With a flat likelihood and the partition-binomial prior term, the
    // interior acceptance probability for a birth is exactly
    // (1 - q) r_d / r_b and every interior death is accepted.
    let graph = random_graph(8, 12);
    let q = 0.3;
    let config = ChainConfig {
        c0: 3,
        iterations: 5000,
        seed: 2024,
        moves: MoveConfig {
            geometric_q: q,
            ..MoveConfig::default()
        },
        ..ChainConfig::default()
    };
    let state = init_chain(&graph, &FlatEvaluator, &config).unwrap();
    let mut state = state;
    let n = 8u32;
    let mut birth_interior = [0u64; 2]; // [accepted, rejected]
    let mut death_interior_rejections = 0u64;
    for _ in 0..config.iterations {
        let c = state.partition.n_clusters();
        let kind = draw_move_kind(&config.moves, c, n, &mut state.rng);
        let proposal = propose(kind, &state.partition, &state.weights, &config.moves, &mut state.rng).unwrap();
        let mut fresh = HashMap::new();
        for &label in &proposal.affected_new {
            let mut key = proposal.partition.members(label).to_vec();
            key.sort_unstable();
            fresh.insert(key, 0.0);
        }
        let log_acc = acceptance_log_prob(&state, &proposal, &fresh).unwrap();
        let accepted = log_acc >= 0.0 || state.rng.random::<f64>().ln() < log_acc;
        let interior_birth = kind == MoveKind::Birth && c >= 2 && c + 1 <= n - 1;
        let interior_death = kind == MoveKind::Death && c >= 3 && c <= n - 1;
        if interior_birth {
            birth_interior[usize::from(!accepted)] += 1;
        }
        if interior_death && !accepted {
            death_interior_rejections += 1;
        }
        if accepted {
            for &label in &proposal.affected_new {
                let members = proposal.partition.members(label).to_vec();
                state.cache.insert(
                    &members,
                    CachedMarginal {
                        log_marginal: 0.0,
                        theta_mode: vec![],
                        fallback: false,
                        newton_iters_max: 0,
                    },
                );
            }
            state.partition = proposal.partition;
            if let Some(w) = proposal.weights {
                state.weights = w;
            }
        }
    }
    assert_eq!(death_interior_rejections, 0, "interior deaths always accept");
    let total = (birth_interior[0] + birth_interior[1]) as f64;
    assert!(total > 300.0, "need enough interior births, got {total}");
    let p = 1.0 - q;
    let expected = [total * p, total * (1.0 - p)];
    let chi2: f64 = birth_interior
        .iter()
        .zip(expected)
        .map(|(&obs, exp)| (obs as f64 - exp).powi(2) / exp)
        .sum();
    // 1 degree of freedom; critical value at alpha = 0.001 is 10.83.
    assert!(
        chi2 < 10.83,
        "chi-square {chi2} too large: observed {birth_interior:?}, expected {expected:?}"
    );
}

#[test]
fn chain_concentrates_on_target_partition() {
    // A strong synthetic likelihood pulls the chain onto the target
    // membership and keeps it there.
    let graph = random_graph(12, 13);
    // Target: a contiguous two-cluster partition cut from a spanning tree.
    let target = {
        let mut rng = ChaCha20Rng::seed_from_u64(555);
        crate::simdata::true_partition_from_mst(&graph, 2, &mut rng)
            .unwrap()
            .membership()
            .to_vec()
    };
    let evaluator = TargetEvaluator {
        target: target.clone(),
        strength: 50.0,
    };
    let config = ChainConfig {
        c0: 6,
        iterations: 2000,
        seed: 5,
        ..ChainConfig::default()
    };
    let out = run_chain(&graph, &evaluator, &config).unwrap();
    let last = out.records.last().unwrap();
    let final_membership = decode_rle(&last.membership_rle).unwrap();
    // Compare as partitions (labels may differ).
    let ari = crate::posterior::adjusted_rand_index(&final_membership, &target)
        .unwrap()
        .ari;
    assert!(ari > 0.99, "chain failed to concentrate: ARI = {ari}");
}

#[test]
fn incremental_total_matches_fresh_recomputation_gaussian() {
    // Small real-likelihood fixture: the running total must equal the
    // from-scratch sum over current clusters at every checkpoint.
    let spec = ModelConfig {
        family: "gaussian".to_string(),
        components: vec!["intercept".to_string()],
        t_len: 6,
        ..ModelConfig::default()
    };
    let spec = crate::model::ModelSpec::from_config(&spec).unwrap();
    let graph = random_graph(10, 14);
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let y = DMatrix::from_fn(10, 6, |i, _| {
        if i < 5 {
            rng.random_range(-0.2..0.2)
        } else {
            2.0 + rng.random_range(-0.2..0.2)
        }
    });
    let panel = Panel::new(y, DMatrix::zeros(10, 6), (0..6).map(|t| t as f64).collect()).unwrap();
    let evaluator = LaplaceEvaluator {
        panel: &panel,
        spec: &spec,
        opts: LaplaceOptions::default(),
    };
    let config = ChainConfig {
        c0: 4,
        iterations: 60,
        seed: 3,
        ..ChainConfig::default()
    };
    let out = run_chain(&graph, &evaluator, &config).unwrap();
    for check_iter in [20usize, 40, 60] {
        let record = &out.records[check_iter - 1];
        let membership = decode_rle(&record.membership_rle).unwrap();
        let n_clusters = membership.iter().max().unwrap() + 1;
        let mut fresh_total = 0.0;
        for label in 0..n_clusters {
            let members: Vec<u32> = membership
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == label)
                .map(|(i, _)| i as u32)
                .collect();
            fresh_total += evaluator.log_marginal(&members).unwrap().log_marginal;
        }
        assert_relative_eq!(record.log_marginal, fresh_total, epsilon = 1e-8);
    }
}

#[test]
fn tolerate_nonconverged_rejects_and_logs() {
    struct FailingEvaluator;
    impl MarginalEvaluator for FailingEvaluator {
        fn log_marginal(&self, members: &[u32]) -> Result<CachedMarginal, LaplaceError> {
            if members.len() == 1 {
                Err(LaplaceError::NoConvergence {
                    iters: 50,
                    grad_norm: 1.0,
                })
            } else {
                Ok(CachedMarginal {
                    log_marginal: 0.0,
                    theta_mode: vec![],
                    fallback: false,
                    newton_iters_max: 0,
                })
            }
        }
    }
    // Start from a single cluster so priming succeeds; births then create
    // singletons whose evaluations fail.
    let graph = random_graph(8, 15);
    let config = ChainConfig {
        c0: 1,
        iterations: 200,
        seed: 8,
        tolerate_nonconverged: true,
        ..ChainConfig::default()
    };
    let out = run_chain(&graph, &FailingEvaluator, &config).unwrap();
    let failures: Vec<_> = out
        .diagnostics
        .iter()
        .filter(|d| d.error.is_some())
        .collect();
    assert!(!failures.is_empty(), "expected some failed evaluations");
    // Failed proposals must have been rejected.
    for d in &failures {
        let record = &out.records[(d.iter - 1) as usize];
        assert!(!record.accepted);
    }

    let strict = ChainConfig {
        tolerate_nonconverged: false,
        ..config
    };
    assert!(run_chain(&graph, &FailingEvaluator, &strict).is_err());
}

#[test]
fn threaded_priming_matches_sequential() {
    let graph = random_graph(20, 16);
    let base = ChainConfig {
        c0: 8,
        iterations: 50,
        seed: 21,
        ..ChainConfig::default()
    };
    let threaded = ChainConfig {
        threads: 4,
        ..base.clone()
    };
    let a = run_chain(&graph, &FlatEvaluator, &base).unwrap();
    let b = run_chain(&graph, &FlatEvaluator, &threaded).unwrap();
    assert_eq!(
        records_to_csv(&a.records, &[]),
        records_to_csv(&b.records, &[])
    );
}

#[test]
fn composition_sample_covers_all_clusters() {
    let cfg = ModelConfig {
        family: "gaussian".to_string(),
        components: vec!["intercept".to_string()],
        t_len: 5,
        priors: [(
            "obs.log_prec".to_string(),
            PriorSpec::Fixed { value: 1.0 },
        )]
        .into_iter()
        .collect(),
        ..ModelConfig::default()
    };
    let spec = crate::model::ModelSpec::from_config(&cfg).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let y = DMatrix::from_fn(6, 5, |i, _| i as f64 + rng.random_range(-0.1..0.1));
    let panel = Panel::new(y, DMatrix::zeros(6, 5), (0..5).map(|t| t as f64).collect()).unwrap();
    let membership = vec![0, 0, 1, 1, 1, 0];
    let curves =
        composition_sample(&panel, &spec, &membership, &LaplaceOptions::default(), 500, &mut rng)
            .unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[0].members, vec![0, 1, 5]);
    assert_eq!(curves[1].members, vec![2, 3, 4]);
    let _ = HyperParams::initial(&spec);
}

#[test]
fn cluster_curves_depend_only_on_their_data() {
    let cfg = ModelConfig {
        family: "gaussian".to_string(),
        components: vec!["intercept".to_string()],
        t_len: 4,
        priors: [(
            "obs.log_prec".to_string(),
            PriorSpec::Fixed { value: 0.5 },
        )]
        .into_iter()
        .collect(),
        ..ModelConfig::default()
    };
    let spec = crate::model::ModelSpec::from_config(&cfg).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let y = DMatrix::from_fn(4, 4, |i, _| i as f64 + rng.random_range(-0.1..0.1));
    let times: Vec<f64> = (0..4).map(|t| t as f64).collect();
    let panel = Panel::new(y.clone(), DMatrix::zeros(4, 4), times.clone()).unwrap();
    // Permute the *other* cluster's rows: cluster {0,1} results must not move.
    let mut y2 = y.clone();
    for t in 0..4 {
        y2.swap((2, t), (3, t));
    }
    let panel2 = Panel::new(y2, DMatrix::zeros(4, 4), times).unwrap();
    let membership = vec![0, 0, 1, 1];

    let mut rng_a = ChaCha20Rng::seed_from_u64(10);
    let mut rng_b = ChaCha20Rng::seed_from_u64(10);
    let a = composition_sample(&panel, &spec, &membership, &LaplaceOptions::default(), 400, &mut rng_a)
        .unwrap();
    let b = composition_sample(&panel2, &spec, &membership, &LaplaceOptions::default(), 400, &mut rng_b)
        .unwrap();
    for t in 0..4 {
        assert_relative_eq!(
            a[0].summary.h_mean[t],
            b[0].summary.h_mean[t],
            epsilon = 1e-10
        );
    }
}
