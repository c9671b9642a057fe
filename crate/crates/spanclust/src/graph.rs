//! Region adjacency graphs, spanning trees, and tree-induced partitions.
//!
//! A partition of the study area into spatially contiguous clusters is
//! represented by a spanning tree of the adjacency graph together with a set
//! of removed tree edges: the connected components of the pruned tree are the
//! clusters. All types here are immutable after construction and cheap to
//! clone (the graph itself is shared behind an `Arc`).

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::GraphError;

/// Undirected adjacency graph over `n_regions` regions indexed `0..n`.
///
/// Edges are stored with the smaller endpoint first and sorted
/// lexicographically, so edge indices are stable and reproducible.
#[derive(Debug, Clone)]
pub struct SpatialGraph {
    n_regions: usize,
    edges: Vec<(u32, u32)>,
    region_ids: Option<Vec<String>>,
    adjacency: Vec<Vec<u32>>,
    edge_lookup: HashMap<(u32, u32), usize>,
}

impl SpatialGraph {
    /// Builds and validates a graph. Rejects self loops, duplicate edges,
    /// out-of-range endpoints, and disconnected graphs (the error lists the
    /// components found by traversal).
    pub fn new(
        n_regions: usize,
        edges: &[(u32, u32)],
        region_ids: Option<Vec<String>>,
    ) -> Result<Self, GraphError> {
        if n_regions < 2 {
            return Err(GraphError::TooFewRegions(n_regions));
        }
        if edges.is_empty() {
            return Err(GraphError::NoEdges);
        }
        if let Some(ids) = &region_ids {
            if ids.len() != n_regions {
                return Err(GraphError::RegionIdLength {
                    got: ids.len(),
                    expected: n_regions,
                });
            }
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            for v in [a, b] {
                if v as usize >= n_regions {
                    return Err(GraphError::IndexOutOfRange {
                        index: v,
                        n_regions,
                    });
                }
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        for w in normalized.windows(2) {
            if w[0] == w[1] {
                return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
            }
        }
        let mut adjacency = vec![Vec::new(); n_regions];
        let mut edge_lookup = HashMap::with_capacity(normalized.len());
        for (idx, &(a, b)) in normalized.iter().enumerate() {
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
            edge_lookup.insert((a, b), idx);
        }
        let graph = Self {
            n_regions,
            edges: normalized,
            region_ids,
            adjacency,
            edge_lookup,
        };
        let components = graph.components_of(&(0..graph.edges.len()).collect::<Vec<_>>());
        if components.len() > 1 {
            return Err(GraphError::DisconnectedGraph(components));
        }
        Ok(graph)
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic order, smaller endpoint first.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> (u32, u32) {
        self.edges[idx]
    }

    /// Index of the edge between `a` and `b`, if present.
    pub fn edge_index(&self, a: u32, b: u32) -> Option<usize> {
        self.edge_lookup.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn neighbors(&self, region: u32) -> &[u32] {
        &self.adjacency[region as usize]
    }

    pub fn region_ids(&self) -> Option<&[String]> {
        self.region_ids.as_deref()
    }

    /// Connected components induced by a subset of edge indices, each
    /// component listed in ascending region order; components are ordered by
    /// their smallest member.
    pub fn components_of(&self, edge_subset: &[usize]) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n_regions];
        for &e in edge_subset {
            let (a, b) = self.edges[e];
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        let mut seen = vec![false; self.n_regions];
        let mut components = Vec::new();
        for start in 0..self.n_regions as u32 {
            if seen[start as usize] {
                continue;
            }
            let mut queue = vec![start];
            seen[start as usize] = true;
            let mut comp = Vec::new();
            while let Some(v) = queue.pop() {
                comp.push(v);
                for &w in &adj[v as usize] {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        queue.push(w);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }
}

/// One weight per graph edge, indexed like [`SpatialGraph::edges`].
#[derive(Debug, Clone)]
pub struct EdgeWeights {
    values: Vec<f64>,
}

impl EdgeWeights {
    /// Weights given in edge-index order. All weights must be finite.
    pub fn new(graph: &SpatialGraph, values: Vec<f64>) -> Result<Self, GraphError> {
        if values.len() != graph.n_edges() {
            return Err(GraphError::WeightCount {
                got: values.len(),
                expected: graph.n_edges(),
            });
        }
        for (idx, w) in values.iter().enumerate() {
            if !w.is_finite() {
                let (a, b) = graph.edge(idx);
                return Err(GraphError::NonFiniteWeight(a, b));
            }
        }
        Ok(Self { values })
    }

    /// Weights given as an edge → weight map; every graph edge must appear.
    pub fn from_map(
        graph: &SpatialGraph,
        weights: &HashMap<(u32, u32), f64>,
    ) -> Result<Self, GraphError> {
        let mut values = Vec::with_capacity(graph.n_edges());
        for &(a, b) in graph.edges() {
            let w = weights
                .get(&(a, b))
                .or_else(|| weights.get(&(b, a)))
                .copied()
                .ok_or(GraphError::MissingWeight(a, b))?;
            values.push(w);
        }
        Self::new(graph, values)
    }

    /// Independent U(0,1) draws, one per edge.
    pub fn uniform_random<R: Rng + ?Sized>(graph: &SpatialGraph, rng: &mut R) -> Self {
        let values = (0..graph.n_edges()).map(|_| rng.random::<f64>()).collect();
        Self { values }
    }

    pub fn get(&self, edge_idx: usize) -> f64 {
        self.values[edge_idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A spanning tree of a [`SpatialGraph`], stored as edge indices.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    graph: Arc<SpatialGraph>,
    edge_ids: Vec<usize>,
}

impl SpanningTree {
    /// Minimum spanning tree under the given weights (Kruskal). Ties are
    /// broken by lexicographic edge order so the result is deterministic.
    pub fn minimum(graph: &Arc<SpatialGraph>, weights: &EdgeWeights) -> Result<Self, GraphError> {
        if weights.values().len() != graph.n_edges() {
            return Err(GraphError::WeightCount {
                got: weights.values().len(),
                expected: graph.n_edges(),
            });
        }
        let mut order: Vec<usize> = (0..graph.n_edges()).collect();
        // Edge indices are already lexicographic, so a stable sort on weight
        // alone realizes the tie-break.
        order.sort_by(|&a, &b| weights.get(a).total_cmp(&weights.get(b)));
        let mut dsu = DisjointSet::new(graph.n_regions());
        let mut edge_ids = Vec::with_capacity(graph.n_regions() - 1);
        for e in order {
            let (a, b) = graph.edge(e);
            if dsu.union(a as usize, b as usize) {
                edge_ids.push(e);
                if edge_ids.len() == graph.n_regions() - 1 {
                    break;
                }
            }
        }
        debug_assert_eq!(edge_ids.len(), graph.n_regions() - 1);
        edge_ids.sort_unstable();
        Ok(Self {
            graph: Arc::clone(graph),
            edge_ids,
        })
    }

    /// Builds a tree from explicit edge indices (must form a spanning tree).
    pub fn from_edge_ids(graph: &Arc<SpatialGraph>, mut edge_ids: Vec<usize>) -> Result<Self, GraphError> {
        edge_ids.sort_unstable();
        edge_ids.dedup();
        if edge_ids.len() != graph.n_regions() - 1 {
            return Err(GraphError::WeightCount {
                got: edge_ids.len(),
                expected: graph.n_regions() - 1,
            });
        }
        let comps = graph.components_of(&edge_ids);
        if comps.len() != 1 {
            return Err(GraphError::DisconnectedGraph(comps));
        }
        Ok(Self {
            graph: Arc::clone(graph),
            edge_ids,
        })
    }

    pub fn graph(&self) -> &Arc<SpatialGraph> {
        &self.graph
    }

    /// Tree edge indices into the parent graph, ascending.
    pub fn edge_ids(&self) -> &[usize] {
        &self.edge_ids
    }

    pub fn contains_edge(&self, edge_id: usize) -> bool {
        self.edge_ids.binary_search(&edge_id).is_ok()
    }

    pub fn total_weight(&self, weights: &EdgeWeights) -> f64 {
        self.edge_ids.iter().map(|&e| weights.get(e)).sum()
    }
}

/// A partition of the regions induced by removing edges from a spanning tree.
///
/// Cluster labels are contiguous from 0 and canonicalized so that the cluster
/// containing the smallest region index gets label 0, the next smallest
/// unlabeled region's cluster gets label 1, and so on.
#[derive(Debug, Clone)]
pub struct Partition {
    tree: SpanningTree,
    removed_edges: Vec<usize>,
    membership: Vec<u32>,
    n_clusters: u32,
    member_sets: Vec<Vec<u32>>,
}

impl Partition {
    /// Connected components of the tree after removing `removed_edges`
    /// (which must all be tree edges).
    pub fn derive(tree: &SpanningTree, removed_edges: &[usize]) -> Result<Self, GraphError> {
        let mut removed: Vec<usize> = removed_edges.to_vec();
        removed.sort_unstable();
        removed.dedup();
        for &e in &removed {
            if !tree.contains_edge(e) {
                let (a, b) = tree.graph().edge(e);
                return Err(GraphError::EdgeNotInTree(a, b));
            }
        }
        let kept: Vec<usize> = tree
            .edge_ids()
            .iter()
            .copied()
            .filter(|e| removed.binary_search(e).is_err())
            .collect();
        let components = tree.graph().components_of(&kept);
        let n = tree.graph().n_regions();
        let mut membership = vec![u32::MAX; n];
        for (label, comp) in components.iter().enumerate() {
            for &v in comp {
                membership[v as usize] = label as u32;
            }
        }
        Ok(Self {
            tree: tree.clone(),
            removed_edges: removed,
            n_clusters: components.len() as u32,
            member_sets: components,
            membership,
        })
    }

    pub fn tree(&self) -> &SpanningTree {
        &self.tree
    }

    pub fn graph(&self) -> &Arc<SpatialGraph> {
        self.tree.graph()
    }

    /// Removed tree edge indices, ascending.
    pub fn removed_edges(&self) -> &[usize] {
        &self.removed_edges
    }

    /// Cluster label per region.
    pub fn membership(&self) -> &[u32] {
        &self.membership
    }

    pub fn n_clusters(&self) -> u32 {
        self.n_clusters
    }

    /// Members of each cluster, ascending within a cluster, indexed by label.
    pub fn member_sets(&self) -> &[Vec<u32>] {
        &self.member_sets
    }

    pub fn members(&self, label: u32) -> &[u32] {
        &self.member_sets[label as usize]
    }

    /// Tree edges split into within-cluster edges (endpoints share a
    /// cluster; `n - C` of them) and between-cluster edges (the removed
    /// ones; `C - 1`).
    pub fn tree_edge_classes(&self) -> (Vec<usize>, Vec<usize>) {
        let mut within = Vec::with_capacity(self.tree.edge_ids().len() + 1 - self.n_clusters as usize);
        let mut between = Vec::with_capacity(self.n_clusters as usize - 1);
        for &e in self.tree.edge_ids() {
            let (a, b) = self.graph().edge(e);
            if self.membership[a as usize] == self.membership[b as usize] {
                within.push(e);
            } else {
                between.push(e);
            }
        }
        (within, between)
    }

    /// Every cluster must induce a connected subgraph of the parent graph,
    /// and the number of removed edges must be `C - 1`. Used by tests and
    /// debug spot checks.
    pub fn check_invariants(&self) -> bool {
        if self.removed_edges.len() as u32 + 1 != self.n_clusters {
            return false;
        }
        let graph = self.graph();
        for members in &self.member_sets {
            // BFS restricted to the cluster over the *graph*, not the tree.
            let inside: std::collections::HashSet<u32> = members.iter().copied().collect();
            let mut seen = std::collections::HashSet::new();
            let mut queue = vec![members[0]];
            seen.insert(members[0]);
            while let Some(v) = queue.pop() {
                for &w in graph.neighbors(v) {
                    if inside.contains(&w) && seen.insert(w) {
                        queue.push(w);
                    }
                }
            }
            if seen.len() != members.len() {
                return false;
            }
        }
        let mut labels: Vec<u32> = self.membership.clone();
        labels.sort_unstable();
        labels.dedup();
        labels == (0..self.n_clusters).collect::<Vec<_>>()
    }
}

/// Labels of clusters whose member sets changed between two partitions:
/// `(labels in old but not new, labels in new but not old)`. These are
/// exactly the clusters whose data slices a move affects.
pub fn changed_clusters(old: &Partition, new: &Partition) -> (Vec<u32>, Vec<u32>) {
    use std::collections::HashSet;
    let old_sets: HashSet<&[u32]> = old.member_sets().iter().map(|m| m.as_slice()).collect();
    let new_sets: HashSet<&[u32]> = new.member_sets().iter().map(|m| m.as_slice()).collect();
    let gone = old
        .member_sets()
        .iter()
        .enumerate()
        .filter(|(_, m)| !new_sets.contains(m.as_slice()))
        .map(|(l, _)| l as u32)
        .collect();
    let fresh = new
        .member_sets()
        .iter()
        .enumerate()
        .filter(|(_, m)| !old_sets.contains(m.as_slice()))
        .map(|(l, _)| l as u32)
        .collect();
    (gone, fresh)
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}
