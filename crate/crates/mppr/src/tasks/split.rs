//! Node and edge splits with the leakage guarantees the pipelines rely
//! on: stratified label splits, spanning-tree-constrained edge splits
//! that keep the training graph connected, and negative sampling that
//! never returns a true edge.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Disjoint train/validation/test node index sets.
#[derive(Debug, Clone)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Stratified node split: `n_train_per_class` labeled nodes per class,
/// `n_val` random labeled nodes for validation, every remaining labeled
/// node for test. Unlabeled nodes belong to no split.
pub fn split_nodes(
    g: &Graph,
    n_train_per_class: usize,
    n_val: usize,
    seed: u64,
) -> Result<NodeSplit> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::Split("graph has no labels".into()))?;
    let n_classes = g.n_classes();
    if n_classes == 0 {
        return Err(Error::Split("graph has no labeled nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(n_train_per_class * n_classes);
    let mut rest = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..g.n_nodes())
            .filter(|&v| labels[v] == Some(class))
            .collect();
        if members.len() < n_train_per_class {
            return Err(Error::Split(format!(
                "class {class} has {} labeled nodes, needs {n_train_per_class}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..n_train_per_class]);
        rest.extend_from_slice(&members[n_train_per_class..]);
    }
    if rest.len() < n_val {
        return Err(Error::Split(format!(
            "{} labeled nodes left after training draw, cannot reserve {n_val} for validation",
            rest.len()
        )));
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let mut val: Vec<usize> = rest[..n_val].to_vec();
    let mut test: Vec<usize> = rest[n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(NodeSplit {
        train,
        val,
        test,
        seed,
    })
}

/// Train/validation/test weights for edge splitting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EdgeSplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for EdgeSplitRatios {
    fn default() -> Self {
        EdgeSplitRatios {
            train: 5.0,
            val: 1.0,
            test: 4.0,
        }
    }
}

impl EdgeSplitRatios {
    pub fn validate(&self) -> Result<()> {
        if self.train < 0.0 || self.val < 0.0 || self.test < 0.0 {
            return Err(Error::Domain("split ratios must be nonnegative".into()));
        }
        if self.train + self.val + self.test <= 0.0 {
            return Err(Error::Domain("split ratios must not all be zero".into()));
        }
        Ok(())
    }
}

/// Undirected positive edges per split, matching negatives, and the
/// spanning tree that anchors the training graph. All pairs are stored
/// with the smaller id first.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub train_neg: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub tree_edges: Vec<(usize, usize)>,
    pub seed: u64,
}

fn undirected_pairs(g: &Graph) -> Vec<(usize, usize)> {
    let set: BTreeSet<(usize, usize)> = g
        .edges()
        .iter()
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    set.into_iter().collect()
}

fn undirected_neighbors(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in pairs {
        adj[u].push(v);
        adj[v].push(u);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

/// BFS spanning tree from node 0, visiting neighbors in ascending id
/// order. Returns `None` when the graph is disconnected.
fn bfs_spanning_tree(n: usize, adj: &[Vec<usize>]) -> Option<Vec<(usize, usize)>> {
    if n == 0 {
        return Some(Vec::new());
    }
    let mut seen = vec![false; n];
    let mut tree = Vec::with_capacity(n - 1);
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                tree.push((u.min(v), u.max(v)));
                queue.push_back(v);
            }
        }
    }
    if seen.iter().all(|&s| s) {
        Some(tree)
    } else {
        None
    }
}

/// Splits the undirected edge set by the given ratios, forcing a BFS
/// spanning tree (root 0, ascending neighbor order) into the training
/// set so the training graph stays connected. The remaining edges are
/// shuffled and fill validation, then test, to their targets; any
/// surplus joins training. Negatives are sampled 1:1 per split from the
/// non-edges of the whole graph, disjoint across splits.
pub fn split_edges(g: &Graph, ratios: EdgeSplitRatios, seed: u64) -> Result<EdgeSplit> {
    ratios.validate()?;
    let pairs = undirected_pairs(g);
    let n = g.n_nodes();
    let adj = undirected_neighbors(n, &pairs);
    let tree = bfs_spanning_tree(n, &adj).ok_or_else(|| {
        Error::Split("graph is disconnected; select the largest component first".into())
    })?;
    let tree_set: BTreeSet<(usize, usize)> = tree.iter().copied().collect();
    let mut rest: Vec<(usize, usize)> = pairs
        .iter()
        .copied()
        .filter(|p| !tree_set.contains(p))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);

    let m = pairs.len() as f64;
    let total = ratios.train + ratios.val + ratios.test;
    let val_target = (m * ratios.val / total).round() as usize;
    let test_target = (m * ratios.test / total).round() as usize;
    let val_take = val_target.min(rest.len());
    let test_take = test_target.min(rest.len() - val_take);
    let val_pos: Vec<_> = rest[..val_take].to_vec();
    let test_pos: Vec<_> = rest[val_take..val_take + test_take].to_vec();
    let mut train_pos: Vec<_> = tree.clone();
    train_pos.extend_from_slice(&rest[val_take + test_take..]);
    train_pos.sort_unstable();

    let k_train = train_pos.len();
    let k_val = val_pos.len();
    let k_test = test_pos.len();
    let negatives = sample_negatives(g, k_train + k_val + k_test, rng.gen::<u64>())?;
    let train_neg = negatives[..k_train].to_vec();
    let val_neg = negatives[k_train..k_train + k_val].to_vec();
    let test_neg = negatives[k_train + k_val..].to_vec();

    Ok(EdgeSplit {
        train_pos,
        val_pos,
        test_pos,
        train_neg,
        val_neg,
        test_neg,
        tree_edges: tree,
        seed,
    })
}

/// Uniform sample of `k` distinct unordered node pairs that are
/// non-edges of `g` in either orientation. Rejection sampling against a
/// seen-set, with an exhaustive fallback when the request approaches
/// capacity.
pub fn sample_negatives(g: &Graph, k: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let n = g.n_nodes();
    let edge_set: BTreeSet<(usize, usize)> = g
        .edges()
        .iter()
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    let capacity = n * (n.saturating_sub(1)) / 2 - edge_set.len();
    if k > capacity {
        return Err(Error::Capacity(format!(
            "requested {k} negatives, only {capacity} non-edges exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if k * 2 > capacity {
        // Dense regime: enumerate, shuffle, take.
        let mut all: Vec<(usize, usize)> = Vec::with_capacity(capacity);
        for u in 0..n {
            for v in (u + 1)..n {
                if !edge_set.contains(&(u, v)) {
                    all.push((u, v));
                }
            }
        }
        all.shuffle(&mut rng);
        all.truncate(k);
        return Ok(all);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if edge_set.contains(&pair) || !seen.insert(pair) {
            continue;
        }
        out.push(pair);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{community_graph, CommunityGraphSpec};
    use ndarray::Array2;

    fn labeled_graph(n: usize, classes: usize, edges: Vec<(usize, usize)>) -> Graph {
        let labels = Some((0..n).map(|v| Some(v % classes)).collect());
        Graph::new(n, edges, Array2::zeros((n, 2)), labels).unwrap()
    }

    #[test]
    fn stratified_split_sizes() {
        let g = labeled_graph(70, 7, vec![]);
        let split = split_nodes(&g, 5, 10, 3).unwrap();
        assert_eq!(split.train.len(), 35);
        assert_eq!(split.val.len(), 10);
        assert_eq!(split.test.len(), 25);
        // per-class stratification
        let labels = g.labels().unwrap();
        for class in 0..7 {
            let count = split
                .train
                .iter()
                .filter(|&&v| labels[v] == Some(class))
                .count();
            assert_eq!(count, 5);
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let g = labeled_graph(40, 4, vec![]);
        let a = split_nodes(&g, 4, 8, 11).unwrap();
        let b = split_nodes(&g, 4, 8, 11).unwrap();
        let c = split_nodes(&g, 4, 8, 12).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_sets_are_disjoint_and_cover_labeled_nodes() {
        let g = labeled_graph(30, 3, vec![]);
        let split = split_nodes(&g, 3, 6, 7).unwrap();
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        let dedup_len = {
            let mut d = all.clone();
            d.dedup();
            d.len()
        };
        assert_eq!(all.len(), dedup_len, "splits overlap");
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_scarce_classes() {
        let g = labeled_graph(10, 5, vec![]);
        assert!(matches!(
            split_nodes(&g, 3, 0, 1),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn tree_graph_puts_every_edge_in_train() {
        // A path graph: the spanning tree is the whole edge set.
        let edges: Vec<_> = (0..9).map(|i| (i, i + 1)).collect();
        let g = labeled_graph(10, 2, edges);
        let split = split_edges(&g, EdgeSplitRatios::default(), 5).unwrap();
        assert_eq!(split.train_pos.len(), 9);
        assert!(split.val_pos.is_empty());
        assert!(split.test_pos.is_empty());
    }

    #[test]
    fn cycle_graph_allocates_the_single_spare_edge() {
        let edges: Vec<_> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
        let g = labeled_graph(10, 2, edges);
        let split = split_edges(&g, EdgeSplitRatios::default(), 9).unwrap();
        assert_eq!(split.tree_edges.len(), 9);
        assert!(split.train_pos.len() >= 9);
        let extra = split.val_pos.len() + split.test_pos.len() + split.train_pos.len() - 10;
        assert_eq!(extra, 0, "every edge lands in exactly one split");
        // the one non-tree edge fills validation first
        assert_eq!(split.val_pos.len(), 1);
    }

    #[test]
    fn train_graph_stays_connected_on_seeded_community_graphs() {
        for seed in 0..20u64 {
            let spec = CommunityGraphSpec {
                n_nodes: 40,
                n_classes: 4,
                n_features: 8,
                n_edge_pairs: 90,
                intra_fraction: 0.7,
                locality: 0.4,
                reciprocation: 0.3,
                feature_on_rate: 0.2,
                feature_window: 0,
                feature_off_rate: 0.05,
                seed,
            };
            let g = community_graph(&spec);
            let lcc = g.induced_subgraph(&g.largest_component()).unwrap();
            let split = split_edges(&lcc, EdgeSplitRatios::default(), seed * 13 + 1).unwrap();
            // reachability over train edges only
            let n = lcc.n_nodes();
            let adj = undirected_neighbors(n, &split.train_pos);
            let tree = bfs_spanning_tree(n, &adj);
            assert!(tree.is_some(), "seed {seed}: train graph disconnected");
            // splits partition the undirected edge set
            let total =
                split.train_pos.len() + split.val_pos.len() + split.test_pos.len();
            assert_eq!(total, undirected_pairs(&lcc).len());
            // negatives are true non-edges, 1:1 per split
            assert_eq!(split.train_neg.len(), split.train_pos.len());
            assert_eq!(split.val_neg.len(), split.val_pos.len());
            assert_eq!(split.test_neg.len(), split.test_pos.len());
            let edge_set: BTreeSet<(usize, usize)> = lcc
                .edges()
                .iter()
                .map(|&(u, v)| (u.min(v), u.max(v)))
                .collect();
            for neg in split
                .train_neg
                .iter()
                .chain(&split.val_neg)
                .chain(&split.test_neg)
            {
                assert!(!edge_set.contains(neg));
            }
        }
    }

    #[test]
    fn split_edges_rejects_disconnected_graphs() {
        let g = labeled_graph(4, 2, vec![(0, 1), (2, 3)]);
        assert!(matches!(
            split_edges(&g, EdgeSplitRatios::default(), 0),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn negatives_on_complete_graph_hit_capacity() {
        let mut edges = Vec::new();
        for u in 0..5 {
            for v in 0..5 {
                if u != v {
                    edges.push((u, v));
                }
            }
        }
        let g = labeled_graph(5, 2, edges);
        assert!(matches!(
            sample_negatives(&g, 1, 0),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn negatives_on_empty_graph_enumerate_all_pairs() {
        let g = labeled_graph(3, 2, vec![]);
        let mut negatives = sample_negatives(&g, 3, 1).unwrap();
        negatives.sort_unstable();
        assert_eq!(negatives, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn negatives_avoid_edges_and_duplicates_at_scale() {
        let spec = CommunityGraphSpec {
            n_nodes: 200,
            n_classes: 4,
            n_features: 4,
            n_edge_pairs: 400,
            intra_fraction: 0.8,
            locality: 0.3,
            reciprocation: 0.2,
            feature_on_rate: 0.1,
            feature_off_rate: 0.02,
            seed: 5,
        };
        let g = community_graph(&spec);
        let negatives = sample_negatives(&g, 10_000, 77).unwrap();
        assert_eq!(negatives.len(), 10_000);
        let unique: BTreeSet<_> = negatives.iter().copied().collect();
        assert_eq!(unique.len(), negatives.len(), "duplicate negative drawn");
        let edge_set: BTreeSet<(usize, usize)> = g
            .edges()
            .iter()
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        assert!(unique.is_disjoint(&edge_set));
    }
}
