//! Seeded synthetic graphs: random directed adjacencies for verification,
//! and benchmark-style attributed graphs (community graphs with local
//! clustering, two-cluster toys, caveman pairs) for exercising the
//! training pipelines without external data.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

use crate::graph::Graph;
use crate::sparse::SparseMatrix;

/// Random directed graph: every ordered pair `u != v` carries an edge
/// independently with probability `density`.
pub fn random_directed_adjacency(n: usize, density: f64, seed: u64) -> SparseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen::<f64>() < density {
                triplets.push((u, v, 1.0));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("generated entries are in range")
}

/// Parameters for [`community_graph`].
#[derive(Debug, Clone)]
pub struct CommunityGraphSpec {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub n_features: usize,
    /// Undirected edge budget (node pairs before orientation).
    pub n_edge_pairs: usize,
    /// Fraction of edge pairs drawn inside a class.
    pub intra_fraction: f64,
    /// Geometric decay for ring-offset sampling inside a class; smaller
    /// values spread edges wider (weaker local clustering).
    pub locality: f64,
    /// Probability that an edge pair is kept in both directions.
    pub reciprocation: f64,
    /// Bernoulli rate of a node's own-class topic words.
    pub feature_on_rate: f64,
    /// Bernoulli rate of all other words.
    pub feature_off_rate: f64,
    /// Width (in words) of the sliding vocabulary window inside the class
    /// block. Zero activates the whole block uniformly; a narrow window
    /// makes ring-adjacent nodes share vocabulary, the way linked
    /// documents share terms.
    pub feature_window: usize,
    pub seed: u64,
}

impl CommunityGraphSpec {
    /// Citation-network-scale defaults: a few thousand nodes, seven
    /// classes, sparse bag-of-words features, strong homophily.
    pub fn citation_scale(seed: u64) -> Self {
        CommunityGraphSpec {
            n_nodes: 2708,
            n_classes: 7,
            n_features: 1433,
            n_edge_pairs: 5400,
            intra_fraction: 0.85,
            locality: 0.35,
            reciprocation: 0.2,
            feature_on_rate: 0.35,
            feature_off_rate: 0.005,
            feature_window: 30,
            seed,
        }
    }
}

/// Attributed directed graph with class communities. Intra-class pairs
/// are drawn by ring offsets (geometric decay), which produces the local
/// clustering and triangles that real citation graphs show; inter-class
/// pairs are uniform. Each pair is oriented randomly or reciprocated.
/// Features are sparse indicators concentrated on a per-class word block.
pub fn community_graph(spec: &CommunityGraphSpec) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_nodes;
    let c = spec.n_classes;

    // Shuffled class assignment, balanced up to remainder.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut class_of = vec![0usize; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (pos, &node) in order.iter().enumerate() {
        let k = pos % c;
        class_of[node] = k;
        members[k].push(node);
    }

    // Undirected pair sampling.
    let n_intra = ((spec.n_edge_pairs as f64) * spec.intra_fraction).round() as usize;
    let n_inter = spec.n_edge_pairs.saturating_sub(n_intra);
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut attempts = 0usize;
    let max_attempts = 200 * spec.n_edge_pairs + 10_000;
    while pairs.len() < n_intra && attempts < max_attempts {
        attempts += 1;
        let k = rng.gen_range(0..c);
        let group = &members[k];
        if group.len() < 2 {
            continue;
        }
        let i = rng.gen_range(0..group.len());
        // Ring offset with geometric decay: nearby members are preferred.
        let max_offset = (group.len() - 1) / 2 + 1;
        let mut offset = 1usize;
        while offset < max_offset && rng.gen::<f64>() > spec.locality {
            offset += 1;
        }
        let j = if rng.gen::<bool>() {
            (i + offset) % group.len()
        } else {
            (i + group.len() - offset % group.len()) % group.len()
        };
        if i == j {
            continue;
        }
        let (u, v) = (group[i].min(group[j]), group[i].max(group[j]));
        pairs.insert((u, v));
    }
    let intra_count = pairs.len();
    while pairs.len() < intra_count + n_inter && attempts < max_attempts {
        attempts += 1;
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v || class_of[u] == class_of[v] {
            continue;
        }
        pairs.insert((u.min(v), u.max(v)));
    }

    // Orientation.
    let mut edges = Vec::with_capacity(pairs.len() * 2);
    for (u, v) in pairs {
        if rng.gen::<f64>() < spec.reciprocation {
            edges.push((u, v));
            edges.push((v, u));
        } else if rng.gen::<bool>() {
            edges.push((u, v));
        } else {
            edges.push((v, u));
        }
    }

    // Sparse indicator features on a per-class word block. With a window,
    // a node's active vocabulary centers on its ring position, so nodes
    // that tend to be linked also tend to share words.
    let mut ring_position = vec![0usize; n];
    for group in &members {
        for (i, &v) in group.iter().enumerate() {
            ring_position[v] = i;
        }
    }
    let block = (spec.n_features / c).max(1);
    let mut features = Array2::zeros((n, spec.n_features));
    for v in 0..n {
        let k = class_of[v];
        let lo = k * block;
        let hi = ((k + 1) * block).min(spec.n_features);
        let width = hi - lo;
        let group_size = members[k].len().max(1);
        let center = ring_position[v] as f64 * width as f64 / group_size as f64;
        let half_window = spec.feature_window as f64 / 2.0;
        for j in 0..spec.n_features {
            let in_window = if (lo..hi).contains(&j) && width > 0 {
                if spec.feature_window == 0 {
                    true
                } else {
                    let offset = (j - lo) as f64;
                    let direct = (offset - center).abs();
                    let wrapped = width as f64 - direct;
                    direct.min(wrapped) <= half_window
                }
            } else {
                false
            };
            let rate = if in_window {
                spec.feature_on_rate
            } else {
                spec.feature_off_rate
            };
            if rng.gen::<f64>() < rate {
                features[(v, j)] = 1.0;
            }
        }
    }

    let labels = Some(class_of.iter().map(|&k| Some(k)).collect());
    Graph::new(n, edges, features, labels).expect("generated graph is valid")
}

/// Small two-community graph with well-separated Gaussian features; the
/// standard sanity benchmark for the node-classification pipeline.
pub fn two_cluster_graph(
    cluster_size: usize,
    n_features: usize,
    feature_gap: f64,
    seed: u64,
) -> Graph {
    let spec = CommunityGraphSpec {
        n_nodes: cluster_size * 2,
        n_classes: 2,
        n_features,
        n_edge_pairs: cluster_size * 3,
        intra_fraction: 0.9,
        locality: 0.4,
        reciprocation: 0.3,
        feature_on_rate: 0.0,
        feature_window: 0,
        feature_off_rate: 0.0,
        seed,
    };
    let g = community_graph(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let labels: Vec<Option<usize>> = g.labels().unwrap().to_vec();
    let mut features = Array2::zeros((g.n_nodes(), n_features));
    for v in 0..g.n_nodes() {
        let sign = if labels[v] == Some(0) { 1.0 } else { -1.0 };
        for j in 0..n_features {
            let noise: f64 = rng.gen::<f64>() * 2.0 - 1.0;
            features[(v, j)] = sign * feature_gap + noise;
        }
    }
    Graph::new(g.n_nodes(), g.edges().to_vec(), features, Some(labels))
        .expect("rebuilt graph is valid")
}

/// Two cliques of `clique_size` nodes joined by a single bridge edge, all
/// edges reciprocated. Features separate the cliques.
pub fn caveman_graph(clique_size: usize, n_features: usize, seed: u64) -> Graph {
    let n = clique_size * 2;
    let mut edges = Vec::new();
    for base in [0, clique_size] {
        for i in 0..clique_size {
            for j in (i + 1)..clique_size {
                edges.push((base + i, base + j));
                edges.push((base + j, base + i));
            }
        }
    }
    edges.push((0, clique_size));
    edges.push((clique_size, 0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, n_features));
    for v in 0..n {
        let sign = if v < clique_size { 1.0 } else { -1.0 };
        for j in 0..n_features {
            let noise: f64 = rng.gen::<f64>() * 0.5 - 0.25;
            features[(v, j)] = sign + noise;
        }
    }
    let labels = Some((0..n).map(|v| Some((v >= clique_size) as usize)).collect());
    Graph::new(n, edges, features, labels).expect("caveman graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_adjacency_is_seeded_and_binary() {
        let a = random_directed_adjacency(10, 0.3, 7);
        let b = random_directed_adjacency(10, 0.3, 7);
        assert_eq!(a, b);
        assert!(a.is_binary());
        assert!(a.has_zero_diagonal());
    }

    #[test]
    fn community_graph_is_deterministic_and_labeled() {
        let spec = CommunityGraphSpec {
            n_nodes: 60,
            n_classes: 3,
            n_features: 30,
            n_edge_pairs: 120,
            intra_fraction: 0.8,
            locality: 0.4,
            reciprocation: 0.2,
            feature_on_rate: 0.2,
            feature_window: 0,
            feature_off_rate: 0.02,
            seed: 11,
        };
        let g1 = community_graph(&spec);
        let g2 = community_graph(&spec);
        assert_eq!(g1.edges(), g2.edges());
        assert_eq!(g1.n_classes(), 3);
        assert!(g1.n_edges() > 100);
        // homophily: most edges stay within a class
        let labels = g1.labels().unwrap();
        let intra = g1
            .edges()
            .iter()
            .filter(|&&(u, v)| labels[u] == labels[v])
            .count();
        assert!(intra * 10 > g1.n_edges() * 6, "intra {intra}/{}", g1.n_edges());
    }

    #[test]
    fn caveman_graph_shape() {
        let g = caveman_graph(5, 4, 3);
        assert_eq!(g.n_nodes(), 10);
        // two 5-cliques (2 * 20 directed edges) plus the bridge pair
        assert_eq!(g.n_edges(), 42);
    }
}
