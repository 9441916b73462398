//! Directed graphs with node features and optional labels, plus the text
//! loaders and degree normalizations used by the propagation pipelines.
//!
//! File formats:
//! - edge list: one `u v` directed edge per line (tab or spaces), optional
//!   `# n=<count>` header, `#`-prefixed comment lines ignored;
//! - features: headerless CSV, one row per node;
//! - labels: one integer class per line, `-1` meaning unlabeled.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Directed unweighted graph. Edges are deduplicated and sorted; node ids
/// are dense integers `0..n`. Self-loops are rejected at load time (they
/// are introduced only by the normalization step).
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
    labels: Option<Vec<Option<usize>>>,
    n_classes: usize,
}

impl Graph {
    pub fn new(
        n: usize,
        mut edges: Vec<(usize, usize)>,
        features: Array2<f64>,
        labels: Option<Vec<Option<usize>>>,
    ) -> Result<Graph> {
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::Index(format!(
                    "edge ({u}, {v}) references a node id >= n = {n}"
                )));
            }
            if u == v {
                return Err(Error::Domain(format!("self-loop on node {u}")));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        if features.nrows() != n {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                n
            )));
        }
        let mut n_classes = 0;
        if let Some(ref labels) = labels {
            if labels.len() != n {
                return Err(Error::Shape(format!(
                    "label vector has {} entries for {} nodes",
                    labels.len(),
                    n
                )));
            }
            n_classes = labels
                .iter()
                .flatten()
                .map(|&c| c + 1)
                .max()
                .unwrap_or(0);
        }
        Ok(Graph {
            n,
            edges,
            features,
            labels,
            n_classes,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Replaces the edge set with its symmetric closure.
    pub fn symmetrized(mut self) -> Graph {
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .flat_map(|&(u, v)| [(u, v), (v, u)])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        self.edges = edges;
        self
    }

    /// Keeps only the listed nodes, remapping ids to `0..kept.len()` in the
    /// order given. Edges with an endpoint outside the set are dropped.
    pub fn induced_subgraph(&self, kept: &[usize]) -> Result<Graph> {
        let mut remap = vec![usize::MAX; self.n];
        for (new, &old) in kept.iter().enumerate() {
            if old >= self.n {
                return Err(Error::Index(format!("node {old} out of range")));
            }
            remap[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| remap[u] != usize::MAX && remap[v] != usize::MAX)
            .map(|&(u, v)| (remap[u], remap[v]))
            .collect();
        let features = self.features.select(ndarray::Axis(0), kept);
        let labels = self
            .labels
            .as_ref()
            .map(|l| kept.iter().map(|&u| l[u]).collect());
        Graph::new(kept.len(), edges, features, labels)
    }

    /// Node ids of the largest weakly connected component, ascending.
    pub fn largest_component(&self) -> Vec<usize> {
        let mut neighbors = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        let mut comp = vec![usize::MAX; self.n];
        let mut sizes = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut queue = std::collections::VecDeque::from([start]);
            comp[start] = id;
            let mut size = 0usize;
            while let Some(u) = queue.pop_front() {
                size += 1;
                for &v in &neighbors[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        queue.push_back(v);
                    }
                }
            }
            sizes.push(size);
        }
        let best = (0..sizes.len()).max_by_key(|&i| sizes[i]).unwrap_or(0);
        (0..self.n).filter(|&u| comp[u] == best).collect()
    }

    /// Writes the edge-list format, including the `# n=` header so that
    /// isolated trailing nodes survive a round trip.
    pub fn save_edges(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(w, "# n={}", self.n)?;
            for &(u, v) in &self.edges {
                writeln!(w, "{u} {v}")?;
            }
            Ok(())
        };
        write(&mut w).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Loader behavior switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Interpret the edge file as undirected by adding every reverse edge.
    /// Off by default: benchmark files are taken directed as given.
    pub symmetrize: bool,
}

/// Loads a graph from an edge list, a feature CSV, and an optional label
/// file. `n` comes from the `# n=` header when present, otherwise from
/// `1 + max node id`.
pub fn load_graph(
    edge_path: impl AsRef<Path>,
    feature_path: impl AsRef<Path>,
    label_path: Option<&Path>,
) -> Result<Graph> {
    load_graph_with(edge_path, feature_path, label_path, LoadOptions::default())
}

pub fn load_graph_with(
    edge_path: impl AsRef<Path>,
    feature_path: impl AsRef<Path>,
    label_path: Option<&Path>,
    opts: LoadOptions,
) -> Result<Graph> {
    let (header_n, edges) = read_edge_list(edge_path.as_ref())?;
    let features = read_features(feature_path.as_ref())?;
    let max_id = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    let n = header_n.unwrap_or(max_id);
    let labels = match label_path {
        Some(p) => Some(read_labels(p)?),
        None => None,
    };
    let graph = Graph::new(n, edges, features, labels)?;
    Ok(if opts.symmetrize {
        graph.symmetrized()
    } else {
        graph
    })
}

/// Parses an edge list file. Returns the optional `# n=` header value and
/// the raw (deduplicated later) directed edge pairs.
pub fn read_edge_list(path: &Path) -> Result<(Option<usize>, Vec<(usize, usize)>)> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let reader = BufReader::new(file);
    let mut header_n = None;
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&display, e))?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some(value) = rest.trim().strip_prefix("n=") {
                header_n = Some(value.trim().parse().map_err(|_| Error::Parse {
                    path: display.clone(),
                    line: line_no,
                    message: format!("bad node count `{value}`"),
                })?);
            }
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let parse = |tok: Option<&str>, what: &str| -> Result<usize> {
            tok.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                path: display.clone(),
                line: line_no,
                message: format!("expected {what}, got `{trimmed}`"),
            })
        };
        let u = parse(parts.next(), "source node id")?;
        let v = parse(parts.next(), "target node id")?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                path: display.clone(),
                line: line_no,
                message: "trailing tokens after edge pair".into(),
            });
        }
        if u == v {
            return Err(Error::Parse {
                path: display.clone(),
                line: line_no,
                message: format!("self-loop on node {u} is not allowed"),
            });
        }
        edges.push((u, v));
    }
    Ok((header_n, edges))
}

fn read_features(path: &Path) -> Result<Array2<f64>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&display, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse().map_err(|_| Error::Parse {
                    path: display.clone(),
                    line: idx + 1,
                    message: format!("bad feature value `{}`", tok.trim()),
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: display.clone(),
                    line: idx + 1,
                    message: format!("row has {} values, expected {w}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    let width = width.unwrap_or(0);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), width), flat)
        .map_err(|e| Error::Shape(format!("feature matrix: {e}")))
}

fn read_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&display, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: i64 = trimmed.parse().map_err(|_| Error::Parse {
            path: display.clone(),
            line: idx + 1,
            message: format!("bad label `{trimmed}`"),
        })?;
        if value < -1 {
            return Err(Error::Parse {
                path: display.clone(),
                line: idx + 1,
                message: format!("label {value} out of range"),
            });
        }
        labels.push(if value == -1 {
            None
        } else {
            Some(value as usize)
        });
    }
    Ok(labels)
}

/// Binary adjacency matrix of a graph: `A[u][v] = 1` per directed edge.
pub fn to_adjacency(g: &Graph) -> SparseMatrix {
    SparseMatrix::from_triplets(
        g.n_nodes(),
        g.n_nodes(),
        g.edges().iter().map(|&(u, v)| (u, v, 1.0)),
    )
    .expect("edges validated by Graph construction")
}

/// Symmetric normalization with self-loops: `D^{-1/2} (A + I) D^{-1/2}`,
/// where `D` holds the row sums of `A + I`. Isolated nodes pick up the
/// self-loop, so every degree is at least one.
pub fn normalize_sym(a: &SparseMatrix) -> Result<SparseMatrix> {
    DegreeNormalization::symmetric().apply(a)
}

/// Row-stochastic normalization: each row is divided by its sum; all-zero
/// rows (dangling nodes) become the uniform row `1/n`.
pub fn row_stochastic(a: &SparseMatrix) -> Result<SparseMatrix> {
    DegreeNormalization::row_stochastic().apply(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationMode {
    /// `D^{-1/2} (A + I) D^{-1/2}` with degrees from `A + I`.
    SymmetricWithSelfLoops,
    /// Rows scaled to sum to one; zero rows become uniform.
    RowStochastic,
}

#[derive(Debug, Clone, Copy)]
pub struct DegreeNormalization {
    pub mode: NormalizationMode,
    /// Lower bound applied to degrees before division.
    pub epsilon: f64,
}

impl DegreeNormalization {
    pub fn symmetric() -> Self {
        DegreeNormalization {
            mode: NormalizationMode::SymmetricWithSelfLoops,
            epsilon: 1e-12,
        }
    }

    pub fn row_stochastic() -> Self {
        DegreeNormalization {
            mode: NormalizationMode::RowStochastic,
            epsilon: 1e-12,
        }
    }

    pub fn apply(&self, a: &SparseMatrix) -> Result<SparseMatrix> {
        if !a.is_square() {
            return Err(Error::Shape(format!(
                "normalization requires a square matrix, got {}x{}",
                a.n_rows(),
                a.n_cols()
            )));
        }
        if a.iter().any(|(_, _, v)| v < 0.0) {
            return Err(Error::Domain(
                "normalization requires nonnegative entries".into(),
            ));
        }
        assert!(self.epsilon > 0.0, "epsilon must be positive");
        let n = a.n_rows();
        match self.mode {
            NormalizationMode::SymmetricWithSelfLoops => {
                let with_loops = a.add_scaled(1.0, &SparseMatrix::identity(n), 1.0)?;
                let inv_sqrt: Vec<f64> = with_loops
                    .row_sums()
                    .iter()
                    .map(|&d| 1.0 / d.max(self.epsilon).sqrt())
                    .collect();
                // One commutative product per entry keeps symmetric inputs
                // exactly symmetric in floating point.
                SparseMatrix::from_triplets(
                    n,
                    n,
                    with_loops
                        .iter()
                        .map(|(r, c, v)| (r, c, v * (inv_sqrt[r] * inv_sqrt[c]))),
                )
            }
            NormalizationMode::RowStochastic => {
                let sums = a.row_sums();
                let mut triplets = Vec::with_capacity(a.nnz());
                for r in 0..n {
                    if sums[r] <= 0.0 {
                        let uniform = 1.0 / n as f64;
                        triplets.extend((0..n).map(|c| (r, c, uniform)));
                    } else {
                        let (cols, vals) = a.row(r);
                        let inv = 1.0 / sums[r].max(self.epsilon);
                        triplets.extend(
                            cols.iter().zip(vals).map(|(&c, &v)| (r, c, v * inv)),
                        );
                    }
                }
                SparseMatrix::from_triplets(n, n, triplets)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_two_node_graph() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write_file(&dir, "g.edges", "0 1\n1 0\n");
        let feats = write_file(&dir, "g.csv", "1.0,0.0\n0.0,1.0\n");
        let g = load_graph(&edges, &feats, None).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert_eq!(g.edges(), &[(0, 1), (1, 0)]);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write_file(&dir, "g.edges", "0 1\n0 1\n");
        let feats = write_file(&dir, "g.csv", "1.0\n2.0\n");
        let g = load_graph(&edges, &feats, None).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn feature_row_mismatch_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write_file(&dir, "g.edges", "0 1\n2 3\n");
        let feats = write_file(&dir, "g.csv", "1.0\n2.0\n3.0\n");
        let err = load_graph(&edges, &feats, None).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn self_loop_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write_file(&dir, "g.edges", "0 1\n2 2\n");
        let feats = write_file(&dir, "g.csv", "1.0\n1.0\n1.0\n");
        match load_graph(&edges, &feats, None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn header_overrides_max_id() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write_file(&dir, "g.edges", "# n=4\n0 1\n");
        let feats = write_file(&dir, "g.csv", "1\n1\n1\n1\n");
        let g = load_graph(&edges, &feats, None).unwrap();
        assert_eq!(g.n_nodes(), 4);
    }

    #[test]
    fn labels_with_unlabeled_markers() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write_file(&dir, "g.edges", "0 1\n1 2\n");
        let feats = write_file(&dir, "g.csv", "1\n1\n1\n");
        let labels = write_file(&dir, "g.labels", "0\n-1\n2\n");
        let g = load_graph(&edges, &feats, Some(&labels)).unwrap();
        assert_eq!(g.labels().unwrap(), &[Some(0), None, Some(2)]);
        assert_eq!(g.n_classes(), 3);
    }

    #[test]
    fn edge_round_trip_preserves_edge_set() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write_file(&dir, "g.edges", "# n=5\n0 1\n1 0\n3 4\n");
        let feats = write_file(&dir, "g.csv", "1\n1\n1\n1\n1\n");
        let g = load_graph(&edges, &feats, None).unwrap();
        let out = dir.path().join("saved.edges");
        g.save_edges(&out).unwrap();
        let feats2 = write_file(&dir, "g2.csv", "1\n1\n1\n1\n1\n");
        let g2 = load_graph(&out, &feats2, None).unwrap();
        assert_eq!(g.edges(), g2.edges());
        assert_eq!(g.n_nodes(), g2.n_nodes());
    }

    #[test]
    fn adjacency_of_single_directed_edge() {
        let g = Graph::new(2, vec![(0, 1)], Array2::zeros((2, 1)), None).unwrap();
        let a = to_adjacency(&g);
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn adjacency_of_empty_graph_is_zero() {
        let g = Graph::new(3, vec![], Array2::zeros((3, 1)), None).unwrap();
        assert_eq!(to_adjacency(&g).nnz(), 0);
    }

    #[test]
    fn normalize_sym_isolated_node() {
        let a = SparseMatrix::zeros(1, 1);
        let t = normalize_sym(&a).unwrap();
        assert_eq!(t.get(0, 0), 1.0);
    }

    #[test]
    fn normalize_sym_single_undirected_edge() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let t = normalize_sym(&a).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_abs_diff_eq!(t.get(r, c), 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn normalize_sym_path_graph_hand_values() {
        // Path 0-1-2, undirected. Degrees with self-loops: 2, 3, 2.
        let a = SparseMatrix::from_triplets(
            3,
            3,
            [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap();
        let t = normalize_sym(&a).unwrap();
        assert_abs_diff_eq!(t.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(0, 1), 1.0 / 6.0f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(1, 1), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn row_stochastic_examples() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 1, 2.0), (1, 0, 1.0)]).unwrap();
        let p = row_stochastic(&a).unwrap();
        assert_eq!(p.get(0, 1), 1.0);
        assert_eq!(p.get(1, 0), 1.0);

        let b = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)])
            .unwrap();
        let p = row_stochastic(&b).unwrap();
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(p.get(0, 1), 0.5);
        assert_eq!(p.get(1, 1), 1.0);
    }

    #[test]
    fn row_stochastic_dangling_row_becomes_uniform() {
        let a = SparseMatrix::from_triplets(3, 3, [(0, 1, 1.0), (2, 0, 1.0)]).unwrap();
        let p = row_stochastic(&a).unwrap();
        for c in 0..3 {
            assert_abs_diff_eq!(p.get(1, c), 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn largest_component_selection() {
        let g = Graph::new(
            6,
            vec![(0, 1), (1, 2), (4, 5)],
            Array2::zeros((6, 2)),
            None,
        )
        .unwrap();
        assert_eq!(g.largest_component(), vec![0, 1, 2]);
        let sub = g.induced_subgraph(&[0, 1, 2]).unwrap();
        assert_eq!(sub.n_nodes(), 3);
        assert_eq!(sub.edges(), &[(0, 1), (1, 2)]);
    }

    proptest! {
        #[test]
        fn prop_row_stochastic_rows_sum_to_one(
            entries in proptest::collection::vec((0usize..8, 0usize..8, 0.01f64..5.0), 0..30),
        ) {
            let a = SparseMatrix::from_triplets(8, 8, entries).unwrap();
            let p = row_stochastic(&a).unwrap();
            for s in p.row_sums() {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_normalize_sym_symmetric_and_bounded(
            pairs in proptest::collection::vec((0usize..8, 0usize..8), 0..24),
        ) {
            // Build a symmetric zero-diagonal binary matrix.
            let triplets: Vec<_> = pairs
                .iter()
                .filter(|&&(u, v)| u != v)
                .flat_map(|&(u, v)| [(u, v, 1.0), (v, u, 1.0)])
                .collect();
            let a = SparseMatrix::from_triplets(8, 8, triplets).unwrap();
            let t = normalize_sym(&a).unwrap();
            prop_assert!(t.is_symmetric());
            for (_, _, v) in t.iter() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
