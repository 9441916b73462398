//! Personalized PageRank matrices and the propagation operator.
//!
//! The full PPR matrix `alpha * (I - (1 - alpha) * T)^{-1}` is computed
//! either by a direct dense solve or by a truncated Neumann series; the
//! motif-blended variant symmetrically normalizes the blended adjacency
//! first, so the blend degenerates to the plain edge pipeline at
//! `tau = 0`. An entrywise beta power turns a PPR matrix into the
//! propagation operator applied to prediction or embedding matrices.

use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::normalize_sym;
use crate::motif::BlendedAdjacency;
use crate::sparse::SparseMatrix;

/// Result of the PageRank power iteration.
#[derive(Debug, Clone)]
pub struct PageRankState {
    /// Stationary probability vector.
    pub scores: Vec<f64>,
    pub damping: f64,
    pub iterations: usize,
    /// L1 distance between the final two iterates.
    pub residual: f64,
}

/// PageRank by power iteration on a row-stochastic matrix with uniform
/// teleport: `psi <- d * P^T psi + (1 - d) / n * e`.
pub fn pagerank(
    p: &SparseMatrix,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PageRankState> {
    if !p.is_square() {
        return Err(Error::Shape("pagerank needs a square matrix".into()));
    }
    if !(0.0 < damping && damping <= 1.0) {
        return Err(Error::Domain(format!("damping {damping} outside (0, 1]")));
    }
    if tol <= 0.0 {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    for (r, s) in p.row_sums().iter().enumerate() {
        if (s - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "row {r} sums to {s}, expected a row-stochastic matrix"
            )));
        }
    }
    let n = p.n_rows();
    let teleport = (1.0 - damping) / n as f64;
    let mut psi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for it in 1..=max_iter {
        next.fill(teleport);
        for (u, v, w) in p.iter() {
            next[v] += damping * w * psi[u];
        }
        let residual: f64 = psi
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut psi, &mut next);
        if residual < tol {
            return Ok(PageRankState {
                scores: psi,
                damping,
                iterations: it,
                residual,
            });
        }
    }
    let residual: f64 = psi
        .iter()
        .zip(next.iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Where a PPR matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PprSource {
    Edge,
    MotifBlended,
}

/// Which solver produced a PPR matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolverUsed {
    Direct,
    /// Truncated series; records the terms evaluated and the max-norm of
    /// the last term.
    Neumann { terms: usize, residual: f64 },
}

/// Solver selection for operator construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    /// Direct dense solve up to `dense_limit` nodes, lazy Neumann above.
    Auto,
    Direct,
    Neumann,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    pub choice: SolverChoice,
    /// Series length cap for the Neumann solver.
    pub max_terms: usize,
    /// Term max-norm stopping tolerance for the Neumann solver.
    pub tol: f64,
    /// Above this node count, `Auto` stops materializing dense operators.
    pub dense_limit: usize,
    /// Entry threshold used when a lazy operator must be sparsified to
    /// apply a beta power.
    pub sparsify_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            choice: SolverChoice::Auto,
            max_terms: 1000,
            tol: 1e-6,
            dense_limit: 4096,
            sparsify_threshold: 1e-4,
        }
    }
}

/// Dense personalized PageRank matrix.
#[derive(Debug, Clone)]
pub struct PprMatrix {
    pub alpha: f64,
    pub matrix: Array2<f64>,
    pub source: PprSource,
    pub solver: SolverUsed,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0 < alpha && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1]")));
    }
    Ok(())
}

/// Direct solve of `alpha * (I - (1 - alpha) * T)^{-1}`. Uses a Cholesky
/// factorization when `T` is symmetric (the system matrix is then
/// positive definite), LU otherwise. Cross-component entries that round
/// to tiny negatives are clamped to zero.
pub fn ppr_matrix_direct(t: &SparseMatrix, alpha: f64) -> Result<PprMatrix> {
    check_alpha(alpha)?;
    if !t.is_square() {
        return Err(Error::Shape("ppr needs a square operator".into()));
    }
    let n = t.n_rows();
    let mut system = DMatrix::<f64>::identity(n, n);
    for (r, c, v) in t.iter() {
        system[(r, c)] -= (1.0 - alpha) * v;
    }
    let inverse = if t.is_symmetric() {
        nalgebra::linalg::Cholesky::new(system)
            .ok_or_else(|| Error::Solver("system is not positive definite".into()))?
            .inverse()
    } else {
        system
            .try_inverse()
            .ok_or_else(|| Error::Solver("singular system".into()))?
    };
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = alpha * inverse[(i, j)];
            matrix[(i, j)] = if v < 0.0 {
                if v < -1e-9 {
                    return Err(Error::Solver(format!(
                        "negative entry {v:.3e} at ({i}, {j}); spectral radius likely >= 1"
                    )));
                }
                0.0
            } else {
                v
            };
        }
    }
    Ok(PprMatrix {
        alpha,
        matrix,
        source: PprSource::Edge,
        solver: SolverUsed::Direct,
    })
}

/// Truncated Neumann series `sum_k alpha * (1 - alpha)^k * T^k`, stopping
/// once a term's max-norm drops below `tol`. Always returns the partial
/// sum together with the achieved residual.
pub fn ppr_matrix_neumann(
    t: &SparseMatrix,
    alpha: f64,
    max_terms: usize,
    tol: f64,
) -> Result<PprMatrix> {
    check_alpha(alpha)?;
    if !t.is_square() {
        return Err(Error::Shape("ppr needs a square operator".into()));
    }
    let n = t.n_rows();
    let mut term = Array2::eye(n) * alpha;
    let mut acc = term.clone();
    let mut terms = 0usize;
    let mut residual = f64::INFINITY;
    for _ in 1..=max_terms {
        term = t.mul_dense(&term)? * (1.0 - alpha);
        acc += &term;
        terms += 1;
        residual = term.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if residual < tol {
            break;
        }
    }
    Ok(PprMatrix {
        alpha,
        matrix: acc,
        source: PprSource::Edge,
        solver: SolverUsed::Neumann { terms, residual },
    })
}

/// Motif-blended PPR: symmetrically normalizes the blended adjacency
/// (with self-loops) and solves the PPR system on it. At `tau = 0` the
/// blend equals the plain adjacency bit for bit, so this reproduces the
/// edge pipeline exactly.
pub fn mppr_matrix(
    theta: &BlendedAdjacency,
    alpha: f64,
    solver: &SolverConfig,
) -> Result<PprMatrix> {
    check_alpha(alpha)?;
    let t = normalize_sym(&theta.matrix)?;
    let mut pi = match solver.choice {
        SolverChoice::Neumann => ppr_matrix_neumann(&t, alpha, solver.max_terms, solver.tol)?,
        SolverChoice::Direct => ppr_matrix_direct(&t, alpha)?,
        SolverChoice::Auto => {
            if t.n_rows() <= solver.dense_limit {
                ppr_matrix_direct(&t, alpha)?
            } else {
                ppr_matrix_neumann(&t, alpha, solver.max_terms, solver.tol)?
            }
        }
    };
    pi.source = PprSource::MotifBlended;
    Ok(pi)
}

/// How a propagation operator stores and applies its matrix.
#[derive(Debug, Clone)]
enum OperatorKind {
    /// Materialized dense matrix with the beta power already applied.
    Dense(Array2<f64>),
    /// Thresholded sparse matrix with the beta power applied; kept with
    /// its transpose for the backward pass.
    Sparse {
        matrix: SparseMatrix,
        transpose: SparseMatrix,
    },
    /// Unmaterialized series application (beta = 1 only).
    Lazy {
        t: SparseMatrix,
        t_transpose: SparseMatrix,
        alpha: f64,
        max_terms: usize,
        tol: f64,
    },
}

/// The fixed linear map applied to prediction or embedding matrices.
#[derive(Debug, Clone)]
pub struct PropagationOperator {
    pub beta: f64,
    /// Threshold used if the operator had to be sparsified before the
    /// beta power; recorded in run reports.
    pub sparsify_threshold: Option<f64>,
    kind: OperatorKind,
}

impl PropagationOperator {
    /// Identity operator (propagation disabled).
    pub fn identity(n: usize) -> Self {
        PropagationOperator {
            beta: 1.0,
            sparsify_threshold: None,
            kind: OperatorKind::Dense(Array2::eye(n)),
        }
    }

    pub fn n(&self) -> usize {
        match &self.kind {
            OperatorKind::Dense(m) => m.nrows(),
            OperatorKind::Sparse { matrix, .. } => matrix.n_rows(),
            OperatorKind::Lazy { t, .. } => t.n_rows(),
        }
    }

    /// The materialized dense matrix, when this operator has one.
    pub fn dense(&self) -> Option<&Array2<f64>> {
        match &self.kind {
            OperatorKind::Dense(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_lazy(&self) -> bool {
        matches!(self.kind, OperatorKind::Lazy { .. })
    }

    /// Bernoulli dropout over the operator's stored entries with inverted
    /// scaling, re-drawn by the caller per epoch. Dense operators mask
    /// every entry; sparse and lazy operators mask their stored nonzeros.
    pub fn with_entry_dropout(&self, rate: f64, rng: &mut impl rand::Rng) -> PropagationOperator {
        assert!((0.0..1.0).contains(&rate), "dropout rate outside [0, 1)");
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mut drop = |v: f64| {
            if rng.gen::<f64>() < keep {
                v * scale
            } else {
                0.0
            }
        };
        let kind = match &self.kind {
            OperatorKind::Dense(m) => OperatorKind::Dense(m.mapv(&mut drop)),
            OperatorKind::Sparse { matrix, .. } => {
                let matrix = matrix.map_values(&mut drop);
                let transpose = matrix.transpose();
                OperatorKind::Sparse { matrix, transpose }
            }
            OperatorKind::Lazy {
                t,
                alpha,
                max_terms,
                tol,
                ..
            } => {
                let t = t.map_values(&mut drop);
                let t_transpose = t.transpose();
                OperatorKind::Lazy {
                    t,
                    t_transpose,
                    alpha: *alpha,
                    max_terms: *max_terms,
                    tol: *tol,
                }
            }
        };
        PropagationOperator {
            beta: self.beta,
            sparsify_threshold: self.sparsify_threshold,
            kind,
        }
    }

    /// `Z = Op . H`.
    pub fn propagate(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        self.apply(h, false)
    }

    /// `Op^T . G`, the pullback used by backpropagation.
    pub fn propagate_transpose(&self, g: &Array2<f64>) -> Result<Array2<f64>> {
        self.apply(g, true)
    }

    fn apply(&self, h: &Array2<f64>, transposed: bool) -> Result<Array2<f64>> {
        if h.nrows() != self.n() {
            return Err(Error::Shape(format!(
                "operator is {0}x{0}, input has {1} rows",
                self.n(),
                h.nrows()
            )));
        }
        match &self.kind {
            OperatorKind::Dense(m) => Ok(if transposed {
                m.t().dot(h)
            } else {
                m.dot(h)
            }),
            OperatorKind::Sparse { matrix, transpose } => {
                let m = if transposed { transpose } else { matrix };
                m.mul_dense(h)
            }
            OperatorKind::Lazy {
                t,
                t_transpose,
                alpha,
                max_terms,
                tol,
            } => {
                let t = if transposed { t_transpose } else { t };
                let mut term = h.clone();
                let mut acc = h * *alpha;
                for _ in 1..=*max_terms {
                    term = t.mul_dense(&term)? * (1.0 - alpha);
                    acc.scaled_add(*alpha, &term);
                    let residual =
                        *alpha * term.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                    if residual < *tol {
                        break;
                    }
                }
                Ok(acc)
            }
        }
    }
}

/// Entrywise beta power of a PPR matrix: `out[i][j] = pi[i][j]^beta`.
/// Zero entries stay zero; `beta = 1` returns the matrix unchanged.
pub fn apply_beta(pi: &PprMatrix, beta: f64) -> Result<PropagationOperator> {
    if !(0.0 < beta && beta <= 1.0) {
        return Err(Error::Domain(format!("beta {beta} outside (0, 1]")));
    }
    if let Some(v) = pi.matrix.iter().find(|&&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "beta power undefined on negative entry {v}"
        )));
    }
    let matrix = if beta == 1.0 {
        pi.matrix.clone()
    } else {
        pi.matrix.mapv(|v| v.powf(beta))
    };
    Ok(PropagationOperator {
        beta,
        sparsify_threshold: None,
        kind: OperatorKind::Dense(matrix),
    })
}

/// Builds the propagation operator for a blended adjacency: normalize,
/// solve the PPR system, apply the beta power. Above the dense limit the
/// `Auto` solver keeps the operator lazy (beta = 1) or sparsifies the
/// series at the configured threshold before the entrywise power.
pub fn build_operator(
    theta: &BlendedAdjacency,
    alpha: f64,
    beta: f64,
    solver: &SolverConfig,
) -> Result<PropagationOperator> {
    check_alpha(alpha)?;
    if !(0.0 < beta && beta <= 1.0) {
        return Err(Error::Domain(format!("beta {beta} outside (0, 1]")));
    }
    let n = theta.matrix.n_rows();
    let lazy = solver.choice == SolverChoice::Auto && n > solver.dense_limit;
    if !lazy {
        let pi = mppr_matrix(theta, alpha, solver)?;
        return apply_beta(&pi, beta);
    }

    let t = normalize_sym(&theta.matrix)?;
    let t_transpose = t.transpose();
    if beta == 1.0 {
        return Ok(PropagationOperator {
            beta,
            sparsify_threshold: None,
            kind: OperatorKind::Lazy {
                t,
                t_transpose,
                alpha,
                max_terms: solver.max_terms,
                tol: solver.tol,
            },
        });
    }
    // Beta power needs entries; sparsify the series column-block-wise at
    // the configured threshold, then apply the power to the kept entries.
    let matrix = sparsified_ppr(&t, alpha, solver)?.map_values(|v| v.powf(beta));
    let transpose = matrix.transpose();
    Ok(PropagationOperator {
        beta,
        sparsify_threshold: Some(solver.sparsify_threshold),
        kind: OperatorKind::Sparse { matrix, transpose },
    })
}

/// Neumann series evaluated in column blocks, keeping only entries at or
/// above the sparsification threshold. Never holds more than one dense
/// block in memory.
fn sparsified_ppr(t: &SparseMatrix, alpha: f64, solver: &SolverConfig) -> Result<SparseMatrix> {
    let n = t.n_rows();
    let block = 512usize;
    let starts: Vec<usize> = (0..n).step_by(block).collect();
    let blocks: Vec<Vec<(usize, usize, f64)>> = starts
        .par_iter()
        .map(|&start| {
            let width = block.min(n - start);
            let mut term = Array2::zeros((n, width));
            for j in 0..width {
                term[(start + j, j)] = 1.0;
            }
            let mut acc = &term * alpha;
            for _ in 1..=solver.max_terms {
                term = t.mul_dense(&term).expect("shapes fixed by construction") * (1.0 - alpha);
                acc.scaled_add(alpha, &term);
                let residual = alpha * term.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                if residual < solver.tol {
                    break;
                }
            }
            let mut kept = Vec::new();
            for ((i, j), &v) in acc.indexed_iter() {
                if v >= solver.sparsify_threshold {
                    kept.push((i, start + j, v));
                }
            }
            kept
        })
        .collect();
    SparseMatrix::from_triplets(n, n, blocks.into_iter().flatten())
}
