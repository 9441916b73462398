//! Triangle-motif adjacency matrices.
//!
//! A directed graph is decomposed into unidirectional links `U` and
//! bidirectional links `B`; each of the seven triangle motifs then has a
//! closed-form count matrix built from masked sparse products of `U`, `B`
//! and their transposes. Entry `(i, j)` of a motif adjacency counts the
//! motif instances containing both `i` and `j`, so the matrix is symmetric
//! with a zero diagonal.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// The seven triangle motifs over three nodes. `M1` is the directed
/// 3-cycle, `M4` the fully bidirectional triangle, `M5` the feed-forward
/// triple; the rest mix unidirectional and bidirectional links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum MotifId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
}

impl MotifId {
    pub const ALL: [MotifId; 7] = [
        MotifId::M1,
        MotifId::M2,
        MotifId::M3,
        MotifId::M4,
        MotifId::M5,
        MotifId::M6,
        MotifId::M7,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MotifId::M1 => "m1",
            MotifId::M2 => "m2",
            MotifId::M3 => "m3",
            MotifId::M4 => "m4",
            MotifId::M5 => "m5",
            MotifId::M6 => "m6",
            MotifId::M7 => "m7",
        }
    }

    pub fn parse(s: &str) -> Option<MotifId> {
        MotifId::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s.trim()))
    }

    /// 3x3 binary edge pattern of the motif (row = source). All three
    /// nodes are anchors.
    pub fn pattern(self) -> [[u8; 3]; 3] {
        match self {
            // 1 -> 2 -> 3 -> 1
            MotifId::M1 => [[0, 1, 0], [0, 0, 1], [1, 0, 0]],
            // 1 <-> 2, 2 -> 3, 3 -> 1
            MotifId::M2 => [[0, 1, 0], [1, 0, 1], [1, 0, 0]],
            // 1 <-> 2, 2 <-> 3, 1 -> 3
            MotifId::M3 => [[0, 1, 1], [1, 0, 1], [0, 1, 0]],
            // 1 <-> 2, 2 <-> 3, 3 <-> 1
            MotifId::M4 => [[0, 1, 1], [1, 0, 1], [1, 1, 0]],
            // 1 -> 2, 2 -> 3, 1 -> 3
            MotifId::M5 => [[0, 1, 1], [0, 0, 1], [0, 0, 0]],
            // 1 <-> 2, 3 -> 1, 3 -> 2
            MotifId::M6 => [[0, 1, 0], [1, 0, 0], [1, 1, 0]],
            // 1 <-> 2, 1 -> 3, 2 -> 3
            MotifId::M7 => [[0, 1, 1], [1, 0, 1], [0, 0, 0]],
        }
    }

    /// Anchor set of the motif; all seven are simple motifs, so every
    /// node of the pattern is an anchor.
    pub fn anchors(self) -> [usize; 3] {
        [0, 1, 2]
    }
}

impl std::fmt::Display for MotifId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Motif count matrix together with the intermediate matrix it was built
/// from, kept for auditing.
#[derive(Debug, Clone)]
pub struct MotifAdjacency {
    pub motif: MotifId,
    pub matrix: SparseMatrix,
    pub zeta: Option<SparseMatrix>,
}

/// Entrywise mix `(1 - tau) * A + tau * A_motif`.
#[derive(Debug, Clone)]
pub struct BlendedAdjacency {
    pub tau: f64,
    pub matrix: SparseMatrix,
}

/// Splits a binary zero-diagonal adjacency into its unidirectional part
/// `U` (edges whose reverse is absent) and bidirectional part `B` (edges
/// whose reverse is present). `U + B = A` and `B` is symmetric.
pub fn split_uni_bi(a: &SparseMatrix) -> Result<(SparseMatrix, SparseMatrix)> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "adjacency must be square, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if !a.is_binary() {
        return Err(Error::Domain(
            "unidirectional/bidirectional split requires a binary adjacency".into(),
        ));
    }
    if !a.has_zero_diagonal() {
        return Err(Error::Domain(
            "adjacency must have a zero diagonal (no self-loops)".into(),
        ));
    }
    let n = a.n_rows();
    let mut uni = Vec::new();
    let mut bi = Vec::new();
    for (r, c, _) in a.iter() {
        if a.get(c, r) != 0.0 {
            bi.push((r, c, 1.0));
        } else {
            uni.push((r, c, 1.0));
        }
    }
    Ok((
        SparseMatrix::from_triplets(n, n, uni)?,
        SparseMatrix::from_triplets(n, n, bi)?,
    ))
}

/// Computes the motif count matrix for `m` from the closed-form masked
/// products over the `U`/`B` decomposition of `a`.
pub fn motif_adjacency(a: &SparseMatrix, m: MotifId) -> Result<MotifAdjacency> {
    let (u, b) = split_uni_bi(a)?;
    let ut = u.transpose();
    let prod = |x: &SparseMatrix, y: &SparseMatrix, mask: &SparseMatrix| x.masked_matmul(y, mask);
    let sum3 = |x: SparseMatrix, y: SparseMatrix, z: SparseMatrix| -> Result<SparseMatrix> {
        x.add_scaled(1.0, &y, 1.0)?.add_scaled(1.0, &z, 1.0)
    };

    let (zeta, symmetrize) = match m {
        MotifId::M1 => (prod(&u, &u, &ut)?, true),
        MotifId::M2 => (
            sum3(prod(&b, &u, &ut)?, prod(&u, &b, &ut)?, prod(&u, &u, &b)?)?,
            true,
        ),
        MotifId::M3 => (
            sum3(prod(&b, &b, &u)?, prod(&b, &u, &b)?, prod(&u, &b, &b)?)?,
            true,
        ),
        MotifId::M4 => (prod(&b, &b, &b)?, false),
        MotifId::M5 => (
            sum3(prod(&u, &u, &u)?, prod(&u, &ut, &u)?, prod(&ut, &u, &u)?)?,
            true,
        ),
        MotifId::M6 => (
            sum3(prod(&u, &b, &u)?, prod(&b, &ut, &ut)?, prod(&ut, &u, &b)?)?,
            false,
        ),
        MotifId::M7 => (
            sum3(prod(&ut, &b, &ut)?, prod(&b, &u, &u)?, prod(&u, &ut, &b)?)?,
            false,
        ),
    };
    let matrix = if symmetrize {
        zeta.add_scaled(1.0, &zeta.transpose(), 1.0)?
    } else {
        zeta.clone()
    };
    debug_assert!(matrix.is_symmetric());
    debug_assert!(matrix.has_zero_diagonal());
    Ok(MotifAdjacency {
        motif: m,
        matrix,
        zeta: Some(zeta),
    })
}

/// Blends edge and motif adjacencies: `(1 - tau) * A + tau * A_motif`.
/// `tau = 0` reproduces `A` bit for bit and `tau = 1` reproduces the motif
/// matrix; the sparsity pattern is the union of the inputs' patterns.
pub fn blend(a: &SparseMatrix, am: &MotifAdjacency, tau: f64) -> Result<BlendedAdjacency> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau = {tau} outside [0, 1]")));
    }
    if a.n_rows() != am.matrix.n_rows() || a.n_cols() != am.matrix.n_cols() {
        return Err(Error::Shape(format!(
            "adjacency is {}x{}, motif matrix is {}x{}",
            a.n_rows(),
            a.n_cols(),
            am.matrix.n_rows(),
            am.matrix.n_cols()
        )));
    }
    Ok(BlendedAdjacency {
        tau,
        matrix: a.add_scaled(1.0 - tau, &am.matrix, tau)?,
    })
}

/// Reference motif counter by exhaustive triad enumeration: every
/// unordered node triple whose induced subgraph matches the motif pattern
/// under some ordering contributes one count to each of its node pairs.
/// Independent of the masked-product formulas; quadratic memory, cubic
/// time, intended for verification on small graphs.
pub fn brute_force_motif_counts(a: &SparseMatrix, m: MotifId) -> Result<SparseMatrix> {
    if !a.is_square() {
        return Err(Error::Shape("adjacency must be square".into()));
    }
    if !a.is_binary() || !a.has_zero_diagonal() {
        return Err(Error::Domain(
            "adjacency must be binary with a zero diagonal".into(),
        ));
    }
    let n = a.n_rows();
    let mut dense = vec![vec![false; n]; n];
    for (r, c, _) in a.iter() {
        dense[r][c] = true;
    }
    let pattern = m.pattern();
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut triplets = Vec::new();
    for x in 0..n {
        for y in (x + 1)..n {
            for z in (y + 1)..n {
                let nodes = [x, y, z];
                let matches = PERMS.iter().any(|perm| {
                    (0..3).all(|i| {
                        (0..3).all(|j| {
                            i == j
                                || dense[nodes[perm[i]]][nodes[perm[j]]]
                                    == (pattern[i][j] == 1)
                        })
                    })
                });
                if matches {
                    for &p in &[(x, y), (x, z), (y, z)] {
                        triplets.push((p.0, p.1, 1.0));
                        triplets.push((p.1, p.0, 1.0));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, triplets)
}
