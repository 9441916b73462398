//! Row-compressed sparse matrices.
//!
//! `SparseMatrix` stores finite values in CSR form with sorted column
//! indices, no duplicate coordinates, and no explicitly stored zeros. It is
//! the carrier for adjacency matrices, their unidirectional/bidirectional
//! decompositions, motif count matrices, and blended/normalized operators.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// All-zero matrix of the given shape.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from (row, col, value) triplets. Duplicate
    /// coordinates are summed; entries that come out exactly zero are
    /// dropped. Rejects out-of-bounds indices and non-finite values.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Index(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite value at ({r}, {c})")));
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            i += 1;
            while i < entries.len() && entries[i].0 == r && entries[i].1 == c {
                v += entries[i].2;
                i += 1;
            }
            if v != 0.0 {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds from a dense array, keeping exact nonzeros.
    pub fn from_dense(dense: &Array2<f64>) -> Result<Self> {
        let (n_rows, n_cols) = dense.dim();
        SparseMatrix::from_triplets(
            n_rows,
            n_cols,
            dense
                .indexed_iter()
                .filter(|(_, &v)| v != 0.0)
                .map(|((r, c), &v)| (r, c, v)),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    /// Value at (r, c); zero when the coordinate is not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals.iter()).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut indptr = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            indptr[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            indptr[c + 1] += indptr[c];
        }
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = indptr.clone();
        for (r, c, v) in self.iter() {
            let slot = next[c];
            indices[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    /// Entrywise `a*self + b*other`. The pattern is the union of the input
    /// patterns; entries that combine to exactly zero are dropped.
    pub fn add_scaled(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::Shape(format!(
                "cannot combine {}x{} with {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut indptr = vec![0usize; self.n_rows + 1];
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.n_rows {
            let (lc, lv) = self.row(r);
            let (rc, rv) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < lc.len() || j < rc.len() {
                let v;
                let c;
                if j == rc.len() || (i < lc.len() && lc[i] < rc[j]) {
                    c = lc[i];
                    v = a * lv[i];
                    i += 1;
                } else if i == lc.len() || rc[j] < lc[i] {
                    c = rc[j];
                    v = b * rv[j];
                    j += 1;
                } else {
                    c = lc[i];
                    v = a * lv[i] + b * rv[j];
                    i += 1;
                    j += 1;
                }
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                    indptr[r + 1] += 1;
                }
            }
        }
        for r in 0..self.n_rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// Applies `f` to every stored value, dropping entries that map to zero.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> SparseMatrix {
        let mut indptr = vec![0usize; self.n_rows + 1];
        let mut indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let w = f(v);
                if w != 0.0 {
                    indices.push(c);
                    values.push(w);
                    indptr[r + 1] += 1;
                }
            }
        }
        for r in 0..self.n_rows {
            indptr[r + 1] += indptr[r];
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr,
            indices,
            values,
        }
    }

    /// Masked product: `(self . other)` restricted to the stored pattern of
    /// `mask` (the mask's values are ignored). Each requested entry is a
    /// sparse dot product of a row of `self` with a column of `other`; the
    /// full product is never materialized, so cost stays proportional to
    /// the mask.
    pub fn masked_matmul(
        &self,
        other: &SparseMatrix,
        mask: &SparseMatrix,
    ) -> Result<SparseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::Shape(format!(
                "product of {}x{} and {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        if mask.n_rows != self.n_rows || mask.n_cols != other.n_cols {
            return Err(Error::Shape(format!(
                "mask is {}x{}, product is {}x{}",
                mask.n_rows, mask.n_cols, self.n_rows, other.n_cols
            )));
        }
        let other_t = other.transpose();
        let mut indptr = vec![0usize; self.n_rows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.n_rows {
            let (mask_cols, _) = mask.row(r);
            let (a_cols, a_vals) = self.row(r);
            for &c in mask_cols {
                let (b_rows, b_vals) = other_t.row(c);
                let mut dot = 0.0;
                let (mut i, mut j) = (0, 0);
                while i < a_cols.len() && j < b_rows.len() {
                    match a_cols[i].cmp(&b_rows[j]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            dot += a_vals[i] * b_vals[j];
                            i += 1;
                            j += 1;
                        }
                    }
                }
                if dot != 0.0 {
                    indices.push(c);
                    values.push(dot);
                    indptr[r + 1] += 1;
                }
            }
        }
        for r in 0..self.n_rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: other.n_cols,
            indptr,
            indices,
            values,
        })
    }

    /// CSR-times-dense product.
    pub fn mul_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.n_cols {
            return Err(Error::Shape(format!(
                "sparse {}x{} times dense {}x{}",
                self.n_rows,
                self.n_cols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        let mut out = Array2::zeros((self.n_rows, rhs.ncols()));
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut out_row = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out_row.scaled_add(v, &rhs.row(c));
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (r, c, v) in self.iter() {
            out[(r, c)] = v;
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.row(r).1.iter().sum())
            .collect()
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && *self == self.transpose()
    }

    /// True when every stored value is exactly 1.
    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }

    pub fn has_zero_diagonal(&self) -> bool {
        self.is_square() && (0..self.n_rows).all(|r| self.get(r, r) == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Writes the text dump format: a `rows cols nnz` header, then one
    /// `row col value` line per stored entry with 17 significant digits.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        let mut line = String::new();
        for (r, c, v) in self.iter() {
            line.clear();
            write!(line, "{} {} {:.16e}", r, c, v).expect("write to string");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Parses the dump format produced by [`SparseMatrix::write_dump`].
    pub fn read_dump<R: BufRead>(reader: R) -> Result<SparseMatrix> {
        let path = "<matrix dump>";
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: path.into(),
            line: 1,
            message: "empty dump".into(),
        })?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let mut parts = header.split_whitespace();
        let mut next_usize = |field: &str| -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.into(),
                    line: 1,
                    message: format!("bad header field `{field}`"),
                })
        };
        let n_rows = next_usize("rows")?;
        let n_cols = next_usize("cols")?;
        let nnz = next_usize("nnz")?;
        let mut triplets = Vec::with_capacity(nnz);
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse_err = |msg: &str| Error::Parse {
                path: path.into(),
                line: idx + 1,
                message: msg.into(),
            };
            let r: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad row"))?;
            let c: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad col"))?;
            let v: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad value"))?;
            triplets.push((r, c, v));
        }
        if triplets.len() != nnz {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: format!("header says nnz={nnz}, found {}", triplets.len()),
            });
        }
        SparseMatrix::from_triplets(n_rows, n_cols, triplets)
    }

    /// Internal representation invariants; used by tests.
    pub fn check_invariants(&self) -> bool {
        if self.indptr.len() != self.n_rows + 1 || self.indptr[self.n_rows] != self.nnz() {
            return false;
        }
        if self.indices.len() != self.values.len() {
            return false;
        }
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            if !cols.windows(2).all(|w| w[0] < w[1]) {
                return false;
            }
            if cols.iter().any(|&c| c >= self.n_cols) {
                return false;
            }
            if vals.iter().any(|&v| !v.is_finite() || v == 0.0) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(n: usize, entries: &[(usize, usize, f64)]) -> SparseMatrix {
        SparseMatrix::from_triplets(n, n, entries.iter().copied()).unwrap()
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = mat(3, &[(0, 1, 2.0), (0, 1, 3.0), (1, 2, 1.0), (1, 2, -1.0)]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), 5.0);
        assert_eq!(m.get(1, 2), 0.0);
        assert!(m.check_invariants());
    }

    #[test]
    fn triplets_reject_out_of_bounds_and_non_finite() {
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, [(2, 0, 1.0)]),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, [(0, 0, f64::NAN)]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn transpose_round_trips() {
        let m = mat(4, &[(0, 1, 1.0), (1, 3, 2.0), (3, 0, -4.5), (2, 2, 7.0)]);
        let t = m.transpose();
        assert_eq!(t.get(1, 0), 1.0);
        assert_eq!(t.get(3, 1), 2.0);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn add_scaled_merges_patterns_and_drops_zeros() {
        let a = mat(2, &[(0, 0, 1.0), (0, 1, 2.0)]);
        let b = mat(2, &[(0, 1, 2.0), (1, 1, 3.0)]);
        let s = a.add_scaled(1.0, &b, -1.0).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 1), -3.0);
        assert_eq!(s.nnz(), 2);
    }

    #[test]
    fn masked_matmul_matches_dense_product_on_mask() {
        let a = mat(3, &[(0, 1, 2.0), (1, 2, 3.0), (2, 0, 4.0), (0, 2, 1.0)]);
        let b = mat(3, &[(1, 2, 5.0), (2, 0, 6.0), (0, 1, 7.0)]);
        let mask = mat(3, &[(0, 2, 1.0), (0, 0, 1.0), (1, 1, 1.0), (2, 1, 1.0)]);
        let got = a.masked_matmul(&b, &mask).unwrap();
        let dense = a.to_dense().dot(&b.to_dense());
        for (r, c, _) in mask.iter() {
            assert_eq!(got.get(r, c), dense[(r, c)], "entry ({r},{c})");
        }
        // nothing outside the mask
        for (r, c, _) in got.iter() {
            assert!(mask.get(r, c) != 0.0);
        }
    }

    #[test]
    fn mul_dense_matches_dense() {
        let a = mat(3, &[(0, 1, 2.0), (1, 2, 3.0), (2, 0, 4.0)]);
        let x = ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let got = a.mul_dense(&x).unwrap();
        let want = a.to_dense().dot(&x);
        assert_eq!(got, want);
    }

    #[test]
    fn dump_round_trip_is_exact() {
        let m = mat(
            3,
            &[(0, 1, 0.1), (1, 2, 1.0 / 3.0), (2, 0, 1e-17), (2, 2, -2.5)],
        );
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let back = SparseMatrix::read_dump(buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn dump_header_mismatch_is_rejected() {
        let text = "2 2 3\n0 0 1.0\n";
        assert!(SparseMatrix::read_dump(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn prop_add_scaled_agrees_with_dense(
            entries_a in proptest::collection::vec((0usize..6, 0usize..6, -5.0f64..5.0), 0..20),
            entries_b in proptest::collection::vec((0usize..6, 0usize..6, -5.0f64..5.0), 0..20),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let ma = SparseMatrix::from_triplets(6, 6, entries_a).unwrap();
            let mb = SparseMatrix::from_triplets(6, 6, entries_b).unwrap();
            let got = ma.add_scaled(a, &mb, b).unwrap();
            prop_assert!(got.check_invariants());
            let want = ma.to_dense() * a + mb.to_dense() * b;
            for r in 0..6 {
                for c in 0..6 {
                    prop_assert!((got.get(r, c) - want[(r, c)]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn prop_transpose_involution(
            entries in proptest::collection::vec((0usize..5, 0usize..7, -5.0f64..5.0), 0..25),
        ) {
            let m = SparseMatrix::from_triplets(5, 7, entries).unwrap();
            prop_assert!(m.transpose().check_invariants());
            prop_assert_eq!(m.transpose().transpose(), m);
        }
    }
}
