use crate::error::{Error, Result};

/// Compressed sparse row matrix of `f64`.
///
/// Column indices inside a row are sorted and unique. `symmetric` is a
/// declaration by whoever built the matrix; [`SparseMatrix::symmetry_defect`]
/// checks it.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
    symmetric: bool,
}

/// Coordinate-format accumulator; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: Vec::new() }
    }

    pub fn with_capacity(rows: usize, cols: usize, cap: usize) -> Self {
        Self { rows, cols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> SparseMatrix {
        self.entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.rows {
            indptr[r + 1] += indptr[r];
        }
        SparseMatrix { rows: self.rows, cols: self.cols, indptr, indices, data, symmetric: false }
    }
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            data: Vec::new(),
            symmetric: rows == cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: diag.to_vec(),
            symmetric: true,
        }
    }

    /// Builds from a row-major dense array, dropping exact zeros.
    pub fn from_dense(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols);
        let mut b = TripletBuilder::new(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = values[i * cols + j];
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn with_symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Same sparsity pattern, new values.
    pub fn with_data(&self, data: Vec<f64>) -> SparseMatrix {
        assert_eq!(data.len(), self.data.len());
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data,
            symmetric: self.symmetric,
        }
    }

    /// Position of entry (r, c) in [`Self::data`], if stored.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[lo..hi].binary_search(&c).ok().map(|k| lo + k)
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.data[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// y = M x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "mul_vec: x has wrong length");
        assert_eq!(y.len(), self.rows, "mul_vec: y has wrong length");
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yr = acc;
        }
    }

    /// y = Mᵀ x
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "mul_transpose_vec: x has wrong length");
        let mut y = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * xr;
            }
        }
        y
    }

    /// xᵀ M y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        let mut acc = 0.0;
        for (r, &xr) in x.iter().enumerate() {
            let mut row = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                row += self.data[k] * y[self.indices[k]];
            }
            acc += xr * row;
        }
        acc
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.cols, self.rows, self.nnz());
        for (r, c, v) in self.triplets() {
            b.push(c, r, v);
        }
        b.build().with_symmetric(self.symmetric)
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Σ cₖ Mₖ over matrices of equal shape. Symmetric iff every input is.
    pub fn linear_combination(coeffs: &[f64], mats: &[&SparseMatrix]) -> Result<SparseMatrix> {
        assert_eq!(coeffs.len(), mats.len());
        let first = mats
            .first()
            .ok_or_else(|| Error::DimensionMismatch("empty linear combination".into()))?;
        let (rows, cols) = (first.rows, first.cols);
        if mats.iter().any(|m| m.rows != rows || m.cols != cols) {
            return Err(Error::DimensionMismatch("linear combination of differently shaped matrices".into()));
        }
        let cap = mats.iter().map(|m| m.nnz()).sum();
        let mut b = TripletBuilder::with_capacity(rows, cols, cap);
        for (&c, m) in coeffs.iter().zip(mats) {
            for (r, j, v) in m.triplets() {
                b.push(r, j, c * v);
            }
        }
        let sym = mats.iter().all(|m| m.symmetric);
        Ok(b.build().with_symmetric(sym))
    }

    /// Keeps the rows in `row_map` and columns in `col_map`, renumbered.
    /// Each map sends an old index to `Some(new)` or `None` (dropped).
    pub fn restrict(
        &self,
        row_map: &[Option<usize>],
        new_rows: usize,
        col_map: &[Option<usize>],
        new_cols: usize,
    ) -> SparseMatrix {
        assert_eq!(row_map.len(), self.rows);
        assert_eq!(col_map.len(), self.cols);
        let mut b = TripletBuilder::with_capacity(new_rows, new_cols, self.nnz());
        for (r, c, v) in self.triplets() {
            if let (Some(nr), Some(nc)) = (row_map[r], col_map[c]) {
                b.push(nr, nc, v);
            }
        }
        b.build().with_symmetric(self.symmetric && row_map == col_map)
    }

    /// `|M - Mᵀ|_max / |M|_max` (0 for the zero matrix).
    pub fn symmetry_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for (r, c, v) in self.triplets() {
            worst = worst.max((v - self.get(c, r)).abs());
        }
        worst / scale
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for (r, c, v) in self.triplets() {
            out[r * self.cols + c] = v;
        }
        out
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Block matrix `[[A, Bᵀ], [B, 0]]`.
    pub fn saddle_block(a: &SparseMatrix, b: &SparseMatrix) -> Result<SparseMatrix> {
        let n = a.rows;
        let m = b.rows;
        if a.cols != n || b.cols != n {
            return Err(Error::DimensionMismatch(format!(
                "saddle block: A is {}x{}, B is {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        let mut t = TripletBuilder::with_capacity(n + m, n + m, a.nnz() + 2 * b.nnz());
        for (r, c, v) in a.triplets() {
            t.push(r, c, v);
        }
        for (r, c, v) in b.triplets() {
            t.push(n + r, c, v);
            t.push(c, n + r, v);
        }
        Ok(t.build().with_symmetric(a.symmetric))
    }

    pub fn has_zero_row(&self) -> bool {
        (0..self.rows).any(|r| self.row(r).all(|(_, v)| v == 0.0))
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y += a x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}
