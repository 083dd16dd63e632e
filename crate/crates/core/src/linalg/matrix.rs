//! Row-oriented matrix storage.
//!
//! Every solver in this crate touches `A` one row at a time, so both storage
//! formats expose a [`RowView`] and nothing column-oriented beyond the
//! transposed pattern kept by [`CsrMatrix`] for `A * a_i` products.

use super::LinalgError;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows * cols != data.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
///
/// A transposed (CSC) copy of the pattern and values is built on
/// construction so that `A * a_i` can be formed by touching only the columns
/// in the support of `a_i`.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    // column-major mirror
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_values: Vec<f64>,
}

impl PartialEq for CsrMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.indptr == other.indptr
            && self.indices == other.indices
            && self.values == other.values
    }
}

impl CsrMatrix {
    /// Builds a CSR matrix from raw arrays. Column indices inside each row
    /// must be strictly increasing and below `cols`.
    pub fn new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if indptr.len() != rows + 1 {
            return Err(LinalgError::DimensionMismatch {
                expected: rows + 1,
                found: indptr.len(),
            });
        }
        if indices.len() != values.len() || indptr[rows] != indices.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: indptr[rows],
                found: indices.len(),
            });
        }
        for i in 0..rows {
            if indptr[i] > indptr[i + 1] {
                return Err(LinalgError::MalformedSparse(format!(
                    "row pointer decreases at row {i}"
                )));
            }
            let row = &indices[indptr[i]..indptr[i + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LinalgError::MalformedSparse(format!(
                    "column indices of row {i} are not strictly increasing"
                )));
            }
            if row.last().is_some_and(|&j| j >= cols) {
                return Err(LinalgError::MalformedSparse(format!(
                    "column index out of range in row {i}"
                )));
            }
        }
        let (col_ptr, col_rows, col_values) = transpose(rows, cols, &indptr, &indices, &values);
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
            col_ptr,
            col_rows,
            col_values,
        })
    }

    /// Builds a CSR matrix from 0-based triplets; duplicate entries are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(LinalgError::MalformedSparse(format!(
                    "entry ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            sorted.push((i, j, v));
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Self::new(rows, cols, indptr, indices, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        let span = self.indptr[i]..self.indptr[i + 1];
        RowView::Sparse {
            indices: &self.indices[span.clone()],
            values: &self.values[span],
        }
    }

    /// `out += alpha * A * a_i`, walking only the columns in the support of row `i`.
    fn add_scaled_row_product(&self, i: usize, alpha: f64, out: &mut [f64]) {
        for p in self.indptr[i]..self.indptr[i + 1] {
            let j = self.indices[p];
            let s = alpha * self.values[p];
            for q in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.col_rows[q]] += s * self.col_values[q];
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut dense = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                dense.set(i, self.indices[p], self.values[p]);
            }
        }
        dense
    }

    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut triplets = Vec::new();
        for i in 0..dense.rows() {
            for (j, &v) in dense.row(i).iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(dense.rows(), dense.cols(), &triplets)
            .expect("dense matrix yields valid triplets")
    }
}

fn transpose(
    rows: usize,
    cols: usize,
    indptr: &[usize],
    indices: &[usize],
    values: &[f64],
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut col_ptr = vec![0usize; cols + 1];
    for &j in indices {
        col_ptr[j + 1] += 1;
    }
    for j in 0..cols {
        col_ptr[j + 1] += col_ptr[j];
    }
    let mut next = col_ptr.clone();
    let mut col_rows = vec![0usize; indices.len()];
    let mut col_values = vec![0.0; indices.len()];
    for i in 0..rows {
        for p in indptr[i]..indptr[i + 1] {
            let j = indices[p];
            col_rows[next[j]] = i;
            col_values[next[j]] = values[p];
            next[j] += 1;
        }
    }
    (col_ptr, col_rows, col_values)
}

/// Either storage format.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Csr(CsrMatrix),
}

/// Density above which [`Matrix::auto`] prefers dense storage.
pub const DENSE_DENSITY_THRESHOLD: f64 = 0.25;
/// Column count at or below which [`Matrix::auto`] always prefers dense storage.
pub const DENSE_MAX_NARROW_COLS: usize = 64;

impl Matrix {
    /// Picks dense storage when the matrix is more than 25% full or has at
    /// most 64 columns, CSR otherwise.
    pub fn auto(csr: CsrMatrix) -> Self {
        let cells = (csr.rows() * csr.cols()).max(1) as f64;
        let density = csr.nnz() as f64 / cells;
        if density > DENSE_DENSITY_THRESHOLD || csr.cols() <= DENSE_MAX_NARROW_COLS {
            Matrix::Dense(csr.to_dense())
        } else {
            Matrix::Csr(csr)
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.rows(),
            Matrix::Csr(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.cols(),
            Matrix::Csr(s) => s.cols(),
        }
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        match self {
            Matrix::Dense(d) => RowView::Dense(d.row(i)),
            Matrix::Csr(s) => s.row(i),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Matrix::Csr(_))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(d) => d.clone(),
            Matrix::Csr(s) => s.to_dense(),
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        match self {
            Matrix::Dense(d) => CsrMatrix::from_dense(d),
            Matrix::Csr(s) => s.clone(),
        }
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows()).map(|i| self.row(i).dot(x)).collect()
    }

    /// `out += alpha * A * a_i`.
    pub fn add_scaled_row_product(&self, i: usize, alpha: f64, out: &mut [f64]) {
        match self {
            Matrix::Dense(d) => {
                let ai = d.row(i);
                for (k, o) in out.iter_mut().enumerate() {
                    *o += alpha * dot(d.row(k), ai);
                }
            }
            Matrix::Csr(s) => s.add_scaled_row_product(i, alpha, out),
        }
    }

    /// Dense vector `A * a_i`.
    pub fn row_product(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.add_scaled_row_product(i, 1.0, &mut out);
        out
    }
}

impl From<DenseMatrix> for Matrix {
    fn from(d: DenseMatrix) -> Self {
        Matrix::Dense(d)
    }
}

impl From<CsrMatrix> for Matrix {
    fn from(s: CsrMatrix) -> Self {
        Matrix::Csr(s)
    }
}

/// Borrowed view of one matrix row.
#[derive(Debug, Clone, Copy)]
pub enum RowView<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [usize],
        values: &'a [f64],
    },
}

impl RowView<'_> {
    /// `<a, x>` for a dense vector `x`.
    pub fn dot(&self, x: &[f64]) -> f64 {
        match *self {
            RowView::Dense(a) => dot(a, x),
            RowView::Sparse { indices, values } => {
                indices.iter().zip(values).map(|(&j, &v)| v * x[j]).sum()
            }
        }
    }

    /// `y += alpha * a`.
    pub fn axpy(&self, alpha: f64, y: &mut [f64]) {
        match *self {
            RowView::Dense(a) => {
                for (yi, ai) in y.iter_mut().zip(a) {
                    *yi += alpha * ai;
                }
            }
            RowView::Sparse { indices, values } => {
                for (&j, &v) in indices.iter().zip(values) {
                    y[j] += alpha * v;
                }
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match *self {
            RowView::Dense(a) => dot(a, a),
            RowView::Sparse { values, .. } => dot(values, values),
        }
    }

    /// Inner product of two rows of the same matrix.
    pub fn dot_row(&self, other: &RowView<'_>) -> f64 {
        match (*self, *other) {
            (RowView::Dense(a), RowView::Dense(b)) => dot(a, b),
            (RowView::Dense(a), sparse @ RowView::Sparse { .. })
            | (sparse @ RowView::Sparse { .. }, RowView::Dense(a)) => sparse.dot(a),
            (
                RowView::Sparse {
                    indices: ia,
                    values: va,
                },
                RowView::Sparse {
                    indices: ib,
                    values: vb,
                },
            ) => {
                let (mut p, mut q, mut acc) = (0, 0, 0.0);
                while p < ia.len() && q < ib.len() {
                    match ia[p].cmp(&ib[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            acc += va[p] * vb[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                acc
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        match *self {
            RowView::Dense(a) => a.to_vec(),
            RowView::Sparse { indices, values } => {
                let mut out = vec![0.0; n];
                for (&j, &v) in indices.iter().zip(values) {
                    out[j] = v;
                }
                out
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
