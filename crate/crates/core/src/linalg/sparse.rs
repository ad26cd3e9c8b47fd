use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Compressed-row storage for a pencil L0 + ε·Leps sharing one sparsity
/// pattern (the union of both).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    drift: Vec<C64>,
    coupling: Vec<C64>,
}

impl SplitOperator {
    pub fn from_dense(l0: &DMatrix<C64>, leps: &DMatrix<C64>) -> Self {
        assert_eq!(l0.shape(), leps.shape());
        assert!(l0.is_square());
        let n = l0.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let (mut cols, mut drift, mut coupling) = (Vec::new(), Vec::new(), Vec::new());
        row_ptr.push(0);
        for r in 0..n {
            for c in 0..n {
                let (a, b) = (l0[(r, c)], leps[(r, c)]);
                if a != C64::default() || b != C64::default() {
                    cols.push(c);
                    drift.push(a);
                    coupling.push(b);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, drift, coupling }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// The operator with both parts transposed (not conjugated).
    pub fn transpose(&self) -> Self {
        let mut l0 = DMatrix::zeros(self.n, self.n);
        let mut le = DMatrix::zeros(self.n, self.n);
        self.for_each(|r, c, a, b| {
            l0[(c, r)] = a;
            le[(c, r)] = b;
        });
        Self::from_dense(&l0, &le)
    }

    fn for_each(&self, mut f: impl FnMut(usize, usize, C64, C64)) {
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                f(r, self.cols[k], self.drift[k], self.coupling[k]);
            }
        }
    }

    /// y = (L0 + eps·Leps)·x
    #[inline]
    pub fn apply(&self, eps: f64, x: &[C64], y: &mut [C64]) {
        for r in 0..self.n {
            let mut acc = C64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += (self.drift[k] + self.coupling[k] * eps) * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    /// Writes the values of L0 + eps·Leps on the shared pattern into `vals`.
    pub fn combine(&self, eps: f64, vals: &mut Vec<C64>) {
        vals.clear();
        vals.extend(self.drift.iter().zip(&self.coupling).map(|(a, b)| a + b * eps));
    }

    /// y = M·x for M given by values from [`SplitOperator::combine`].
    #[inline]
    pub fn apply_values(&self, vals: &[C64], x: &[C64], y: &mut [C64]) {
        for r in 0..self.n {
            let mut acc = C64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    /// Induced 1-norm of the matrix with values `vals`.
    pub fn norm_of_values(&self, vals: &[C64]) -> f64 {
        let mut col_sums = vec![0.0; self.n];
        for (v, &c) in vals.iter().zip(&self.cols) {
            col_sums[c] += v.norm();
        }
        col_sums.into_iter().fold(0.0, f64::max)
    }

    /// y = Leps·x
    pub fn apply_coupling(&self, x: &[C64], y: &mut [C64]) {
        for r in 0..self.n {
            let mut acc = C64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.coupling[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    /// leftᵀ·Leps·right without conjugation.
    pub fn coupling_form(&self, left: &[C64], right: &[C64]) -> C64 {
        let mut acc = C64::default();
        for r in 0..self.n {
            let mut row = C64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.coupling[k] * right[self.cols[k]];
            }
            acc += left[r] * row;
        }
        acc
    }

    /// Exact induced 1-norm of L0 + eps·Leps.
    pub fn one_norm(&self, eps: f64) -> f64 {
        let mut col_sums = vec![0.0; self.n];
        for (k, &c) in self.cols.iter().enumerate() {
            col_sums[c] += (self.drift[k] + self.coupling[k] * eps).norm();
        }
        col_sums.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self, eps: f64) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.for_each(|r, c, a, b| m[(r, c)] = a + b * eps);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_matches_dense() {
        let l0 =
            DMatrix::from_fn(4, 4, |r, c| if (r + c) % 3 == 0 { C64::new(r as f64, c as f64) } else { C64::default() });
        let le = DMatrix::from_fn(4, 4, |r, c| if r == c + 1 { C64::new(0.0, 2.0) } else { C64::default() });
        let op = SplitOperator::from_dense(&l0, &le);
        assert_eq!(op.to_dense(0.5), &l0 + &le * C64::from(0.5));
        let x: Vec<C64> = (0..4).map(|k| C64::new(1.0, k as f64)).collect();
        let mut y = vec![C64::default(); 4];
        op.apply(0.5, &x, &mut y);
        let dense = (&l0 + &le * C64::from(0.5)) * nalgebra::DVector::from_vec(x.clone());
        for k in 0..4 {
            assert!((y[k] - dense[k]).norm() < 1e-14);
        }
        let t = op.transpose();
        assert_eq!(t.to_dense(0.5), op.to_dense(0.5).transpose());
        let form = op.coupling_form(&x, &x);
        let reference =
            (nalgebra::DVector::from_vec(x.clone()).transpose() * &le * nalgebra::DVector::from_vec(x))[(0, 0)];
        assert!((form - reference).norm() < 1e-13);
    }
}
