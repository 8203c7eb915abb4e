//! Lower-triangular tables of small dense blocks indexed by grid pairs `(i, j)`, `j <= i`.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub(crate) struct BlockTable {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl BlockTable {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * (n + 1) / 2 * d * d] }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i < self.n);
        (i * (i + 1) / 2 + j) * self.d * self.d
    }

    /// Column-major block `(i, j)`.
    #[inline]
    pub fn block(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.data[o..o + self.d * self.d]
    }

    #[inline]
    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j);
        let dd = self.d * self.d;
        &mut self.data[o..o + dd]
    }

    pub fn set(&mut self, i: usize, j: usize, m: &DMatrix<f64>) {
        self.block_mut(i, j).copy_from_slice(m.as_slice());
    }

    pub fn matrix(&self, i: usize, j: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.d, self.d, self.block(i, j))
    }

    pub fn apply(&self, i: usize, j: usize, x: &DVector<f64>) -> DVector<f64> {
        let b = self.block(i, j);
        let d = self.d;
        let mut y = DVector::zeros(d);
        for c in 0..d {
            let xc = x[c];
            for r in 0..d {
                y[r] += b[c * d + r] * xc;
            }
        }
        y
    }

    pub fn apply_transpose(&self, i: usize, j: usize, x: &DVector<f64>) -> DVector<f64> {
        let b = self.block(i, j);
        let d = self.d;
        DVector::from_iterator(d, (0..d).map(|c| (0..d).map(|r| b[c * d + r] * x[r]).sum()))
    }
}

/// `c += scale · a · b` for column-major `d × d` blocks.
#[inline]
pub(crate) fn gemm_acc(c: &mut [f64], a: &[f64], b: &[f64], d: usize, scale: f64) {
    for col in 0..d {
        for k in 0..d {
            let bk = scale * b[col * d + k];
            if bk == 0.0 {
                continue;
            }
            let a_col = &a[k * d..(k + 1) * d];
            let c_col = &mut c[col * d..(col + 1) * d];
            for (cr, ar) in c_col.iter_mut().zip(a_col) {
                *cr += ar * bk;
            }
        }
    }
}

/// Frobenius norm of a block.
#[inline]
pub(crate) fn block_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_nalgebra() {
        let a = DMatrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64 * 0.1 - 0.3);
        let b = DMatrix::from_fn(3, 3, |r, c| ((r + 2 * c) % 4) as f64 - 1.5);
        let mut c = DMatrix::from_element(3, 3, 1.0);
        gemm_acc(c.as_mut_slice(), a.as_slice(), b.as_slice(), 3, 0.5);
        let expected = DMatrix::from_element(3, 3, 1.0) + &a * &b * 0.5;
        assert!((c - expected).norm() < 1e-14);
    }

    #[test]
    fn table_round_trips_blocks() {
        let mut t = BlockTable::zeros(4, 2);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        t.set(3, 1, &m);
        assert_eq!(t.matrix(3, 1), m);
        let x = DVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(t.apply(3, 1, &x), &m * &x);
        assert_eq!(t.apply_transpose(3, 1, &x), m.transpose() * &x);
        assert_eq!(t.matrix(2, 2), DMatrix::zeros(2, 2));
    }
}
