//! Banded LU without pivoting, for nonsingular M-matrices.
//!
//! For an M-matrix the no-pivot factors keep their sign pattern (L and U
//! have nonpositive off-diagonals, U a positive diagonal), so forward and
//! back substitution of a nonnegative right-hand side only ever add
//! nonnegative terms and every component keeps full relative accuracy.

#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    // Row-major band storage: row k holds columns k-lower ..= k+upper.
    data: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        BandMatrix {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.lower >= row && col <= row + self.upper);
        row * (self.lower + self.upper + 1) + (col + self.lower - row)
    }

    pub(crate) fn add(&mut self, row: usize, col: usize, v: f64) {
        let k = self.slot(row, col);
        self.data[k] += v;
    }

    #[inline]
    fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.slot(row, col)]
    }

    /// In-place Doolittle factorization. Fails on a non-positive pivot,
    /// which for the matrices used here means the shift is not above the
    /// Perron root.
    pub(crate) fn factorize(mut self) -> Option<BandLu> {
        let width = self.lower + self.upper + 1;
        for k in 0..self.n {
            let pivot = self.get(k, k);
            if !(pivot > 0.0) {
                return None;
            }
            let last_row = (k + self.lower).min(self.n - 1);
            let last_col = (k + self.upper).min(self.n - 1);
            let pivot_row = k * width + self.lower - k;
            for i in k + 1..=last_row {
                let ik = self.slot(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                let row_i = i * width + self.lower - i;
                for j in k + 1..=last_col {
                    self.data[row_i + j] -= l * self.data[pivot_row + j];
                }
            }
        }
        Some(BandLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    /// Solves `A x = b` in place.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let m = &self.m;
        for i in 0..m.n {
            let first = i.saturating_sub(m.lower);
            let mut acc = b[i];
            for j in first..i {
                acc -= m.get(i, j) * b[j];
            }
            b[i] = acc;
        }
        for i in (0..m.n).rev() {
            let last = (i + m.upper).min(m.n - 1);
            let mut acc = b[i];
            for j in i + 1..=last {
                acc -= m.get(i, j) * b[j];
            }
            b[i] = acc / m.get(i, i);
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub(crate) fn solve_transpose(&self, b: &mut [f64]) {
        let m = &self.m;
        // Uᵀ y = b
        for i in 0..m.n {
            let y = b[i] / m.get(i, i);
            b[i] = y;
            let last = (i + m.upper).min(m.n - 1);
            for j in i + 1..=last {
                b[j] -= m.get(i, j) * y;
            }
        }
        // Lᵀ x = y
        for i in (0..m.n).rev() {
            let x = b[i];
            let first = i.saturating_sub(m.lower);
            for j in first..i {
                b[j] -= m.get(i, j) * x;
            }
        }
    }
}
