//! Symmetric positive definite band matrices with in-place Cholesky.

/// Pivots below this fraction of the largest diagonal entry are frozen.
const PIVOT_FLOOR: f64 = 1e-30;
const FROZEN: f64 = 1e64;

#[derive(Clone)]
pub(crate) struct Band {
    m: usize,
    bw: usize,
    /// Row-major lower band: entry (i, j) with i - bw <= j <= i lives at
    /// `i * (bw + 1) + (j + bw - i)`.
    data: Vec<f64>,
}

impl Band {
    pub fn zeros(m: usize, bw: usize) -> Self {
        let bw = bw.min(m.saturating_sub(1));
        Self {
            m,
            bw,
            data: vec![0.0; m * (bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `x` to entry (i, j) of the symmetric matrix (either triangle).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, x: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += x;
    }

    /// Overwrites the matrix with its Cholesky factor L (A = LLᵀ).
    ///
    /// Pivots that collapse to rounding level are replaced by a huge value,
    /// which freezes the corresponding direction instead of failing.
    pub fn factor(&mut self) {
        let (m, bw) = (self.m, self.bw);
        let max_diag = (0..m).map(|i| self.data[self.idx(i, i)].abs()).fold(0.0, f64::max);
        let tiny = PIVOT_FLOOR * max_diag.max(1e-300);
        for i in 0..m {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.data[self.idx(i, j)];
                let (ri, rj) = (self.idx(i, klo), self.idx(j, klo));
                let len = j - klo;
                for t in 0..len {
                    s -= self.data[ri + t] * self.data[rj + t];
                }
                if i == j {
                    let d = if s > tiny { s.sqrt() } else { FROZEN };
                    let k = self.idx(i, i);
                    self.data[k] = d;
                } else {
                    let d = self.data[self.idx(j, j)];
                    let k = self.idx(i, j);
                    self.data[k] = s / d;
                }
            }
        }
    }

    /// Solves LLᵀx = b in place after [`Band::factor`].
    pub fn solve(&self, b: &mut [f64]) {
        let (m, bw) = (self.m, self.bw);
        for i in 0..m {
            let lo = i.saturating_sub(bw);
            let row = self.idx(i, lo);
            let mut s = b[i];
            for (t, j) in (lo..i).enumerate() {
                s -= self.data[row + t] * b[j];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..m).rev() {
            b[i] /= self.data[self.idx(i, i)];
            let lo = i.saturating_sub(bw);
            let row = self.idx(i, lo);
            let bi = b[i];
            for (t, j) in (lo..i).enumerate() {
                b[j] -= self.data[row + t] * bi;
            }
        }
    }
}

impl Band {
    /// `out = A x` for the (unfactored) symmetric matrix.
    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        let (m, bw) = (self.m, self.bw);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..m {
            let lo = i.saturating_sub(bw);
            let row = self.idx(i, lo);
            for (t, j) in (lo..i).enumerate() {
                let a = self.data[row + t];
                out[i] += a * x[j];
                out[j] += a * x[i];
            }
            out[i] += self.data[self.idx(i, i)] * x[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_dense_cholesky() {
        let m = 12;
        let bw = 3;
        let mut band = Band::zeros(m, bw);
        let mut dense = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i.saturating_sub(bw)..=i {
                let x = if i == j {
                    10.0 + i as f64
                } else {
                    ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6
                };
                band.add(i, j, x);
                dense[(i, j)] = x;
                dense[(j, i)] = x;
            }
        }
        let b: Vec<f64> = (0..m).map(|i| (i as f64).sin()).collect();
        let expect = dense.cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
        band.factor();
        let mut x = b;
        band.solve(&mut x);
        for i in 0..m {
            assert!((x[i] - expect[i]).abs() < 1e-12);
        }
    }
}
