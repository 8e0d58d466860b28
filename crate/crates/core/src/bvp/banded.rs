//! Banded LU factorization with partial pivoting.

use crate::scalar::Real;

/// Square matrix with `kl` sub-diagonals and `ku` super-diagonals.
///
/// Storage is row-wise over the band, with `kl` extra super-diagonals
/// reserved for pivoting fill-in.
#[derive(Clone, Debug)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[self.index(i, j)]
    }

    /// Sets an entry inside the declared band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let k = self.index(i, j);
        self.data[k] = v;
    }

    /// In-place LU factorization. Returns `None` if a zero pivot is met.
    pub fn factor(mut self) -> Option<BandedLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        let mut pivots = vec![0usize; n];
        for j in 0..n {
            let last_row = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.get(j, j).abs();
            for i in j + 1..=last_row {
                let v = self.get(i, j).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return None;
            }
            pivots[j] = p;
            let last_col = (j + reach).min(n - 1);
            if p != j {
                for k in j..=last_col {
                    let a = self.index(j, k);
                    let b = self.index(p, k);
                    self.data.swap(a, b);
                }
            }
            let piv = self.get(j, j);
            for i in j + 1..=last_row {
                let idx = self.index(i, j);
                let l = self.data[idx] / piv;
                self.data[idx] = l;
                if l == T::zero() {
                    continue;
                }
                let row_j = self.index(j, j);
                let row_i = self.index(i, j);
                for off in 1..=(last_col - j) {
                    let u = self.data[row_j + off];
                    self.data[row_i + off] -= l * u;
                }
            }
        }
        Some(BandedLu { m: self, pivots })
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    m: BandedMatrix<T>,
    pivots: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.m.n;
        let kl = self.m.kl;
        let reach = kl + self.m.ku;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != T::zero() {
                for (i, bi) in b.iter_mut().enumerate().take((j + kl).min(n - 1) + 1).skip(j + 1) {
                    *bi -= self.m.get(i, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let last_col = (j + reach).min(n - 1);
            let mut acc = b[j];
            for (k, bk) in b.iter().enumerate().take(last_col + 1).skip(j + 1) {
                acc -= self.m.get(j, k) * *bk;
            }
            b[j] = acc / self.m.get(j, j);
        }
    }
}
