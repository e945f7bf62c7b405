//! Banded LU factorisation without pivoting.

/// Square matrix with `lower` sub- and `upper` super-diagonals, stored by
/// row with `lower + upper + 1` entries per row.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
            factored: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn in_band(&self, r: usize, c: usize) -> bool {
        c + self.lower >= r && c <= r + self.upper
    }

    fn index(&self, r: usize, c: usize) -> usize {
        r * (self.lower + self.upper + 1) + (c + self.lower - r)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if self.in_band(r, c) {
            self.data[self.index(r, c)]
        } else {
            0.0
        }
    }

    /// # Panics
    /// If `(r, c)` lies outside the band.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(self.in_band(r, c), "({r}, {c}) outside band");
        let i = self.index(r, c);
        self.data[i] = v;
    }

    /// In-place Doolittle factorisation `A = LU` with unit-diagonal `L`.
    /// Returns the row of the first vanishing pivot on failure.
    pub fn factorize(&mut self) -> Result<(), usize> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(k);
            }
            let row_end = (k + self.lower + 1).min(n);
            let col_end = (k + self.upper + 1).min(n);
            for i in (k + 1)..row_end {
                let ik = self.index(i, k);
                let factor = self.data[ik] / pivot;
                self.data[ik] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in (k + 1)..col_end {
                    let kj = self.get(k, j);
                    let ij = self.index(i, j);
                    self.data[ij] -= factor * kj;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place after [`BandedMatrix::factorize`].
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored && b.len() == self.n);
        let n = self.n;
        for i in 0..n {
            let start = i.saturating_sub(self.lower);
            let mut s = b[i];
            for j in start..i {
                s -= self.get(i, j) * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + self.upper + 1).min(n);
            let mut s = b[i];
            for j in (i + 1)..end {
                s -= self.get(i, j) * b[j];
            }
            b[i] = s / self.get(i, i);
        }
    }

    /// Solves `Aᵀ x = b` in place after [`BandedMatrix::factorize`].
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        assert!(self.factored && b.len() == self.n);
        let n = self.n;
        // Uᵀ y = b
        for i in 0..n {
            let start = i.saturating_sub(self.upper);
            let mut s = b[i];
            for j in start..i {
                s -= self.get(j, i) * b[j];
            }
            b[i] = s / self.get(i, i);
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let end = (i + self.lower + 1).min(n);
            let mut s = b[i];
            for j in (i + 1)..end {
                s -= self.get(j, i) * b[j];
            }
            b[i] = s;
        }
    }
}
