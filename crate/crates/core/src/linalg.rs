//! Small dense linear-algebra kernels on row-major `Vec<f64>` storage.
//!
//! Only what the Gaussian-process code needs: an in-place Cholesky
//! factorization, triangular solves that may operate on a leading block of
//! the factor, and the inverse of a factored matrix.

/// Lower-triangular Cholesky factor `L` of an `n x n` SPD matrix, `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorizes the row-major matrix `a` (only the lower triangle is read).
    /// Returns `None` if a non-positive pivot is encountered.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        for j in 0..n {
            let mut diag = a[j * n + j];
            for k in 0..j {
                diag -= a[j * n + k] * a[j * n + k];
            }
            if !(diag > 0.0 && diag.is_finite()) {
                return None;
            }
            let ljj = diag.sqrt();
            a[j * n + j] = ljj;
            for k in j + 1..n {
                a[j * n + k] = 0.0;
            }
            let (upper, lower) = a.split_at_mut((j + 1) * n);
            let row_j = &upper[j * n..j * n + j];
            for row_i in lower.chunks_exact_mut(n) {
                let s = row_i[j] - dot(&row_i[..j], row_j);
                row_i[j] = s / ljj;
            }
        }
        Some(Self { n, l: a })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Solves `L_m x = b` in place using the leading `m x m` block of `L`,
    /// where `m = b.len()`.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let m = b.len();
        debug_assert!(m <= self.n);
        for i in 0..m {
            let row = &self.l[i * self.n..i * self.n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * self.n + i];
        }
    }

    /// Solves `L_mᵀ x = b` in place on the leading `m x m` block.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let m = b.len();
        debug_assert!(m <= self.n);
        for i in (0..m).rev() {
            let s = b[i] / self.l[i * self.n + i];
            b[i] = s;
            let row = &self.l[i * self.n..i * self.n + i];
            for (bk, lk) in b[..i].iter_mut().zip(row) {
                *bk -= lk * s;
            }
        }
    }

    /// Solves `A_m x = b` on the leading block, `A_m = L_m L_mᵀ`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    /// `log det A_m` of the leading `m x m` block.
    pub fn log_det(&self, m: usize) -> f64 {
        (0..m).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    /// Dense `A⁻¹`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // L⁻¹ row by row: row i = -(Σ_{k<i} L_ik row_k) / L_ii, plus 1/L_ii on the diagonal.
        let mut linv = vec![0.0; n * n];
        for i in 0..n {
            let (done, rest) = linv.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            for k in 0..i {
                let lik = self.l[i * n + k];
                if lik == 0.0 {
                    continue;
                }
                let row_k = &done[k * n..k * n + k + 1];
                for (r, v) in row_i[..=k].iter_mut().zip(row_k) {
                    *r -= lik * v;
                }
            }
            let lii = self.l[i * n + i];
            for r in row_i[..i].iter_mut() {
                *r /= lii;
            }
            row_i[i] = 1.0 / lii;
        }
        // A⁻¹ = L⁻ᵀ L⁻¹, (A⁻¹)_ab = Σ_{k ≥ max(a,b)} L⁻¹_ka L⁻¹_kb
        let mut inv = vec![0.0; n * n];
        for k in 0..n {
            let row = &linv[k * n..k * n + k + 1];
            for a in 0..=k {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                let out = &mut inv[a * n..a * n + a + 1];
                for (o, rb) in out.iter_mut().zip(row.iter()) {
                    *o += ra * rb;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                inv[b * n + a] = inv[a * n + b];
            }
        }
        inv
    }
}

/// Inner product with four independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 1.0 / (1.0 + (i as f64 - j as f64).abs());
            }
            a[i * n + i] += n as f64;
        }
        a
    }

    #[test]
    fn factor_reconstructs_matrix() {
        let n = 7;
        let a = spd(n);
        let c = Cholesky::factor(a.clone(), n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| c.get(i, k) * c.get(j, k)).sum();
                assert!((s - a[i * n + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        assert!(Cholesky::factor(vec![1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn solve_and_inverse_agree() {
        let n = 6;
        let a = spd(n);
        let c = Cholesky::factor(a.clone(), n).unwrap();
        let inv = c.inverse();
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let mut x = b.clone();
        c.solve_in_place(&mut x);
        for i in 0..n {
            let xi: f64 = (0..n).map(|k| inv[i * n + k] * b[k]).sum();
            assert!((xi - x[i]).abs() < 1e-12);
            let ax: f64 = (0..n).map(|k| a[i * n + k] * x[k]).sum();
            assert!((ax - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn leading_block_matches_factor_of_block() {
        let n = 6;
        let m = 4;
        let a = spd(n);
        let full = Cholesky::factor(a.clone(), n).unwrap();
        let mut block = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                block[i * m + j] = a[i * n + j];
            }
        }
        let small = Cholesky::factor(block, m).unwrap();
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let mut x1 = b.clone();
        let mut x2 = b.clone();
        full.solve_in_place(&mut x1);
        small.solve_in_place(&mut x2);
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-13);
        }
        assert!((full.log_det(m) - small.log_det(m)).abs() < 1e-13);
    }
}
