//! Small dense linear algebra: a 3×3 matrix type, a one-sided Jacobi SVD
//! for tall matrices and a pivoted Gaussian solver.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut, Mul};

use serde::{Deserialize, Serialize};

use crate::math::sqrt;

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn from_row_slice(v: &[f64]) -> Mat3 {
        assert_eq!(v.len(), 9, "Mat3 needs 9 entries");
        Mat3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Mat3 {
        Mat3([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    pub fn to_row_vec(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn transpose(&self) -> Mat3 {
        let mut out = Mat3::ZERO;
        for r in 0..3 {
            for c in 0..3 {
                out.0[c][r] = self.0[r][c];
            }
        }
        out
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate; `None` when |det| ≤ 1e-300.
    pub fn inverse(&self) -> Option<Mat3> {
        let d = self.det();
        if !d.is_finite() || d.abs() <= 1e-300 {
            return None;
        }
        let m = &self.0;
        let inv = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut out = Mat3(inv);
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v /= d;
            }
        }
        Some(out)
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn sub(&self, other: &Mat3) -> Mat3 {
        let mut out = *self;
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] -= other.0[r][c];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(self.0.iter().flatten().map(|v| v * v).sum())
    }

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn column(&self, c: usize) -> [f64; 3] {
        [self.0[0][c], self.0[1][c], self.0[2][c]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl Mul for Mat3 {
    type Output = Mat3;

    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for r in 0..3 {
            for c in 0..3 {
                out.0[r][c] = (0..3).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.0[r][c]
    }
}

impl IndexMut<(usize, usize)> for Mat3 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.0[r][c]
    }
}

/// Thin SVD of an m×n matrix with m ≥ n.
///
/// `u` is m×n column-major, `v` is n×n column-major, singular values sorted
/// descending. Columns of `u` belonging to zero singular values are completed
/// to an orthonormal set.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub rows: usize,
    pub cols: usize,
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

const JACOBI_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD of a row-major `rows × cols` matrix.
///
/// Panics if `rows < cols`; callers pad with zero rows.
pub fn jacobi_svd(a: &[f64], rows: usize, cols: usize) -> ThinSvd {
    assert!(rows >= cols, "jacobi_svd expects a tall matrix");
    assert_eq!(a.len(), rows * cols);

    let mut w: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| a[i * cols + j]).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = w[p].iter().zip(&w[q]).fold(
                    (0.0, 0.0, 0.0),
                    |(a, b, g), (&x, &y)| (a + x * x, b + y * y, g + x * y),
                );
                if gamma == 0.0 || gamma.abs() <= JACOBI_EPS * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w.iter().map(|col| sqrt(col.iter().map(|x| x * x).sum())).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let sigma_max = order.first().map(|&i| norms[i]).unwrap_or(0.0);
    // Columns this small relative to the largest carry no direction.
    let tiny = sigma_max * 1e-12;

    let mut u: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut sigma = Vec::with_capacity(cols);
    let mut v_sorted = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        v_sorted.push(v[j].clone());
        if s > tiny && s > 0.0 {
            u.push(w[j].iter().map(|x| x / s).collect());
        } else {
            u.push(vec![0.0; rows]);
            missing.push(slot);
        }
    }
    complete_orthonormal(&mut u, &missing, rows);

    ThinSvd {
        rows,
        cols,
        u,
        sigma,
        v: v_sorted,
    }
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let ap = *x;
        let aq = *y;
        *x = c * ap - s * aq;
        *y = s * ap + c * aq;
    }
}

// Fill the listed columns with unit vectors orthogonal to every other column.
fn complete_orthonormal(u: &mut [Vec<f64>], missing: &[usize], rows: usize) {
    for &slot in missing {
        for basis in 0..rows {
            let mut cand = vec![0.0; rows];
            cand[basis] = 1.0;
            for (k, col) in u.iter().enumerate() {
                if k == slot || (missing.contains(&k) && col.iter().all(|x| *x == 0.0)) {
                    continue;
                }
                let d: f64 = cand.iter().zip(col).map(|(a, b)| a * b).sum();
                for (c, b) in cand.iter_mut().zip(col) {
                    *c -= d * b;
                }
            }
            let n = sqrt(cand.iter().map(|x| x * x).sum());
            if n > 1e-6 {
                u[slot] = cand.into_iter().map(|x| x / n).collect();
                break;
            }
        }
    }
}

/// Solves `a · x = b` for square `n × n` row-major `a` with partial pivoting.
/// Returns `None` when a pivot vanishes relative to the matrix scale.
pub fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col].abs() <= scale * 1e-14 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            rhs.swap(col, pivot);
        }
        let diag = m[col * n + col];
        for row in (col + 1)..n {
            let f = m[row * n + col] / diag;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= f * m[col * n + k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = ((row + 1)..n).map(|k| m[row * n + k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row * n + row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
