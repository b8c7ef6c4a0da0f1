//! Small dense row-major matrix.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            debug_assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// `self * b`
    pub fn matmul(&self, b: &Mat) -> Mat {
        debug_assert_eq!(self.cols, b.rows);
        let mut out = Mat::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (x, y) in o.iter_mut().zip(b.row(k)) {
                    *x += a * y;
                }
            }
        }
        out
    }

    /// `self^T * b`
    pub fn t_matmul(&self, b: &Mat) -> Mat {
        debug_assert_eq!(self.rows, b.rows);
        let mut out = Mat::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let brow = b.row(k);
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                for (x, y) in out.row_mut(i).iter_mut().zip(brow) {
                    *x += a * y;
                }
            }
        }
        out
    }

    /// `self * b^T`
    pub fn matmul_t(&self, b: &Mat) -> Mat {
        debug_assert_eq!(self.cols, b.cols);
        let mut out = Mat::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            for j in 0..b.rows {
                out.data[i * b.rows + j] = math::dot(self.row(i), b.row(j));
            }
        }
        out
    }

    /// `W x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| math::dot(self.row(i), x)).collect()
    }

    /// `W^T x`
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.rows, x.len());
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += xi * w;
            }
        }
        out
    }

    /// `self += s * a b^T`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], s: f64) {
        debug_assert_eq!((self.rows, self.cols), (a.len(), b.len()));
        for (i, ai) in a.iter().enumerate() {
            let f = s * ai;
            if f == 0.0 {
                continue;
            }
            for (x, y) in self.row_mut(i).iter_mut().zip(b) {
                *x += f * y;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Columns `[c0, c0 + w)` as a new matrix.
    pub fn cols_slice(&self, c0: usize, w: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, w);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[c0..c0 + w]);
        }
        out
    }

    /// Write `m` into columns starting at `c0`.
    pub fn set_cols(&mut self, c0: usize, m: &Mat) {
        for i in 0..self.rows {
            self.row_mut(i)[c0..c0 + m.cols].copy_from_slice(m.row(i));
        }
    }
}

/// Row-wise softmax in place.
pub fn softmax_rows(m: &mut Mat) {
    for i in 0..m.rows {
        softmax(m.row_mut(i));
    }
}

pub fn softmax(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = math::exp(*x - max);
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Gradient of a softmax output `a` given upstream `g`: `a * (g - <a, g>)`.
pub fn softmax_backward(a: &[f64], g: &[f64]) -> Vec<f64> {
    let s = math::dot(a, g);
    a.iter().zip(g).map(|(ai, gi)| ai * (gi - s)).collect()
}
