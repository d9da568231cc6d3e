//! Dense row-major matrices generic over `f32`/`f64`.
//!
//! Training runs in `f32`; the gradient oracles instantiate everything in
//! `f64` so finite differences have enough precision to be meaningful.

use num_traits::Float;

/// Scalar type the engine is generic over.
pub trait Real: Float + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn from_f32(x: f32) -> Self;
    fn to_f64(self) -> f64;
    fn to_f32(self) -> f32;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn from_f32(x: f32) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn to_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
}

/// Dense row-major matrix. Biases and attention vectors are stored as
/// single-row matrices so every parameter shares one representation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: F) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self * other`, (r×k)·(k×c) → r×c.
    pub fn matmul(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == F::zero() {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// `self += aᵀ · b`, with a: k×r and b: k×c. Gradient accumulation for
    /// weights of `x·W` layers.
    pub fn add_matmul_tn(&mut self, a: &Mat<F>, b: &Mat<F>) {
        assert_eq!(a.rows, b.rows, "add_matmul_tn dimension mismatch");
        assert_eq!(a.cols, self.rows, "add_matmul_tn dimension mismatch");
        assert_eq!(b.cols, self.cols, "add_matmul_tn dimension mismatch");
        for k in 0..a.rows {
            let a_row = a.row(k);
            let b_row = b.row(k);
            for (i, &av) in a_row.iter().enumerate() {
                if av == F::zero() {
                    continue;
                }
                let self_row = &mut self.data[i * self.cols..(i + 1) * self.cols];
                for (s, &bv) in self_row.iter_mut().zip(b_row.iter()) {
                    *s = *s + av * bv;
                }
            }
        }
    }

    /// `self += a · bᵀ`, with a: r×k and b: c×k. Backpropagation of `x·W`
    /// into x.
    pub fn add_matmul_nt(&mut self, a: &Mat<F>, b: &Mat<F>) {
        assert_eq!(a.cols, b.cols, "add_matmul_nt dimension mismatch");
        assert_eq!(a.rows, self.rows, "add_matmul_nt dimension mismatch");
        assert_eq!(b.rows, self.cols, "add_matmul_nt dimension mismatch");
        for i in 0..a.rows {
            let a_row = a.row(i);
            let self_row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (j, s) in self_row.iter_mut().enumerate() {
                *s = *s + dot(a_row, b.row(j));
            }
        }
    }

    /// Column sums accumulated into a single-row matrix. Bias gradients.
    pub fn add_col_sums_into(&self, acc: &mut Mat<F>) {
        assert_eq!(acc.cols, self.cols);
        assert_eq!(acc.rows, 1);
        for i in 0..self.rows {
            let row = self.row(i);
            for (a, &v) in acc.row_mut(0).iter_mut().zip(row.iter()) {
                *a = *a + v;
            }
        }
    }

    /// Adds a single-row matrix to every row.
    pub fn add_row_broadcast(&mut self, bias: &Mat<F>) {
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, self.cols);
        for i in 0..self.rows {
            for (x, &b) in self.row_mut(i).iter_mut().zip(bias.row(0).iter()) {
                *x = *x + b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Real>(&self) -> Mat<G> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| G::from_f64(x.to_f64())).collect(),
        }
    }
}

pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc = acc + x * y;
    }
    acc
}

pub fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (&xv, yv) in x.iter().zip(y.iter_mut()) {
        *yv = *yv + alpha * xv;
    }
}

pub fn elu<F: Real>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        x.exp() - F::one()
    }
}

/// Derivative of ELU recovered from its output: e^x = elu(x) + 1 for x ≤ 0.
pub fn elu_grad_from_output<F: Real>(out: F) -> F {
    if out > F::zero() {
        F::one()
    } else {
        out + F::one()
    }
}

pub fn leaky_relu<F: Real>(x: F, slope: F) -> F {
    if x > F::zero() {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu_grad<F: Real>(x: F, slope: F) -> F {
    if x > F::zero() {
        F::one()
    } else {
        slope
    }
}
