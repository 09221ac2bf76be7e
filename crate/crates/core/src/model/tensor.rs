//! Dense row-major tensors and the handful of kernels the model needs.
//!
//! Values are held as `f64` so forward, backward and finite differences all
//! accumulate in 64-bit. Stored parameters are kept f32-representable (see
//! [`Tensor::round_to_f32`]) which makes the float32 checkpoint format lossless.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a[n×k] · b[k×m]`.
pub fn matmul(a: &[f64], n: usize, k: usize, b: &[f64], m: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `x[n×k] · W[k×m] + bias[m]`.
pub fn affine(x: &[f64], n: usize, w: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (k, m) = (w.rows(), w.cols());
    let mut out = matmul(x, n, k, &w.data, m);
    for row in out.chunks_mut(m) {
        for (o, b) in row.iter_mut().zip(&bias.data) {
            *o += b;
        }
    }
    out
}

/// `acc[k×m] += aᵀ · b` where `a` is `n×k` and `b` is `n×m`.
pub fn matmul_tn_acc(acc: &mut [f64], a: &[f64], n: usize, k: usize, b: &[f64], m: usize) {
    debug_assert_eq!(acc.len(), k * m);
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let arow = &mut acc[p * m..(p + 1) * m];
            for (o, bv) in arow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `a[n×m] · bᵀ` where `b` is `k×m`; result is `n×k`.
pub fn matmul_nt(a: &[f64], n: usize, m: usize, b: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for j in 0..k {
            let brow = &b[j * m..(j + 1) * m];
            out[i * k + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Backward of [`affine`]: accumulates weight and bias gradients and returns
/// the gradient with respect to the input.
pub fn affine_backward(
    x: &[f64],
    n: usize,
    w: &Tensor,
    dy: &[f64],
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let (k, m) = (w.rows(), w.cols());
    matmul_tn_acc(&mut dw.data, x, n, k, dy, m);
    for row in dy.chunks(m) {
        for (g, d) in db.data.iter_mut().zip(row) {
            *g += d;
        }
    }
    matmul_nt(dy, n, m, &w.data, k)
}
