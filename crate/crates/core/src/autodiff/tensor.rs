use crate::Scalar;

/// Dense row-major matrix. Feature grids are stored as `[pixels, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: S) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor buffer size");
        Self { rows, cols, data }
    }

    pub fn scalar(v: S) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a `1 x 1` tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale_assign(&mut self, s: S) {
        self.data.iter_mut().for_each(|v| *v = *v * s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::lit(v.to_f64_lossy())).collect(),
        }
    }

    /// Rows permuted so that output row `i` is input row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rows);
        let mut out = Self::zeros(self.rows, self.cols);
        for (i, &p) in perm.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(p));
        }
        out
    }
}

/// Logical `(rows, cols)` of `t` or its transpose.
#[inline]
fn op_shape<S: Scalar>(t: &Tensor<S>, trans: bool) -> (usize, usize) {
    if trans {
        (t.cols, t.rows)
    } else {
        (t.rows, t.cols)
    }
}

#[inline]
fn strides<S: Scalar>(t: &Tensor<S>, trans: bool) -> (isize, isize) {
    if trans {
        (1, t.cols as isize)
    } else {
        (t.cols as isize, 1)
    }
}

/// `out = alpha * op(a) * op(b) + beta * out`.
pub fn gemm_into<S: Scalar>(
    alpha: S,
    a: &Tensor<S>,
    ta: bool,
    b: &Tensor<S>,
    tb: bool,
    beta: S,
    out: &mut Tensor<S>,
) {
    let (m, k) = op_shape(a, ta);
    let (k2, n) = op_shape(b, tb);
    assert_eq!(k, k2, "matmul inner dimension");
    assert_eq!(out.shape(), (m, n), "matmul output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.scale_assign(beta);
        return;
    }
    let (rsa, csa) = strides(a, ta);
    let (rsb, csb) = strides(b, tb);
    // SAFETY: shapes and strides were checked above and `out` is a distinct
    // buffer from `a` and `b`.
    unsafe {
        S::gemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
}

pub fn matmul<S: Scalar>(a: &Tensor<S>, ta: bool, b: &Tensor<S>, tb: bool, alpha: S) -> Tensor<S> {
    let (m, _) = op_shape(a, ta);
    let (_, n) = op_shape(b, tb);
    let mut out = Tensor::zeros(m, n);
    gemm_into(alpha, a, ta, b, tb, S::zero(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let mut out = Tensor::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.data_mut()[i * b.cols() + j] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_with_transposes_matches_naive() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let b = Tensor::from_vec(3, 2, vec![0.5, 1.0, -2.0, 3.0, 1.5, -0.5]);
        let want = naive(&a, &b);
        assert_eq!(matmul(&a, false, &b, false, 1.0), want);
        let at = a.transpose();
        let bt = b.transpose();
        assert_eq!(matmul(&at, true, &b, false, 1.0), want);
        assert_eq!(matmul(&a, false, &bt, true, 1.0), want);
        assert_eq!(matmul(&at, true, &bt, true, 1.0), want);
        let mut twice = want.clone();
        twice.scale_assign(2.0);
        assert_eq!(matmul(&a, false, &b, false, 2.0), twice);
    }

    #[test]
    fn f32_gemm_agrees() {
        let a = Tensor::<f32>::from_vec(1, 2, vec![1.5, -2.0]);
        let b = Tensor::<f32>::from_vec(2, 1, vec![2.0, 0.25]);
        assert_eq!(matmul(&a, false, &b, false, 1.0).item(), 2.5);
    }
}
