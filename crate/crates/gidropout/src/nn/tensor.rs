//! Dense row-major f64 tensor, the only numeric container in the kernel.

/// Row-major dense tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match data length {}",
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// (rows, cols) of a 2-d tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "expected 2-d tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        let (_, cols) = self.dims2();
        self.data[i * cols + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let (_, cols) = self.dims2();
        self.data[i * cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, cols) = self.dims2();
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let (_, cols) = self.dims2();
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Panics when any entry is NaN or infinite. Ops call this at their
    /// boundaries; the message names the offending tensor.
    pub fn assert_finite(&self, what: &str) {
        for (i, v) in self.data.iter().enumerate() {
            assert!(
                v.is_finite(),
                "non-finite value {v} at flat index {i} in {what}"
            );
        }
    }
}

/// `C = A · B` for 2-d tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = a.dims2();
    let (k2, m) = b.dims2();
    assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let a_row = a.row(i);
        let out_row = out.data_mut();
        for (l, &a_il) in a_row.iter().enumerate() {
            if a_il == 0.0 {
                continue;
            }
            let b_row = b.row(l);
            let dst = &mut out_row[i * m..(i + 1) * m];
            for (d, &b_lj) in dst.iter_mut().zip(b_row) {
                *d += a_il * b_lj;
            }
        }
    }
    out
}

/// `y = W · x` for a 2-d `w` (out x in) and slice `x`.
pub fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = w.dims2();
    assert_eq!(cols, x.len(), "matvec dims {cols} vs {}", x.len());
    (0..rows)
        .map(|i| dot(w.row(i), x))
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `acc += scale * v` elementwise.
pub fn axpy(acc: &mut [f64], scale: f64, v: &[f64]) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, &x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matvec_small() {
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matvec(&w, &[1.0, 1.0]), vec![3.0, 7.0]);
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn assert_finite_rejects_nan() {
        let mut t = Tensor::zeros(&[2, 2]);
        t.data_mut()[3] = f64::NAN;
        t.assert_finite("test tensor");
    }

    #[test]
    #[should_panic(expected = "shape")]
    fn from_vec_checks_length() {
        Tensor::from_vec(&[2, 2], vec![1.0]);
    }
}
