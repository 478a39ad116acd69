use crate::error::{Error, Result};

/// Dense row-major tensor. Activations use `(length, channels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(length, channels)` of a rank-2 activation.
    pub fn len_channels(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [len, channels] => Ok((len, channels)),
            _ => Err(Error::Shape(format!(
                "expected (length, channels), got {:?}",
                self.shape
            ))),
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        check_finite(&self.data, context)
    }
}

pub(crate) fn check_finite(data: &[f64], context: &str) -> Result<()> {
    match data.iter().find(|v| !v.is_finite()) {
        Some(&value) => Err(Error::NonFinite {
            context: context.to_owned(),
            value,
        }),
        None => Ok(()),
    }
}

/// Dot product with eight independent accumulators so the loop vectorises
/// while the summation order stays fixed.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 8];
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut sum = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Strided `C = A·B + beta·C` with `A` of shape `m×k` and `B` of shape
/// `k×n`; `(rs, cs)` are the row and column strides of each operand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: C out of bounds");
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(last(m, k, rsa, csa) < a.len(), "gemm: A out of bounds");
    assert!(last(k, n, rsb, csb) < b.len(), "gemm: B out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn non_finite_trips() {
        let t = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap();
        assert!(t.check_finite("t").is_err());
    }

    #[test]
    fn gemm_matches_naive() {
        // A is 3x4 read through overlapping rows, B is the transpose of a 2x4 block
        let a: Vec<f64> = (0..10).map(|i| i as f64 * 0.25 - 1.0).collect();
        let b: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let mut c = vec![1.0; 6];
        gemm((3, 4, 2), &a, (2, 1), &b, (1, 4), 1.0, &mut c, (2, 1));
        for i in 0..3 {
            for j in 0..2 {
                let want: f64 = 1.0 + (0..4).map(|p| a[i * 2 + p] * b[j * 4 + p]).sum::<f64>();
                assert!((c[i * 2 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..19).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
