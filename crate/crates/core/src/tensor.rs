//! Dense row-major `f32` tensors and the handful of kernels the rest of the
//! crate is built on.
//!
//! Storage is always `f32`; every reduction (matmul inner products, sums,
//! softmax denominators) accumulates in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::dim(format!(
                "shape {shape:?} must have positive dimensions"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "shape {shape:?} must have positive dimensions"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// 2-D tensor from nested rows. Panics on ragged input; intended for tests
    /// and small literals.
    pub fn from_rows(rows: &[&[f32]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(vec![rows.len(), cols], data).expect("non-empty rows")
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(vec![rows, cols], data).expect("positive dimensions")
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::dim(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f32) {
        let c = self.cols();
        self.data[i * c + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Entrywise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f32) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Flat index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        Ok(Self::from_fn(c, r, |i, j| self.at(j, i)))
    }

    /// Divide by the maximum so the largest entry is exactly 1. A tensor whose
    /// maximum is not positive is returned as all zeros.
    pub fn normalize_max(&self) -> Self {
        let m = self.max();
        if m > 0.0 && m.is_finite() {
            let mut out = self.map(|v| (v / m).clamp(0.0, 1.0));
            // Division can land one ulp below 1 for the maximal entry.
            let idx = self.argmax();
            out.data[idx] = 1.0;
            out
        } else {
            Self::zeros(&self.shape)
        }
    }
}

/// Matrix product `a · b` with `f64` accumulation.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul: inner dimensions differ ({m}x{k} times {k2}x{n})"
        )));
    }
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.fill(0.0);
        for (p, &aip) in a.row(i).iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            axpy(&mut acc, aip as f64, b.row(p));
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Tensor::new(vec![m, n], out)
}

/// `acc += alpha · x`, written so the loop vectorises.
#[inline]
fn axpy(acc: &mut [f64], alpha: f64, x: &[f32]) {
    let n = acc.len().min(x.len());
    let (acc, x) = (&mut acc[..n], &x[..n]);
    for j in 0..n {
        acc[j] += alpha * x[j] as f64;
    }
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (n, k2) = b.dims2()?;
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul_nt: inner dimensions differ ({m}x{k} times ({n}x{k2})^T)"
        )));
    }
    matmul(a, &b.transpose()?)
}

/// `aᵀ · b`.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    matmul(&a.transpose()?, b)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let mut out = Vec::with_capacity(m * n);
    let mut e = vec![0.0f64; n];
    for i in 0..m {
        let row = a.row(i);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut z = 0.0f64;
        for (ej, &x) in e.iter_mut().zip(row) {
            *ej = (x as f64 - max).exp();
            z += *ej;
        }
        out.extend(e.iter().map(|&v| (v / z) as f32));
    }
    Tensor::new(vec![m, n], out)
}

/// Scale each row so it sums to one. Rows summing to zero are left as zeros.
pub fn normalize_rows(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2()?;
    let mut out = a.clone();
    for i in 0..m {
        let s: f64 = a.row(i).iter().map(|&v| v as f64).sum();
        if s != 0.0 {
            for v in out.row_mut(i) {
                *v = (*v as f64 / s) as f32;
            }
        }
    }
    debug_assert_eq!(out.len(), m * n);
    Ok(out)
}

/// Corner-aligned bilinear resampling of a `g×g` (or any `r×c`) grid to `h×w`.
///
/// Output pixel `(y, x)` samples the source at
/// `(y·(r−1)/(h−1), x·(c−1)/(w−1))`, so the four output corners coincide with
/// the four source corners.
pub fn bilinear_upsample(grid: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (r, c) = grid.dims2()?;
    if h == 0 || w == 0 {
        return Err(Error::arg("output size must be positive"));
    }
    let coord = |i: usize, out: usize, src: usize| -> (usize, usize, f64) {
        if src == 1 || out == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (src - 1) as f64 / (out - 1) as f64;
        let lo = (pos.floor() as usize).min(src - 2);
        (lo, lo + 1, pos - lo as f64)
    };
    Ok(Tensor::from_fn(h, w, |y, x| {
        let (y0, y1, fy) = coord(y, h, r);
        let (x0, x1, fx) = coord(x, w, c);
        let v00 = grid.at(y0, x0) as f64;
        let v01 = grid.at(y0, x1) as f64;
        let v10 = grid.at(y1, x0) as f64;
        let v11 = grid.at(y1, x1) as f64;
        let top = v00 + (v01 - v00) * fx;
        let bottom = v10 + (v11 - v10) * fx;
        (top + (bottom - top) * fy) as f32
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matmul_identity_and_hand_cases() {
        let b = Tensor::from_rows(&[&[2.0, 3.0], &[4.0, 5.0]]);
        assert_eq!(matmul(&Tensor::identity(2), &b).unwrap(), b);
        let r = matmul(
            &Tensor::from_rows(&[&[1.0, 2.0]]),
            &Tensor::from_rows(&[&[3.0], &[4.0]]),
        )
        .unwrap();
        assert_eq!(r.data(), &[11.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &a), Err(Error::Dimension(_))));
        assert!(matches!(
            matmul_nt(&a, &Tensor::zeros(&[2, 2])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = crate::rng::Rng::new(11);
        let a = rng.uniform_tensor(&[5, 4], -1.0, 1.0);
        let b = rng.uniform_tensor(&[4, 3], -1.0, 1.0);
        let c = matmul(&a, &b).unwrap();
        let expected = atnb_oracles::linalg::naive_matmul(&to_f64(&a), &to_f64(&b), 5, 4, 3);
        for (x, y) in c.data().iter().zip(&expected) {
            assert!((*x as f64 - y).abs() < 1e-6);
        }
        let nt = matmul_nt(&a, &b.transpose().unwrap()).unwrap();
        assert_eq!(nt, c);
    }

    fn to_f64(t: &Tensor) -> Vec<f64> {
        t.data().iter().map(|&v| v as f64).collect()
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&Tensor::from_rows(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::from_rows(&[&[1000.0, 1000.0]])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::from_rows(&[&[0.0, 3f32.ln()]])).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-7);
        assert!((s.data()[1] - 0.75).abs() < 1e-7);
    }

    #[test]
    fn upsample_cases() {
        let c = bilinear_upsample(&Tensor::full(&[2, 2], 0.7), 5, 9).unwrap();
        assert!(c.data().iter().all(|&v| (v - 0.7).abs() < 1e-7));
        let one = bilinear_upsample(&Tensor::full(&[1, 1], 0.3), 4, 4).unwrap();
        assert!(one.data().iter().all(|&v| v == 0.3));
        let g = Tensor::from_rows(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let up = bilinear_upsample(&g, 2, 4).unwrap();
        for y in 0..2 {
            for (x, want) in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].iter().enumerate() {
                assert!((up.at(y, x) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normalize_max_keeps_zero_maps_zero() {
        let z = Tensor::zeros(&[3, 3]);
        assert_eq!(z.normalize_max(), z);
        let t = Tensor::from_rows(&[&[0.2, 0.6], &[0.3, 0.1]]).normalize_max();
        assert_eq!(t.max(), 1.0);
        assert_eq!(t.argmax(), 1);
    }

    fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-2.0f32..2.0, rows * cols)
            .prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(a in small_matrix(3, 4), b in small_matrix(4, 5), c in small_matrix(5, 2)) {
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.data().iter().map(|v| v.abs()).fold(1.0f32, f32::max);
            for (x, y) in left.data().iter().zip(right.data()) {
                prop_assert!((x - y).abs() <= 1e-4 * scale);
            }
        }

        #[test]
        fn softmax_rows_sum_to_one_and_shift_invariant(a in small_matrix(4, 6), shift in -50.0f32..50.0) {
            let s = softmax_rows(&a).unwrap();
            for i in 0..4 {
                let sum: f64 = s.row(i).iter().map(|&v| v as f64).sum();
                prop_assert!((sum - 1.0).abs() < 1e-6);
                prop_assert!(s.row(i).iter().all(|&v| v > 0.0 && v < 1.0));
            }
            let shifted = softmax_rows(&a.map(|v| v + shift)).unwrap();
            for (x, y) in s.data().iter().zip(shifted.data()) {
                prop_assert!((x - y).abs() < 1e-5);
            }
        }

        #[test]
        fn upsample_preserves_bounds(g in small_matrix(3, 3), h in 1usize..20, w in 1usize..20) {
            let up = bilinear_upsample(&g, h, w).unwrap();
            prop_assert!(up.min() >= g.min() - 1e-6);
            prop_assert!(up.max() <= g.max() + 1e-6);
        }
    }
}
