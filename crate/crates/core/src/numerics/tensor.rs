use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealTensor {
    /// Builds a tensor, rejecting length mismatches and non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {} at flat index {}",
                data[pos], pos
            )));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for values produced by arithmetic on finite inputs.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

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

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds an `n x n` identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::shape(
                "from_rows",
                format!("row {} has {} entries, expected {}", i, r.len(), cols),
            ));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a matrix (first dimension).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Column count of a matrix; 1 for vectors.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 0,
            1 => 1,
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape, shape),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Copies rows `start..end` of a matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {}..{} of {}", start, end, self.rows()),
            ));
        }
        let c = self.cols();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Ok(Self::from_parts(shape, self.data[start * c..end * c].to_vec()))
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::from_parts(vec![c, r], out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Complex tensor stored as two real tensors of equal shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexTensor {
    pub re: RealTensor,
    pub im: RealTensor,
}

impl ComplexTensor {
    pub fn new(re: RealTensor, im: RealTensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::shape(
                "complex",
                format!("re {:?} vs im {:?}", re.shape(), im.shape()),
            ));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            re: RealTensor::zeros(shape),
            im: RealTensor::zeros(shape),
        }
    }

    /// Complex `n x n` identity.
    pub fn eye(n: usize) -> Self {
        Self {
            re: RealTensor::eye(n),
            im: RealTensor::zeros(&[n, n]),
        }
    }

    pub fn from_real(re: RealTensor) -> Self {
        let im = RealTensor::zeros(re.shape());
        Self { re, im }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.re.max_abs_diff(&other.re).max(self.im.max_abs_diff(&other.im))
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        self.re.add_assign(&other.re);
        self.im.add_assign(&other.im);
    }
}

/// Matrix product `a (p x q) * b (q x r)`.
pub fn matmul(a: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (p, q, r) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; p * r];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = ad[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &bd[k * r..(k + 1) * r];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Ok(RealTensor::from_parts(vec![p, r], out))
}

/// Row vector times complex matrix: `(v_re + j v_im)(H_re + j H_im)`.
pub fn complex_vecmat(v: &ComplexTensor, h: &ComplexTensor) -> Result<ComplexTensor> {
    let d = v.len();
    if h.shape() != [d, d] || v.shape().iter().product::<usize>() != d {
        return Err(Error::shape(
            "complex_vecmat",
            format!("{:?} x {:?}", v.shape(), h.shape()),
        ));
    }
    let mut re = vec![0.0; d];
    let mut im = vec![0.0; d];
    vecmat_into(
        v.re.data(),
        v.im.data(),
        h.re.data(),
        h.im.data(),
        &mut re,
        &mut im,
    );
    Ok(ComplexTensor {
        re: RealTensor::from_parts(vec![1, d], re),
        im: RealTensor::from_parts(vec![1, d], im),
    })
}

/// `out = v * H` for one bin; `H` is `d x d` row-major.
#[inline]
pub(crate) fn vecmat_into(
    vre: &[f64],
    vim: &[f64],
    hre: &[f64],
    him: &[f64],
    out_re: &mut [f64],
    out_im: &mut [f64],
) {
    let d = vre.len();
    out_re.iter_mut().for_each(|x| *x = 0.0);
    out_im.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..d {
        let (a, b) = (vre[i], vim[i]);
        let hr = &hre[i * d..(i + 1) * d];
        let hi = &him[i * d..(i + 1) * d];
        for j in 0..d {
            out_re[j] += a * hr[j] - b * hi[j];
            out_im[j] += a * hi[j] + b * hr[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> RealTensor {
        let n = shape.iter().product();
        RealTensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn matmul_identity_and_zero() {
        let a = RealTensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&RealTensor::eye(2), &a).unwrap(), a);
        let z = matmul(
            &RealTensor::from_rows(&[vec![1.0, 2.0]]).unwrap(),
            &RealTensor::zeros(&[2, 1]),
        )
        .unwrap();
        assert_eq!(z.data(), &[0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&[3, 3], &mut rng);
        let b = random(&[3, 3], &mut rng);
        let c = matmul(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((c.get(i, j) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matmul_shape_error() {
        let e = matmul(&RealTensor::zeros(&[2, 3]), &RealTensor::zeros(&[2, 3]));
        assert!(matches!(e, Err(Error::Shape { .. })));
    }

    #[test]
    fn vecmat_identity_and_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = ComplexTensor::new(random(&[1, 4], &mut rng), random(&[1, 4], &mut rng)).unwrap();
        let out = complex_vecmat(&v, &ComplexTensor::eye(4)).unwrap();
        assert!(out.max_abs_diff(&v) < 1e-14);

        let v = ComplexTensor::new(
            RealTensor::new(vec![1, 1], vec![1.0]).unwrap(),
            RealTensor::new(vec![1, 1], vec![2.0]).unwrap(),
        )
        .unwrap();
        let h = ComplexTensor::new(
            RealTensor::new(vec![1, 1], vec![2.0]).unwrap(),
            RealTensor::new(vec![1, 1], vec![-1.0]).unwrap(),
        )
        .unwrap();
        let out = complex_vecmat(&v, &h).unwrap();
        assert_eq!((out.re.data()[0], out.im.data()[0]), (4.0, 3.0));
    }

    #[test]
    fn vecmat_matches_scalar_complex_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 4;
        let v = ComplexTensor::new(random(&[1, d], &mut rng), random(&[1, d], &mut rng)).unwrap();
        let h = ComplexTensor::new(random(&[d, d], &mut rng), random(&[d, d], &mut rng)).unwrap();
        let out = complex_vecmat(&v, &h).unwrap();
        for j in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..d {
                acc += Complex64::new(v.re.data()[i], v.im.data()[i])
                    * Complex64::new(h.re.get(i, j), h.im.get(i, j));
            }
            assert!((out.re.data()[j] - acc.re).abs() < 1e-13);
            assert!((out.im.data()[j] - acc.im).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(RealTensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(RealTensor::new(vec![3], vec![1.0]).is_err());
    }
}
