//! Real-input discrete Fourier transform and band utilities.
//!
//! The forward transform is unnormalized, `X[k] = sum_t x[t] e^{-j 2 pi k t / n}`,
//! and keeps the `K = n/2 + 1` non-redundant bins of an even-length series.
//! The inverse applies `1/n`, completes the spectrum by conjugate symmetry and
//! keeps only the real part, so spectra whose DC or Nyquist bins carry an
//! imaginary component still map to a real series.

mod fft;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexTensor, RealTensor};

/// Fourier coefficients of a real `n x F` series: a `K x F` complex tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coeffs: ComplexTensor,
    pub n: usize,
}

impl Spectrum {
    pub fn new(coeffs: ComplexTensor, n: usize) -> Result<Self> {
        check_len(n)?;
        if coeffs.shape().len() != 2 || coeffs.shape()[0] != bins_for(n) {
            return Err(Error::shape(
                "spectrum",
                format!("{:?} coefficients for length {}", coeffs.shape(), n),
            ));
        }
        Ok(Self { coeffs, n })
    }

    /// Number of bins, `n/2 + 1`.
    pub fn bins(&self) -> usize {
        self.coeffs.shape()[0]
    }

    pub fn features(&self) -> usize {
        self.coeffs.shape()[1]
    }

    /// Squared magnitude summed over features, per bin.
    pub fn energy_per_bin(&self) -> Vec<f64> {
        let f = self.features();
        (0..self.bins())
            .map(|k| {
                (0..f)
                    .map(|j| self.coeffs.re.get(k, j).powi(2) + self.coeffs.im.get(k, j).powi(2))
                    .sum()
            })
            .collect()
    }
}

/// Half-open range of bins `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSpec {
    pub lo: usize,
    pub hi: usize,
}

impl BandSpec {
    pub fn new(lo: usize, hi: usize, bins: usize) -> Result<Self> {
        if lo >= hi || hi > bins {
            return Err(Error::InvalidBand { lo, hi, bins });
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, k: usize) -> bool {
        (self.lo..self.hi).contains(&k)
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo
    }
}

/// Low, mid and high thirds of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandPartition {
    pub low: BandSpec,
    pub mid: BandSpec,
    pub high: BandSpec,
}

/// Bin count for an even length `n`.
pub fn bins_for(n: usize) -> usize {
    n / 2 + 1
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::UnsupportedLength(n));
    }
    Ok(())
}

/// Forward transform of each column of an `n x F` tensor into `K x F` bins.
pub fn rdft(x: &RealTensor) -> Result<Spectrum> {
    if x.shape().len() != 2 {
        return Err(Error::shape("rdft", format!("expected a matrix, got {:?}", x.shape())));
    }
    let n = x.rows();
    check_len(n)?;
    Ok(Spectrum {
        coeffs: rdft_columns(x),
        n,
    })
}

/// Inverse transform of a spectrum back to an `n x F` real series.
pub fn irdft(s: &Spectrum) -> RealTensor {
    irdft_columns(&s.coeffs, s.n)
}

pub(crate) fn rdft_columns(x: &RealTensor) -> ComplexTensor {
    let (n, f) = (x.rows(), x.cols());
    let k_bins = bins_for(n);
    let plan = fft::plan(n);
    let mut re = vec![0.0; k_bins * f];
    let mut im = vec![0.0; k_bins * f];
    let data = x.data();
    let mut col = 0;
    // two real columns share one complex transform
    while col < f {
        let paired = col + 1 < f;
        let z: Vec<Complex64> = (0..n)
            .map(|t| {
                let a = data[t * f + col];
                let b = if paired { data[t * f + col + 1] } else { 0.0 };
                Complex64::new(a, b)
            })
            .collect();
        let zh = plan.forward(&z);
        for k in 0..k_bins {
            let zk = zh[k];
            let zc = zh[(n - k) % n].conj();
            let xa = (zk + zc) * 0.5;
            re[k * f + col] = xa.re;
            im[k * f + col] = xa.im;
            if paired {
                let d = (zk - zc) * 0.5;
                // divide by j
                re[k * f + col + 1] = d.im;
                im[k * f + col + 1] = -d.re;
            }
        }
        col += 2;
    }
    ComplexTensor {
        re: RealTensor::from_parts(vec![k_bins, f], re),
        im: RealTensor::from_parts(vec![k_bins, f], im),
    }
}

pub(crate) fn irdft_columns(c: &ComplexTensor, n: usize) -> RealTensor {
    let (k_bins, f) = (c.shape()[0], c.shape()[1]);
    debug_assert_eq!(k_bins, bins_for(n));
    let plan = fft::plan(n);
    let (cre, cim) = (c.re.data(), c.im.data());
    let bin = |k: usize, j: usize| -> Complex64 {
        if k == 0 || k == k_bins - 1 {
            Complex64::new(cre[k * f + j], 0.0)
        } else {
            Complex64::new(cre[k * f + j], cim[k * f + j])
        }
    };
    let mut out = vec![0.0; n * f];
    let scale = 1.0 / n as f64;
    let mut col = 0;
    while col < f {
        let paired = col + 1 < f;
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..k_bins {
            let a = bin(k, col);
            let b = if paired { bin(k, col + 1) } else { Complex64::new(0.0, 0.0) };
            let j = Complex64::new(0.0, 1.0);
            full[k] = a + j * b;
            if k != 0 && k != k_bins - 1 {
                full[n - k] = a.conj() + j * b.conj();
            }
        }
        let y = plan.inverse_unnormalized(&full);
        for t in 0..n {
            out[t * f + col] = y[t].re * scale;
            if paired {
                out[t * f + col + 1] = y[t].im * scale;
            }
        }
        col += 2;
    }
    RealTensor::from_parts(vec![n, f], out)
}

/// Series contributed by bin `m` alone: the inverse of a copy of `s` with
/// every other bin zeroed, evaluated in closed form.
pub fn single_bin_inverse(s: &Spectrum, m: usize) -> Result<RealTensor> {
    let k_bins = s.bins();
    if m >= k_bins {
        return Err(Error::OutOfRange {
            what: "spectrum bins",
            index: m,
            len: k_bins,
        });
    }
    Ok(single_bin_columns(&s.coeffs, s.n, m))
}

pub(crate) fn single_bin_columns(c: &ComplexTensor, n: usize, m: usize) -> RealTensor {
    let (k_bins, f) = (c.shape()[0], c.shape()[1]);
    let weight = if m == 0 || m == k_bins - 1 { 1.0 } else { 2.0 } / n as f64;
    let (re, im) = (c.re.row(m), c.im.row(m));
    let mut out = vec![0.0; n * f];
    for t in 0..n {
        let theta = 2.0 * PI * ((m * t) % n) as f64 / n as f64;
        let (sin, cos) = theta.sin_cos();
        for j in 0..f {
            out[t * f + j] = weight * (re[j] * cos - im[j] * sin);
        }
    }
    RealTensor::from_parts(vec![n, f], out)
}

/// Splits `K` bins into thirds; leftover bins go to the high band.
pub fn band_partition(bins: usize) -> Result<BandPartition> {
    if bins < 3 {
        return Err(Error::Partition(bins));
    }
    let third = bins / 3;
    Ok(BandPartition {
        low: BandSpec { lo: 0, hi: third },
        mid: BandSpec {
            lo: third,
            hi: 2 * third,
        },
        high: BandSpec {
            lo: 2 * third,
            hi: bins,
        },
    })
}

/// Copy of `s` with the bins of `band` set to zero.
pub fn band_zero(s: &Spectrum, band: BandSpec) -> Result<Spectrum> {
    let k_bins = s.bins();
    BandSpec::new(band.lo, band.hi, k_bins)?;
    let mut out = s.clone();
    let f = s.features();
    for k in band.lo..band.hi {
        for j in 0..f {
            out.coeffs.re.set(k, j, 0.0);
            out.coeffs.im.set(k, j, 0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn column(v: &[f64]) -> RealTensor {
        RealTensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    fn spectrum_of(re: &[f64], im: &[f64], n: usize) -> Spectrum {
        let k = re.len();
        Spectrum::new(
            ComplexTensor::new(column(re), RealTensor::new(vec![k, 1], im.to_vec()).unwrap()).unwrap(),
            n,
        )
        .unwrap()
    }

    fn random_matrix(n: usize, f: usize, rng: &mut ChaCha8Rng) -> RealTensor {
        RealTensor::new(vec![n, f], (0..n * f).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    /// O(n^2) reference transform.
    fn direct_rdft(x: &RealTensor) -> (Vec<f64>, Vec<f64>) {
        let (n, f) = (x.rows(), x.cols());
        let k_bins = n / 2 + 1;
        let mut re = vec![0.0; k_bins * f];
        let mut im = vec![0.0; k_bins * f];
        for k in 0..k_bins {
            for t in 0..n {
                let theta = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                for j in 0..f {
                    re[k * f + j] += x.get(t, j) * theta.cos();
                    im[k * f + j] += x.get(t, j) * theta.sin();
                }
            }
        }
        (re, im)
    }

    #[test]
    fn constant_and_cosine_examples() {
        let s = rdft(&column(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(s.bins(), 3);
        let expect = [4.0, 0.0, 0.0];
        for k in 0..3 {
            assert!((s.coeffs.re.get(k, 0) - expect[k]).abs() < 1e-12);
            assert!(s.coeffs.im.get(k, 0).abs() < 1e-12);
        }
        let s = rdft(&column(&[1.0, 0.0, -1.0, 0.0])).unwrap();
        let expect = [0.0, 2.0, 0.0];
        for k in 0..3 {
            assert!((s.coeffs.re.get(k, 0) - expect[k]).abs() < 1e-12);
            assert!(s.coeffs.im.get(k, 0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_examples() {
        let x = irdft(&spectrum_of(&[4.0, 0.0, 0.0], &[0.0; 3], 4));
        assert!(x.max_abs_diff(&column(&[1.0; 4])) < 1e-12);
        let x = irdft(&spectrum_of(&[0.0, 2.0, 0.0], &[0.0; 3], 4));
        assert!(x.max_abs_diff(&column(&[1.0, 0.0, -1.0, 0.0])) < 1e-12);
    }

    #[test]
    fn odd_length_rejected() {
        assert!(matches!(rdft(&column(&[1.0, 2.0, 3.0])), Err(Error::UnsupportedLength(3))));
        assert!(matches!(rdft(&column(&[1.0])), Err(Error::UnsupportedLength(1))));
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, f) in [(192, 1), (192, 3), (96, 4), (816, 2), (10, 5)] {
            let x = random_matrix(n, f, &mut rng);
            let s = rdft(&x).unwrap();
            let (re, im) = direct_rdft(&x);
            let err_re = s.coeffs.re.data().iter().zip(&re).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let err_im = s.coeffs.im.data().iter().zip(&im).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err_re.max(err_im) < 1e-10, "n={n} f={f}: {err_re} {err_im}");
        }
    }

    #[test]
    fn inverse_takes_real_part_of_edge_bins() {
        // imaginary parts at DC and Nyquist are dropped by the real projection
        let a = irdft(&spectrum_of(&[4.0, 0.0, 2.0], &[3.0, 0.0, -5.0], 4));
        let b = irdft(&spectrum_of(&[4.0, 0.0, 2.0], &[0.0, 0.0, 0.0], 4));
        assert!(a.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn single_bin_examples() {
        let s = spectrum_of(&[4.0, 0.0, 0.0], &[0.0; 3], 4);
        assert!(single_bin_inverse(&s, 0).unwrap().max_abs_diff(&column(&[1.0; 4])) < 1e-12);
        let s = spectrum_of(&[4.0, 2.0, 0.0], &[0.0; 3], 4);
        let z = single_bin_inverse(&s, 1).unwrap();
        assert!(z.max_abs_diff(&column(&[1.0, 0.0, -1.0, 0.0])) < 1e-12);
        assert!(matches!(single_bin_inverse(&s, 3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn single_bin_matches_definitional_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [4usize, 16, 96] {
            let k = n / 2 + 1;
            let s = Spectrum::new(
                ComplexTensor::new(random_matrix(k, 3, &mut rng), random_matrix(k, 3, &mut rng)).unwrap(),
                n,
            )
            .unwrap();
            let mut total = RealTensor::zeros(&[n, 3]);
            for m in 0..k {
                let closed = single_bin_inverse(&s, m).unwrap();
                let mut keep = ComplexTensor::zeros(&[k, 3]);
                for j in 0..3 {
                    keep.re.set(m, j, s.coeffs.re.get(m, j));
                    keep.im.set(m, j, s.coeffs.im.get(m, j));
                }
                let definitional = irdft(&Spectrum::new(keep, n).unwrap());
                assert!(closed.max_abs_diff(&definitional) < 1e-12);
                total = total.add(&closed).unwrap();
            }
            assert!(total.max_abs_diff(&irdft(&s)) < 1e-11);
        }
    }

    #[test]
    fn partition_examples() {
        let p = band_partition(49).unwrap();
        assert_eq!((p.low.lo, p.low.hi, p.mid.lo, p.mid.hi, p.high.lo, p.high.hi), (0, 16, 16, 32, 32, 49));
        let p = band_partition(3).unwrap();
        assert_eq!((p.low.hi, p.mid.hi, p.high.hi), (1, 2, 3));
        let p = band_partition(6).unwrap();
        assert_eq!((p.low.hi, p.mid.hi, p.high.hi), (2, 4, 6));
        assert!(matches!(band_partition(2), Err(Error::Partition(2))));
    }

    #[test]
    fn band_zero_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(8, 2, &mut rng);
        let s = rdft(&x).unwrap();
        let z = band_zero(&s, BandSpec { lo: 0, hi: 5 }).unwrap();
        assert!(z.coeffs.re.max_abs() == 0.0 && z.coeffs.im.max_abs() == 0.0);

        // cosine at bin 1 plus a constant: the Nyquist bin is already empty
        let x = column(&[2.0, 1.0, 0.0, 1.0]);
        let s = rdft(&x).unwrap();
        let masked = band_zero(&s, BandSpec { lo: 2, hi: 3 }).unwrap();
        assert!(irdft(&masked).max_abs_diff(&x) < 1e-12);
        assert!(band_zero(&s, BandSpec { lo: 2, hi: 4 }).is_err());
        assert!(band_zero(&s, BandSpec { lo: 2, hi: 2 }).is_err());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_and_linearity(seed in 0u64..1000, half in 1usize..64, f in 1usize..4, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2 * half;
            let x = random_matrix(n, f, &mut rng);
            let y = random_matrix(n, f, &mut rng);
            let sx = rdft(&x).unwrap();
            proptest::prop_assert!(irdft(&sx).max_abs_diff(&x) < 1e-10);

            let combo = x.scale(a).add(&y.scale(b)).unwrap();
            let sc = rdft(&combo).unwrap();
            let sy = rdft(&y).unwrap();
            let re = sx.coeffs.re.scale(a).add(&sy.coeffs.re.scale(b)).unwrap();
            let im = sx.coeffs.im.scale(a).add(&sy.coeffs.im.scale(b)).unwrap();
            proptest::prop_assert!(sc.coeffs.re.max_abs_diff(&re) < 1e-11);
            proptest::prop_assert!(sc.coeffs.im.max_abs_diff(&im) < 1e-11);
        }

        #[test]
        fn partition_is_disjoint_cover(bins in 3usize..500) {
            let p = band_partition(bins).unwrap();
            for k in 0..bins {
                let hits = [p.low, p.mid, p.high].iter().filter(|b| b.contains(k)).count();
                proptest::prop_assert_eq!(hits, 1);
            }
        }
    }
}
