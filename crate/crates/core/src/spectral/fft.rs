//! Complex FFT for arbitrary lengths.
//!
//! Lengths whose prime factors are all small go through a recursive
//! mixed-radix decimation-in-time transform. A length with any prime factor
//! above [`MAX_DIRECT_RADIX`] is handled with Bluestein's chirp-z algorithm on
//! top of a power-of-two transform, so every length costs `O(n log n)`.
//!
//! Plans are cached per thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;

const MAX_DIRECT_RADIX: usize = 31;

enum Algorithm {
    MixedRadix { factors: Vec<usize> },
    Bluestein(Box<BluesteinPlan>),
}

pub(crate) struct FftPlan {
    n: usize,
    /// `roots[k] = exp(-2 pi i k / n)`
    roots: Vec<Complex64>,
    algorithm: Algorithm,
}

struct BluesteinPlan {
    inner: Rc<FftPlan>,
    /// `exp(-i pi k^2 / n)` for `k < n`
    chirp: Vec<Complex64>,
    /// forward transform of the conjugate chirp filter, length `inner.n`
    filter_hat: Vec<Complex64>,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<FftPlan>>> = RefCell::new(HashMap::new());
}

/// Returns the cached plan for length `n`.
pub(crate) fn plan(n: usize) -> Rc<FftPlan> {
    if let Some(p) = PLANS.with(|c| c.borrow().get(&n).cloned()) {
        return p;
    }
    let p = Rc::new(FftPlan::build(n));
    PLANS.with(|c| c.borrow_mut().insert(n, p.clone()));
    p
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while n % 4 == 0 {
        out.push(4);
        n /= 4;
    }
    let mut p = 2;
    while n > 1 {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += if p == 2 { 1 } else { 2 };
        if p * p > n && n > 1 {
            out.push(n);
            break;
        }
    }
    out
}

impl FftPlan {
    fn build(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        let roots = (0..n)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        let factors = factorize(n);
        let algorithm = if factors.iter().all(|&p| p <= MAX_DIRECT_RADIX) {
            Algorithm::MixedRadix { factors }
        } else {
            Algorithm::Bluestein(Box::new(BluesteinPlan::build(n)))
        };
        Self { n, roots, algorithm }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    /// Forward transform `X[k] = sum_t x[t] exp(-2 pi i k t / n)`.
    pub(crate) fn forward(&self, input: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(input.len(), self.n);
        match &self.algorithm {
            Algorithm::MixedRadix { factors } => {
                let mut out = vec![Complex64::new(0.0, 0.0); self.n];
                let mut scratch = vec![Complex64::new(0.0, 0.0); factors.iter().copied().max().unwrap_or(1)];
                self.recurse(input, 1, &mut out, factors, &mut scratch);
                out
            }
            Algorithm::Bluestein(b) => b.forward(input),
        }
    }

    /// Unnormalized inverse transform (positive exponent).
    pub(crate) fn inverse_unnormalized(&self, input: &[Complex64]) -> Vec<Complex64> {
        let conj: Vec<_> = input.iter().map(|c| c.conj()).collect();
        self.forward(&conj).into_iter().map(|c| c.conj()).collect()
    }

    fn recurse(
        &self,
        input: &[Complex64],
        stride: usize,
        out: &mut [Complex64],
        factors: &[usize],
        scratch: &mut [Complex64],
    ) {
        let n = out.len();
        if n == 1 {
            out[0] = input[0];
            return;
        }
        let p = factors[0];
        let m = n / p;
        for j in 0..p {
            self.recurse(
                &input[j * stride..],
                stride * p,
                &mut out[j * m..(j + 1) * m],
                &factors[1..],
                scratch,
            );
        }
        // twiddle step: roots of this sub-length are every (N/n)-th root
        let step = self.n / n;
        let pstep = self.n / p;
        let tmp = &mut scratch[..p];
        for k in 0..m {
            for j in 0..p {
                tmp[j] = out[j * m + k] * self.roots[(j * k * step) % self.n];
            }
            match p {
                2 => {
                    out[k] = tmp[0] + tmp[1];
                    out[k + m] = tmp[0] - tmp[1];
                }
                4 => {
                    // exp(-i pi/2) = -i
                    let a = tmp[0] + tmp[2];
                    let b = tmp[0] - tmp[2];
                    let c = tmp[1] + tmp[3];
                    let d = tmp[1] - tmp[3];
                    let d_rot = Complex64::new(d.im, -d.re);
                    out[k] = a + c;
                    out[k + m] = b + d_rot;
                    out[k + 2 * m] = a - c;
                    out[k + 3 * m] = b - d_rot;
                }
                _ => {
                    for q in 0..p {
                        let mut s = Complex64::new(0.0, 0.0);
                        for (j, t) in tmp.iter().enumerate() {
                            s += t * self.roots[((j * q) % p) * pstep];
                        }
                        out[k + q * m] = s;
                    }
                }
            }
        }
    }
}

impl BluesteinPlan {
    fn build(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = plan(m);
        let two_n = 2 * n as u128;
        let chirp: Vec<Complex64> = (0..n)
            .map(|k| {
                // k^2 mod 2n keeps the phase argument small
                let r = ((k as u128 * k as u128) % two_n) as f64;
                Complex64::from_polar(1.0, -PI * r / n as f64)
            })
            .collect();
        let mut filter = vec![Complex64::new(0.0, 0.0); m];
        filter[0] = chirp[0].conj();
        for k in 1..n {
            filter[k] = chirp[k].conj();
            filter[m - k] = chirp[k].conj();
        }
        let filter_hat = inner.forward(&filter);
        Self {
            inner,
            chirp,
            filter_hat,
        }
    }

    fn forward(&self, input: &[Complex64]) -> Vec<Complex64> {
        let n = self.chirp.len();
        let m = self.inner.len();
        let mut a = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..n {
            a[k] = input[k] * self.chirp[k];
        }
        let mut a_hat = self.inner.forward(&a);
        for (x, f) in a_hat.iter_mut().zip(&self.filter_hat) {
            *x *= f;
        }
        let conv = self.inner.inverse_unnormalized(&a_hat);
        let scale = 1.0 / m as f64;
        (0..n).map(|k| conv[k] * scale * self.chirp[k]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| v * Complex64::from_polar(1.0, -2.0 * PI * ((k * t) % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn factorization_covers_length() {
        for n in [1usize, 2, 12, 97, 192, 816, 1000, 1019 * 3] {
            assert_eq!(factorize(n).iter().product::<usize>(), n, "n={n}");
        }
    }

    #[test]
    fn matches_direct_sum_for_mixed_and_prime_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // 37 and 97 exceed the direct radix limit and go through Bluestein
        for n in [1usize, 2, 3, 5, 6, 8, 12, 30, 37, 49, 97, 192, 194, 816] {
            let x: Vec<_> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let fast = plan(n).forward(&x);
            let slow = direct(&x);
            let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }
}
