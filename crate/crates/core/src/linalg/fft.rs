//! Real-input discrete Fourier transform magnitudes.
//!
//! Power-of-two lengths go straight through an iterative radix-2 transform.
//! Other lengths use Bluestein's chirp-z identity, which re-expresses the
//! length-`n` DFT as a circular convolution evaluated with radix-2 transforms
//! on a zero-padded buffer. Bin `k` therefore always means frequency `k / n`
//! of the original series.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shortest series accepted by [`real_fft_magnitudes`].
pub const MIN_FFT_LEN: usize = 4;

/// Magnitudes of the non-DC bins `1..=n/2` of a real series of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    magnitudes: Vec<T>,
    n: usize,
}

impl<T: Scalar> Spectrum<T> {
    /// `magnitudes()[i]` is the modulus of DFT bin `i + 1`.
    pub fn magnitudes(&self) -> &[T] {
        &self.magnitudes
    }

    pub fn series_len(&self) -> usize {
        self.n
    }

    /// Frequency in cycles per sample of `magnitudes()[i]`.
    pub fn frequency(&self, i: usize) -> T {
        T::from_count(i + 1) / T::from_count(self.n)
    }

    /// Index of the largest magnitude; the lowest index wins ties.
    pub fn peak(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for (i, &m) in self.magnitudes.iter().enumerate() {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
        best.map(|(i, _)| i)
    }
}

pub fn real_fft_magnitudes<T: Scalar>(series: &[T]) -> Result<Spectrum<T>> {
    let n = series.len();
    if n < MIN_FFT_LEN {
        return Err(Error::SeriesTooShort {
            len: n,
            min: MIN_FFT_LEN,
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let input: Vec<Complex<T>> = series.iter().map(|&re| Complex::new(re, T::zero())).collect();
    let spectrum = dft(&input);
    let magnitudes = spectrum[1..=n / 2].iter().map(|c| c.norm()).collect();
    Ok(Spectrum { magnitudes, n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Complex<T> {
    re: T,
    im: T,
}

impl<T: Scalar> Complex<T> {
    fn new(re: T, im: T) -> Self {
        Self { re, im }
    }

    fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// `exp(i * theta)`.
    fn cis(theta: T) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    fn norm(self) -> T {
        self.re.hypot(self.im)
    }
}

impl<T: Scalar> Add for Complex<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl<T: Scalar> Sub for Complex<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
}

impl<T: Scalar> Mul for Complex<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// Forward DFT `X_k = sum_j x_j exp(-2 pi i jk / n)` for any length.
fn dft<T: Scalar>(x: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = x.len();
    if n.is_power_of_two() {
        let mut buf = x.to_vec();
        fft_radix2(&mut buf, false);
        buf
    } else {
        bluestein(x)
    }
}

/// In-place iterative radix-2 transform. `inverse` flips the twiddle sign
/// and leaves the result unscaled.
fn fft_radix2<T: Scalar>(buf: &mut [Complex<T>], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { T::one() } else { -T::one() };
    let two_pi = T::TAU();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles evaluated directly rather than by repeated multiplication.
        let twiddles: Vec<Complex<T>> = (0..half)
            .map(|k| Complex::cis(sign * two_pi * T::from_count(k) / T::from_count(len)))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * twiddles[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

fn bluestein<T: Scalar>(x: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = x.len();
    let m = (2 * n - 1).next_power_of_two();
    // chirp_k = exp(-i pi k^2 / n); k^2 reduced mod 2n keeps the angle small.
    let chirp: Vec<Complex<T>> = (0..n)
        .map(|k| {
            let k2 = (k * k) % (2 * n);
            Complex::cis(-T::PI() * T::from_count(k2) / T::from_count(n))
        })
        .collect();

    let mut a = vec![Complex::zero(); m];
    for k in 0..n {
        a[k] = x[k] * chirp[k];
    }
    let mut b = vec![Complex::zero(); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    fft_radix2(&mut a, false);
    fft_radix2(&mut b, false);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai = *ai * *bi;
    }
    fft_radix2(&mut a, true);
    let scale = T::one() / T::from_count(m);
    (0..n)
        .map(|k| {
            let c = Complex::new(a[k].re * scale, a[k].im * scale);
            c * chirp[k]
        })
        .collect()
}
