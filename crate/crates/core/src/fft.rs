//! Iterative radix-2 DFT. Forward is unnormalized; the inverse carries 1/n.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };
    pub const ONE: Complex = Complex { re: 1.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn from_polar_unit(theta: f64) -> Self {
        Self::new(libm::cos(theta), libm::sin(theta))
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.re, self.im)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

fn bit_reverse_permute(data: &mut [Complex]) {
    let n = data.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
}

/// In-place transform; `sign = -1` forward, `+1` inverse (unscaled).
fn transform(data: &mut [Complex], sign: f64) {
    let n = data.len();
    bit_reverse_permute(data);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * core::f64::consts::TAU / len as f64;
        // Twiddles computed directly per index to avoid recurrence drift.
        let twiddles: Vec<Complex> = (0..half).map(|k| Complex::from_polar_unit(step * k as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = data[start + k];
                let b = data[start + k + half] * twiddles[k];
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

pub fn fft_in_place(data: &mut [Complex]) -> Result<()> {
    if !data.len().is_power_of_two() {
        return Err(Error::WidthNotPowerOfTwo(data.len()));
    }
    transform(data, -1.0);
    Ok(())
}

pub fn ifft_in_place(data: &mut [Complex]) -> Result<()> {
    if !data.len().is_power_of_two() {
        return Err(Error::WidthNotPowerOfTwo(data.len()));
    }
    transform(data, 1.0);
    let inv = 1.0 / data.len() as f64;
    for c in data.iter_mut() {
        c.re *= inv;
        c.im *= inv;
    }
    Ok(())
}

/// Forward DFT of a real vector.
pub fn dft(x: &[f64]) -> Result<Vec<Complex>> {
    let mut data: Vec<Complex> = x.iter().map(|&r| Complex::new(r, 0.0)).collect();
    fft_in_place(&mut data)?;
    Ok(data)
}

/// Inverse DFT (with the 1/n factor).
pub fn idft(x: &[Complex]) -> Result<Vec<Complex>> {
    let mut data = x.to_vec();
    ifft_in_place(&mut data)?;
    Ok(data)
}
