//! Time-frequency and delay-Doppler grids.
//!
//! Both grids hold `M x N` complex samples in row-major order. A [`TfGrid`] is
//! indexed by `(m, q)` (OFDM symbol, subcarrier) and a [`DdGrid`] by `(n, p)`
//! (Doppler bin, delay bin). Vectorization is the row-major layout itself:
//! the subcarrier / delay index runs fastest.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Shape shared by every grid in a frame: `m` rows by `n` columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub m: usize,
    pub n: usize,
}

impl Shape {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid shape must be at least 1x1, got {m}x{n}"
            )));
        }
        Ok(Self { m, n })
    }

    /// Number of grid points `M*N`.
    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major linear index of `(row, col)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }
}

macro_rules! grid_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            shape: Shape,
            data: Vec<Complex64>,
        }

        impl $name {
            /// Wraps row-major samples, checking shape and finiteness.
            pub fn new(shape: Shape, data: Vec<Complex64>) -> Result<Self> {
                if data.len() != shape.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{} expects {} samples for a {}x{} grid, got {}",
                        stringify!($name),
                        shape.len(),
                        shape.m,
                        shape.n,
                        data.len()
                    )));
                }
                if let Some(pos) = data.iter().position(|z| !z.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "{} sample {pos} is not finite",
                        stringify!($name)
                    )));
                }
                Ok(Self { shape, data })
            }

            pub(crate) fn from_raw(shape: Shape, data: Vec<Complex64>) -> Self {
                debug_assert_eq!(data.len(), shape.len());
                Self { shape, data }
            }

            pub fn zeros(shape: Shape) -> Self {
                Self::filled(shape, Complex64::new(0.0, 0.0))
            }

            pub fn filled(shape: Shape, value: Complex64) -> Self {
                Self {
                    shape,
                    data: vec![value; shape.len()],
                }
            }

            /// Grid with a single one at linear index `index`.
            pub fn unit(shape: Shape, index: usize) -> Self {
                let mut grid = Self::zeros(shape);
                grid.data[index] = Complex64::new(1.0, 0.0);
                grid
            }

            pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
                let mut data = Vec::with_capacity(shape.len());
                for row in 0..shape.m {
                    for col in 0..shape.n {
                        data.push(f(row, col));
                    }
                }
                Self { shape, data }
            }

            pub fn shape(&self) -> Shape {
                self.shape
            }

            pub fn as_slice(&self) -> &[Complex64] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<Complex64> {
                self.data
            }

            pub fn get(&self, row: usize, col: usize) -> Complex64 {
                self.data[self.shape.index(row, col)]
            }

            /// Squared Frobenius norm.
            pub fn energy(&self) -> f64 {
                self.data.iter().map(|z| z.norm_sqr()).sum()
            }

            pub fn scale(&self, factor: f64) -> Self {
                Self {
                    shape: self.shape,
                    data: self.data.iter().map(|z| z * factor).collect(),
                }
            }

            /// Elementwise product.
            pub fn hadamard(&self, other: &Self) -> Result<Self> {
                self.zip_with(other, |a, b| a * b)
            }

            pub fn sub(&self, other: &Self) -> Result<Self> {
                self.zip_with(other, |a, b| a - b)
            }

            pub fn add(&self, other: &Self) -> Result<Self> {
                self.zip_with(other, |a, b| a + b)
            }

            pub fn conj(&self) -> Self {
                Self {
                    shape: self.shape,
                    data: self.data.iter().map(|z| z.conj()).collect(),
                }
            }

            /// Largest elementwise distance to `other`.
            pub fn max_abs_diff(&self, other: &Self) -> f64 {
                assert_eq!(self.shape, other.shape, "grid shapes differ");
                self.data
                    .iter()
                    .zip(&other.data)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max)
            }

            fn zip_with(
                &self,
                other: &Self,
                f: impl Fn(Complex64, Complex64) -> Complex64,
            ) -> Result<Self> {
                check_same_shape(self.shape, other.shape)?;
                Ok(Self {
                    shape: self.shape,
                    data: self
                        .data
                        .iter()
                        .zip(&other.data)
                        .map(|(&a, &b)| f(a, b))
                        .collect(),
                })
            }
        }

        impl std::ops::Index<(usize, usize)> for $name {
            type Output = Complex64;

            fn index(&self, (row, col): (usize, usize)) -> &Complex64 {
                &self.data[self.shape.index(row, col)]
            }
        }

        impl std::ops::IndexMut<(usize, usize)> for $name {
            fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut Complex64 {
                let idx = self.shape.index(row, col);
                &mut self.data[idx]
            }
        }
    };
}

grid_type!(
    /// Time-frequency grid indexed by `(m, q)`: OFDM symbol and subcarrier.
    TfGrid
);

grid_type!(
    /// Delay-Doppler grid indexed by `(n, p)`: Doppler bin and delay bin.
    DdGrid
);

pub(crate) fn check_same_shape(a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!(
            "grid shape mismatch: {}x{} vs {}x{}",
            a.m, a.n, b.m, b.n
        )));
    }
    Ok(())
}

/// Hermitian inner product `<a, b> = sum conj(a_k) b_k`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
