//! Symplectic Fourier transforms between the delay-Doppler and time-frequency
//! grids, and the delay-Doppler channel operator they induce.
//!
//! The asymmetric pair carries no factor on the forward transform and `1/MN` on
//! the inverse:
//!
//! ```text
//! dsft:  g[m,q]   =          sum_{n,p} S[n,p] e^{+j2pi(mn/M - qp/N)}
//! idsft: S[n,p]   = 1/(MN) * sum_{m,q} g[m,q] e^{-j2pi(mn/M - qp/N)}
//! ```
//!
//! The symmetric pair ([`SymplecticTransform::spread`] /
//! [`SymplecticTransform::despread`]) uses `1/sqrt(MN)` both ways and is
//! unitary. Every transform is a length-`M` DFT along the Doppler/time axis
//! (positive exponent) combined with a length-`N` DFT along the delay/frequency
//! axis (negative exponent).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{check_same_shape, DdGrid, Shape, TfGrid};

/// Largest `M*N` for which dense `MN x MN` matrices may be built.
pub const MAX_DENSE_SYMBOLS: usize = 4096;

/// Planned FFTs for one grid shape. Cheap to clone and shareable across threads.
#[derive(Clone)]
pub struct SymplecticTransform {
    shape: Shape,
    freq_forward: Arc<dyn Fft<f64>>,
    freq_inverse: Arc<dyn Fft<f64>>,
    time_forward: Arc<dyn Fft<f64>>,
    time_inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SymplecticTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymplecticTransform")
            .field("shape", &self.shape)
            .finish()
    }
}

impl SymplecticTransform {
    pub fn new(shape: Shape) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            shape,
            freq_forward: planner.plan_fft_forward(shape.n),
            freq_inverse: planner.plan_fft_inverse(shape.n),
            time_forward: planner.plan_fft_forward(shape.m),
            time_inverse: planner.plan_fft_inverse(shape.m),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Forward asymmetric transform (no normalization).
    pub fn dsft(&self, s: &DdGrid) -> TfGrid {
        self.expect_shape(s.shape());
        let mut data = s.as_slice().to_vec();
        self.dd_to_tf_in_place(&mut data);
        TfGrid::from_raw(self.shape, data)
    }

    /// Inverse asymmetric transform, `idsft(dsft(s)) == s`.
    pub fn idsft(&self, g: &TfGrid) -> DdGrid {
        self.expect_shape(g.shape());
        let mut data = g.as_slice().to_vec();
        self.tf_to_dd_in_place(&mut data);
        let scale = 1.0 / self.shape.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
        DdGrid::from_raw(self.shape, data)
    }

    /// Symmetric (unitary) transform used to precode data symbols.
    pub fn spread(&self, d: &DdGrid) -> TfGrid {
        self.expect_shape(d.shape());
        let mut data = d.as_slice().to_vec();
        self.dd_to_tf_in_place(&mut data);
        let scale = 1.0 / (self.shape.len() as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= scale);
        TfGrid::from_raw(self.shape, data)
    }

    /// Inverse of [`spread`](Self::spread), equal to `sqrt(MN) * idsft`.
    pub fn despread(&self, x: &TfGrid) -> DdGrid {
        self.expect_shape(x.shape());
        let mut data = x.as_slice().to_vec();
        self.tf_to_dd_in_place(&mut data);
        let scale = 1.0 / (self.shape.len() as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= scale);
        DdGrid::from_raw(self.shape, data)
    }

    fn expect_shape(&self, shape: Shape) {
        assert_eq!(
            shape, self.shape,
            "grid shape does not match the planned transform"
        );
    }

    /// Unnormalized: forward DFT along rows, inverse DFT along columns.
    fn dd_to_tf_in_place(&self, data: &mut [Complex64]) {
        self.freq_forward.process(data);
        self.along_columns(data, &self.time_inverse);
    }

    /// Unnormalized: inverse DFT along rows, forward DFT along columns.
    fn tf_to_dd_in_place(&self, data: &mut [Complex64]) {
        self.freq_inverse.process(data);
        self.along_columns(data, &self.time_forward);
    }

    fn along_columns(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let Shape { m, n } = self.shape;
        if m == 1 {
            return;
        }
        let mut transposed = vec![Complex64::new(0.0, 0.0); m * n];
        for row in 0..m {
            for col in 0..n {
                transposed[col * m + row] = data[row * n + col];
            }
        }
        fft.process(&mut transposed);
        for col in 0..n {
            for row in 0..m {
                data[row * n + col] = transposed[col * m + row];
            }
        }
    }
}

/// How data symbols are mapped onto the time-frequency grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precoding {
    /// OTFS: symmetric symplectic spreading over the whole frame.
    Symplectic,
    /// Plain OFDM: symbol `(n, p)` sits on grid point `(m, q) = (n, p)`.
    Identity,
}

impl Precoding {
    pub fn spread(&self, transform: &SymplecticTransform, d: &DdGrid) -> TfGrid {
        match self {
            Precoding::Symplectic => transform.spread(d),
            Precoding::Identity => TfGrid::from_raw(d.shape(), d.as_slice().to_vec()),
        }
    }

    pub fn despread(&self, transform: &SymplecticTransform, x: &TfGrid) -> DdGrid {
        match self {
            Precoding::Symplectic => transform.despread(x),
            Precoding::Identity => DdGrid::from_raw(x.shape(), x.as_slice().to_vec()),
        }
    }

    /// Per-symbol average of a nonnegative TF weight seen through the
    /// spreading basis: `sum_k |S[k, w]|^2 weight[k]`.
    pub fn symbol_average(&self, weight: &[f64]) -> Vec<f64> {
        match self {
            Precoding::Symplectic => {
                let mean = weight.iter().sum::<f64>() / weight.len() as f64;
                vec![mean; weight.len()]
            }
            Precoding::Identity => weight.to_vec(),
        }
    }
}

/// Dense row-major complex matrix, used for small-frame operators and checks.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim, dim);
        for i in 0..dim {
            out.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        out
    }

    pub fn from_columns(rows: usize, columns: &[Vec<Complex64>]) -> Self {
        let cols = columns.len();
        let mut out = Self::zeros(rows, cols);
        for (j, column) in columns.iter().enumerate() {
            assert_eq!(column.len(), rows);
            for (i, &v) in column.iter().enumerate() {
                out.data[i * cols + j] = v;
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^H * other`.
    pub fn adjoint_mul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, other.rows);
        let mut out = DenseMatrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(k, i).conj();
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn check_dense_size(shape: Shape) -> Result<()> {
    if shape.len() > MAX_DENSE_SYMBOLS {
        return Err(Error::Config(format!(
            "dense {0}x{0} operator requested but M*N = {0} exceeds {MAX_DENSE_SYMBOLS}",
            shape.len()
        )));
    }
    Ok(())
}

/// Spreading matrix whose column `w` is the vectorized symmetric basis
/// function for DD symbol `w`. Unitary.
pub fn build_spreading_matrix(transform: &SymplecticTransform) -> Result<DenseMatrix> {
    let shape = transform.shape();
    check_dense_size(shape)?;
    let columns: Vec<_> = (0..shape.len())
        .map(|w| transform.spread(&DdGrid::unit(shape, w)).into_vec())
        .collect();
    Ok(DenseMatrix::from_columns(shape.len(), &columns))
}

/// Delay-Doppler image of a time-frequency channel: `G = S^H diag(g) S`.
///
/// `G` is defined as the exact linear map that pointwise TF multiplication by
/// `g` induces through the symmetric transform pair. For the rectangular OFDM
/// grid this map is a two-dimensional circular convolution with
/// `idsft(g)`; [`DdChannelResponse`] exposes that structure lazily.
#[derive(Clone, Debug)]
pub struct DdChannelOperator {
    shape: Shape,
    matrix: DenseMatrix,
}

impl DdChannelOperator {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn apply(&self, d: &DdGrid) -> DdGrid {
        DdGrid::from_raw(self.shape, self.matrix.mul_vec(d.as_slice()))
    }

    pub fn column(&self, w: usize) -> Vec<Complex64> {
        self.matrix.column(w)
    }
}

/// Builds the dense DD channel operator column by column from single-symbol
/// transmissions through the TF channel.
pub fn build_dd_channel_operator(
    transform: &SymplecticTransform,
    g: &TfGrid,
) -> Result<DdChannelOperator> {
    let shape = transform.shape();
    check_same_shape(shape, g.shape())?;
    check_dense_size(shape)?;
    let response = DdChannelResponse::new(transform, g);
    let columns: Vec<_> = (0..shape.len())
        .map(|w| response.apply(&DdGrid::unit(shape, w)).into_vec())
        .collect();
    Ok(DdChannelOperator {
        shape,
        matrix: DenseMatrix::from_columns(shape.len(), &columns),
    })
}

/// Matrix-free form of the DD channel operator for a given precoding.
///
/// With [`Precoding::Identity`] the "DD" grid is the TF grid itself and the
/// operator reduces to `diag(g)`.
#[derive(Clone, Debug)]
pub struct DdChannelResponse<'a> {
    transform: &'a SymplecticTransform,
    g: &'a TfGrid,
    precoding: Precoding,
    spread_function: DdGrid,
}

impl<'a> DdChannelResponse<'a> {
    pub fn new(transform: &'a SymplecticTransform, g: &'a TfGrid) -> Self {
        Self::with_precoding(transform, g, Precoding::Symplectic)
    }

    pub fn with_precoding(
        transform: &'a SymplecticTransform,
        g: &'a TfGrid,
        precoding: Precoding,
    ) -> Self {
        Self {
            transform,
            g,
            precoding,
            spread_function: transform.idsft(g),
        }
    }

    /// Asymmetric inverse transform of the channel, `S_g = idsft(g)`.
    pub fn spread_function(&self) -> &DdGrid {
        &self.spread_function
    }

    /// `G d`, evaluated through the TF domain.
    pub fn apply(&self, d: &DdGrid) -> DdGrid {
        let mut x = self.precoding.spread(self.transform, d);
        for (a, b) in x.as_mut_slice().iter_mut().zip(self.g.as_slice()) {
            *a *= b;
        }
        self.precoding.despread(self.transform, &x)
    }

    /// `G^H r`, evaluated through the TF domain.
    pub fn apply_adjoint(&self, r: &DdGrid) -> DdGrid {
        let mut x = self.precoding.spread(self.transform, r);
        for (a, b) in x.as_mut_slice().iter_mut().zip(self.g.as_slice()) {
            *a *= b.conj();
        }
        self.precoding.despread(self.transform, &x)
    }

    /// Column `w` of `G`. For symplectic precoding this is `S_g` circularly
    /// shifted by `w = (n, p)`.
    pub fn column(&self, w: usize) -> Vec<Complex64> {
        let shape = self.spread_function.shape();
        match self.precoding {
            Precoding::Identity => {
                let mut out = vec![Complex64::new(0.0, 0.0); shape.len()];
                out[w] = self.g.as_slice()[w];
                out
            }
            Precoding::Symplectic => {
                let (n0, p0) = (w / shape.n, w % shape.n);
                let mut out = Vec::with_capacity(shape.len());
                for n in 0..shape.m {
                    for p in 0..shape.n {
                        let a = (n + shape.m - n0) % shape.m;
                        let b = (p + shape.n - p0) % shape.n;
                        out.push(self.spread_function.get(a, b));
                    }
                }
                out
            }
        }
    }

    /// `||g_w||^2` for every column.
    pub fn column_norms(&self) -> Vec<f64> {
        let power: Vec<f64> = self.g.as_slice().iter().map(|z| z.norm_sqr()).collect();
        self.precoding.symbol_average(&power)
    }
}
