//! Gray-labelled constellations, max-log demapping and soft symbols.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Symbol alphabet with bit labels. Point `k` carries the bits of `k`,
/// most significant bit first.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

impl Constellation {
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        let len = points.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "constellation size must be a power of two >= 2, got {len}"
            )));
        }
        Ok(Self {
            bits_per_symbol: len.trailing_zeros() as usize,
            points,
        })
    }

    pub fn bpsk() -> Self {
        Self::new(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]).unwrap()
    }

    /// Gray QPSK: bits `(b_I, b_Q)` map to `((1 - 2 b_I) + j (1 - 2 b_Q)) / sqrt(2)`.
    pub fn qpsk() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let points = (0..4)
            .map(|k| {
                let (bi, bq) = ((k >> 1) & 1, k & 1);
                Complex64::new(r * (1 - 2 * bi) as f64, r * (1 - 2 * bq) as f64)
            })
            .collect();
        Self::new(points).unwrap()
    }

    /// Gray 16-QAM with unit average energy; bits `(b_I0, b_I1, b_Q0, b_Q1)`.
    pub fn qam16() -> Self {
        let level = |sign: usize, outer: usize| {
            (1.0 - 2.0 * sign as f64) * if outer == 1 { 3.0 } else { 1.0 }
        };
        let scale = 1.0 / 10f64.sqrt();
        let points = (0..16)
            .map(|k| {
                let i = level((k >> 3) & 1, (k >> 2) & 1);
                let q = level((k >> 1) & 1, k & 1);
                Complex64::new(i * scale, q * scale)
            })
            .collect();
        Self::new(points).unwrap()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Largest point magnitude.
    pub fn peak_amplitude(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Bit `j` (0 = most significant) of `label`.
    #[inline]
    pub fn label_bit(&self, label: usize, j: usize) -> u8 {
        ((label >> (self.bits_per_symbol - 1 - j)) & 1) as u8
    }

    /// Maps bits to symbols, `bits_per_symbol` bits per symbol.
    pub fn map(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let b = self.bits_per_symbol;
        if !bits.len().is_multiple_of(b) {
            return Err(Error::InvalidArgument(format!(
                "{} bits is not a multiple of {b} bits per symbol",
                bits.len()
            )));
        }
        Ok(bits
            .chunks_exact(b)
            .map(|chunk| {
                let label = chunk.iter().fold(0usize, |acc, &bit| (acc << 1) | (bit & 1) as usize);
                self.points[label]
            })
            .collect())
    }

    /// Nearest point label; ties keep the lowest label.
    pub fn nearest(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Hard-decision bits for received symbols.
    pub fn hard_bits(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &y in symbols {
            let label = self.nearest(y);
            out.extend((0..self.bits_per_symbol).map(|j| self.label_bit(label, j)));
        }
        out
    }

    /// Max-log bit LLRs from per-label metrics (smaller is more likely):
    /// `L_j = min_{bit j = 1} metric - min_{bit j = 0} metric`.
    /// Also returns the argmin label, lowest label winning ties.
    pub fn max_log_llrs(&self, metrics: &[f64], llrs: &mut [f64]) -> usize {
        debug_assert_eq!(metrics.len(), self.points.len());
        debug_assert_eq!(llrs.len(), self.bits_per_symbol);
        let mut best = 0;
        for (k, &m) in metrics.iter().enumerate() {
            if m < metrics[best] {
                best = k;
            }
        }
        for (j, out) in llrs.iter_mut().enumerate() {
            let (mut min0, mut min1) = (f64::INFINITY, f64::INFINITY);
            for (k, &m) in metrics.iter().enumerate() {
                if self.label_bit(k, j) == 0 {
                    min0 = min0.min(m);
                } else {
                    min1 = min1.min(m);
                }
            }
            *out = min1 - min0;
        }
        best
    }

    /// Expected symbol under independent bit LLRs for one symbol's bits.
    pub fn soft_symbol(&self, llrs: &[f64]) -> Complex64 {
        debug_assert_eq!(llrs.len(), self.bits_per_symbol);
        // P(bit = 0) - P(bit = 1) = tanh(L/2).
        let p0: Vec<f64> = llrs.iter().map(|&l| 0.5 * (1.0 + (0.5 * l).tanh())).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &point) in self.points.iter().enumerate() {
            let mut prob = 1.0;
            for (j, &p) in p0.iter().enumerate() {
                prob *= if self.label_bit(k, j) == 0 { p } else { 1.0 - p };
            }
            acc += point * prob;
        }
        acc
    }

    /// Soft symbols for a whole LLR sequence in mapping order.
    pub fn soft_symbols(&self, llrs: &[f64]) -> Result<Vec<Complex64>> {
        let b = self.bits_per_symbol;
        if !llrs.len().is_multiple_of(b) {
            return Err(Error::InvalidArgument(format!(
                "{} LLRs is not a multiple of {b} bits per symbol",
                llrs.len()
            )));
        }
        Ok(llrs.chunks_exact(b).map(|c| self.soft_symbol(c)).collect())
    }
}
