//! Bit-level transmit and receive chain: convolutional coding, random
//! interleaving, Gray mapping, BCJR decoding and soft-symbol feedback.

mod convolutional;
mod interleaver;
mod modulation;

pub use convolutional::{bcjr_decode, conv_encode, BcjrOutput, CodeConfig};
pub use interleaver::Interleaver;
pub use modulation::Constellation;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{DdGrid, Shape};

/// Magnitude at which detector LLRs are clamped before decoding.
pub const LLR_CLAMP: f64 = 50.0;

/// Frame-level coding chain shared by transmitter and receiver.
#[derive(Clone, Debug)]
pub struct CodingChain {
    shape: Shape,
    code: CodeConfig,
    constellation: Constellation,
    interleaver: Interleaver,
    info_len: usize,
}

/// What the receiver learns from one decoding pass.
#[derive(Clone, Debug)]
pub struct DecodedFrame {
    /// Hard decisions on the information bits.
    pub info_bits: Vec<u8>,
    /// Extrinsic coded-bit LLRs in mapping (interleaved) order.
    pub extrinsic: Vec<f64>,
    /// Soft symbols built from the extrinsic LLRs.
    pub soft_symbols: DdGrid,
}

impl CodingChain {
    /// Sizes the chain so coded bits exactly fill an `M x N` symbol grid.
    pub fn new(shape: Shape, constellation: Constellation, interleaver: Interleaver) -> Result<Self> {
        let code = CodeConfig::default();
        let coded_len = Self::coded_bits_for(shape, &constellation);
        let info_len = code.info_len(coded_len).ok_or_else(|| {
            Error::Config(format!(
                "{coded_len} coded bits per frame cannot carry a terminated rate-1/2 codeword"
            ))
        })?;
        if interleaver.len() != coded_len {
            return Err(Error::InvalidArgument(format!(
                "interleaver length {} differs from {coded_len} coded bits",
                interleaver.len()
            )));
        }
        Ok(Self {
            shape,
            code,
            constellation,
            interleaver,
            info_len,
        })
    }

    pub fn coded_bits_for(shape: Shape, constellation: &Constellation) -> usize {
        shape.len() * constellation.bits_per_symbol()
    }

    pub fn info_len(&self) -> usize {
        self.info_len
    }

    pub fn coded_len(&self) -> usize {
        self.interleaver.len()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn interleaver(&self) -> &Interleaver {
        &self.interleaver
    }

    /// Encode, interleave and map onto the DD symbol grid.
    pub fn transmit(&self, info_bits: &[u8]) -> Result<DdGrid> {
        if info_bits.len() != self.info_len {
            return Err(Error::InvalidArgument(format!(
                "expected {} information bits, got {}",
                self.info_len,
                info_bits.len()
            )));
        }
        let coded = conv_encode(info_bits, &self.code)?;
        let symbols = self.constellation.map(&self.interleaver.interleave(&coded)?)?;
        Ok(DdGrid::from_raw(self.shape, symbols))
    }

    /// Deinterleave detector LLRs, decode, and rebuild soft symbols from the
    /// decoder's extrinsic output.
    pub fn receive(&self, detector_llrs: &[f64]) -> Result<DecodedFrame> {
        let clamped: Vec<f64> = detector_llrs
            .iter()
            .map(|l| l.clamp(-LLR_CLAMP, LLR_CLAMP))
            .collect();
        let decoded = bcjr_decode(&self.interleaver.deinterleave(&clamped)?, &self.code)?;
        let extrinsic = self.interleaver.interleave(&decoded.extrinsic)?;
        let soft = self.constellation.soft_symbols(&extrinsic)?;
        Ok(DecodedFrame {
            info_bits: decoded.info_bits(),
            extrinsic,
            soft_symbols: DdGrid::from_raw(self.shape, soft),
        })
    }
}

/// Scales hard symbol decisions into LLRs of magnitude `magnitude`.
pub fn hard_llrs(constellation: &Constellation, symbols: &[Complex64], magnitude: f64) -> Vec<f64> {
    constellation
        .hard_bits(symbols)
        .into_iter()
        .map(|b| if b == 0 { magnitude } else { -magnitude })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frame_sizing_for_reference_grid() {
        let shape = Shape::new(36, 64).unwrap();
        let chain = CodingChain::new(shape, Constellation::qpsk(), Interleaver::identity(4608)).unwrap();
        assert_eq!(chain.info_len(), 2302);
        assert_eq!(chain.coded_len(), 4608);
    }

    #[test]
    fn odd_coded_length_is_a_config_error() {
        let shape = Shape::new(3, 1).unwrap();
        let err = CodingChain::new(shape, Constellation::bpsk(), Interleaver::identity(3)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn noiseless_chain_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let shape = Shape::new(6, 8).unwrap();
        let c = Constellation::qpsk();
        for _ in 0..1000 {
            let il = Interleaver::random(CodingChain::coded_bits_for(shape, &c), &mut rng);
            let chain = CodingChain::new(shape, c.clone(), il).unwrap();
            let info: Vec<u8> = (0..chain.info_len()).map(|_| rng.random_range(0..2)).collect();
            let symbols = chain.transmit(&info).unwrap();
            let llrs = hard_llrs(&c, symbols.as_slice(), 20.0);
            let decoded = chain.receive(&llrs).unwrap();
            assert_eq!(decoded.info_bits, info);
        }
    }

    #[test]
    fn soft_symbols_bounded_by_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let shape = Shape::new(4, 4).unwrap();
        let c = Constellation::qpsk();
        let chain = CodingChain::new(shape, c.clone(), Interleaver::random(32, &mut rng)).unwrap();
        let llrs: Vec<f64> = (0..32).map(|_| rng.random::<f64>() * 200.0 - 100.0).collect();
        let decoded = chain.receive(&llrs).unwrap();
        assert!(decoded.soft_symbols.as_slice().iter().all(|s| s.norm() <= c.peak_amplitude() + 1e-12));
    }
}
