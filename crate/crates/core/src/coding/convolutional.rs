//! Rate-1/2 feedforward convolutional code `(5, 7)` in octal with zero-tail
//! termination, and its log-MAP (BCJR) decoder.
//!
//! LLR convention throughout the crate: `L = ln P(bit = 0) - ln P(bit = 1)`.

use crate::error::{Error, Result};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// The `(5, 7)_8` code, constraint length 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodeConfig {
    polynomials: [u8; 2],
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self {
            polynomials: [0o5, 0o7],
        }
    }
}

impl CodeConfig {
    /// Shift-register memory.
    pub const MEMORY: usize = 2;
    pub const NUM_STATES: usize = 1 << Self::MEMORY;
    /// Coded bits per input bit.
    pub const OUTPUTS: usize = 2;

    pub fn polynomials(&self) -> [u8; 2] {
        self.polynomials
    }

    /// Coded length for `info_len` information bits, tail included.
    pub fn coded_len(&self, info_len: usize) -> usize {
        Self::OUTPUTS * (info_len + Self::MEMORY)
    }

    /// Information bits that fit in `coded_len` coded bits, if any.
    pub fn info_len(&self, coded_len: usize) -> Option<usize> {
        if !coded_len.is_multiple_of(Self::OUTPUTS) {
            return None;
        }
        (coded_len / Self::OUTPUTS).checked_sub(Self::MEMORY).filter(|&k| k > 0)
    }

    /// Output bits and next state for input `bit` in `state`.
    ///
    /// The state holds the last two inputs, most recent in the high bit.
    #[inline]
    fn step(&self, state: usize, bit: u8) -> ([u8; 2], usize) {
        let register = ((bit as usize) << Self::MEMORY) | state;
        let out = [
            (register & self.polynomials[0] as usize).count_ones() as u8 & 1,
            (register & self.polynomials[1] as usize).count_ones() as u8 & 1,
        ];
        (out, register >> 1)
    }
}

/// Encodes `info_bits` and appends the two zero tail inputs.
pub fn conv_encode(info_bits: &[u8], cfg: &CodeConfig) -> Result<Vec<u8>> {
    if info_bits.is_empty() {
        return Err(Error::InvalidArgument("cannot encode an empty bit sequence".into()));
    }
    let mut out = Vec::with_capacity(cfg.coded_len(info_bits.len()));
    let mut state = 0;
    let tail = [0u8; CodeConfig::MEMORY];
    for &bit in info_bits.iter().chain(tail.iter()) {
        let (bits, next) = cfg.step(state, bit & 1);
        out.extend_from_slice(&bits);
        state = next;
    }
    debug_assert_eq!(state, 0);
    Ok(out)
}

/// Jacobian logarithm `ln(e^a + e^b)`.
#[inline]
fn max_star(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

/// Decoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct BcjrOutput {
    /// A-posteriori LLRs of the information bits.
    pub info_llrs: Vec<f64>,
    /// A-posteriori minus channel LLR, per coded bit.
    pub extrinsic: Vec<f64>,
}

impl BcjrOutput {
    /// Hard decisions on the information bits; ties go to zero.
    pub fn info_bits(&self) -> Vec<u8> {
        self.info_llrs.iter().map(|&l| u8::from(l < 0.0)).collect()
    }
}

/// Log-domain forward-backward decoding over the 4-state trellis.
pub fn bcjr_decode(channel_llrs: &[f64], cfg: &CodeConfig) -> Result<BcjrOutput> {
    let info_len = cfg.info_len(channel_llrs.len()).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{} LLRs do not form a terminated rate-1/2 codeword",
            channel_llrs.len()
        ))
    })?;
    let steps = info_len + CodeConfig::MEMORY;
    let ns = CodeConfig::NUM_STATES;

    // Branch table: (state, input) -> (outputs, next state).
    let mut branches = [[([0u8; 2], 0usize); 2]; CodeConfig::NUM_STATES];
    for (state, entry) in branches.iter_mut().enumerate() {
        for bit in 0..2u8 {
            entry[bit as usize] = cfg.step(state, bit);
        }
    }
    let llr = |k: usize, j: usize| -> f64 {
        let l = channel_llrs[2 * k + j];
        if l.is_nan() {
            0.0
        } else {
            l
        }
    };
    let half_metric = |k: usize, out: [u8; 2], skip: Option<usize>| -> f64 {
        let mut acc = 0.0;
        for (j, &c) in out.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            let l = llr(k, j);
            acc += if c == 0 { 0.5 * l } else { -0.5 * l };
        }
        acc
    };
    let inputs = |k: usize| if k < info_len { 2 } else { 1 };

    let mut alpha = vec![NEG_INF; (steps + 1) * ns];
    alpha[0] = 0.0;
    for k in 0..steps {
        let (cur, next) = alpha.split_at_mut((k + 1) * ns);
        let cur = &cur[k * ns..];
        let next = &mut next[..ns];
        for s in 0..ns {
            if cur[s] == NEG_INF {
                continue;
            }
            for &(out, ns_) in branches[s].iter().take(inputs(k)) {
                next[ns_] = max_star(next[ns_], cur[s] + half_metric(k, out, None));
            }
        }
        let top = next.iter().cloned().fold(NEG_INF, f64::max);
        if top.is_finite() {
            next.iter_mut().for_each(|a| *a -= top);
        }
    }

    let mut beta = vec![NEG_INF; (steps + 1) * ns];
    beta[steps * ns] = 0.0;
    for k in (0..steps).rev() {
        let (cur, next) = beta.split_at_mut((k + 1) * ns);
        let cur = &mut cur[k * ns..];
        let next = &next[..ns];
        for s in 0..ns {
            for &(out, ns_) in branches[s].iter().take(inputs(k)) {
                if next[ns_] == NEG_INF {
                    continue;
                }
                cur[s] = max_star(cur[s], next[ns_] + half_metric(k, out, None));
            }
        }
        let top = cur.iter().cloned().fold(NEG_INF, f64::max);
        if top.is_finite() {
            cur.iter_mut().for_each(|b| *b -= top);
        }
    }

    let mut info_llrs = Vec::with_capacity(info_len);
    let mut extrinsic = Vec::with_capacity(2 * steps);
    for k in 0..steps {
        let a = &alpha[k * ns..(k + 1) * ns];
        let b = &beta[(k + 1) * ns..(k + 2) * ns];
        let mut ext = [[NEG_INF; 2]; 2];
        let mut info = [NEG_INF; 2];
        for s in 0..ns {
            if a[s] == NEG_INF {
                continue;
            }
            for (bit, &(out, ns_)) in branches[s].iter().enumerate().take(inputs(k)) {
                if b[ns_] == NEG_INF {
                    continue;
                }
                let base = a[s] + b[ns_];
                info[bit] = max_star(info[bit], base + half_metric(k, out, None));
                for j in 0..2 {
                    let c = out[j] as usize;
                    ext[j][c] = max_star(ext[j][c], base + half_metric(k, out, Some(j)));
                }
            }
        }
        if k < info_len {
            info_llrs.push(info[0] - info[1]);
        }
        for e in ext {
            extrinsic.push(e[0] - e[1]);
        }
    }
    Ok(BcjrOutput {
        info_llrs,
        extrinsic,
    })
}
