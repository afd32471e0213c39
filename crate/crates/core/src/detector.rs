//! MMSE equalization and iterative soft-symbol parallel interference
//! cancellation (PIC) with per-symbol soft-output ML detection.
//!
//! Iteration 1 equalizes each TF bin with MMSE, despreads, demaps and decodes.
//! Every later iteration cancels the soft-symbol estimate of all other
//! symbols from the received frame,
//!
//! ```text
//! v_w = y - S~ b~ + s~_w b~_w        (TF domain)
//! v_w = Y - G  b~ + g_w  b~_w        (DD domain, Y = despread(y))
//! ```
//!
//! and evaluates `||v_w - c_w b||^2 / sigma^2` over the alphabet. All symbols
//! of an iteration use the previous iteration's soft symbols. With
//! [`PicMetric::InterferenceAware`] the denominator also carries the variance
//! left by imperfect cancellation. The metric only
//! depends on `c_w^H v_w` and `||c_w||^2`, so the whole frame is handled with a
//! few transforms instead of `MN` dense column products.

use num_complex::Complex64;

use crate::coding::{CodingChain, Constellation, LLR_CLAMP};
use crate::error::{Error, Result};
use crate::grid::{check_same_shape, inner, norm_sqr, DdGrid, TfGrid};
use crate::transform::{DdChannelResponse, Precoding, SymplecticTransform};

/// Noise variance used in metric denominators when the true one is zero.
const SIGMA2_FLOOR: f64 = 1e-12;

/// Where interference cancellation and detection happen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    TimeFrequency,
    DelayDoppler,
}

/// Per-bin MMSE equalizer `y g^* / (|g|^2 + sigma^2)`; bins with
/// `|g|^2 + sigma^2 = 0` are set to zero.
pub fn mmse_equalize(y: &TfGrid, g_hat: &TfGrid, sigma2: f64) -> Result<TfGrid> {
    check_same_shape(y.shape(), g_hat.shape())?;
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance {sigma2} must be >= 0")));
    }
    let data = y
        .as_slice()
        .iter()
        .zip(g_hat.as_slice())
        .map(|(&y, &g)| {
            let den = g.norm_sqr() + sigma2;
            if den > 0.0 {
                y * g.conj() / den
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(TfGrid::from_raw(y.shape(), data))
}

/// Effective spreading `S~ = diag(g) S`, accessed column-wise or through
/// transforms; never stored densely.
#[derive(Clone, Debug)]
pub struct EffectiveSpreading<'a> {
    transform: &'a SymplecticTransform,
    g: &'a TfGrid,
    precoding: Precoding,
}

impl<'a> EffectiveSpreading<'a> {
    pub fn new(transform: &'a SymplecticTransform, g: &'a TfGrid, precoding: Precoding) -> Self {
        assert_eq!(transform.shape(), g.shape(), "channel grid shape mismatch");
        Self {
            transform,
            g,
            precoding,
        }
    }

    /// `s~_w = vec(g) * s_w`.
    pub fn column(&self, w: usize) -> Vec<Complex64> {
        let basis = self
            .precoding
            .spread(self.transform, &DdGrid::unit(self.g.shape(), w));
        basis
            .as_slice()
            .iter()
            .zip(self.g.as_slice())
            .map(|(s, g)| s * g)
            .collect()
    }

    /// `||s~_w||^2` for all `w`.
    pub fn column_norms(&self) -> Vec<f64> {
        let power: Vec<f64> = self.g.as_slice().iter().map(|z| z.norm_sqr()).collect();
        self.precoding.symbol_average(&power)
    }

    /// `S~ b`.
    pub fn apply(&self, b: &DdGrid) -> TfGrid {
        let mut x = self.precoding.spread(self.transform, b);
        for (a, g) in x.as_mut_slice().iter_mut().zip(self.g.as_slice()) {
            *a *= g;
        }
        x
    }

    /// `S~^H r`: matched-filter outputs for every symbol.
    pub fn matched(&self, r: &TfGrid) -> DdGrid {
        let weighted = TfGrid::from_raw(
            r.shape(),
            r.as_slice()
                .iter()
                .zip(self.g.as_slice())
                .map(|(a, g)| a * g.conj())
                .collect(),
        );
        self.precoding.despread(self.transform, &weighted)
    }
}

fn check_symbol_index(w: usize, len: usize) -> Result<()> {
    if w >= len {
        return Err(Error::InvalidArgument(format!(
            "symbol index {w} out of range for {len} symbols"
        )));
    }
    Ok(())
}

/// PIC residual for symbol `w` in the TF domain.
pub fn pic_residual_tf(
    y: &TfGrid,
    s_eff: &EffectiveSpreading<'_>,
    b_soft: &DdGrid,
    w: usize,
) -> Result<Vec<Complex64>> {
    check_same_shape(y.shape(), b_soft.shape())?;
    check_symbol_index(w, y.shape().len())?;
    let interference = s_eff.apply(b_soft);
    let own = s_eff.column(w);
    let bw = b_soft.as_slice()[w];
    Ok(y.as_slice()
        .iter()
        .zip(interference.as_slice())
        .zip(&own)
        .map(|((y, i), s)| y - i + s * bw)
        .collect())
}

/// PIC residual for symbol `w` in the DD domain.
pub fn pic_residual_dd(
    y_dd: &DdGrid,
    g_op: &DdChannelResponse<'_>,
    b_soft: &DdGrid,
    w: usize,
) -> Result<Vec<Complex64>> {
    check_same_shape(y_dd.shape(), b_soft.shape())?;
    check_symbol_index(w, y_dd.shape().len())?;
    let interference = g_op.apply(b_soft);
    let own = g_op.column(w);
    let bw = b_soft.as_slice()[w];
    Ok(y_dd
        .as_slice()
        .iter()
        .zip(interference.as_slice())
        .zip(&own)
        .map(|((y, i), g)| y - i + g * bw)
        .collect())
}

/// Hard decision and per-bit max-log LLRs for one symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolDecision {
    pub label: usize,
    pub llrs: Vec<f64>,
}

/// Exhaustive single-symbol ML over the alphabet with the full metric
/// `||v - c b||^2 / sigma^2`.
pub fn ml_symbol_detect(
    v: &[Complex64],
    col: &[Complex64],
    constellation: &Constellation,
    sigma2: f64,
) -> Result<SymbolDecision> {
    if v.len() != col.len() {
        return Err(Error::InvalidArgument(format!(
            "residual length {} differs from column length {}",
            v.len(),
            col.len()
        )));
    }
    let bits = constellation.bits_per_symbol();
    if norm_sqr(col) == 0.0 {
        return Ok(SymbolDecision {
            label: 0,
            llrs: vec![0.0; bits],
        });
    }
    let sigma2 = sigma2.max(SIGMA2_FLOOR);
    let metrics: Vec<f64> = constellation
        .points()
        .iter()
        .map(|&b| {
            v.iter()
                .zip(col)
                .map(|(v, c)| (v - c * b).norm_sqr())
                .sum::<f64>()
                / sigma2
        })
        .collect();
    let mut llrs = vec![0.0; bits];
    let label = constellation.max_log_llrs(&metrics, &mut llrs);
    Ok(SymbolDecision { label, llrs })
}

/// Same decision as [`ml_symbol_detect`] from the matched-filter output
/// `z = c^H v` and `||c||^2`; the common `||v||^2` term cancels.
fn ml_from_matched(
    z: Complex64,
    col_norm: f64,
    constellation: &Constellation,
    sigma2: f64,
    metrics: &mut [f64],
    llrs: &mut [f64],
) -> usize {
    if col_norm == 0.0 {
        llrs.iter_mut().for_each(|l| *l = 0.0);
        return 0;
    }
    let sigma2 = sigma2.max(SIGMA2_FLOOR);
    for (m, &b) in metrics.iter_mut().zip(constellation.points()) {
        *m = (b.norm_sqr() * col_norm - 2.0 * (b.conj() * z).re) / sigma2;
    }
    constellation.max_log_llrs(metrics, llrs)
}

/// Noise model of the PIC symbol metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PicMetric {
    /// `||v_w - c_w b||^2 / sigma^2`: residual interference is ignored.
    Awgn,
    /// The denominator becomes `sigma^2 + I_w / ||c_w||^2`, where
    /// `I_w = sum_{k != w} |c_w^H c_k|^2 E|d_k - b~_k|^2` is the variance left
    /// after cancellation, seen at the matched-filter output.
    #[default]
    InterferenceAware,
}

impl PicMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            PicMetric::Awgn => "awgn",
            PicMetric::InterferenceAware => "interference-aware",
        }
    }
}

impl std::str::FromStr for PicMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "awgn" => Ok(PicMetric::Awgn),
            "interference-aware" => Ok(PicMetric::InterferenceAware),
            other => Err(Error::Config(format!("unknown PIC metric '{other}'"))),
        }
    }
}

/// Iteration count and detection domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectorConfig {
    pub domain: Domain,
    pub precoding: Precoding,
    /// Maximum number of iterations `I >= 1`.
    pub max_iters: usize,
    pub metric: PicMetric,
}

/// Residual interference after PIC, `I_w` of [`PicMetric::InterferenceAware`].
///
/// The Gram matrix of the effective columns is a circular convolution with
/// `K = idsft(|g|^2)`, so `I = |K|^2 (*) var - |K[0]|^2 var` with `var_k =
/// E|d_k|^2 - |b~_k|^2`. Identity precoding has orthogonal columns and no
/// residual.
pub struct ResidualInterference<'a> {
    transform: &'a SymplecticTransform,
    precoding: Precoding,
    kernel_tf: TfGrid,
    own: f64,
}

impl<'a> ResidualInterference<'a> {
    pub fn new(transform: &'a SymplecticTransform, g: &TfGrid, precoding: Precoding) -> Self {
        let power = TfGrid::from_raw(
            g.shape(),
            g.as_slice().iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect(),
        );
        let k = transform.idsft(&power);
        let own = k.as_slice()[0].norm_sqr();
        let k2 = DdGrid::from_raw(
            k.shape(),
            k.as_slice().iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect(),
        );
        Self {
            transform,
            precoding,
            kernel_tf: transform.dsft(&k2),
            own,
        }
    }

    /// `I_w` for every symbol given the soft symbols fed into the iteration.
    pub fn variances(&self, soft: &DdGrid, symbol_energy: f64) -> Vec<f64> {
        if self.precoding == Precoding::Identity {
            return vec![0.0; soft.shape().len()];
        }
        let var = DdGrid::from_raw(
            soft.shape(),
            soft.as_slice()
                .iter()
                .map(|b| Complex64::new((symbol_energy - b.norm_sqr()).max(0.0), 0.0))
                .collect(),
        );
        let spread = DdChannelResponse::new(self.transform, &self.kernel_tf).apply(&var);
        spread
            .as_slice()
            .iter()
            .zip(var.as_slice())
            .map(|(i, v)| (i.re - self.own * v.re).max(0.0))
            .collect()
    }
}

/// Snapshot of one detector iteration.
#[derive(Clone, Debug)]
pub struct DetectorState {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Soft symbols fed into this iteration (zero for iteration 1).
    pub soft_symbols: DdGrid,
    /// Detector LLRs in mapping order, clamped to +-50.
    pub llrs: Vec<f64>,
    /// Hard symbol decisions (constellation labels).
    pub symbols: Vec<usize>,
    /// Decoded information bits after this iteration.
    pub info_bits: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct DetectorOutput {
    /// One entry per executed iteration; shorter than `max_iters` after an
    /// early stop.
    pub states: Vec<DetectorState>,
}

impl DetectorOutput {
    /// Final information-bit decisions.
    pub fn info_bits(&self) -> &[u8] {
        &self.states.last().expect("at least one iteration").info_bits
    }
}

/// Runs the iterative receiver on one frame with perfect CSI `g`.
///
/// `stop` sees the decoded bits after every iteration and ends the loop early
/// when it returns `true`.
pub fn run_detector(
    transform: &SymplecticTransform,
    y: &TfGrid,
    g: &TfGrid,
    sigma2: f64,
    cfg: &DetectorConfig,
    chain: &CodingChain,
    mut stop: impl FnMut(&[u8]) -> bool,
) -> Result<DetectorOutput> {
    if cfg.max_iters < 1 {
        return Err(Error::InvalidArgument("at least one detector iteration is required".into()));
    }
    check_same_shape(y.shape(), g.shape())?;
    check_same_shape(y.shape(), transform.shape())?;
    check_same_shape(y.shape(), chain.shape())?;
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance {sigma2} must be >= 0")));
    }
    let shape = y.shape();
    let constellation = chain.constellation();
    let bits = constellation.bits_per_symbol();
    let alphabet = constellation.points().len();

    let s_eff = EffectiveSpreading::new(transform, g, cfg.precoding);
    let g_op = DdChannelResponse::with_precoding(transform, g, cfg.precoding);
    let y_dd = match cfg.domain {
        Domain::DelayDoppler => Some(cfg.precoding.despread(transform, y)),
        Domain::TimeFrequency => None,
    };
    let norms = s_eff.column_norms();
    let residual_model = match cfg.metric {
        PicMetric::InterferenceAware => Some(ResidualInterference::new(transform, g, cfg.precoding)),
        PicMetric::Awgn => None,
    };
    let symbol_energy = constellation.average_energy();

    let mut states: Vec<DetectorState> = Vec::with_capacity(cfg.max_iters);
    let mut soft = DdGrid::zeros(shape);
    for iteration in 1..=cfg.max_iters {
        let mut llrs = vec![0.0; shape.len() * bits];
        let mut symbols = vec![0usize; shape.len()];
        let mut metrics = vec![0.0; alphabet];
        if iteration == 1 {
            mmse_detect(transform, y, g, sigma2, cfg.precoding, constellation, &mut llrs, &mut symbols)?;
        } else {
            let matched = match (&y_dd, cfg.domain) {
                (Some(y_dd), Domain::DelayDoppler) => {
                    let residual = y_dd.sub(&g_op.apply(&soft))?;
                    g_op.apply_adjoint(&residual)
                }
                _ => {
                    let residual = y.sub(&s_eff.apply(&soft))?;
                    s_eff.matched(&residual)
                }
            };
            let interference = residual_model.as_ref().map(|r| r.variances(&soft, symbol_energy));
            for (w, ((&mf, &b), &norm)) in matched
                .as_slice()
                .iter()
                .zip(soft.as_slice())
                .zip(&norms)
                .enumerate()
            {
                // c^H v_w = c^H (residual + c b_w) = mf + ||c||^2 b_w.
                let z = mf + b * norm;
                let noise = match &interference {
                    Some(i) if norm > 0.0 => sigma2 + i[w] / norm,
                    _ => sigma2,
                };
                symbols[w] = ml_from_matched(
                    z,
                    norm,
                    constellation,
                    noise,
                    &mut metrics,
                    &mut llrs[w * bits..(w + 1) * bits],
                );
            }
        }
        llrs.iter_mut().for_each(|l| *l = l.clamp(-LLR_CLAMP, LLR_CLAMP));
        let decoded = chain.receive(&llrs)?;
        let done = stop(&decoded.info_bits);
        states.push(DetectorState {
            iteration,
            soft_symbols: std::mem::replace(&mut soft, decoded.soft_symbols),
            llrs,
            symbols,
            info_bits: decoded.info_bits,
        });
        if done {
            break;
        }
    }
    Ok(DetectorOutput { states })
}

/// MMSE equalization, despreading and demapping against the biased
/// estimate `d^ = mu d + e` with `E|e|^2 = mu - mu^2`.
#[allow(clippy::too_many_arguments)]
fn mmse_detect(
    transform: &SymplecticTransform,
    y: &TfGrid,
    g: &TfGrid,
    sigma2: f64,
    precoding: Precoding,
    constellation: &Constellation,
    llrs: &mut [f64],
    symbols: &mut [usize],
) -> Result<()> {
    let x_hat = mmse_equalize(y, g, sigma2)?;
    let d_hat = precoding.despread(transform, &x_hat);
    let gain: Vec<f64> = g
        .as_slice()
        .iter()
        .map(|z| {
            let p = z.norm_sqr();
            if p + sigma2 > 0.0 {
                p / (p + sigma2)
            } else {
                0.0
            }
        })
        .collect();
    let bias = precoding.symbol_average(&gain);
    let bits = constellation.bits_per_symbol();
    let mut metrics = vec![0.0; constellation.points().len()];
    for (w, (&d, &mu)) in d_hat.as_slice().iter().zip(&bias).enumerate() {
        let out = &mut llrs[w * bits..(w + 1) * bits];
        if mu <= 0.0 {
            out.iter_mut().for_each(|l| *l = 0.0);
            symbols[w] = 0;
            continue;
        }
        let var = (mu - mu * mu).max(SIGMA2_FLOOR);
        for (m, &b) in metrics.iter_mut().zip(constellation.points()) {
            *m = (d - b * mu).norm_sqr() / var;
        }
        symbols[w] = constellation.max_log_llrs(&metrics, out);
    }
    Ok(())
}

/// Matched-filter output `c^H v` for explicit vectors.
pub fn matched_output(col: &[Complex64], v: &[Complex64]) -> Complex64 {
    inner(col, v)
}
