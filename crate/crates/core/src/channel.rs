//! Geometry-based doubly selective channel.
//!
//! A realization is a set of propagation paths, each with a complex gain, a
//! delay normalized to the OFDM symbol length without CP (`tau / (N T_C)`) and
//! a Doppler shift normalized to the OFDM symbol rate (`f T_S`). On the grid
//! the channel is
//!
//! ```text
//! g'[m,q] = g_TX[q] g_RX[q] sum_l eta_l exp(-j2pi theta_l q) exp(j2pi nu_l m)
//! ```
//!
//! Delays follow an exponential power-delay profile truncated at the cyclic
//! prefix; arrival angles are uniform, which gives the Clarke (Jakes) Doppler
//! spectrum.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::grid::{check_same_shape, Shape, TfGrid};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Fraction of the subcarrier spacing the Doppler shift may occupy.
pub const DOPPLER_FRACTION: f64 = 0.01;

/// OFDM numerology plus terminal speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemGeometry {
    /// Subcarriers `N`.
    pub subcarriers: usize,
    /// OFDM symbols per frame `M`.
    pub symbols: usize,
    /// Cyclic prefix `G` in chips.
    pub cp_len: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub velocity_mps: f64,
}

impl SystemGeometry {
    pub fn new(
        subcarriers: usize,
        symbols: usize,
        cp_len: usize,
        bandwidth_hz: f64,
        carrier_hz: f64,
        velocity_mps: f64,
    ) -> Result<Self> {
        let geom = Self {
            subcarriers,
            symbols,
            cp_len,
            bandwidth_hz,
            carrier_hz,
            velocity_mps,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subcarriers == 0 || self.symbols == 0 || self.cp_len == 0 {
            return Err(Error::Config(format!(
                "N = {}, M = {} and G = {} must all be positive",
                self.subcarriers, self.symbols, self.cp_len
            )));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::Config(format!(
                "bandwidth B = {} Hz must be positive",
                self.bandwidth_hz
            )));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::Config(format!(
                "carrier frequency f_c = {} Hz must be positive",
                self.carrier_hz
            )));
        }
        if !(self.velocity_mps >= 0.0 && self.velocity_mps.is_finite()) {
            return Err(Error::Config(format!(
                "velocity v = {} m/s must be non-negative",
                self.velocity_mps
            )));
        }
        let limit = self.doppler_limit_hz();
        let spread = self.doppler_spread_hz();
        if spread >= limit {
            return Err(Error::Config(format!(
                "Doppler constraint violated: B_D = {spread:.4} Hz >= eps/(T_C N) = {limit:.4} Hz \
                 (eps = {DOPPLER_FRACTION})"
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        Shape {
            m: self.symbols,
            n: self.subcarriers,
        }
    }

    /// Chip duration `T_C = 1/B`.
    pub fn chip_duration(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// OFDM symbol duration including CP, `T_S = T_C (N + G)`.
    pub fn symbol_duration(&self) -> f64 {
        self.chip_duration() * (self.subcarriers + self.cp_len) as f64
    }

    /// Cyclic prefix duration `G T_C`, the longest admissible path delay.
    pub fn cp_duration(&self) -> f64 {
        self.chip_duration() * self.cp_len as f64
    }

    /// Maximum Doppler shift `f_max = v f_c / c`.
    pub fn max_doppler_hz(&self) -> f64 {
        self.velocity_mps * self.carrier_hz / SPEED_OF_LIGHT
    }

    /// Largest normalized Doppler `f_max T_S`.
    pub fn max_normalized_doppler(&self) -> f64 {
        self.max_doppler_hz() * self.symbol_duration()
    }

    /// Doppler spread checked against the subcarrier spacing. Taken as the
    /// maximum Doppler shift `f_max`.
    pub fn doppler_spread_hz(&self) -> f64 {
        self.max_doppler_hz()
    }

    /// `eps / (T_C N)`.
    pub fn doppler_limit_hz(&self) -> f64 {
        DOPPLER_FRACTION / (self.chip_duration() * self.subcarriers as f64)
    }
}

/// Converts km/h to m/s.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// `theta = tau(0) / (N T_C)`.
    pub delay: f64,
    /// `nu = f T_S`.
    pub doppler: f64,
}

/// One channel realization.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    paths: Vec<Path>,
}

impl PathSet {
    /// Wraps paths after checking they fit the CP and Doppler bounds of `geom`.
    pub fn new(paths: Vec<Path>, geom: &SystemGeometry) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidArgument("a path set needs at least one path".into()));
        }
        let max_delay = geom.cp_len as f64 / geom.subcarriers as f64;
        let max_doppler = geom.max_normalized_doppler();
        for (l, path) in paths.iter().enumerate() {
            if !(path.gain.is_finite() && path.delay.is_finite() && path.doppler.is_finite()) {
                return Err(Error::InvalidArgument(format!("path {l} has non-finite parameters")));
            }
            if path.delay < 0.0 || path.delay > max_delay * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "path {l}: normalized delay {} outside [0, G/N = {max_delay}]",
                    path.delay
                )));
            }
            if path.doppler.abs() > max_doppler * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                return Err(Error::Config(format!(
                    "path {l}: normalized Doppler {} exceeds f_max T_S = {max_doppler}",
                    path.doppler
                )));
            }
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Standard deviation of an exponential law with mean `scale` truncated to
/// `[0, cutoff]`.
fn truncated_exp_std(scale: f64, cutoff: f64) -> f64 {
    let t = cutoff / scale;
    let tail = (-t).exp();
    let mass = -(-t).exp_m1();
    let mean = scale * (1.0 - t * tail / mass);
    let second = scale * scale * (2.0 - tail * (t * t + 2.0 * t + 2.0)) / mass;
    (second - mean * mean).max(0.0).sqrt()
}

/// Exponential scale whose truncation at `cutoff` has RMS spread `rms`.
pub fn delay_scale_for_rms(rms: f64, cutoff: f64) -> Result<f64> {
    // A truncated exponential tends to the uniform law as the scale grows.
    let ceiling = cutoff / 12f64.sqrt();
    if !(rms > 0.0) || rms >= ceiling {
        return Err(Error::Config(format!(
            "RMS delay spread {rms:e} s not reachable by an exponential profile \
             truncated at the CP ({cutoff:e} s); must lie in (0, {ceiling:e})"
        )));
    }
    let (mut lo, mut hi) = (rms, rms);
    while truncated_exp_std(hi, cutoff) < rms {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_exp_std(mid, cutoff) < rms {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How path delays and powers are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DelayProfile {
    /// Delays exponential with mean equal to the RMS spread, powers
    /// `exp(-tau / rms)`. The power-weighted spread is about half the
    /// nominal value.
    #[default]
    Decaying,
    /// Equal path powers; the delay law is rescaled so that the profile
    /// truncated at the CP has exactly the requested RMS spread.
    EqualPower,
}

impl DelayProfile {
    pub fn as_str(&self) -> &'static str {
        match self {
            DelayProfile::Decaying => "decaying",
            DelayProfile::EqualPower => "equal-power",
        }
    }
}

impl std::str::FromStr for DelayProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "decaying" => Ok(DelayProfile::Decaying),
            "equal-power" => Ok(DelayProfile::EqualPower),
            other => Err(Error::Config(format!("unknown delay profile '{other}'"))),
        }
    }
}

/// Draws one channel realization with the default [`DelayProfile`].
pub fn sample_paths(
    geom: &SystemGeometry,
    rms_delay_spread: f64,
    num_paths: usize,
    rng: &mut impl Rng,
) -> Result<PathSet> {
    sample_paths_with(geom, DelayProfile::default(), rms_delay_spread, num_paths, rng)
}

/// Draws one channel realization.
///
/// Delays are redrawn when they exceed the CP. Phases are uniform and powers
/// are normalized to sum to one. Doppler shifts are `f_max cos(alpha)` with
/// uniform `alpha`.
pub fn sample_paths_with(
    geom: &SystemGeometry,
    profile: DelayProfile,
    rms_delay_spread: f64,
    num_paths: usize,
    rng: &mut impl Rng,
) -> Result<PathSet> {
    if num_paths == 0 {
        return Err(Error::InvalidArgument("num_paths must be at least 1".into()));
    }
    geom.validate()?;
    let cutoff = geom.cp_duration();
    if !(rms_delay_spread > 0.0) || rms_delay_spread * geom.bandwidth_hz > geom.cp_len as f64 {
        return Err(Error::Config(format!(
            "RMS delay spread {rms_delay_spread:e} s must be positive and within the CP of {cutoff:e} s"
        )));
    }
    let scale = match profile {
        DelayProfile::Decaying => rms_delay_spread,
        DelayProfile::EqualPower => delay_scale_for_rms(rms_delay_spread, cutoff)?,
    };
    let exp = Exp::new(1.0 / scale).expect("positive rate");
    let delay_norm = geom.subcarriers as f64 * geom.chip_duration();
    let f_max = geom.max_doppler_hz();
    let t_s = geom.symbol_duration();

    let mut paths = Vec::with_capacity(num_paths);
    for _ in 0..num_paths {
        let tau = loop {
            let tau: f64 = exp.sample(rng);
            if tau <= cutoff {
                break tau;
            }
        };
        let phase = rng.random::<f64>() * 2.0 * PI;
        let angle = rng.random::<f64>() * 2.0 * PI;
        let amplitude = match profile {
            DelayProfile::Decaying => (-0.5 * tau / rms_delay_spread).exp(),
            DelayProfile::EqualPower => 1.0,
        };
        paths.push(Path {
            gain: Complex64::from_polar(amplitude, phase),
            delay: tau / delay_norm,
            doppler: f_max * angle.cos() * t_s,
        });
    }
    let norm = paths.iter().map(|p| p.gain.norm_sqr()).sum::<f64>().sqrt();
    for p in &mut paths {
        p.gain /= norm;
    }
    PathSet::new(paths, geom)
}

/// Evaluates the physical channel on the grid with identity TX/RX filters.
pub fn evaluate_tf_response(paths: &PathSet, shape: Shape) -> TfGrid {
    evaluate_tf_response_filtered(paths, shape, None)
}

/// Evaluates the channel including a per-subcarrier filter product
/// `g_TX[q] g_RX[q]` when given.
pub fn evaluate_tf_response_filtered(
    paths: &PathSet,
    shape: Shape,
    filter: Option<&[Complex64]>,
) -> TfGrid {
    let Shape { m, n } = shape;
    let mut data = vec![Complex64::new(0.0, 0.0); m * n];
    let mut freq = vec![Complex64::new(0.0, 0.0); n];
    for path in paths.paths() {
        for (q, f) in freq.iter_mut().enumerate() {
            *f = path.gain * Complex64::from_polar(1.0, -2.0 * PI * path.delay * q as f64);
        }
        for (row, chunk) in data.chunks_exact_mut(n).enumerate() {
            let time = Complex64::from_polar(1.0, 2.0 * PI * path.doppler * row as f64);
            for (out, f) in chunk.iter_mut().zip(&freq) {
                *out += time * f;
            }
        }
    }
    if let Some(filter) = filter {
        assert_eq!(filter.len(), n, "filter length must equal N");
        for chunk in data.chunks_exact_mut(n) {
            for (out, f) in chunk.iter_mut().zip(filter) {
                *out *= f;
            }
        }
    }
    TfGrid::from_raw(shape, data)
}

/// Effective channel `w_RX * g' * w_TX`.
pub fn apply_windows(g_prime: &TfGrid, w_tx: &TfGrid, w_rx: &TfGrid) -> Result<TfGrid> {
    check_same_shape(g_prime.shape(), w_tx.shape())?;
    check_same_shape(g_prime.shape(), w_rx.shape())?;
    g_prime.hadamard(w_tx)?.hadamard(w_rx)
}

/// Rectangular window: one on the whole grid.
pub fn rectangular_window(shape: Shape) -> TfGrid {
    TfGrid::filled(shape, Complex64::new(1.0, 0.0))
}

/// Writes a realization as CSV: `eta_re,eta_im,theta,nu`, one row per path.
pub fn write_paths_csv<W: Write>(writer: W, paths: &PathSet) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eta_re", "eta_im", "theta", "nu"])?;
    for p in paths.paths() {
        w.write_record([
            p.gain.re.to_string(),
            p.gain.im.to_string(),
            p.delay.to_string(),
            p.doppler.to_string(),
        ])?;
    }
    w.flush()
}

/// Reads back the output of [`write_paths_csv`] without geometry checks.
pub fn read_paths_csv<R: BufRead>(reader: R) -> Result<Vec<Path>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidArgument(format!("path CSV: {e}")))?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("path CSV row {}: bad column {i}", line + 1))
                })
        };
        out.push(Path {
            gain: Complex64::new(field(0)?, field(1)?),
            delay: field(2)?,
            doppler: field(3)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_geometry(kmh: f64) -> SystemGeometry {
        SystemGeometry::new(64, 36, 16, 10e6, 5.9e9, kmh_to_mps(kmh)).unwrap()
    }

    #[test]
    fn reference_numerology() {
        let geom = reference_geometry(200.0);
        assert!((geom.symbol_duration() - 8e-6).abs() < 1e-18);
        let f_max = 200.0 / 3.6 * 5.9e9 / 2.99792458e8;
        assert!((geom.max_doppler_hz() - f_max).abs() < 1e-9);
        assert!((f_max - 1093.3).abs() < 0.05);
        assert!((geom.max_normalized_doppler() - 8.747e-3).abs() < 1e-6);
        assert!((geom.doppler_limit_hz() - 1562.5).abs() < 1e-9);
    }

    #[test]
    fn doppler_constraint_rejects_fast_terminal() {
        let err = SystemGeometry::new(64, 36, 16, 10e6, 5.9e9, kmh_to_mps(400.0)).unwrap_err();
        assert!(err.to_string().contains("Doppler constraint"));
    }

    #[test]
    fn zero_velocity_means_zero_doppler() {
        let geom = reference_geometry(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let paths = sample_paths(&geom, 0.4e-6, 60, &mut rng).unwrap();
        assert!(paths.paths().iter().all(|p| p.doppler == 0.0));
        let g = evaluate_tf_response(&paths, geom.shape());
        for m in 1..geom.symbols {
            for q in 0..geom.subcarriers {
                assert_eq!(g[(m, q)], g[(0, q)]);
            }
        }
    }

    #[test]
    fn paths_respect_bounds_and_unit_power() {
        let geom = reference_geometry(200.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let paths = sample_paths(&geom, 0.4e-6, 60, &mut rng).unwrap();
            assert_eq!(paths.len(), 60);
            assert!((paths.total_power() - 1.0).abs() < 1e-12);
            for p in paths.paths() {
                assert!(p.delay >= 0.0 && p.delay <= 16.0 / 64.0);
                assert!(p.doppler.abs() <= geom.max_normalized_doppler());
            }
        }
    }

    #[test]
    fn argument_errors() {
        let geom = reference_geometry(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(matches!(
            sample_paths(&geom, 0.4e-6, 0, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            sample_paths(&geom, 2e-6, 10, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn profile_power_laws() {
        let geom = reference_geometry(200.0);
        let delay_unit = 64.0 / 10e6;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let decaying = sample_paths_with(&geom, DelayProfile::Decaying, 0.4e-6, 30, &mut rng).unwrap();
        let p0 = decaying.paths()[0];
        for p in decaying.paths() {
            let expected = (-(p.delay - p0.delay) * delay_unit / 0.4e-6).exp();
            assert!((p.gain.norm_sqr() / p0.gain.norm_sqr() - expected).abs() < 1e-9);
        }
        let equal = sample_paths_with(&geom, DelayProfile::EqualPower, 0.4e-6, 30, &mut rng).unwrap();
        assert!(equal.paths().iter().all(|p| (p.gain.norm_sqr() - 1.0 / 30.0).abs() < 1e-12));
        assert_eq!("equal-power".parse::<DelayProfile>().unwrap(), DelayProfile::EqualPower);
        assert!("flat".parse::<DelayProfile>().is_err());
    }

    #[test]
    fn equal_power_profile_has_requested_rms() {
        let geom = reference_geometry(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut delays = Vec::new();
        for _ in 0..2000 {
            let paths = sample_paths_with(&geom, DelayProfile::EqualPower, 0.4e-6, 60, &mut rng).unwrap();
            delays.extend(paths.paths().iter().map(|p| p.delay * 6.4e-6));
        }
        let n = delays.len() as f64;
        let mean = delays.iter().sum::<f64>() / n;
        let std = (delays.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std / 0.4e-6 - 1.0).abs() < 0.01, "{std}");
    }

    #[test]
    fn delay_scale_reproduces_rms() {
        let scale = delay_scale_for_rms(0.4e-6, 1.6e-6).unwrap();
        assert!((truncated_exp_std(scale, 1.6e-6) - 0.4e-6).abs() < 1e-15);
        // Almost untruncated profile: scale ~ rms.
        let scale = delay_scale_for_rms(0.1e-6, 1.6e-6).unwrap();
        assert!((scale - 0.1e-6).abs() / 0.1e-6 < 1e-4);
    }

    #[test]
    fn single_path_responses() {
        let geom = SystemGeometry::new(8, 4, 2, 10e6, 5.9e9, 0.0).unwrap();
        let shape = geom.shape();
        let flat = PathSet::new(
            vec![Path { gain: Complex64::new(1.0, 0.0), delay: 0.0, doppler: 0.0 }],
            &geom,
        )
        .unwrap();
        let g = evaluate_tf_response(&flat, shape);
        assert!(g.max_abs_diff(&TfGrid::filled(shape, Complex64::new(1.0, 0.0))) < 1e-15);

        let delayed = PathSet::new(
            vec![Path { gain: Complex64::new(1.0, 0.0), delay: 1.0 / 8.0, doppler: 0.0 }],
            &geom,
        )
        .unwrap();
        let g = evaluate_tf_response(&delayed, shape);
        let expected =
            TfGrid::from_fn(shape, |_, q| Complex64::from_polar(1.0, -2.0 * PI * q as f64 / 8.0));
        assert!(g.max_abs_diff(&expected) < 1e-14);

        // Doppler of 1/M is outside this geometry's Doppler bound, so build the
        // set directly.
        let shifted = PathSet {
            paths: vec![Path { gain: Complex64::new(1.0, 0.0), delay: 0.0, doppler: 0.25 }],
        };
        let g = evaluate_tf_response(&shifted, shape);
        let expected =
            TfGrid::from_fn(shape, |m, _| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / 4.0));
        assert!(g.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn filters_scale_per_subcarrier() {
        let geom = SystemGeometry::new(4, 2, 1, 10e6, 5.9e9, 0.0).unwrap();
        let flat = PathSet::new(
            vec![Path { gain: Complex64::new(1.0, 0.0), delay: 0.0, doppler: 0.0 }],
            &geom,
        )
        .unwrap();
        let filter: Vec<_> = (0..4).map(|q| Complex64::new(q as f64, 0.0)).collect();
        let g = evaluate_tf_response_filtered(&flat, geom.shape(), Some(&filter));
        assert_eq!(g[(1, 3)], Complex64::new(3.0, 0.0));
    }

    #[test]
    fn windows() {
        let shape = Shape::new(3, 4).unwrap();
        let g = TfGrid::from_fn(shape, |m, q| Complex64::new(m as f64, q as f64));
        let rect = rectangular_window(shape);
        assert_eq!(apply_windows(&g, &rect, &rect).unwrap(), g);
        let zero = TfGrid::zeros(shape);
        assert_eq!(apply_windows(&g, &rect, &zero).unwrap(), zero);
        let two = TfGrid::filled(shape, Complex64::new(2.0, 0.0));
        assert_eq!(apply_windows(&g, &two, &rect).unwrap(), g.scale(2.0));
        let other = TfGrid::zeros(Shape::new(2, 4).unwrap());
        assert!(apply_windows(&g, &other, &rect).is_err());
    }

    #[test]
    fn csv_export_round_trip() {
        let geom = reference_geometry(200.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let paths = sample_paths(&geom, 0.4e-6, 5, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &paths).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("eta_re,eta_im,theta,nu\n"));
        let back = read_paths_csv(buf.as_slice()).unwrap();
        assert_eq!(back, paths.paths());
    }
}
