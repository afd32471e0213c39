use std::fmt;
use std::str::FromStr;

use crate::channel::{kmh_to_mps, DelayProfile, SystemGeometry};
use crate::coding::{CodeConfig, CodingChain, Constellation};
use crate::error::{Error, Result};
use crate::detector::PicMetric;
use crate::grid::Shape;
use crate::transform::Precoding;

/// Code rate used for the Eb/N0 mapping.
pub const CODE_RATE: f64 = 0.5;

/// Receiver variant under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// OTFS with PIC in the time-frequency domain.
    OtfsTf,
    /// OTFS with PIC in the delay-Doppler domain.
    OtfsDd,
    /// Unprecoded OFDM with one-shot MMSE.
    Ofdm,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::OtfsTf => "otfs-tf",
            Mode::OtfsDd => "otfs-dd",
            Mode::Ofdm => "ofdm",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "otfs-tf" => Ok(Mode::OtfsTf),
            "otfs-dd" => Ok(Mode::OtfsDd),
            "ofdm" => Ok(Mode::Ofdm),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected otfs-tf, otfs-dd or ofdm)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn constellation(&self) -> Constellation {
        match self {
            Modulation::Bpsk => Constellation::bpsk(),
            Modulation::Qpsk => Constellation::qpsk(),
            Modulation::Qam16 => Constellation::qam16(),
        }
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" => Ok(Modulation::Qam16),
            other => Err(Error::Config(format!("unknown modulation '{other}'"))),
        }
    }
}

/// System and Monte Carlo parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Subcarriers `N`.
    pub subcarriers: usize,
    /// OFDM symbols per frame `M`.
    pub symbols: usize,
    /// Cyclic prefix `G` in chips.
    pub cp_len: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub velocities_kmh: Vec<f64>,
    pub rms_delay_spread_s: f64,
    pub num_paths: usize,
    pub ebn0_db: Vec<f64>,
    pub frames_per_point: u64,
    /// Detector iterations `I` for the OTFS modes.
    pub max_iters: usize,
    pub modes: Vec<Mode>,
    pub master_seed: u64,
    pub workers: Option<usize>,
    pub modulation: Modulation,
    /// Precoding used by the OTFS modes; `Identity` turns them into OFDM
    /// with the iterative receiver.
    pub otfs_precoding: Precoding,
    pub delay_profile: DelayProfile,
    pub pic_metric: PicMetric,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            subcarriers: 64,
            symbols: 36,
            cp_len: 16,
            bandwidth_hz: 10e6,
            carrier_hz: 5.9e9,
            velocities_kmh: vec![0.0, 200.0],
            rms_delay_spread_s: 0.4e-6,
            num_paths: 60,
            ebn0_db: (0..=14).map(f64::from).collect(),
            frames_per_point: 100,
            max_iters: 6,
            modes: vec![Mode::OtfsTf],
            master_seed: 1,
            workers: None,
            modulation: Modulation::Qpsk,
            otfs_precoding: Precoding::Symplectic,
            delay_profile: DelayProfile::default(),
            pic_metric: PicMetric::default(),
        }
    }
}

impl SimConfig {
    pub fn shape(&self) -> Result<Shape> {
        Shape::new(self.symbols, self.subcarriers).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn geometry(&self, velocity_kmh: f64) -> Result<SystemGeometry> {
        SystemGeometry::new(
            self.subcarriers,
            self.symbols,
            self.cp_len,
            self.bandwidth_hz,
            self.carrier_hz,
            kmh_to_mps(velocity_kmh),
        )
    }

    /// Iterations recorded for `mode`.
    pub fn iterations_for(&self, mode: Mode) -> usize {
        match mode {
            Mode::Ofdm => 1,
            Mode::OtfsTf | Mode::OtfsDd => self.max_iters,
        }
    }

    /// Information bits per frame.
    pub fn info_bits_per_frame(&self) -> Result<usize> {
        let coded = CodingChain::coded_bits_for(self.shape()?, &self.modulation.constellation());
        CodeConfig::default().info_len(coded).ok_or_else(|| {
            Error::Config(format!(
                "{coded} coded bits per frame cannot carry a terminated rate-1/2 codeword"
            ))
        })
    }

    /// Checks every parameter, including the CP and Doppler conditions for
    /// each velocity.
    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        if self.velocities_kmh.is_empty() {
            return Err(Error::Config("at least one velocity is required".into()));
        }
        for &v in &self.velocities_kmh {
            self.geometry(v)?;
        }
        let max_rms = self.cp_len as f64 / self.bandwidth_hz;
        if !(self.rms_delay_spread_s > 0.0 && self.rms_delay_spread_s * self.bandwidth_hz <= self.cp_len as f64) {
            return Err(Error::Config(format!(
                "CP constraint violated: RMS delay spread {:e} s must lie in (0, G T_C = {max_rms:e} s]",
                self.rms_delay_spread_s
            )));
        }
        if self.delay_profile == DelayProfile::EqualPower {
            crate::channel::delay_scale_for_rms(self.rms_delay_spread_s, max_rms)?;
        }
        if self.num_paths == 0 {
            return Err(Error::Config("num_paths must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        if let Some(x) = self.ebn0_db.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("Eb/N0 value {x} is not finite")));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        self.info_bits_per_frame()?;
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim().trim_matches('"');
        let bad = |what: &str| Error::Config(format!("invalid value '{value}' for {what}"));
        match key.trim() {
            "subcarriers" | "n" => self.subcarriers = value.parse().map_err(|_| bad("subcarriers"))?,
            "symbols" | "m" => self.symbols = value.parse().map_err(|_| bad("symbols"))?,
            "cp_len" | "g" => self.cp_len = value.parse().map_err(|_| bad("cp_len"))?,
            "bandwidth_hz" => self.bandwidth_hz = value.parse().map_err(|_| bad("bandwidth_hz"))?,
            "carrier_hz" => self.carrier_hz = value.parse().map_err(|_| bad("carrier_hz"))?,
            "velocity" | "velocity_kmh" | "velocities_kmh" => {
                self.velocities_kmh = parse_list(value).map_err(|_| bad("velocity"))?
            }
            "rms_delay_spread_s" => {
                self.rms_delay_spread_s = value.parse().map_err(|_| bad("rms_delay_spread_s"))?
            }
            "num_paths" => self.num_paths = value.parse().map_err(|_| bad("num_paths"))?,
            "ebn0" | "ebn0_db" => self.ebn0_db = parse_ebn0(value)?,
            "frames" | "frames_per_point" => {
                self.frames_per_point = value.parse().map_err(|_| bad("frames"))?
            }
            "iters" | "max_iters" => self.max_iters = value.parse().map_err(|_| bad("iters"))?,
            "mode" | "modes" => {
                self.modes = value
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<Vec<Mode>>>()?
            }
            "seed" | "master_seed" => self.master_seed = value.parse().map_err(|_| bad("seed"))?,
            "workers" => self.workers = Some(value.parse().map_err(|_| bad("workers"))?),
            "modulation" => self.modulation = value.parse()?,
            "precoding" => {
                self.otfs_precoding = match value {
                    "symplectic" => Precoding::Symplectic,
                    "identity" => Precoding::Identity,
                    _ => return Err(bad("precoding")),
                }
            }
            "delay_profile" => self.delay_profile = value.parse()?,
            "pic_metric" => self.pic_metric = value.parse()?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with('[') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got '{line}'", lineno + 1))
            })?;
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, std::num::ParseFloatError> {
    value
        .trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(|s| s.trim().parse())
        .collect()
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_ebn0(value: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid Eb/N0 specification '{value}'"));
    let parts: Vec<&str> = value.split(':').collect();
    match parts.as_slice() {
        [start, step, stop] => {
            let start: f64 = start.trim().parse().map_err(|_| bad())?;
            let step: f64 = step.trim().parse().map_err(|_| bad())?;
            let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
            if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count)
                .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                .collect())
        }
        [_] => parse_list(value).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

/// Noise variance for unit-energy symbols over a unit-power channel:
/// `sigma^2 = 1 / (R * bits_per_symbol * 10^(Eb/N0 / 10))`.
pub fn noise_variance_from_ebn0(ebn0_db: f64, code_rate: f64, bits_per_symbol: usize) -> f64 {
    1.0 / (code_rate * bits_per_symbol as f64 * 10f64.powf(ebn0_db / 10.0))
}
