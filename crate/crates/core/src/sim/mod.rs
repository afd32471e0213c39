//! Monte Carlo link simulation: per-frame transmit, channel and receive, with
//! error counting per Eb/N0 point and detector iteration.
//!
//! Every frame draws from its own ChaCha stream selected by the frame index,
//! so a frame is reproducible in isolation and the worker partition cannot
//! change any count. A frame's bits, interleaver, channel and unit noise are
//! shared by all modes and Eb/N0 points.

mod config;
mod record;

pub use config::{noise_variance_from_ebn0, parse_ebn0, Mode, Modulation, SimConfig, CODE_RATE};
pub use record::{format_sig6, read_csv, to_csv_string, write_csv, write_gnuplot, BerRecord, CSV_HEADER};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{evaluate_tf_response, sample_paths_with, PathSet};
use crate::coding::{CodingChain, Interleaver};
use crate::detector::{run_detector, DetectorConfig, DetectorOutput, Domain};
use crate::error::{Error, Result};
use crate::grid::{DdGrid, Shape, TfGrid};
use crate::par::{map_merge, Execution, Merge};
use crate::transform::{Precoding, SymplecticTransform};

/// Random stream for frame `frame_index` under `master_seed`.
pub fn frame_rng(master_seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(frame_index);
    rng
}

/// A mode at a given speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scenario {
    pub mode: Mode,
    pub velocity_kmh: f64,
}

impl Scenario {
    pub fn detector(&self, cfg: &SimConfig) -> DetectorConfig {
        match self.mode {
            Mode::Ofdm => DetectorConfig {
                domain: Domain::TimeFrequency,
                precoding: Precoding::Identity,
                max_iters: 1,
                metric: cfg.pic_metric,
            },
            Mode::OtfsTf => DetectorConfig {
                domain: Domain::TimeFrequency,
                precoding: cfg.otfs_precoding,
                max_iters: cfg.max_iters,
                metric: cfg.pic_metric,
            },
            Mode::OtfsDd => DetectorConfig {
                domain: Domain::DelayDoppler,
                precoding: cfg.otfs_precoding,
                max_iters: cfg.max_iters,
                metric: cfg.pic_metric,
            },
        }
    }
}

/// Everything random about one frame.
#[derive(Clone, Debug)]
pub struct FrameInputs {
    pub info_bits: Vec<u8>,
    pub chain: CodingChain,
    /// Mapped data symbols on the DD grid.
    pub symbols: DdGrid,
    pub paths: PathSet,
    /// Effective channel on the TF grid (perfect CSI).
    pub channel: TfGrid,
    /// Unit-variance complex Gaussian noise, scaled by `sigma` per point.
    pub unit_noise: TfGrid,
}

impl FrameInputs {
    /// `y = g x + n` for the given precoding and noise variance.
    pub fn received(&self, transform: &SymplecticTransform, precoding: Precoding, sigma2: f64) -> TfGrid {
        let x = precoding.spread(transform, &self.symbols);
        let sigma = sigma2.sqrt();
        let data = x
            .as_slice()
            .iter()
            .zip(self.channel.as_slice())
            .zip(self.unit_noise.as_slice())
            .map(|((x, g), n)| g * x + n * sigma)
            .collect();
        TfGrid::new(x.shape(), data).expect("finite received samples")
    }
}

/// Error counts of one or more frames for every (Eb/N0 point, iteration).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameTally {
    points: usize,
    iterations: usize,
    pub frames: u64,
    pub bits_per_frame: u64,
    bit_errors: Vec<u64>,
    bit_errors_sq: Vec<u64>,
    frame_errors: Vec<u64>,
}

impl FrameTally {
    pub fn empty(points: usize, iterations: usize, bits_per_frame: u64) -> Self {
        Self {
            points,
            iterations,
            frames: 0,
            bits_per_frame,
            bit_errors: vec![0; points * iterations],
            bit_errors_sq: vec![0; points * iterations],
            frame_errors: vec![0; points * iterations],
        }
    }

    /// Bit errors at point index `point` and 1-based `iteration`.
    pub fn bit_errors(&self, point: usize, iteration: usize) -> u64 {
        self.bit_errors[point * self.iterations + iteration - 1]
    }

    pub fn ber(&self, point: usize, iteration: usize) -> f64 {
        let bits = self.frames * self.bits_per_frame;
        if bits == 0 {
            return 0.0;
        }
        self.bit_errors(point, iteration) as f64 / bits as f64
    }

    /// Standard error of [`FrameTally::ber`] from the spread of per-frame
    /// error counts, which accounts for errors clustering within frames.
    pub fn ber_std_error(&self, point: usize, iteration: usize) -> f64 {
        if self.frames < 2 {
            return 0.0;
        }
        let k = point * self.iterations + iteration - 1;
        let f = self.frames as f64;
        let mean = self.bit_errors[k] as f64 / f;
        let var = (self.bit_errors_sq[k] as f64 / f - mean * mean).max(0.0) * f / (f - 1.0);
        (var / f).sqrt() / self.bits_per_frame as f64
    }

    pub fn frame_errors(&self, point: usize, iteration: usize) -> u64 {
        self.frame_errors[point * self.iterations + iteration - 1]
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Adds one frame's detector result at `point`. Iterations skipped by the
    /// early stop inherit the last computed decisions.
    fn record(&mut self, point: usize, info_bits: &[u8], output: &DetectorOutput) {
        let mut last = 0;
        for it in 0..self.iterations {
            let state = output.states.get(it).unwrap_or(&output.states[output.states.len() - 1]);
            if it < output.states.len() {
                last = state
                    .info_bits
                    .iter()
                    .zip(info_bits)
                    .filter(|(a, b)| a != b)
                    .count() as u64;
            }
            self.bit_errors[point * self.iterations + it] += last;
            self.bit_errors_sq[point * self.iterations + it] += last * last;
            self.frame_errors[point * self.iterations + it] += u64::from(last > 0);
        }
    }
}

impl Merge for FrameTally {
    fn merge(mut self, other: Self) -> Self {
        assert_eq!((self.points, self.iterations), (other.points, other.iterations));
        self.frames += other.frames;
        for (a, b) in self.bit_errors.iter_mut().zip(&other.bit_errors) {
            *a += b;
        }
        for (a, b) in self.bit_errors_sq.iter_mut().zip(&other.bit_errors_sq) {
            *a += b;
        }
        for (a, b) in self.frame_errors.iter_mut().zip(&other.frame_errors) {
            *a += b;
        }
        self
    }
}

/// A validated configuration with its planned transforms.
#[derive(Clone, Debug)]
pub struct Simulator {
    cfg: SimConfig,
    shape: Shape,
    transform: SymplecticTransform,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let shape = cfg.shape()?;
        Ok(Self {
            transform: SymplecticTransform::new(shape),
            shape,
            cfg,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn transform(&self) -> &SymplecticTransform {
        &self.transform
    }

    /// Draws the bits, interleaver, channel and noise of a frame.
    pub fn frame_inputs(&self, velocity_kmh: f64, frame_index: u64) -> Result<FrameInputs> {
        let mut rng = frame_rng(self.cfg.master_seed, frame_index);
        let constellation = self.cfg.modulation.constellation();
        let coded = CodingChain::coded_bits_for(self.shape, &constellation);
        let info_len = self.cfg.info_bits_per_frame()?;
        let info_bits: Vec<u8> = (0..info_len).map(|_| u8::from(rng.random::<bool>())).collect();
        let interleaver = Interleaver::random(coded, &mut rng);
        let chain = CodingChain::new(self.shape, constellation, interleaver)?;
        let symbols = chain.transmit(&info_bits)?;
        let geom = self.cfg.geometry(velocity_kmh)?;
        let paths = sample_paths_with(&geom, self.cfg.delay_profile, self.cfg.rms_delay_spread_s, self.cfg.num_paths, &mut rng)?;
        let channel = evaluate_tf_response(&paths, self.shape);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let unit_noise = TfGrid::from_fn(self.shape, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        });
        Ok(FrameInputs {
            info_bits,
            chain,
            symbols,
            paths,
            channel,
            unit_noise,
        })
    }

    /// Simulates one frame at the given noise variances.
    pub fn run_frame_at(&self, scenario: Scenario, frame_index: u64, sigma2: &[f64]) -> Result<FrameTally> {
        let inputs = self.frame_inputs(scenario.velocity_kmh, frame_index)?;
        let det = scenario.detector(&self.cfg);
        let mut tally = FrameTally::empty(sigma2.len(), det.max_iters, inputs.info_bits.len() as u64);
        tally.frames = 1;
        for (point, &s2) in sigma2.iter().enumerate() {
            let y = inputs.received(&self.transform, det.precoding, s2);
            let out = run_detector(&self.transform, &y, &inputs.channel, s2, &det, &inputs.chain, |bits| {
                bits == inputs.info_bits.as_slice()
            })?;
            tally.record(point, &inputs.info_bits, &out);
        }
        Ok(tally)
    }

    /// Simulates one frame at every configured Eb/N0 point.
    pub fn run_frame(&self, scenario: Scenario, frame_index: u64) -> Result<FrameTally> {
        self.run_frame_at(scenario, frame_index, &self.noise_variances())
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        let bps = self.cfg.modulation.constellation().bits_per_symbol();
        self.cfg
            .ebn0_db
            .iter()
            .map(|&e| noise_variance_from_ebn0(e, CODE_RATE, bps))
            .collect()
    }

    /// Runs frames `first..first + count` of a scenario at the given Eb/N0
    /// values and merges the counts.
    pub fn run_frames(
        &self,
        scenario: Scenario,
        ebn0_db: &[f64],
        first: u64,
        count: u64,
        execution: Execution,
    ) -> Result<FrameTally> {
        let bps = self.cfg.modulation.constellation().bits_per_symbol();
        let sigma2: Vec<f64> = ebn0_db
            .iter()
            .map(|&e| noise_variance_from_ebn0(e, CODE_RATE, bps))
            .collect();
        let iterations = self.cfg.iterations_for(scenario.mode);
        let bits = self.cfg.info_bits_per_frame()? as u64;
        map_merge(
            execution,
            count,
            || FrameTally::empty(sigma2.len(), iterations, bits),
            |k| self.run_frame_at(scenario, first + k, &sigma2),
        )
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        self.cfg
            .modes
            .iter()
            .flat_map(|&mode| {
                self.cfg
                    .velocities_kmh
                    .iter()
                    .map(move |&velocity_kmh| Scenario { mode, velocity_kmh })
            })
            .collect()
    }

    /// Full sweep: one record per (mode, velocity, Eb/N0, iteration).
    pub fn sweep(&self, execution: Execution) -> Result<Vec<BerRecord>> {
        let mut records = Vec::new();
        if self.cfg.frames_per_point == 0 {
            return Ok(records);
        }
        for scenario in self.scenarios() {
            let tally = self.run_frames(scenario, &self.cfg.ebn0_db, 0, self.cfg.frames_per_point, execution)?;
            records.extend(tally_records(scenario, &self.cfg.ebn0_db, &tally));
        }
        Ok(records)
    }
}

/// Converts a tally into records in (Eb/N0, iteration) order.
pub fn tally_records(scenario: Scenario, ebn0_db: &[f64], tally: &FrameTally) -> Vec<BerRecord> {
    let mut out = Vec::with_capacity(ebn0_db.len() * tally.iterations());
    for (point, &ebn0) in ebn0_db.iter().enumerate() {
        for iteration in 1..=tally.iterations() {
            out.push(BerRecord {
                mode: scenario.mode,
                velocity_kmh: scenario.velocity_kmh,
                ebn0_db: ebn0,
                iteration,
                frames: tally.frames,
                bits_total: tally.frames * tally.bits_per_frame,
                bit_errors: tally.bit_errors(point, iteration),
                frame_errors: tally.frame_errors(point, iteration),
            });
        }
    }
    out
}

/// Validates `cfg`, runs the sweep and returns the records.
pub fn sweep(cfg: &SimConfig) -> Result<Vec<BerRecord>> {
    let sim = Simulator::new(cfg.clone())?;
    sim.sweep(Execution::with_workers(cfg.workers))
}

/// Writes records to `path` as CSV.
pub fn write_csv_file(path: &std::path::Path, records: &[BerRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}
