//! Fast runtime checks of the core invariants, used by the `selftest`
//! subcommand.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{evaluate_tf_response, sample_paths};
use crate::coding::{bcjr_decode, conv_encode, CodeConfig, CodingChain, Constellation, Interleaver};
use crate::detector::{run_detector, DetectorConfig, Domain, PicMetric};
use crate::grid::{inner, DdGrid, Shape};
use crate::sim::SimConfig;
use crate::transform::{build_dd_channel_operator, build_spreading_matrix, DenseMatrix, Precoding, SymplecticTransform};

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: value.is_finite() && value <= tol,
        detail: format!("{value:.3e} (tol {tol:.0e})"),
    }
}

fn random_dd(shape: Shape, rng: &mut ChaCha8Rng) -> DdGrid {
    DdGrid::from_fn(shape, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Runs every check and returns the results in a fixed order.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let shape = Shape::new(8, 16).expect("nonzero");
    let t = SymplecticTransform::new(shape);
    let a = random_dd(shape, &mut rng);
    let b = random_dd(shape, &mut rng);
    let round_trip = t.idsft(&t.dsft(&a)).max_abs_diff(&a);
    out.push(check("dsft_round_trip", round_trip, 1e-12));
    let ip = (inner(t.spread(&a).as_slice(), t.spread(&b).as_slice()) - inner(a.as_slice(), b.as_slice())).norm();
    out.push(check("spread_preserves_inner_product", ip, 1e-10));

    let small = Shape::new(4, 6).expect("nonzero");
    let ts = SymplecticTransform::new(small);
    let s = build_spreading_matrix(&ts).expect("small grid");
    let unitarity = s.adjoint_mul(&s).max_abs_diff(&DenseMatrix::identity(small.len()));
    out.push(check("spreading_matrix_unitary", unitarity, 1e-12));

    let cfg = SimConfig {
        subcarriers: 6,
        symbols: 4,
        cp_len: 2,
        bandwidth_hz: 1e6,
        velocities_kmh: vec![200.0],
        ..SimConfig::default()
    };
    let geom = cfg.geometry(200.0).expect("valid geometry");
    let paths = sample_paths(&geom, 0.4e-6, 10, &mut rng).expect("valid paths");
    let g = evaluate_tf_response(&paths, small);
    let op = build_dd_channel_operator(&ts, &g).expect("small grid");
    let diag = DenseMatrix::from_columns(
        small.len(),
        &(0..small.len())
            .map(|k| {
                let mut col = vec![Complex64::new(0.0, 0.0); small.len()];
                col[k] = g.as_slice()[k];
                col
            })
            .collect::<Vec<_>>(),
    );
    let via_tf = s.adjoint_mul(&DenseMatrix::from_columns(
        small.len(),
        &(0..small.len()).map(|k| diag.mul_vec(&s.column(k))).collect::<Vec<_>>(),
    ));
    out.push(check("dd_operator_matches_tf_path", op.matrix().max_abs_diff(&via_tf), 1e-10));

    let code = CodeConfig::default();
    let bits: Vec<u8> = (0..64).map(|_| u8::from(rng.random::<bool>())).collect();
    let coded = conv_encode(&bits, &code).expect("nonempty");
    let llrs: Vec<f64> = coded.iter().map(|&c| if c == 0 { 8.0 } else { -8.0 }).collect();
    let decoded = bcjr_decode(&llrs, &code).expect("valid length").info_bits();
    let bit_errors = decoded.iter().zip(&bits).filter(|(x, y)| x != y).count();
    out.push(check("bcjr_noiseless_round_trip", bit_errors as f64, 0.0));

    let constellation = Constellation::qpsk();
    let coded_len = CodingChain::coded_bits_for(small, &constellation);
    let chain = CodingChain::new(small, constellation, Interleaver::random(coded_len, &mut rng)).expect("valid chain");
    let info: Vec<u8> = (0..chain.info_len()).map(|_| u8::from(rng.random::<bool>())).collect();
    let d = chain.transmit(&info).expect("sized input");
    let mut worst = 0usize;
    for domain in [Domain::TimeFrequency, Domain::DelayDoppler] {
        let det = DetectorConfig {
            domain,
            precoding: Precoding::Symplectic,
            max_iters: 4,
            metric: PicMetric::InterferenceAware,
        };
        let y = g.hadamard(&ts.spread(&d)).expect("same shape");
        let result = run_detector(&ts, &y, &g, 0.0, &det, &chain, |_| false).expect("valid input");
        let errs = result.info_bits().iter().zip(&info).filter(|(x, y)| x != y).count();
        worst = worst.max(errs);
    }
    out.push(check("noiseless_detector_round_trip", worst as f64, 0.0));
    out
}
