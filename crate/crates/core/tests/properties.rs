use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otfs_sim::coding::{CodingChain, Constellation, Interleaver};
use otfs_sim::detector::{mmse_equalize, run_detector, DetectorConfig, Domain, PicMetric};
use otfs_sim::grid::{Shape, TfGrid};
use otfs_sim::sim::format_sig6;
use otfs_sim::transform::{Precoding, SymplecticTransform};

fn random_tf(shape: Shape, rng: &mut ChaCha8Rng) -> TfGrid {
    TfGrid::from_fn(shape, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interleaver_round_trip(len in 1usize..500, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let il = Interleaver::random(len, &mut rng);
        let x: Vec<u32> = (0..len as u32).collect();
        let y = il.interleave(&x).unwrap();
        prop_assert_eq!(il.deinterleave(&y).unwrap(), x);
    }

    #[test]
    fn noiseless_chain_round_trip(m in 1usize..6, n in 2usize..8, seed: u64) {
        let shape = Shape::new(m, 2 * n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let constellation = Constellation::qpsk();
        let coded = CodingChain::coded_bits_for(shape, &constellation);
        let chain = CodingChain::new(shape, constellation.clone(), Interleaver::random(coded, &mut rng)).unwrap();
        let info: Vec<u8> = (0..chain.info_len()).map(|_| u8::from(rng.random::<bool>())).collect();
        let symbols = chain.transmit(&info).unwrap();
        let llrs = otfs_sim::coding::hard_llrs(&constellation, symbols.as_slice(), 10.0);
        prop_assert_eq!(chain.receive(&llrs).unwrap().info_bits, info);
    }

    #[test]
    fn mmse_shrinks_towards_zero_forcing(seed: u64, sigma2 in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::new(3, 4).unwrap();
        let y = random_tf(shape, &mut rng);
        let g = random_tf(shape, &mut rng);
        let x = mmse_equalize(&y, &g, sigma2).unwrap();
        for k in 0..shape.len() {
            let zf = y.as_slice()[k].norm() / g.as_slice()[k].norm();
            prop_assert!(x.as_slice()[k].norm() <= zf * (1.0 + 1e-12));
        }
    }

    #[test]
    fn tf_and_dd_detectors_agree(seed: u64, sigma2 in 0.05f64..1.0, aware: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::new(4, 6).unwrap();
        let t = SymplecticTransform::new(shape);
        let constellation = Constellation::qpsk();
        let coded = CodingChain::coded_bits_for(shape, &constellation);
        let chain = CodingChain::new(shape, constellation, Interleaver::random(coded, &mut rng)).unwrap();
        let info: Vec<u8> = (0..chain.info_len()).map(|_| u8::from(rng.random::<bool>())).collect();
        let g = random_tf(shape, &mut rng);
        let noise = random_tf(shape, &mut rng);
        let x = t.spread(&chain.transmit(&info).unwrap());
        let y = TfGrid::from_fn(shape, |m, q| g[(m, q)] * x[(m, q)] + noise[(m, q)] * sigma2.sqrt());
        let metric = if aware { PicMetric::InterferenceAware } else { PicMetric::Awgn };
        let run = |domain| {
            let cfg = DetectorConfig { domain, precoding: Precoding::Symplectic, max_iters: 4, metric };
            run_detector(&t, &y, &g, sigma2, &cfg, &chain, |_| false).unwrap()
        };
        let (tf, dd) = (run(Domain::TimeFrequency), run(Domain::DelayDoppler));
        for (a, b) in tf.states.iter().zip(&dd.states) {
            prop_assert_eq!(&a.symbols, &b.symbols);
            for (x, y) in a.llrs.iter().zip(&b.llrs) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sig6_keeps_six_digits(x in -1e9f64..1e9, scale in -12i32..12) {
        let v = x * 10f64.powi(scale);
        let text = format_sig6(v);
        let back: f64 = text.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-6 * v.abs() + f64::MIN_POSITIVE, "{} -> {}", v, text);
    }
}
