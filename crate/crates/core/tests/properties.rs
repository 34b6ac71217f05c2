use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hogmt::chankernel::{apply_noiseless, complex_gaussian};
use hogmt::io;
use hogmt::modem::{qam_demap, qam_map, zero_pad_count, Constellation};
use hogmt::{decompose, unfold, ChannelKernel, KernelDims, SpaceTimeSignal, Truncation};

fn kernel(seed: u64, dims: KernelDims) -> ChannelKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.len()).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
    ChannelKernel::new(dims, 1.0, data).unwrap()
}

fn signal(seed: u64, n_space: usize, n_time: usize) -> SpaceTimeSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n_space * n_time).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
    SpaceTimeSignal::new(n_space, n_time, data).unwrap()
}

fn dims() -> impl Strategy<Value = KernelDims> {
    (1usize..4, 1usize..8, 1usize..4, 1usize..8).prop_map(|(a, b, c, d)| KernelDims::new(a, b, c, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn channel_is_linear(d in dims(), seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let k = kernel(seed, d);
        let x = signal(seed ^ 1, d.n_tx_space, d.n_tx_time);
        let y = signal(seed ^ 2, d.n_tx_space, d.n_tx_time);
        let (ca, cb) = (Complex64::new(a, 0.5), Complex64::new(0.0, b));
        let mix: Vec<Complex64> = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| ca * p + cb * q).collect();
        let lhs = apply_noiseless(&k, &SpaceTimeSignal::new(d.n_tx_space, d.n_tx_time, mix).unwrap()).unwrap();
        let kx = apply_noiseless(&k, &x).unwrap();
        let ky = apply_noiseless(&k, &y).unwrap();
        let rhs: Vec<Complex64> = kx.as_slice().iter().zip(ky.as_slice()).map(|(p, q)| ca * p + cb * q).collect();
        let rhs = SpaceTimeSignal::new(d.n_rx_space, d.n_rx_time, rhs).unwrap();
        prop_assert!(lhs.distance_sq(&rhs) <= 1e-20 * (1.0 + rhs.energy()));
    }

    #[test]
    fn full_decomposition_reconstructs(d in dims(), seed in any::<u64>()) {
        let k = kernel(seed, d);
        let eig = decompose(&k, Truncation::full()).unwrap();
        let m = unfold(&k);
        prop_assert!((eig.reconstruct() - &m).norm() <= 1e-11 * m.norm());
        prop_assert!(eig.sigmas().windows(2).all(|w| w[0] >= w[1]));
        let energy: f64 = eig.sigmas().iter().map(|s| s * s).sum();
        prop_assert!((energy - m.norm_squared()).abs() <= 1e-10 * m.norm_squared());
    }

    #[test]
    fn truncation_is_monotone(d in dims(), seed in any::<u64>(), f in 0.01f64..1.0, g in 0.01f64..1.0) {
        let full = decompose(&kernel(seed, d), Truncation::full()).unwrap();
        let (lo, hi) = if f <= g { (f, g) } else { (g, f) };
        for make in [Truncation::Count as fn(f64) -> Truncation, Truncation::Energy] {
            let a = full.truncated(make(lo)).unwrap();
            let b = full.truncated(make(hi)).unwrap();
            prop_assert!(a.n_kept() <= b.n_kept());
            prop_assert!(a.dropped_energy() >= b.dropped_energy());
            prop_assert!(a.n_kept() >= 1);
        }
    }

    #[test]
    fn qam_round_trips(bits in proptest::collection::vec(0u8..2, 0..60), which in 0usize..3) {
        let c = [Constellation::Qpsk, Constellation::Qam16, Constellation::Qam64][which];
        let k = c.bits_per_symbol();
        let bits = &bits[..bits.len() / k * k];
        let f = qam_map(bits, c).unwrap();
        prop_assert_eq!(qam_demap(&f.symbols, c), bits.to_vec());
    }

    #[test]
    fn zero_pad_keeps_at_least_one(n in 1usize..500, zp in 0.0f64..0.999) {
        let z = zero_pad_count(zp, n);
        prop_assert!(z <= n);
        prop_assert!(z as f64 <= zp * n as f64 + 1e-6);
    }

    #[test]
    fn kernel_files_round_trip(d in dims(), seed in any::<u64>()) {
        let k = kernel(seed, d);
        let bytes = io::kernel_to_bytes(&k).unwrap();
        let back = io::kernel_from_bytes(&bytes).unwrap();
        prop_assert_eq!(io::kernel_to_bytes(&back).unwrap(), bytes);
    }
}
