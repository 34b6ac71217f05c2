//! Eigenwave multiplexing: QAM symbols carried on the transmit-side
//! eigenfunctions and recovered with a matched filter on the receive side.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::qam::SymbolFrame;
use crate::chankernel::SpaceTimeSignal;
use crate::error::{Error, Result};
use crate::hogmt::EigenSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct MemFrame {
    /// Eigenfunction indices carrying symbols, largest sigma first.
    pub carrier_indices: Vec<usize>,
    /// Lowest-sigma carriers left silent.
    pub zero_padded: usize,
    pub tx_signal: SpaceTimeSignal,
}

impl MemFrame {
    pub fn throughput_bits(&self, bits_per_symbol: usize) -> usize {
        self.carrier_indices.len() * bits_per_symbol
    }
}

/// Per-carrier equalization after the matched filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equalizer {
    /// `s_n_hat / sigma_n`
    #[default]
    Zf,
    /// `sigma_n s_n_hat / (sigma_n^2 + N0)`
    Mmse,
}

/// Number of carriers suppressed for a zero-pad fraction.
pub fn zero_pad_count(zp_fraction: f64, n_carriers: usize) -> usize {
    (zp_fraction * n_carriers as f64 + 1e-9).floor() as usize
}

fn modulate(symbols: &[Complex64], eig: &EigenSystem, zero_padded: usize) -> Result<MemFrame> {
    let usable = eig.n_kept() - zero_padded;
    if symbols.len() > usable {
        return Err(Error::Capacity {
            symbols: symbols.len(),
            carriers: usable,
        });
    }
    let d = eig.dims();
    let mut tx = vec![Complex64::new(0.0, 0.0); d.tx_len()];
    for (n, s) in symbols.iter().enumerate() {
        for (acc, p) in tx.iter_mut().zip(eig.phi(n)) {
            *acc += s * p.conj();
        }
    }
    Ok(MemFrame {
        carrier_indices: (0..symbols.len()).collect(),
        zero_padded,
        tx_signal: SpaceTimeSignal::new(d.n_tx_space, d.n_tx_time, tx)?,
    })
}

/// `tx = sum_n s_n conj(phi_n)` with symbol `n` on the `n`-th strongest
/// kept eigenfunction.
pub fn mem_modulate(frame: &SymbolFrame, eig: &EigenSystem) -> Result<MemFrame> {
    modulate(&frame.symbols, eig, 0)
}

/// MEM with the `floor(zp_fraction * n_kept)` weakest carriers silenced.
pub fn zp_mem(frame: &SymbolFrame, eig: &EigenSystem, zp_fraction: f64) -> Result<MemFrame> {
    if !(0.0..1.0).contains(&zp_fraction) {
        return Err(Error::Config(format!(
            "zp_fraction must lie in [0, 1), got {zp_fraction}"
        )));
    }
    modulate(&frame.symbols, eig, zero_pad_count(zp_fraction, eig.n_kept()))
}

/// Matched-filter outputs `s_n_hat = <r, psi_n> = sigma_n s_n + v_n`.
pub fn mem_demodulate(
    r: &SpaceTimeSignal,
    eig: &EigenSystem,
    carriers: &[usize],
) -> Result<Vec<Complex64>> {
    let d = eig.dims();
    if r.n_space() != d.n_rx_space || r.n_time() != d.n_rx_time {
        return Err(Error::Dimension(format!(
            "received signal is {}x{}, receive grid is {}x{}",
            r.n_space(),
            r.n_time(),
            d.n_rx_space,
            d.n_rx_time
        )));
    }
    let data = r.as_slice();
    carriers
        .iter()
        .map(|&n| {
            if n >= eig.n_kept() {
                return Err(Error::CarrierIndex {
                    index: n,
                    n_kept: eig.n_kept(),
                });
            }
            Ok(eig.psi(n).iter().zip(data).map(|(p, x)| p.conj() * x).sum())
        })
        .collect()
}

/// Scales matched-filter outputs back to symbol estimates.
pub fn equalize(
    matched: &[Complex64],
    eig: &EigenSystem,
    carriers: &[usize],
    equalizer: Equalizer,
    noise_variance: f64,
) -> Vec<Complex64> {
    matched
        .iter()
        .zip(carriers)
        .map(|(y, &n)| {
            let sigma = eig.sigma(n);
            match equalizer {
                Equalizer::Zf => y / sigma,
                Equalizer::Mmse => y * (sigma / (sigma * sigma + noise_variance)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chankernel::{apply_kernel, complex_gaussian, ChannelKernel, KernelDims};
    use crate::hogmt::{decompose, Truncation};
    use crate::modem::qam::{qam_map, random_bits, Constellation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(dims: KernelDims, seed: u64) -> ChannelKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.len()).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        ChannelKernel::new(dims, 1.0, data).unwrap()
    }

    fn frame(n: usize, seed: u64) -> SymbolFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        qam_map(&random_bits(&mut rng, 4 * n), Constellation::Qam16).unwrap()
    }

    #[test]
    fn identity_kernel_places_symbols_on_basis() {
        let k = ChannelKernel::identity(1, 4, 1.0).unwrap();
        let eig = decompose(&k, Truncation::full()).unwrap();
        let f = frame(4, 1);
        let m = mem_modulate(&f, &eig).unwrap();
        // Same energy and the receiver recovers the symbols exactly.
        assert!((m.tx_signal.energy() - f.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>()).abs() < 1e-12);
        let r = apply_kernel(&k, &m.tx_signal, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let y = mem_demodulate(&r, &eig, &m.carrier_indices).unwrap();
        for (a, b) in y.iter().zip(&f.symbols) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_symbol_arrives_scaled_on_psi() {
        let k = random_kernel(KernelDims::new(2, 3, 2, 4), 5);
        let eig = decompose(&k, Truncation::full()).unwrap();
        let s = Complex64::new(0.3, -0.7);
        let mut f = frame(1, 2);
        f.symbols = vec![s];
        let m = mem_modulate(&f, &eig).unwrap();
        let r = apply_kernel(&k, &m.tx_signal, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (got, psi) in r.as_slice().iter().zip(eig.psi(0)) {
            assert!((got - psi * s * eig.sigma(0)).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_demod_is_sigma_times_symbol() {
        let k = random_kernel(KernelDims::new(2, 4, 3, 4), 6);
        let eig = decompose(&k, Truncation::full()).unwrap();
        let f = frame(eig.n_kept(), 3);
        let m = mem_modulate(&f, &eig).unwrap();
        let r = apply_kernel(&k, &m.tx_signal, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let y = mem_demodulate(&r, &eig, &m.carrier_indices).unwrap();
        for (n, (yn, sn)) in y.iter().zip(&f.symbols).enumerate() {
            assert!((yn - eig.sigma(n) * sn).norm() < 1e-10);
        }
        let eq = equalize(&y, &eig, &m.carrier_indices, Equalizer::Zf, 0.0);
        for (a, b) in eq.iter().zip(&f.symbols) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn carriers_do_not_leak() {
        let k = random_kernel(KernelDims::new(2, 3, 2, 3), 7);
        let eig = decompose(&k, Truncation::full()).unwrap();
        for m in 0..eig.n_kept() {
            let mut f = frame(eig.n_kept(), 4);
            for (i, s) in f.symbols.iter_mut().enumerate() {
                if i != m {
                    *s = Complex64::new(0.0, 0.0);
                }
            }
            let tx = mem_modulate(&f, &eig).unwrap();
            let r = apply_kernel(&k, &tx.tx_signal, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let y = mem_demodulate(&r, &eig, &tx.carrier_indices).unwrap();
            for (n, yn) in y.iter().enumerate() {
                if n != m {
                    assert!(yn.norm_sqr() < 1e-20, "{m}->{n}: {}", yn.norm_sqr());
                }
            }
        }
    }

    #[test]
    fn noise_stays_white_after_matched_filter() {
        let k = random_kernel(KernelDims::new(2, 4, 2, 4), 8);
        let eig = decompose(&k, Truncation::full()).unwrap();
        let carriers: Vec<usize> = (0..eig.n_kept()).collect();
        let n0 = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 4000;
        let mut power = vec![0.0; carriers.len()];
        let mut cross = Complex64::new(0.0, 0.0);
        for _ in 0..trials {
            let zero = SpaceTimeSignal::zeros(2, 4);
            let r = apply_kernel(&k, &zero, n0, &mut rng).unwrap();
            let y = mem_demodulate(&r, &eig, &carriers).unwrap();
            for (p, yn) in power.iter_mut().zip(&y) {
                *p += yn.norm_sqr();
            }
            cross += y[0] * y[1].conj();
        }
        // Each |v_n|^2 is exponential with mean N0, standard error N0/sqrt(trials).
        let se = n0 / (trials as f64).sqrt();
        for p in power {
            assert!((p / trials as f64 - n0).abs() < 4.0 * se);
        }
        assert!((cross / trials as f64).norm() < 4.0 * se);
    }

    #[test]
    fn zero_padding_silences_weakest_carriers() {
        let k = random_kernel(KernelDims::new(1, 8, 1, 8), 10);
        let eig = decompose(&k, Truncation::full()).unwrap();
        let f = frame(7, 5);
        let z = zp_mem(&f, &eig, 0.125).unwrap();
        assert_eq!(z.zero_padded, 1);
        assert_eq!(z.carrier_indices, (0..7).collect::<Vec<_>>());
        assert!(zp_mem(&frame(8, 5), &eig, 0.125).is_err());
        let plain = mem_modulate(&f, &eig).unwrap();
        let z0 = zp_mem(&f, &eig, 0.0).unwrap();
        assert_eq!(plain, z0);
        assert_eq!(zero_pad_count(0.125, 64), 8);
        assert!(zp_mem(&f, &eig, 1.0).is_err());
    }

    #[test]
    fn capacity_and_index_errors() {
        let k = random_kernel(KernelDims::new(1, 4, 1, 4), 11);
        let eig = decompose(&k, Truncation::Count(0.5)).unwrap();
        assert!(matches!(
            mem_modulate(&frame(3, 1), &eig),
            Err(Error::Capacity { symbols: 3, carriers: 2 })
        ));
        let r = SpaceTimeSignal::zeros(1, 4);
        assert!(matches!(
            mem_demodulate(&r, &eig, &[2]),
            Err(Error::CarrierIndex { index: 2, n_kept: 2 })
        ));
    }
}
