//! Single-link OFDM and OTFS reference modems running over a kernel.
//!
//! Both occupy the receive window with `T` data-bearing samples and put a
//! single cyclic prefix of `T' - T` samples in the transmit lead. OFDM uses
//! one `T`-point symbol; OTFS splits the window into `N` blocks of `M = T / N`
//! samples with a rectangular pulse and no per-block prefix. Equalization is
//! one tap per subcarrier (OFDM) or per time-frequency bin (OTFS), from the
//! impulse response at the middle of the symbol or block.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use super::qam::{count_bit_errors, qam_demap, SymbolFrame};
use crate::chankernel::{apply_kernel, ChannelKernel, KernelDims, SpaceTimeSignal};
use crate::error::{Error, Result};

/// Bit error tally of one or more frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BitErrors {
    pub bits: u64,
    pub bit_errors: u64,
}

impl BitErrors {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }
}

pub(crate) fn check_grid(dims: KernelDims, n_blocks: usize) -> Result<()> {
    if dims.n_rx_space != 1 || dims.n_tx_space != 1 {
        return Err(Error::Config(format!(
            "OFDM/OTFS baselines need a single link, got {}x{} antennas",
            dims.n_rx_space, dims.n_tx_space
        )));
    }
    let t = dims.n_rx_time;
    if !t.is_power_of_two() {
        return Err(Error::Config(format!("receive window T = {t} is not a power of two")));
    }
    if dims.n_tx_time < t || dims.tx_lead() > t {
        return Err(Error::Config(format!(
            "transmit grid T' = {} must satisfy T <= T' <= 2T for T = {t}",
            dims.n_tx_time
        )));
    }
    if n_blocks == 0 || !n_blocks.is_power_of_two() || n_blocks > t {
        return Err(Error::Config(format!(
            "{n_blocks} Doppler bins do not divide T = {t} into power-of-two blocks"
        )));
    }
    Ok(())
}

struct Transforms {
    planner: FftPlanner<f64>,
}

impl Transforms {
    fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }

    fn plan(&mut self, n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        if inverse {
            self.planner.plan_fft_inverse(n)
        } else {
            self.planner.plan_fft_forward(n)
        }
    }

    /// Unitary DFT (`inverse = false`: kernel `exp(-j 2 pi k n / N)`).
    fn dft(&mut self, buf: &mut [Complex64], inverse: bool) {
        let n = buf.len();
        self.plan(n, inverse).process(buf);
        let s = 1.0 / (n as f64).sqrt();
        for z in buf.iter_mut() {
            *z *= s;
        }
    }

    /// Unitary DFT along the first axis of a row-major `rows x cols` grid.
    fn dft_columns(&mut self, grid: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
        let mut col = vec![Complex64::new(0.0, 0.0); rows];
        for c in 0..cols {
            for r in 0..rows {
                col[r] = grid[r * cols + c];
            }
            self.dft(&mut col, inverse);
            for r in 0..rows {
                grid[r * cols + c] = col[r];
            }
        }
    }
}

/// Places a `T`-sample frame on the transmit grid with a cyclic prefix
/// filling the lead.
fn with_prefix(frame: &[Complex64], dims: KernelDims) -> Result<SpaceTimeSignal> {
    let t = frame.len();
    let lead = dims.tx_lead();
    let data = (0..dims.n_tx_time)
        .map(|j| if j >= lead { frame[j - lead] } else { frame[t - lead + j] })
        .collect();
    SpaceTimeSignal::new(1, dims.n_tx_time, data)
}

/// One-tap frequency response of the link at receive time `t` on an
/// `n`-point grid, folding taps longer than `n`.
fn frequency_response(kernel: &ChannelKernel, t: usize, n: usize, fft: &mut Transforms) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for tau in 0..kernel.dims().n_tx_time {
        h[tau % n] += kernel.impulse_response(0, 0, t, tau);
    }
    fft.plan(n, false).process(&mut h);
    h
}

fn check_symbols(symbols: &[Complex64], dims: KernelDims) -> Result<()> {
    if symbols.len() != dims.n_rx_time {
        return Err(Error::Dimension(format!(
            "{} symbols for a {}-sample frame",
            symbols.len(),
            dims.n_rx_time
        )));
    }
    Ok(())
}

fn check_received(r: &SpaceTimeSignal, dims: KernelDims) -> Result<()> {
    if r.n_space() != 1 || r.n_time() != dims.n_rx_time {
        return Err(Error::Dimension(format!(
            "received signal is {}x{}, expected 1x{}",
            r.n_space(),
            r.n_time(),
            dims.n_rx_time
        )));
    }
    Ok(())
}

pub fn ofdm_transmit(symbols: &[Complex64], dims: KernelDims) -> Result<SpaceTimeSignal> {
    check_grid(dims, 1)?;
    check_symbols(symbols, dims)?;
    let mut x = symbols.to_vec();
    Transforms::new().dft(&mut x, true);
    with_prefix(&x, dims)
}

/// Subcarrier estimates after one-tap zero-forcing with the response known
/// from `csi`.
pub fn ofdm_receive(r: &SpaceTimeSignal, csi: &ChannelKernel) -> Result<Vec<Complex64>> {
    let dims = csi.dims();
    check_grid(dims, 1)?;
    check_received(r, dims)?;
    let t = dims.n_rx_time;
    let mut fft = Transforms::new();
    let mut y = r.as_slice().to_vec();
    fft.dft(&mut y, false);
    let h = frequency_response(csi, t / 2, t, &mut fft);
    Ok(y.iter().zip(&h).map(|(y, h)| one_tap(*y, *h)).collect())
}

fn one_tap(y: Complex64, h: Complex64) -> Complex64 {
    if h.norm_sqr() > 0.0 {
        y / h
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Delay-Doppler symbols `x[k * M + l]` (Doppler `k < N`, delay `l < M`) to a
/// transmit signal.
pub fn otfs_transmit(symbols: &[Complex64], dims: KernelDims, n_doppler: usize) -> Result<SpaceTimeSignal> {
    check_grid(dims, n_doppler)?;
    check_symbols(symbols, dims)?;
    let n = n_doppler;
    let m = dims.n_rx_time / n;
    let mut fft = Transforms::new();
    // ISFFT: inverse DFT over Doppler, forward DFT over delay.
    let mut grid = symbols.to_vec();
    fft.dft_columns(&mut grid, n, m, true);
    for row in grid.chunks_mut(m) {
        fft.dft(row, false);
    }
    // Heisenberg transform with a rectangular pulse: one IDFT per block.
    for row in grid.chunks_mut(m) {
        fft.dft(row, true);
    }
    with_prefix(&grid, dims)
}

/// Delay-Doppler estimates after time-frequency single-tap equalization.
pub fn otfs_receive(r: &SpaceTimeSignal, csi: &ChannelKernel, n_doppler: usize) -> Result<Vec<Complex64>> {
    let dims = csi.dims();
    check_grid(dims, n_doppler)?;
    check_received(r, dims)?;
    let n = n_doppler;
    let m = dims.n_rx_time / n;
    let mut fft = Transforms::new();
    let mut grid = r.as_slice().to_vec();
    for (block, row) in grid.chunks_mut(m).enumerate() {
        fft.dft(row, false);
        let h = frequency_response(csi, block * m + m / 2, m, &mut fft);
        for (y, h) in row.iter_mut().zip(&h) {
            *y = one_tap(*y, *h);
        }
    }
    // SFFT: forward DFT over time blocks, inverse DFT over subcarriers.
    fft.dft_columns(&mut grid, n, m, false);
    for row in grid.chunks_mut(m) {
        fft.dft(row, true);
    }
    Ok(grid)
}

fn tally(frame: &SymbolFrame, estimates: &[Complex64]) -> BitErrors {
    let bits = qam_demap(estimates, frame.constellation);
    BitErrors {
        bits: frame.bits.len() as u64,
        bit_errors: count_bit_errors(&bits, &frame.bits),
    }
}

/// One CP-OFDM frame through `kernel` with noise of the given variance.
pub fn ofdm_baseline<R: Rng + ?Sized>(
    frame: &SymbolFrame,
    kernel: &ChannelKernel,
    noise_variance: f64,
    rng: &mut R,
) -> Result<BitErrors> {
    let tx = ofdm_transmit(&frame.symbols, kernel.dims())?;
    let r = apply_kernel(kernel, &tx, noise_variance, rng)?;
    Ok(tally(frame, &ofdm_receive(&r, kernel)?))
}

/// One OTFS frame with the time-frequency single-tap detector.
pub fn otfs_tfst_baseline<R: Rng + ?Sized>(
    frame: &SymbolFrame,
    kernel: &ChannelKernel,
    n_doppler: usize,
    noise_variance: f64,
    rng: &mut R,
) -> Result<BitErrors> {
    let tx = otfs_transmit(&frame.symbols, kernel.dims(), n_doppler)?;
    let r = apply_kernel(kernel, &tx, noise_variance, rng)?;
    Ok(tally(frame, &otfs_receive(&r, kernel, n_doppler)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chankernel::{kernel_from_impulse_response, ImpulseResponse};
    use crate::modem::qam::{awgn_ber, qam_map, random_bits, Constellation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone(cycles_per_sample: f64, t: usize) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * cycles_per_sample * t as f64)
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lti(taps: &[Complex64], t: usize, lead: usize) -> ChannelKernel {
        let h = ImpulseResponse::time_invariant(t, taps);
        kernel_from_impulse_response(&h, KernelDims::new(1, t, 1, t + lead), 1.0).unwrap()
    }

    fn doppler(t: usize, lead: usize, nu: f64) -> ChannelKernel {
        let h = ImpulseResponse::from_fn(1, 1, t, 1, |_, _, t, _| tone(nu, t));
        kernel_from_impulse_response(&h, KernelDims::new(1, t, 1, t + lead), 1.0).unwrap()
    }

    fn frame(n: usize, rng: &mut ChaCha8Rng) -> SymbolFrame {
        qam_map(&random_bits(rng, 4 * n), Constellation::Qam16).unwrap()
    }

    #[test]
    fn noiseless_lti_within_prefix_is_exact() {
        let k = lti(&[c(0.8, 0.1), c(0.0, 0.0), c(-0.3, 0.4), c(0.2, 0.0)], 64, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = frame(64, &mut rng);
        let tx = ofdm_transmit(&f.symbols, k.dims()).unwrap();
        let r = apply_kernel(&k, &tx, 0.0, &mut rng).unwrap();
        for (a, b) in ofdm_receive(&r, &k).unwrap().iter().zip(&f.symbols) {
            assert!((a - b).norm() < 1e-12);
        }
        // OTFS blocks see inter-block interference from the same response.
        let tx = otfs_transmit(&f.symbols, k.dims(), 4).unwrap();
        let r = apply_kernel(&k, &tx, 0.0, &mut rng).unwrap();
        let err: f64 = otfs_receive(&r, &k, 4)
            .unwrap()
            .iter()
            .zip(&f.symbols)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        assert!(err > 1e-3);
    }

    #[test]
    fn otfs_flat_channel_round_trip() {
        // A single tap with a per-block constant phase is removed exactly.
        let k = lti(&[c(0.0, 1.0)], 32, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = frame(32, &mut rng);
        let tx = otfs_transmit(&f.symbols, k.dims(), 8).unwrap();
        assert!((tx.energy() - f.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>()).abs() < 1e-10);
        let r = apply_kernel(&k, &tx, 0.0, &mut rng).unwrap();
        for (a, b) in otfs_receive(&r, &k, 8).unwrap().iter().zip(&f.symbols) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lti_ofdm_ber_matches_awgn() {
        // Unit-magnitude response: every subcarrier sees the AWGN SNR.
        let k = lti(&[c(0.0, 0.0), c(0.6, 0.8)], 64, 2);
        let es_n0: f64 = 10f64.powf(0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = BitErrors::default();
        for _ in 0..400 {
            let f = frame(64, &mut rng);
            let e = ofdm_baseline(&f, &k, 1.0 / es_n0, &mut rng).unwrap();
            total.bits += e.bits;
            total.bit_errors += e.bit_errors;
        }
        let p = awgn_ber(Constellation::Qam16, es_n0);
        let se = (p * (1.0 - p) / total.bits as f64).sqrt();
        assert!((total.ber() - p).abs() < 3.0 * se, "{} vs {p}", total.ber());
    }

    #[test]
    fn constant_doppler_hurts_ofdm_more_than_otfs() {
        let (t, nu) = (64, 0.05 / 64.0 * 8.0);
        let k = doppler(t, 0, nu);
        let n0 = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut ofdm, mut otfs) = (BitErrors::default(), BitErrors::default());
        for _ in 0..200 {
            let f = frame(t, &mut rng);
            let a = ofdm_baseline(&f, &k, n0, &mut rng).unwrap();
            let b = otfs_tfst_baseline(&f, &k, 8, n0, &mut rng).unwrap();
            ofdm.bits += a.bits;
            ofdm.bit_errors += a.bit_errors;
            otfs.bits += b.bits;
            otfs.bit_errors += b.bit_errors;
        }
        assert!(ofdm.ber() > 0.0);
        let se = (ofdm.ber() * (1.0 - ofdm.ber()) / ofdm.bits as f64).sqrt();
        assert!(otfs.ber() + 3.0 * se < ofdm.ber(), "{} {}", otfs.ber(), ofdm.ber());
    }

    #[test]
    fn grid_errors() {
        let k = lti(&[c(1.0, 0.0)], 48, 0);
        assert!(matches!(ofdm_transmit(&[c(0.0, 0.0); 48], k.dims()), Err(Error::Config(_))));
        let k = lti(&[c(1.0, 0.0)], 16, 0);
        assert!(otfs_transmit(&[c(0.0, 0.0); 16], k.dims(), 3).is_err());
        assert!(matches!(
            ofdm_transmit(&[c(0.0, 0.0); 8], k.dims()),
            Err(Error::Dimension(_))
        ));
        let mimo = KernelDims::square(2, 2, 16);
        assert!(ofdm_transmit(&[c(0.0, 0.0); 16], mimo).is_err());
    }
}
