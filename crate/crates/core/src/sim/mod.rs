//! Deterministic Monte-Carlo BER sweeps.
//!
//! Trial `i` draws everything from counter-derived ChaCha substreams of the
//! configured seed: one for the kernel realization, one for the CSI error and
//! one for data bits and noise. Each trial realizes and decomposes one kernel
//! and sends `frames_per_trial` frames; every frame is evaluated at all SNR
//! points with the same bits and the same unit noise draw scaled to the
//! point's variance. Per-trial tallies are summed in trial order, so results
//! are bitwise identical for any thread count.

mod compare;

pub use compare::{compare_schemes, Comparison};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chankernel::{apply_noiseless, complex_gaussian, ChannelKernel, KernelModel, SpaceTimeSignal};
use crate::error::{Error, Result};
use crate::hogmt::{decompose, EigenSystem, Truncation};
use crate::modem::{
    self, count_bit_errors, equalize, mem_demodulate, qam_demap, qam_map, random_bits,
    zero_pad_count, Constellation, Equalizer,
};
use crate::precoder::{self, PrecodeOptions, DEFAULT_SIGMA_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    HogmtPrecode,
    Mem,
    ZpMem,
    ZfSlice,
    SvdSlice,
    Ofdm,
    OtfsTfst,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::HogmtPrecode,
        Scheme::Mem,
        Scheme::ZpMem,
        Scheme::ZfSlice,
        Scheme::SvdSlice,
        Scheme::Ofdm,
        Scheme::OtfsTfst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::HogmtPrecode => "hogmt-precode",
            Scheme::Mem => "mem",
            Scheme::ZpMem => "zp-mem",
            Scheme::ZfSlice => "zf-slice",
            Scheme::SvdSlice => "svd-slice",
            Scheme::Ofdm => "ofdm",
            Scheme::OtfsTfst => "otfs-tfst",
        }
    }

    fn needs_eigensystem(self) -> bool {
        matches!(self, Scheme::HogmtPrecode | Scheme::Mem | Scheme::ZpMem)
    }

    /// Precoded schemes deliver the data signal itself; the others see the
    /// channel gain.
    fn is_precoded(self) -> bool {
        matches!(self, Scheme::HogmtPrecode | Scheme::ZfSlice | Scheme::SvdSlice)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// One Monte-Carlo sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Curve name in reports; defaults to the scheme name.
    pub label: Option<String>,
    pub kernel: KernelModel,
    pub scheme: Scheme,
    pub constellation: Constellation,
    pub snr_grid_db: Vec<f64>,
    /// Kernel realizations.
    pub n_trials: usize,
    pub frames_per_trial: usize,
    pub truncation: Truncation,
    pub zp_fraction: f64,
    /// Relative standard deviation of the CSI error seen by the transmitter.
    pub csi_error_std: f64,
    pub equalizer: Equalizer,
    pub normalize_power: bool,
    pub sigma_floor: f64,
    pub otfs_doppler_bins: usize,
    pub rng_seed: u64,
}

impl SimConfig {
    pub fn new(kernel: KernelModel, scheme: Scheme) -> Self {
        Self {
            label: None,
            kernel,
            scheme,
            constellation: Constellation::Qam16,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            n_trials: 8,
            frames_per_trial: 10,
            truncation: Truncation::full(),
            zp_fraction: 0.125,
            csi_error_std: 0.0,
            equalizer: Equalizer::Zf,
            normalize_power: false,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            otfs_doppler_bins: 8,
            rng_seed: 0,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.scheme.name().to_string())
    }

    /// Every range and compatibility violation, as `field: message`.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.kernel.validate();
        if self.n_trials == 0 {
            v.push("n_trials: must be >= 1".into());
        }
        if self.frames_per_trial == 0 {
            v.push("frames_per_trial: must be >= 1".into());
        }
        if self.snr_grid_db.is_empty() {
            v.push("snr_grid_db: must list at least one point".into());
        } else if self.snr_grid_db.iter().any(|x| !x.is_finite())
            || self.snr_grid_db.windows(2).any(|w| w[0] >= w[1])
        {
            v.push("snr_grid_db: must be finite and strictly ascending".into());
        }
        if let Err(e) = self.truncation.validate() {
            v.push(format!("truncation: {e}"));
        }
        if !(0.0..1.0).contains(&self.zp_fraction) {
            v.push(format!("zp_fraction: must lie in [0, 1), got {}", self.zp_fraction));
        }
        if !(self.csi_error_std >= 0.0 && self.csi_error_std.is_finite()) {
            v.push(format!("csi_error_std: must be finite and >= 0, got {}", self.csi_error_std));
        }
        if !(self.sigma_floor >= 0.0 && self.sigma_floor < 1.0) {
            v.push(format!("sigma_floor: must lie in [0, 1), got {}", self.sigma_floor));
        }
        if let Some(l) = &self.label {
            if l.is_empty() || !l.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                v.push(format!("label: '{l}' must be non-empty and use only [A-Za-z0-9._-]"));
            }
        }
        if v.is_empty() {
            if let Err(e) = self.check_compatibility() {
                v.push(format!("scheme: {e}"));
            }
        }
        v
    }

    fn check_compatibility(&self) -> Result<()> {
        let d = self.kernel.dims();
        match self.scheme {
            Scheme::Ofdm => modem::check_grid(d, 1),
            Scheme::OtfsTfst => modem::check_grid(d, self.otfs_doppler_bins),
            Scheme::ZfSlice | Scheme::SvdSlice if d.n_tx_time < d.n_rx_time => Err(Error::Config(
                "per-slice baselines need T' >= T".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Bits carried by one frame for a kernel with `n_kept` eigenfunctions.
    fn frame_symbols(&self, n_kept: usize) -> usize {
        let d = self.kernel.dims();
        match self.scheme {
            Scheme::Mem => n_kept,
            Scheme::ZpMem => n_kept - zero_pad_count(self.zp_fraction, n_kept),
            _ => d.rx_len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub standard_error: f64,
    pub throughput_bits_per_frame: f64,
    pub avg_tx_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub label: String,
    pub scheme: Scheme,
    pub constellation: Constellation,
    pub points: Vec<SnrPoint>,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl SimResult {
    pub fn point(&self, snr_db: f64) -> Option<&SnrPoint> {
        self.points.iter().find(|p| p.snr_db == snr_db)
    }

    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            wall_time_s: 0.0,
            ..self.clone()
        } == Self {
            wall_time_s: 0.0,
            ..other.clone()
        }
    }
}

/// `kernel + eps * ||kernel||_F / sqrt(size) * CN(0, 1)` per entry. `eps = 0`
/// returns the kernel unchanged without drawing.
pub fn perturb_csi(kernel: &ChannelKernel, eps: f64, seed: u64) -> Result<ChannelKernel> {
    perturb_csi_with_rng(kernel, eps, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn perturb_csi_with_rng(kernel: &ChannelKernel, eps: f64, rng: &mut ChaCha8Rng) -> Result<ChannelKernel> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("CSI error must be finite and >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(kernel.clone());
    }
    let scale = eps * kernel.frobenius_norm() / (kernel.dims().len() as f64).sqrt();
    kernel.map_entries(|z| z + complex_gaussian(rng, scale * scale))
}

/// Independent RNG substream `lane` of trial `trial`.
pub fn substream(seed: u64, trial: usize, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 * 4 + lane);
    rng
}

const LANE_KERNEL: u64 = 0;
const LANE_CSI: u64 = 1;
const LANE_DATA: u64 = 2;

/// Noise variance at `snr_db` for a scheme and kernel realization.
///
/// Precoded schemes deliver unit-energy symbols, so `N0 = 10^(-snr/10)`. The
/// others transmit unit-energy symbols through the channel, and `N0` is
/// referred to the mean received energy per receive sample of this
/// realization, `||K||_F^2 / (U T)`.
pub fn noise_variance(scheme: Scheme, kernel: &ChannelKernel, snr_db: f64) -> f64 {
    let n0 = 10f64.powf(-snr_db / 10.0);
    if scheme.is_precoded() {
        n0
    } else {
        let gain = kernel.frobenius_norm().powi(2) / kernel.dims().rx_len() as f64;
        n0 * gain
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    bits: Vec<u64>,
    errors: Vec<u64>,
    tx_energy: f64,
    frames: u64,
    frame_bits: usize,
}

/// Per-trial state shared by all frames.
enum Prepared {
    Eigen(EigenSystem),
    Plain,
}

fn run_trial(cfg: &SimConfig, trial: usize) -> Result<Tally> {
    let kernel = cfg.kernel.realize(&mut substream(cfg.rng_seed, trial, LANE_KERNEL))?;
    let csi = perturb_csi_with_rng(&kernel, cfg.csi_error_std, &mut substream(cfg.rng_seed, trial, LANE_CSI))?;
    let prepared = if cfg.scheme.needs_eigensystem() {
        Prepared::Eigen(decompose(&csi, cfg.truncation)?)
    } else {
        Prepared::Plain
    };
    let n_kept = match &prepared {
        Prepared::Eigen(e) => e.n_kept(),
        Prepared::Plain => kernel.dims().rx_len(),
    };
    let n_symbols = cfg.frame_symbols(n_kept);
    let k = cfg.constellation.bits_per_symbol();
    let d = kernel.dims();
    let variances: Vec<f64> = cfg
        .snr_grid_db
        .iter()
        .map(|s| noise_variance(cfg.scheme, &kernel, *s))
        .collect();

    let mut tally = Tally {
        bits: vec![0; variances.len()],
        errors: vec![0; variances.len()],
        frame_bits: n_symbols * k,
        ..Tally::default()
    };
    let mut rng = substream(cfg.rng_seed, trial, LANE_DATA);
    for _ in 0..cfg.frames_per_trial {
        let bits = random_bits(&mut rng, d.rx_len() * k);
        let bits = &bits[..n_symbols * k];
        let noise: Vec<Complex64> = (0..d.rx_len()).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let noise = SpaceTimeSignal::new(d.n_rx_space, d.n_rx_time, noise)?;
        let frame = qam_map(bits, cfg.constellation)?;

        let link = Link::send(cfg, &kernel, &csi, &prepared, &frame.symbols)?;
        tally.tx_energy += link.tx_energy;
        let signal = link.receive(cfg, &csi, &prepared, &link.received)?;
        let unit_noise = link.receive(cfg, &csi, &prepared, &noise)?;
        for (i, n0) in variances.iter().enumerate() {
            let sd = n0.sqrt();
            let mut est: Vec<Complex64> = signal
                .iter()
                .zip(&unit_noise)
                .map(|(s, w)| (s + w * sd) * link.gain_correction)
                .collect();
            if let Prepared::Eigen(eig) = &prepared {
                if cfg.scheme != Scheme::HogmtPrecode {
                    let carriers: Vec<usize> = (0..est.len()).collect();
                    est = equalize(&est, eig, &carriers, cfg.equalizer, *n0);
                }
            }
            let decided = qam_demap(&est, cfg.constellation);
            tally.errors[i] += count_bit_errors(&decided, bits);
            tally.bits[i] += bits.len() as u64;
        }
        tally.frames += 1;
    }
    Ok(tally)
}

/// One frame's trip through the channel, split so the receiver's linear
/// front end can be applied to signal and noise separately.
struct Link {
    received: SpaceTimeSignal,
    tx_energy: f64,
    /// Undoes transmit power normalization at the receiver.
    gain_correction: f64,
}

impl Link {
    fn send(
        cfg: &SimConfig,
        kernel: &ChannelKernel,
        csi: &ChannelKernel,
        prepared: &Prepared,
        symbols: &[Complex64],
    ) -> Result<Self> {
        let d = kernel.dims();
        let grid = || SpaceTimeSignal::new(d.n_rx_space, d.n_rx_time, symbols.to_vec());
        let (tx, tx_energy, scale) = match (cfg.scheme, prepared) {
            (Scheme::HogmtPrecode, Prepared::Eigen(eig)) => {
                let opts = PrecodeOptions {
                    sigma_floor: cfg.sigma_floor,
                    normalize_power: cfg.normalize_power,
                };
                let p = precoder::hogmt_precode(&grid()?, eig, &opts)?;
                (p.tx_signal, p.tx_energy, p.power_scale)
            }
            (Scheme::ZfSlice | Scheme::SvdSlice, _) => {
                let s = grid()?;
                let r = if cfg.scheme == Scheme::ZfSlice {
                    precoder::per_slice_zf_precode(csi, &s)?
                } else {
                    precoder::per_slice_svd_precode(csi, &s)?
                };
                let e = r.tx_signal.energy();
                let scale = if cfg.normalize_power && e > 0.0 {
                    (d.tx_len() as f64 / e).sqrt()
                } else {
                    1.0
                };
                (r.tx_signal.scaled(Complex64::new(scale, 0.0)), e, scale)
            }
            (Scheme::Mem | Scheme::ZpMem, Prepared::Eigen(eig)) => {
                let f = modem::SymbolFrame {
                    constellation: cfg.constellation,
                    symbols: symbols.to_vec(),
                    bits: Vec::new(),
                    gray_coded: true,
                };
                let m = if cfg.scheme == Scheme::Mem {
                    modem::mem_modulate(&f, eig)?
                } else {
                    modem::zp_mem(&f, eig, cfg.zp_fraction)?
                };
                let e = m.tx_signal.energy();
                (m.tx_signal, e, 1.0)
            }
            (Scheme::Ofdm, _) => {
                let tx = modem::ofdm_transmit(symbols, d)?;
                let e = tx.energy();
                (tx, e, 1.0)
            }
            (Scheme::OtfsTfst, _) => {
                let tx = modem::otfs_transmit(symbols, d, cfg.otfs_doppler_bins)?;
                let e = tx.energy();
                (tx, e, 1.0)
            }
            (s, _) => return Err(Error::Config(format!("scheme {s} needs an eigensystem"))),
        };
        Ok(Self {
            received: apply_noiseless(kernel, &tx)?,
            tx_energy,
            gain_correction: 1.0 / scale,
        })
    }

    /// Linear receiver front end: symbol-domain estimates before slicing.
    fn receive(
        &self,
        cfg: &SimConfig,
        csi: &ChannelKernel,
        prepared: &Prepared,
        r: &SpaceTimeSignal,
    ) -> Result<Vec<Complex64>> {
        match (cfg.scheme, prepared) {
            (Scheme::Mem | Scheme::ZpMem, Prepared::Eigen(eig)) => {
                let n = cfg.frame_symbols(eig.n_kept());
                let carriers: Vec<usize> = (0..n).collect();
                mem_demodulate(r, eig, &carriers)
            }
            (Scheme::Ofdm, _) => modem::ofdm_receive(r, csi),
            (Scheme::OtfsTfst, _) => modem::otfs_receive(r, csi, cfg.otfs_doppler_bins),
            _ => Ok(precoder::receiver_estimate(r).into_vec()),
        }
    }
}

pub fn run_sweep(config: &SimConfig) -> Result<SimResult> {
    run_sweep_with_threads(config, None)
}

/// Runs the sweep on a dedicated pool of `threads` workers, or on the global
/// pool when `None`.
pub fn run_sweep_with_threads(config: &SimConfig, threads: Option<usize>) -> Result<SimResult> {
    config.validate()?;
    let start = Instant::now();
    let trials = || -> Result<Vec<Tally>> {
        (0..config.n_trials)
            .into_par_iter()
            .map(|i| run_trial(config, i))
            .collect()
    };
    let tallies = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(trials)?,
        None => trials()?,
    };

    let n_points = config.snr_grid_db.len();
    let mut bits = vec![0u64; n_points];
    let mut errors = vec![0u64; n_points];
    let mut energy = 0.0;
    let mut frames = 0u64;
    let mut frame_bits = 0u64;
    for t in &tallies {
        for i in 0..n_points {
            bits[i] += t.bits[i];
            errors[i] += t.errors[i];
        }
        energy += t.tx_energy;
        frames += t.frames;
        frame_bits += t.frame_bits as u64 * t.frames;
    }
    let points = config
        .snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &snr_db)| {
            let ber = if bits[i] > 0 { errors[i] as f64 / bits[i] as f64 } else { 0.0 };
            SnrPoint {
                snr_db,
                bits: bits[i],
                bit_errors: errors[i],
                ber,
                standard_error: standard_error(ber, bits[i]),
                throughput_bits_per_frame: frame_bits as f64 / frames as f64,
                avg_tx_energy: energy / frames as f64,
            }
        })
        .collect();
    Ok(SimResult {
        label: config.label(),
        scheme: config.scheme,
        constellation: config.constellation,
        points,
        config_hash: crate::io::config_hash(config)?,
        seed: config.rng_seed,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn standard_error(ber: f64, bits: u64) -> f64 {
    if bits == 0 {
        0.0
    } else {
        (ber * (1.0 - ber) / bits as f64).sqrt()
    }
}
