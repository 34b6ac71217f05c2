//! Discretized 4-D channel kernels `k(u,t; u',t')` and the space-time signals
//! they act on.
//!
//! A kernel maps a transmit signal on the `(u', t')` grid to a receive signal
//! on the `(u, t)` grid:
//!
//! ```text
//! r[u,t] = sum_{u',t'} k[u,t,u',t'] s[u',t'] + v[u,t]
//! ```
//!
//! Storage is row-major with `u` slowest and `t'` fastest, which is exactly
//! the row-major layout of the unfolded `(U*T) x (U'*T')` matrix.
//!
//! Time grids are aligned at their last sample. With `T' = T` both grids
//! coincide; with `T' > T` the transmit grid starts `T' - T` samples earlier
//! (the transmit lead), so the receive window sees the channel memory filled.
//! A square causal window truncates the convolution and, for multipath
//! responses that are not minimum-phase, yields singular values that decay
//! exponentially with `T`.

mod models;
mod paths;

pub use models::{
    DopplerSpec, KernelModel, SpeedRange, TapSpec, TappedDelayLine, EVA_DELAYS_NS, EVA_POWERS_DB,
};
pub use paths::{kernel_from_paths, windowed_sinc, Path, PhysicalPathSet, SINC_HALF_WIDTH};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Grid sizes of a kernel: receive side `(U, T)` and transmit side `(U', T')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelDims {
    pub n_rx_space: usize,
    pub n_rx_time: usize,
    pub n_tx_space: usize,
    pub n_tx_time: usize,
}

impl KernelDims {
    pub fn new(n_rx_space: usize, n_rx_time: usize, n_tx_space: usize, n_tx_time: usize) -> Self {
        Self {
            n_rx_space,
            n_rx_time,
            n_tx_space,
            n_tx_time,
        }
    }

    /// Square time support, `T = T'`.
    pub fn square(n_rx_space: usize, n_tx_space: usize, n_time: usize) -> Self {
        Self::new(n_rx_space, n_time, n_tx_space, n_time)
    }

    pub fn rx_len(&self) -> usize {
        self.n_rx_space * self.n_rx_time
    }

    pub fn tx_len(&self) -> usize {
        self.n_tx_space * self.n_tx_time
    }

    pub fn len(&self) -> usize {
        self.rx_len() * self.tx_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples by which the transmit grid starts before the receive grid.
    pub fn tx_lead(&self) -> usize {
        self.n_tx_time.saturating_sub(self.n_rx_time)
    }

    fn check_nonzero(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Config(format!("kernel dimensions must be non-zero, got {self:?}")));
        }
        Ok(())
    }
}

/// Complex signal on a `(space, time)` grid, row-major with time fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeSignal {
    n_space: usize,
    n_time: usize,
    data: Vec<Complex64>,
}

impl SpaceTimeSignal {
    pub fn new(n_space: usize, n_time: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n_space * n_time {
            return Err(Error::Dimension(format!(
                "signal data has {} entries, expected {n_space}x{n_time}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("signal contains non-finite samples".into()));
        }
        Ok(Self {
            n_space,
            n_time,
            data,
        })
    }

    pub fn zeros(n_space: usize, n_time: usize) -> Self {
        Self {
            n_space,
            n_time,
            data: vec![Complex64::new(0.0, 0.0); n_space * n_time],
        }
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, space: usize, time: usize) -> Complex64 {
        self.data[space * self.n_time + time]
    }

    pub fn set(&mut self, space: usize, time: usize, value: Complex64) {
        self.data[space * self.n_time + time] = value;
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Squared distance `||self - other||^2`.
    pub fn distance_sq(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            n_space: self.n_space,
            n_time: self.n_time,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }
}

/// A time-varying impulse response `h_{u,u'}(t, tau)` for every link, sampled
/// on the receive time grid with `n_taps` delay taps.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_time: usize,
    pub n_taps: usize,
    /// Indexed `((u * n_tx + u') * n_time + t) * n_taps + tau`.
    pub taps: Vec<Complex64>,
}

impl ImpulseResponse {
    pub fn from_fn(
        n_rx: usize,
        n_tx: usize,
        n_time: usize,
        n_taps: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut taps = Vec::with_capacity(n_rx * n_tx * n_time * n_taps);
        for u in 0..n_rx {
            for up in 0..n_tx {
                for t in 0..n_time {
                    for tau in 0..n_taps {
                        taps.push(f(u, up, t, tau));
                    }
                }
            }
        }
        Self {
            n_rx,
            n_tx,
            n_time,
            n_taps,
            taps,
        }
    }

    /// Single-link response whose taps do not depend on `t`.
    pub fn time_invariant(n_time: usize, taps: &[Complex64]) -> Self {
        Self::from_fn(1, 1, n_time, taps.len(), |_, _, _, tau| taps[tau])
    }

    #[inline]
    pub fn tap(&self, u: usize, up: usize, t: usize, tau: usize) -> Complex64 {
        self.taps[((u * self.n_tx + up) * self.n_time + t) * self.n_taps + tau]
    }
}

/// Discretized channel kernel on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelKernel {
    dims: KernelDims,
    sample_period: f64,
    data: Vec<Complex64>,
}

impl ChannelKernel {
    pub fn new(dims: KernelDims, sample_period: f64, data: Vec<Complex64>) -> Result<Self> {
        dims.check_nonzero()?;
        if data.len() != dims.len() {
            return Err(Error::Dimension(format!(
                "kernel data has {} entries, expected {} for {dims:?}",
                data.len(),
                dims.len()
            )));
        }
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(Error::Config(format!(
                "sample period must be positive and finite, got {sample_period}"
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("kernel contains non-finite entries".into()));
        }
        Ok(Self {
            dims,
            sample_period,
            data,
        })
    }

    /// `k[u,t,u',t'] = [u == u'] [t == t']` on a square grid.
    pub fn identity(n_space: usize, n_time: usize, sample_period: f64) -> Result<Self> {
        let dims = KernelDims::square(n_space, n_space, n_time);
        let n = dims.rx_len();
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Self::new(dims, sample_period, data)
    }

    /// Builds a kernel from a matrix on the flattened grids (rows `u*T + t`,
    /// columns `u'*T' + t'`).
    pub fn from_unfolded(dims: KernelDims, sample_period: f64, m: &CMatrix) -> Result<Self> {
        if m.shape() != (dims.rx_len(), dims.tx_len()) {
            return Err(Error::Dimension(format!(
                "matrix is {:?}, expected {}x{}",
                m.shape(),
                dims.rx_len(),
                dims.tx_len()
            )));
        }
        let data = m.transpose().as_slice().to_vec();
        Self::new(dims, sample_period, data)
    }

    pub fn dims(&self) -> KernelDims {
        self.dims
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, u: usize, t: usize, up: usize, tp: usize) -> usize {
        let d = &self.dims;
        ((u * d.n_rx_time + t) * d.n_tx_space + up) * d.n_tx_time + tp
    }

    #[inline]
    pub fn get(&self, u: usize, t: usize, up: usize, tp: usize) -> Complex64 {
        self.data[self.index(u, t, up, tp)]
    }

    /// `h_{u,u'}(t, tau)` read back through the coordinate shift; zero outside
    /// the transmit grid.
    pub fn impulse_response(&self, u: usize, up: usize, t: usize, tau: usize) -> Complex64 {
        let shifted = t + self.dims.tx_lead();
        if tau > shifted || shifted - tau >= self.dims.n_tx_time {
            return Complex64::new(0.0, 0.0);
        }
        self.get(u, t, up, shifted - tau)
    }

    /// The `U x U'` spatial matrix coupling transmit time `tp` into receive
    /// time `t`.
    pub fn spatial_slice(&self, t: usize, tp: usize) -> CMatrix {
        DMatrix::from_fn(self.dims.n_rx_space, self.dims.n_tx_space, |u, up| {
            self.get(u, t, up, tp)
        })
    }

    /// Zero-delay spatial matrix at receive time `t`: the slice coupling the
    /// transmit sample emitted at the same instant.
    pub fn aligned_slice(&self, t: usize) -> CMatrix {
        self.spatial_slice(t, t + self.dims.tx_lead())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dims: self.dims,
            sample_period: self.sample_period,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// Entry-wise map, used for perturbations.
    pub fn map_entries(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Result<Self> {
        Self::new(self.dims, self.sample_period, self.data.iter().map(|z| f(*z)).collect())
    }
}

/// `data[u,t,u',t'] = h_{u,u'}(t, t - t')` for `0 <= t - t' < n_taps`, zero
/// otherwise, with `t'` counted from the start of the receive grid (see the
/// module docs for `T' > T`).
pub fn kernel_from_impulse_response(
    h: &ImpulseResponse,
    dims: KernelDims,
    sample_period: f64,
) -> Result<ChannelKernel> {
    dims.check_nonzero()?;
    if h.n_rx != dims.n_rx_space || h.n_tx != dims.n_tx_space || h.n_time != dims.n_rx_time {
        return Err(Error::Config(format!(
            "impulse response is {}x{} links over {} samples, grid is {dims:?}",
            h.n_rx, h.n_tx, h.n_time
        )));
    }
    if h.n_taps > dims.n_tx_time {
        return Err(Error::Config(format!(
            "impulse response has {} taps but the transmit grid only has {} samples",
            h.n_taps, dims.n_tx_time
        )));
    }
    let mut data = vec![Complex64::new(0.0, 0.0); dims.len()];
    let row = dims.n_tx_space * dims.n_tx_time;
    let lead = dims.tx_lead();
    for u in 0..dims.n_rx_space {
        for t in 0..dims.n_rx_time {
            let base = (u * dims.n_rx_time + t) * row;
            for up in 0..dims.n_tx_space {
                for tau in 0..h.n_taps.min(t + lead + 1) {
                    let tp = t + lead - tau;
                    if tp < dims.n_tx_time {
                        data[base + up * dims.n_tx_time + tp] = h.tap(u, up, t, tau);
                    }
                }
            }
        }
    }
    ChannelKernel::new(dims, sample_period, data)
}

/// `data[u,t,u',t'] = H[u,u'] * h(t, t - t')`: spatial mixing by `spatial`
/// combined with one shared time-varying response.
pub fn kernel_from_kronecker(
    spatial: &CMatrix,
    temporal: &ImpulseResponse,
    n_tx_time: usize,
    sample_period: f64,
) -> Result<ChannelKernel> {
    if temporal.n_rx != 1 || temporal.n_tx != 1 {
        return Err(Error::Dimension(
            "Kronecker construction takes a single-link temporal response".into(),
        ));
    }
    let (n_rx, n_tx) = spatial.shape();
    let h = ImpulseResponse::from_fn(n_rx, n_tx, temporal.n_time, temporal.n_taps, |u, up, t, tau| {
        spatial[(u, up)] * temporal.tap(0, 0, t, tau)
    });
    kernel_from_impulse_response(
        &h,
        KernelDims::new(n_rx, temporal.n_time, n_tx, n_tx_time),
        sample_period,
    )
}

/// Circularly-symmetric complex Gaussian sample with variance `variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Noiseless channel output.
pub fn apply_noiseless(kernel: &ChannelKernel, tx: &SpaceTimeSignal) -> Result<SpaceTimeSignal> {
    let d = kernel.dims;
    if tx.n_space != d.n_tx_space || tx.n_time != d.n_tx_time {
        return Err(Error::Dimension(format!(
            "transmit signal is {}x{}, kernel expects {}x{}",
            tx.n_space, tx.n_time, d.n_tx_space, d.n_tx_time
        )));
    }
    let cols = d.tx_len();
    let out: Vec<Complex64> = kernel
        .data
        .chunks_exact(cols)
        .map(|row| row.iter().zip(&tx.data).map(|(k, s)| k * s).sum())
        .collect();
    Ok(SpaceTimeSignal {
        n_space: d.n_rx_space,
        n_time: d.n_rx_time,
        data: out,
    })
}

/// `r = k * tx + v` with `v` white circularly-symmetric Gaussian noise of the
/// given per-sample variance. A variance of zero draws nothing from `rng`.
pub fn apply_kernel<R: Rng + ?Sized>(
    kernel: &ChannelKernel,
    tx: &SpaceTimeSignal,
    noise_variance: f64,
    rng: &mut R,
) -> Result<SpaceTimeSignal> {
    let mut r = apply_noiseless(kernel, tx)?;
    add_noise(&mut r, noise_variance, rng);
    Ok(r)
}

pub fn add_noise<R: Rng + ?Sized>(signal: &mut SpaceTimeSignal, noise_variance: f64, rng: &mut R) {
    if noise_variance > 0.0 {
        for z in signal.data.iter_mut() {
            *z += complex_gaussian(rng, noise_variance);
        }
    }
}
