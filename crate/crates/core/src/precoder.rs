//! Eigenfunction precoding and per-time-slice baselines.
//!
//! The precoder projects the data signal onto the receive-side
//! eigenfunctions, divides each projection by its singular value and sends
//! the coefficients on the conjugated transmit-side eigenfunctions. Through
//! the noiseless channel each `conj(phi_n)` arrives as `sigma_n psi_n`, so the
//! receiver sees the data signal itself and needs no decoding stage.

use num_complex::Complex64;

use crate::chankernel::{ChannelKernel, SpaceTimeSignal};
use crate::error::{Error, Result};
use crate::hogmt::EigenSystem;
use crate::linalg::{self, CMatrix};

/// Default relative floor on kept singular values.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecodeOptions {
    /// Kept `sigma_n <= sigma_floor * sigma_1` is rejected.
    pub sigma_floor: f64,
    /// Rescale the transmit signal to unit average power per sample.
    pub normalize_power: bool,
}

impl Default for PrecodeOptions {
    fn default() -> Self {
        Self {
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            normalize_power: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeResult {
    pub tx_signal: SpaceTimeSignal,
    /// `x_n = s_n / sigma_n`
    pub coefficients: Vec<Complex64>,
    /// `s_n = <s, psi_n>`
    pub projections: Vec<Complex64>,
    /// `sum |x_n|^2`, before any power normalization.
    pub tx_energy: f64,
    /// Factor applied to the transmit signal; the receiver sees
    /// `power_scale * s + v`. Always 1 without normalization.
    pub power_scale: f64,
    /// Energy of the part of `s` outside the span of the kept `psi_n`.
    pub irreducible_error: f64,
}

/// Precodes `s` (on the receive grid) for transmission through the kernel
/// the eigensystem came from.
pub fn hogmt_precode(
    s: &SpaceTimeSignal,
    eig: &EigenSystem,
    opts: &PrecodeOptions,
) -> Result<PrecodeResult> {
    let d = eig.dims();
    if s.n_space() != d.n_rx_space || s.n_time() != d.n_rx_time {
        return Err(Error::Dimension(format!(
            "data signal is {}x{}, receive grid is {}x{}",
            s.n_space(),
            s.n_time(),
            d.n_rx_space,
            d.n_rx_time
        )));
    }
    let floor = opts.sigma_floor * eig.sigmas().first().copied().unwrap_or(0.0);
    if let Some((index, &sigma)) = eig
        .kept_sigmas()
        .iter()
        .enumerate()
        .find(|(_, &sg)| sg <= floor)
    {
        return Err(Error::IllConditioned { index, sigma, floor });
    }

    let data = s.as_slice();
    let projections: Vec<Complex64> = (0..eig.n_kept())
        .map(|n| eig.psi(n).iter().zip(data).map(|(p, x)| p.conj() * x).sum())
        .collect();
    let coefficients: Vec<Complex64> = projections
        .iter()
        .zip(eig.kept_sigmas())
        .map(|(sn, sigma)| sn / *sigma)
        .collect();

    let mut tx = vec![Complex64::new(0.0, 0.0); d.tx_len()];
    for (n, xn) in coefficients.iter().enumerate() {
        for (acc, p) in tx.iter_mut().zip(eig.phi(n)) {
            *acc += xn * p.conj();
        }
    }
    let tx_energy: f64 = coefficients.iter().map(|x| x.norm_sqr()).sum();
    let captured: f64 = projections.iter().map(|x| x.norm_sqr()).sum();
    let irreducible_error = (s.energy() - captured).max(0.0);

    let power_scale = if opts.normalize_power && tx_energy > 0.0 {
        (d.tx_len() as f64 / tx_energy).sqrt()
    } else {
        1.0
    };
    if power_scale != 1.0 {
        for z in tx.iter_mut() {
            *z *= power_scale;
        }
    }
    Ok(PrecodeResult {
        tx_signal: SpaceTimeSignal::new(d.n_tx_space, d.n_tx_time, tx)?,
        coefficients,
        projections,
        tx_energy,
        power_scale,
        irreducible_error,
    })
}

/// The receiver of the precoded link takes the channel output as its
/// estimate; symbol decisions are made directly on it.
pub fn receiver_estimate(r: &SpaceTimeSignal) -> SpaceTimeSignal {
    r.clone()
}

/// Output of a per-slice baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceResult {
    pub tx_signal: SpaceTimeSignal,
    /// Diagonal loading used on rank-deficient slices, if any was needed.
    pub regularization: Option<f64>,
}

fn slice_inputs(kernel: &ChannelKernel, s: &SpaceTimeSignal) -> Result<()> {
    let d = kernel.dims();
    if d.n_tx_time < d.n_rx_time {
        return Err(Error::Config(
            "per-slice precoding needs a transmit grid at least as long as the receive grid".into(),
        ));
    }
    if s.n_space() != d.n_rx_space || s.n_time() != d.n_rx_time {
        return Err(Error::Dimension(format!(
            "data signal is {}x{}, receive grid is {}x{}",
            s.n_space(),
            s.n_time(),
            d.n_rx_space,
            d.n_rx_time
        )));
    }
    Ok(())
}

fn column(s: &SpaceTimeSignal, t: usize) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_fn(s.n_space(), |u, _| s.get(u, t))
}

fn loading(h: &CMatrix) -> f64 {
    let p = linalg::frobenius(h).powi(2) / h.nrows().max(1) as f64;
    1e-10 * p.max(f64::MIN_POSITIVE)
}

/// Zero-forcing on each time slice independently: `tx[:,t] = pinv(H_t) s[:,t]`
/// with `H_t` the zero-delay slice at receive time `t`. Transmit-lead samples
/// stay silent. Spatial interference within a slice is removed;
/// coupling between different times is ignored.
pub fn per_slice_zf_precode(kernel: &ChannelKernel, s: &SpaceTimeSignal) -> Result<SliceResult> {
    slice_inputs(kernel, s)?;
    let d = kernel.dims();
    let mut tx = SpaceTimeSignal::zeros(d.n_tx_space, d.n_tx_time);
    let mut regularization: Option<f64> = None;
    for t in 0..d.n_rx_time {
        let h = kernel.aligned_slice(t);
        let wide = h.nrows() <= h.ncols();
        let base = if wide { h.clone() } else { h.adjoint() };
        let pinv = match linalg::right_pinv(&base, 0.0).filter(|p| p.iter().all(|z| z.re.is_finite() && z.im.is_finite())) {
            Some(p) => p,
            None => {
                let eps = loading(&h);
                regularization = Some(regularization.unwrap_or(0.0).max(eps));
                linalg::right_pinv(&base, eps)
                    .ok_or_else(|| Error::Numeric(format!("slice {t} cannot be inverted")))?
            }
        };
        let pinv = if wide { pinv } else { pinv.adjoint() };
        let x = pinv * column(s, t);
        for up in 0..d.n_tx_space {
            tx.set(up, t + d.tx_lead(), x[up]);
        }
    }
    Ok(SliceResult {
        tx_signal: tx,
        regularization,
    })
}

/// Per-slice SVD precoding: `H_t = U S V^H`, `tx[:,t] = V S^-1 U^H s[:,t]`.
/// Singular values below `1e-12 s_max` are inverted with Tikhonov loading.
pub fn per_slice_svd_precode(kernel: &ChannelKernel, s: &SpaceTimeSignal) -> Result<SliceResult> {
    slice_inputs(kernel, s)?;
    let d = kernel.dims();
    let mut tx = SpaceTimeSignal::zeros(d.n_tx_space, d.n_tx_time);
    let mut regularization: Option<f64> = None;
    for t in 0..d.n_rx_time {
        let h = kernel.aligned_slice(t);
        let svd = linalg::svd(&h)?;
        let smax = svd.sigma.first().copied().unwrap_or(0.0);
        let mut y = svd.u.adjoint() * column(s, t);
        for (k, sg) in svd.sigma.iter().enumerate() {
            let inv = if *sg > 1e-12 * smax {
                1.0 / sg
            } else {
                let eps = loading(&h);
                regularization = Some(regularization.unwrap_or(0.0).max(eps));
                sg / (sg * sg + eps)
            };
            y[k] *= inv;
        }
        let x = &svd.v * y;
        for up in 0..d.n_tx_space {
            tx.set(up, t + d.tx_lead(), x[up]);
        }
    }
    Ok(SliceResult {
        tx_signal: tx,
        regularization,
    })
}
