use std::f64::consts::PI;

use num_complex::Complex64;

use super::{kernel_from_impulse_response, ChannelKernel, ImpulseResponse, KernelDims};
use crate::error::{Error, Result};

/// Fractional delays are interpolated with a Hann-windowed sinc that spans
/// this many taps on each side of the nearest grid point.
pub const SINC_HALF_WIDTH: usize = 4;

/// One propagation path of a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub delay_s: f64,
    pub gain: Complex64,
    pub doppler_hz: f64,
    /// Linear drift of the Doppler shift; a non-zero rate makes the link
    /// non-stationary.
    pub doppler_rate_hz_per_s: f64,
}

/// Paths for every `(u, u')` link.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalPathSet {
    pub n_rx: usize,
    pub n_tx: usize,
    /// Indexed `u * n_tx + u'`.
    pub links: Vec<Vec<Path>>,
    /// Whether the gains were drawn from (or rescaled to) a unit-power profile.
    pub normalized: bool,
}

impl PhysicalPathSet {
    pub fn single_link(paths: Vec<Path>) -> Self {
        Self {
            n_rx: 1,
            n_tx: 1,
            links: vec![paths],
            normalized: false,
        }
    }

    pub fn link(&self, u: usize, up: usize) -> &[Path] {
        &self.links[u * self.n_tx + up]
    }

    /// Rescales every link so its paths carry unit total power. Links with no
    /// power are left untouched.
    pub fn normalize(&mut self) {
        for link in &mut self.links {
            let p: f64 = link.iter().map(|p| p.gain.norm_sqr()).sum();
            if p > 0.0 {
                let s = 1.0 / p.sqrt();
                for path in link.iter_mut() {
                    path.gain *= s;
                }
            }
        }
        self.normalized = true;
    }

    pub fn max_delay(&self) -> f64 {
        self.links
            .iter()
            .flatten()
            .map(|p| p.delay_s)
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, n_tx_time: usize, sample_period: f64) -> Result<()> {
        if self.links.len() != self.n_rx * self.n_tx {
            return Err(Error::Config(format!(
                "path set lists {} links for a {}x{} grid",
                self.links.len(),
                self.n_rx,
                self.n_tx
            )));
        }
        let span = n_tx_time as f64 * sample_period;
        for (i, p) in self.links.iter().flatten().enumerate() {
            if !(p.delay_s >= 0.0 && p.delay_s < span) {
                return Err(Error::Config(format!(
                    "path {i} delay {} s is outside [0, {span}) s covered by the transmit grid",
                    p.delay_s
                )));
            }
            let finite = p.gain.re.is_finite()
                && p.gain.im.is_finite()
                && p.doppler_hz.is_finite()
                && p.doppler_rate_hz_per_s.is_finite();
            if !finite {
                return Err(Error::Config(format!("path {i} has non-finite parameters")));
            }
        }
        Ok(())
    }
}

/// Hann-windowed sinc evaluated at an offset of `x` samples, zero for
/// `|x| > SINC_HALF_WIDTH + 1`. Exactly 1 at 0 and 0 at other integers.
pub fn windowed_sinc(x: f64) -> f64 {
    let half = (SINC_HALF_WIDTH + 1) as f64;
    if x.abs() >= half {
        return 0.0;
    }
    if x == 0.0 {
        return 1.0;
    }
    if x.fract() == 0.0 {
        return 0.0;
    }
    let px = PI * x;
    let w = (PI * x / (2.0 * half)).cos().powi(2);
    px.sin() / px * w
}

/// Samples `h_{u,u'}(t, tau) = sum_p g_p w(tau - d_p) exp(j 2 pi (f_p t + r_p t^2 / 2))`
/// with `t` in seconds and `w` the windowed sinc, then shifts into a kernel.
/// Interpolation taps that would fall before `tau = 0` are dropped.
pub fn kernel_from_paths(
    paths: &PhysicalPathSet,
    dims: KernelDims,
    sample_period: f64,
) -> Result<ChannelKernel> {
    if paths.n_rx != dims.n_rx_space || paths.n_tx != dims.n_tx_space {
        return Err(Error::Config(format!(
            "path set covers {}x{} links, grid is {}x{}",
            paths.n_rx, paths.n_tx, dims.n_rx_space, dims.n_tx_space
        )));
    }
    paths.validate(dims.n_tx_time, sample_period)?;
    let max_delay = paths.max_delay() / sample_period;
    let n_taps = ((max_delay.floor() as usize) + SINC_HALF_WIDTH + 1).min(dims.n_tx_time);

    let h = ImpulseResponse::from_fn(
        dims.n_rx_space,
        dims.n_tx_space,
        dims.n_rx_time,
        n_taps,
        |u, up, t, tau| {
            let time = t as f64 * sample_period;
            paths
                .link(u, up)
                .iter()
                .map(|p| {
                    let w = windowed_sinc(tau as f64 - p.delay_s / sample_period);
                    if w == 0.0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let phase = 2.0
                        * PI
                        * (p.doppler_hz * time + 0.5 * p.doppler_rate_hz_per_s * time * time);
                    p.gain * Complex64::from_polar(w, phase)
                })
                .sum()
        },
    );
    kernel_from_impulse_response(&h, dims, sample_period)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(delay_s: f64, doppler_hz: f64, rate: f64) -> Path {
        Path {
            delay_s,
            gain: Complex64::new(1.0, 0.0),
            doppler_hz,
            doppler_rate_hz_per_s: rate,
        }
    }

    #[test]
    fn sinc_is_interpolating() {
        assert_eq!(windowed_sinc(0.0), 1.0);
        for k in 1..8 {
            assert!(windowed_sinc(k as f64).abs() < 1e-16);
            assert!(windowed_sinc(-(k as f64)).abs() < 1e-16);
        }
        assert_eq!(windowed_sinc(5.0), 0.0);
        assert!(windowed_sinc(0.5) > 0.5);
    }

    #[test]
    fn zero_delay_path_is_identity() {
        let set = PhysicalPathSet::single_link(vec![path(0.0, 0.0, 0.0)]);
        let k = kernel_from_paths(&set, KernelDims::square(1, 1, 6), 1e-6).unwrap();
        assert_eq!(k, ChannelKernel::identity(1, 6, 1e-6).unwrap());
    }

    #[test]
    fn constant_doppler_gives_phase_ramp() {
        let ts = 1e-4;
        let nu = 350.0;
        let set = PhysicalPathSet::single_link(vec![path(0.0, nu, 0.0)]);
        let k = kernel_from_paths(&set, KernelDims::square(1, 1, 16), ts).unwrap();
        for t in 0..16 {
            let want = Complex64::from_polar(1.0, 2.0 * PI * nu * t as f64 * ts);
            assert!((k.get(0, t, 0, t) - want).norm() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn delay_outside_grid_is_rejected() {
        let set = PhysicalPathSet::single_link(vec![path(10.0, 0.0, 0.0)]);
        assert!(matches!(
            kernel_from_paths(&set, KernelDims::square(1, 1, 4), 1.0),
            Err(Error::Config(_))
        ));
        let set = PhysicalPathSet::single_link(vec![path(-1.0, 0.0, 0.0)]);
        assert!(kernel_from_paths(&set, KernelDims::square(1, 1, 4), 1.0).is_err());
    }

    #[test]
    fn stationary_paths_give_time_invariant_response() {
        let set = PhysicalPathSet::single_link(vec![path(0.0, 0.0, 0.0), path(1.3e-6, 0.0, 0.0)]);
        let k = kernel_from_paths(&set, KernelDims::square(1, 1, 24), 1e-6).unwrap();
        // Compare taps once the full response fits inside the window.
        for tau in 0..7 {
            let first = k.impulse_response(0, 0, 10, tau);
            for t in 10..24 {
                assert!((k.impulse_response(0, 0, t, tau) - first).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_gives_unit_link_power() {
        let mut set = PhysicalPathSet::single_link(vec![path(0.0, 0.0, 0.0), path(1.0, 0.0, 0.0)]);
        set.normalize();
        let p: f64 = set.link(0, 0).iter().map(|p| p.gain.norm_sqr()).sum();
        assert!((p - 1.0).abs() < 1e-15);
        assert!(set.normalized);
    }
}
