//! Parametric generators for kernel realizations.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::paths::{kernel_from_paths, Path, PhysicalPathSet};
use super::{complex_gaussian, ChannelKernel, KernelDims};
use crate::error::{Error, Result};

/// Extended Vehicular A tap delays (3GPP TS 36.104, Annex B.2).
pub const EVA_DELAYS_NS: [f64; 9] = [0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0];
/// Extended Vehicular A relative tap powers.
pub const EVA_POWERS_DB: [f64; 9] = [0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9];

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedRange {
    pub min_kmh: f64,
    pub max_kmh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DopplerSpec {
    /// Doppler `f_max cos(theta)` with a uniform arrival angle, `f_max` from the
    /// receiver's speed, plus a uniform drift in `[-max_rate, max_rate]`.
    Jakes,
    Fixed { hz: f64, rate_hz_per_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSpec {
    pub delay_s: f64,
    pub power_db: f64,
    #[serde(default = "jakes")]
    pub doppler: DopplerSpec,
}

fn jakes() -> DopplerSpec {
    DopplerSpec::Jakes
}

/// Independent Rayleigh-faded tapped delay line on every `(u, u')` link.
///
/// Receive-side space indices are grouped into users of `antennas_per_user`
/// antennas; antennas of one user share its speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TappedDelayLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub n_users: usize,
    pub antennas_per_user: usize,
    pub n_tx_space: usize,
    pub n_time: usize,
    /// Extra transmit samples before the receive window (`T' = T + guard`).
    #[serde(default)]
    pub tx_guard: usize,
    pub sample_period_s: f64,
    pub carrier_hz: f64,
    pub speed: SpeedRange,
    pub max_doppler_rate_hz_per_s: f64,
    /// Scale the power-delay profile to unit mean link power.
    pub normalize: bool,
    pub taps: Vec<TapSpec>,
}

impl TappedDelayLine {
    /// Desk-scale multi-user downlink: 10 transmit antennas serving 5 users
    /// with 2 antennas each at 120 +/- 18 km/h, 32 time samples.
    pub fn mu_mimo_ns() -> Self {
        Self {
            preset: Some("mu-mimo-ns".into()),
            n_users: 5,
            antennas_per_user: 2,
            n_tx_space: 10,
            n_time: 32,
            tx_guard: 8,
            sample_period_s: 1.0 / 1.92e6,
            carrier_hz: 2.0e9,
            speed: SpeedRange {
                min_kmh: 102.0,
                max_kmh: 138.0,
            },
            max_doppler_rate_hz_per_s: 2.0e7,
            normalize: true,
            taps: eva_taps(),
        }
    }

    /// Single-link EVA channel at 100-150 km/h with drifting Doppler.
    pub fn eva_ns() -> Self {
        Self {
            preset: Some("eva-ns".into()),
            n_users: 1,
            antennas_per_user: 1,
            n_tx_space: 1,
            n_time: 128,
            tx_guard: 8,
            sample_period_s: 1.0 / 1.92e6,
            carrier_hz: 2.0e9,
            speed: SpeedRange {
                min_kmh: 100.0,
                max_kmh: 150.0,
            },
            max_doppler_rate_hz_per_s: 2.0e7,
            normalize: true,
            taps: eva_taps(),
        }
    }

    pub fn n_rx_space(&self) -> usize {
        self.n_users * self.antennas_per_user
    }

    pub fn dims(&self) -> KernelDims {
        KernelDims::new(
            self.n_rx_space(),
            self.n_time,
            self.n_tx_space,
            self.n_time + self.tx_guard,
        )
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_users == 0 || self.antennas_per_user == 0 || self.n_tx_space == 0 || self.n_time == 0 {
            v.push("kernel: n_users, antennas_per_user, n_tx_space and n_time must be >= 1".into());
        }
        if !(self.sample_period_s.is_finite() && self.sample_period_s > 0.0) {
            v.push(format!("kernel.sample_period_s must be positive, got {}", self.sample_period_s));
        }
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            v.push(format!("kernel.carrier_hz must be positive, got {}", self.carrier_hz));
        }
        let s = self.speed;
        if !(s.min_kmh >= 0.0 && s.max_kmh >= s.min_kmh && s.max_kmh.is_finite()) {
            v.push(format!(
                "kernel.speed must satisfy 0 <= min_kmh <= max_kmh, got [{}, {}]",
                s.min_kmh, s.max_kmh
            ));
        }
        if !(self.max_doppler_rate_hz_per_s >= 0.0 && self.max_doppler_rate_hz_per_s.is_finite()) {
            v.push("kernel.max_doppler_rate_hz_per_s must be finite and >= 0".into());
        }
        if self.taps.is_empty() {
            v.push("kernel.taps must list at least one tap".into());
        }
        let span = (self.n_time + self.tx_guard) as f64 * self.sample_period_s;
        for (i, tap) in self.taps.iter().enumerate() {
            if !(tap.delay_s >= 0.0 && tap.delay_s < span) {
                v.push(format!(
                    "kernel.taps[{i}].delay_s = {} is outside [0, {span})",
                    tap.delay_s
                ));
            }
            if !tap.power_db.is_finite() {
                v.push(format!("kernel.taps[{i}].power_db must be finite"));
            }
        }
        v
    }

    /// Draws one set of path gains, Doppler shifts and Doppler rates.
    pub fn realize_paths<R: Rng + ?Sized>(&self, rng: &mut R) -> PhysicalPathSet {
        let linear: Vec<f64> = self.taps.iter().map(|t| 10f64.powf(t.power_db / 10.0)).collect();
        let total: f64 = linear.iter().sum();
        let scale = if self.normalize { 1.0 / total } else { 1.0 };

        let f_max: Vec<f64> = (0..self.n_users)
            .map(|_| {
                let kmh = if self.speed.max_kmh > self.speed.min_kmh {
                    rng.random_range(self.speed.min_kmh..=self.speed.max_kmh)
                } else {
                    self.speed.min_kmh
                };
                kmh / 3.6 / SPEED_OF_LIGHT * self.carrier_hz
            })
            .collect();

        let n_rx = self.n_rx_space();
        let mut links = Vec::with_capacity(n_rx * self.n_tx_space);
        for u in 0..n_rx {
            let fd = f_max[u / self.antennas_per_user];
            for _ in 0..self.n_tx_space {
                let link = self
                    .taps
                    .iter()
                    .zip(&linear)
                    .map(|(tap, p)| {
                        let gain = complex_gaussian(rng, p * scale);
                        let (doppler_hz, doppler_rate_hz_per_s) = match tap.doppler {
                            DopplerSpec::Jakes => {
                                let theta: f64 = rng.random_range(0.0..2.0 * PI);
                                let rate = if self.max_doppler_rate_hz_per_s > 0.0 {
                                    rng.random_range(-1.0..=1.0) * self.max_doppler_rate_hz_per_s
                                } else {
                                    0.0
                                };
                                (fd * theta.cos(), rate)
                            }
                            DopplerSpec::Fixed { hz, rate_hz_per_s } => (hz, rate_hz_per_s),
                        };
                        Path {
                            delay_s: tap.delay_s,
                            gain,
                            doppler_hz,
                            doppler_rate_hz_per_s,
                        }
                    })
                    .collect();
                links.push(link);
            }
        }
        PhysicalPathSet {
            n_rx,
            n_tx: self.n_tx_space,
            links,
            normalized: self.normalize,
        }
    }

    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelKernel> {
        let errors = self.validate();
        if !errors.is_empty() {
            return Err(Error::Config(errors.join("; ")));
        }
        let paths = self.realize_paths(rng);
        kernel_from_paths(&paths, self.dims(), self.sample_period_s)
    }
}

fn eva_taps() -> Vec<TapSpec> {
    EVA_DELAYS_NS
        .iter()
        .zip(EVA_POWERS_DB)
        .map(|(d, p)| TapSpec {
            delay_s: d * 1e-9,
            power_db: p,
            doppler: DopplerSpec::Jakes,
        })
        .collect()
}

/// Source of kernel realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelModel {
    /// Deterministic identity kernel; the channel reduces to AWGN.
    Identity {
        n_space: usize,
        n_time: usize,
        #[serde(default = "unit_period")]
        sample_period_s: f64,
    },
    Tdl(TappedDelayLine),
}

fn unit_period() -> f64 {
    1.0
}

impl KernelModel {
    /// Resolves a preset name (`identity`, `mu-mimo-ns`, `eva-ns`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "mu-mimo-ns" => Some(Self::Tdl(TappedDelayLine::mu_mimo_ns())),
            "eva-ns" => Some(Self::Tdl(TappedDelayLine::eva_ns())),
            "identity" => Some(Self::Identity {
                n_space: 1,
                n_time: 64,
                sample_period_s: 1.0,
            }),
            _ => None,
        }
    }

    pub fn dims(&self) -> KernelDims {
        match self {
            Self::Identity { n_space, n_time, .. } => KernelDims::square(*n_space, *n_space, *n_time),
            Self::Tdl(m) => m.dims(),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        match self {
            Self::Identity {
                n_space,
                n_time,
                sample_period_s,
            } => {
                let mut v = Vec::new();
                if *n_space == 0 || *n_time == 0 {
                    v.push("kernel: identity dimensions must be >= 1".into());
                }
                if !(sample_period_s.is_finite() && *sample_period_s > 0.0) {
                    v.push("kernel.sample_period_s must be positive".into());
                }
                v
            }
            Self::Tdl(m) => m.validate(),
        }
    }

    /// True when every realization is the same kernel.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::Identity { .. })
    }

    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelKernel> {
        match self {
            Self::Identity {
                n_space,
                n_time,
                sample_period_s,
            } => ChannelKernel::identity(*n_space, *n_time, *sample_period_s),
            Self::Tdl(m) => m.realize(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eva_profile_realization_is_normalized_and_causal() {
        let model = TappedDelayLine::eva_ns();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths = model.realize_paths(&mut rng);
        assert!(paths.normalized);
        assert_eq!(paths.links.len(), 1);
        // Doppler bounded by the fastest speed.
        let fmax = 150.0 / 3.6 / SPEED_OF_LIGHT * model.carrier_hz;
        assert!(paths.links[0].iter().all(|p| p.doppler_hz.abs() <= fmax + 1e-9));

        let k = model.realize(&mut rng).unwrap();
        let d = k.dims();
        let lead = d.tx_lead();
        for t in 0..d.n_rx_time {
            for tp in t + lead + 1..d.n_tx_time {
                assert_eq!(k.get(0, t, 0, tp), num_complex::Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn mean_link_power_is_unity() {
        // Average tap energy of the steady-state rows over many realizations.
        let model = TappedDelayLine {
            max_doppler_rate_hz_per_s: 0.0,
            n_time: 16,
            ..TappedDelayLine::eva_ns()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4000;
        let mut acc = 0.0;
        for _ in 0..n {
            let paths = model.realize_paths(&mut rng);
            acc += paths.links[0].iter().map(|p| p.gain.norm_sqr()).sum::<f64>();
        }
        let mean = acc / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean power {mean}");
    }

    #[test]
    fn mu_mimo_preset_dims() {
        let m = KernelModel::preset("mu-mimo-ns").unwrap();
        assert_eq!(m.dims(), KernelDims::new(10, 32, 10, 40));
        assert!(m.validate().is_empty());
    }

    #[test]
    fn realization_is_seed_deterministic() {
        let m = KernelModel::preset("eva-ns").unwrap();
        let a = m.realize(&mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = m.realize(&mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_tap_delay_reported() {
        let mut m = TappedDelayLine::eva_ns();
        m.taps[0].delay_s = 1.0;
        assert_eq!(m.validate().len(), 1);
        assert!(m.realize(&mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
