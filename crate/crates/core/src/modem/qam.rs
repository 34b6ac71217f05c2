//! Gray-coded square QAM at unit average symbol energy.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constellation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
    #[serde(rename = "64qam")]
    Qam64,
}

impl Constellation {
    pub fn order(self) -> usize {
        match self {
            Constellation::Qpsk => 4,
            Constellation::Qam16 => 16,
            Constellation::Qam64 => 64,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        self.order().trailing_zeros() as usize
    }

    /// Levels per dimension.
    pub fn side(self) -> usize {
        1 << (self.bits_per_symbol() / 2)
    }

    /// Half the minimum distance; levels sit at odd multiples of it.
    pub fn scale(self) -> f64 {
        let m = self.order() as f64;
        (3.0 / (2.0 * (m - 1.0))).sqrt()
    }

    pub fn name(self) -> &'static str {
        match self {
            Constellation::Qpsk => "qpsk",
            Constellation::Qam16 => "16qam",
            Constellation::Qam64 => "64qam",
        }
    }

    fn level(self, index: usize) -> f64 {
        (2.0 * index as f64 - (self.side() as f64 - 1.0)) * self.scale()
    }

    fn slice(self, x: f64) -> usize {
        let side = self.side() as f64;
        let i = ((x / self.scale() + side - 1.0) / 2.0).round();
        i.clamp(0.0, side - 1.0) as usize
    }

    /// Point carrying `label`, whose high bits select the in-phase level.
    pub fn point(self, label: usize) -> Complex64 {
        let half = self.bits_per_symbol() / 2;
        let mask = (1 << half) - 1;
        let i = gray_decode(label >> half);
        let q = gray_decode(label & mask);
        Complex64::new(self.level(i), self.level(q))
    }

    /// Label of the nearest constellation point.
    pub fn decide(self, z: Complex64) -> usize {
        let half = self.bits_per_symbol() / 2;
        let i = self.slice(z.re);
        let q = self.slice(z.im);
        (gray_encode(i) << half) | gray_encode(q)
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" | "4qam" => Ok(Constellation::Qpsk),
            "16qam" => Ok(Constellation::Qam16),
            "64qam" => Ok(Constellation::Qam64),
            other => Err(Error::Config(format!(
                "unknown constellation '{other}', expected qpsk, 16qam or 64qam"
            ))),
        }
    }
}

fn gray_encode(i: usize) -> usize {
    i ^ (i >> 1)
}

fn gray_decode(g: usize) -> usize {
    let mut i = g;
    let mut shift = g >> 1;
    while shift != 0 {
        i ^= shift;
        shift >>= 1;
    }
    i
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub constellation: Constellation,
    pub symbols: Vec<Complex64>,
    /// One bit per byte, MSB of each label first.
    pub bits: Vec<u8>,
    pub gray_coded: bool,
}

impl SymbolFrame {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

pub fn qam_map(bits: &[u8], constellation: Constellation) -> Result<SymbolFrame> {
    let k = constellation.bits_per_symbol();
    if bits.len() % k != 0 {
        return Err(Error::Dimension(format!(
            "{} bits do not fill whole {constellation} symbols of {k} bits",
            bits.len()
        )));
    }
    let symbols = bits
        .chunks(k)
        .map(|chunk| {
            let label = chunk.iter().fold(0usize, |acc, b| (acc << 1) | (*b & 1) as usize);
            constellation.point(label)
        })
        .collect();
    Ok(SymbolFrame {
        constellation,
        symbols,
        bits: bits.to_vec(),
        gray_coded: true,
    })
}

/// Hard minimum-distance decisions, per dimension for square QAM.
pub fn qam_demap(symbols: &[Complex64], constellation: Constellation) -> Vec<u8> {
    let k = constellation.bits_per_symbol();
    let mut bits = Vec::with_capacity(symbols.len() * k);
    for z in symbols {
        let label = constellation.decide(*z);
        for b in (0..k).rev() {
            bits.push(((label >> b) & 1) as u8);
        }
    }
    bits
}

pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random::<bool>() as u8).collect()
}

pub fn count_bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Exact bit error rate of Gray square QAM in AWGN at `es_n0` (linear),
/// enumerating every transmitted level and decision region per dimension.
pub fn awgn_ber(constellation: Constellation, es_n0: f64) -> f64 {
    let side = constellation.side();
    let bits_per_dim = constellation.bits_per_symbol() / 2;
    let sigma = (0.5 / es_n0).sqrt();
    let d = constellation.scale();
    let mut weighted = 0.0;
    for i in 0..side {
        let x = constellation.level(i);
        for j in 0..side {
            if i == j {
                continue;
            }
            // Region j spans [level(j) - d, level(j) + d], open at the ends.
            let lo = if j == 0 { f64::NEG_INFINITY } else { constellation.level(j) - d };
            let hi = if j == side - 1 { f64::INFINITY } else { constellation.level(j) + d };
            let p = tail(lo - x, sigma) - tail(hi - x, sigma);
            let flips = (gray_encode(i) ^ gray_encode(j)).count_ones() as f64;
            weighted += p * flips;
        }
    }
    weighted / (side as f64 * bits_per_dim as f64)
}

fn tail(offset: f64, sigma: f64) -> f64 {
    if offset == f64::NEG_INFINITY {
        1.0
    } else if offset == f64::INFINITY {
        0.0
    } else {
        q_function(offset / sigma)
    }
}

/// Symbol error rate of square QAM in AWGN at `es_n0` (linear).
pub fn awgn_ser(constellation: Constellation, es_n0: f64) -> f64 {
    let side = constellation.side() as f64;
    let sigma = (0.5 / es_n0).sqrt();
    let p = 2.0 * (1.0 - 1.0 / side) * q_function(constellation.scale() / sigma);
    1.0 - (1.0 - p).powi(2)
}
