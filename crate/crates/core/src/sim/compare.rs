//! Multi-curve comparisons over a shared SNR grid and seed.

use super::{run_sweep_with_threads, SimConfig, SimResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub snr_grid_db: Vec<f64>,
    pub results: Vec<SimResult>,
}

impl Comparison {
    pub fn result(&self, label: &str) -> Option<&SimResult> {
        self.results.iter().find(|r| r.label == label)
    }

    pub fn ber(&self, label: &str, snr_db: f64) -> Option<f64> {
        self.result(label)?.point(snr_db).map(|p| p.ber)
    }

    /// Throughput of `num` over that of `den`, from the first SNR point.
    pub fn throughput_ratio(&self, num: &str, den: &str) -> Option<f64> {
        let a = self.result(num)?.points.first()?.throughput_bits_per_frame;
        let b = self.result(den)?.points.first()?.throughput_bits_per_frame;
        Some(a / b)
    }

    /// Whether `better` has strictly lower BER than `worse` at `snr_db`.
    pub fn lower_ber(&self, better: &str, worse: &str, snr_db: f64) -> Result<bool> {
        let get = |l: &str| {
            self.ber(l, snr_db)
                .ok_or_else(|| Error::Config(format!("no curve '{l}' at {snr_db} dB")))
        };
        Ok(get(better)? < get(worse)?)
    }

    /// Aligned text table with one BER column per curve.
    pub fn table(&self) -> String {
        crate::io::aligned_table(&self.results)
    }
}

/// Runs every configuration. All must share the SNR grid and seed, and
/// labels must be distinct.
pub fn compare_schemes(configs: &[SimConfig], threads: Option<usize>) -> Result<Comparison> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("comparison needs at least one configuration".into()))?;
    for c in &configs[1..] {
        if c.snr_grid_db != first.snr_grid_db {
            return Err(Error::Config(format!(
                "'{}' uses a different SNR grid from '{}'",
                c.label(),
                first.label()
            )));
        }
        if c.rng_seed != first.rng_seed {
            return Err(Error::Config(format!(
                "'{}' uses seed {} but '{}' uses {}",
                c.label(),
                c.rng_seed,
                first.label(),
                first.rng_seed
            )));
        }
    }
    let mut labels: Vec<String> = configs.iter().map(SimConfig::label).collect();
    labels.sort();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate curve label '{}'", w[0])));
    }
    let results = configs
        .iter()
        .map(|c| run_sweep_with_threads(c, threads))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        snr_grid_db: first.snr_grid_db.clone(),
        results,
    })
}
