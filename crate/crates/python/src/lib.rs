//! Python bindings: kernels, eigensystems, precoding, MEM and sweeps.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hogmt::chankernel::{apply_kernel, KernelModel};
use hogmt::modem::{self, Constellation};
use hogmt::precoder::{hogmt_precode, PrecodeOptions};
use hogmt::sim;

fn err(e: hogmt::Error) -> PyErr {
    if e.exit_code() == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn signal(n_space: usize, n_time: usize, data: Vec<Complex64>) -> PyResult<hogmt::SpaceTimeSignal> {
    hogmt::SpaceTimeSignal::new(n_space, n_time, data).map_err(err)
}

/// A 4-D channel kernel `k[u, t, u', t']`.
#[pyclass(name = "ChannelKernel", module = "hogmt_py")]
struct PyKernel(hogmt::ChannelKernel);

#[pymethods]
impl PyKernel {
    /// One realization of a preset (`identity`, `mu-mimo-ns`, `eva-ns`).
    #[staticmethod]
    #[pyo3(signature = (name, seed = 0))]
    fn preset(name: &str, seed: u64) -> PyResult<Self> {
        let m = KernelModel::preset(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset '{name}'")))?;
        m.realize(&mut ChaCha8Rng::seed_from_u64(seed)).map(Self).map_err(err)
    }

    #[staticmethod]
    fn identity(n_space: usize, n_time: usize) -> PyResult<Self> {
        hogmt::ChannelKernel::identity(n_space, n_time, 1.0).map(Self).map_err(err)
    }

    /// Builds a kernel from row-major entries.
    #[staticmethod]
    #[pyo3(signature = (dims, data, sample_period = 1.0))]
    fn from_entries(dims: (usize, usize, usize, usize), data: Vec<Complex64>, sample_period: f64) -> PyResult<Self> {
        let d = hogmt::KernelDims::new(dims.0, dims.1, dims.2, dims.3);
        hogmt::ChannelKernel::new(d, sample_period, data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        hogmt::io::load_kernel(&path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        hogmt::io::save_kernel(&self.0, &path).map_err(err)
    }

    /// `(U, T, U', T')`
    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.0.dims();
        (d.n_rx_space, d.n_rx_time, d.n_tx_space, d.n_tx_time)
    }

    fn entries(&self) -> Vec<Complex64> {
        self.0.as_slice().to_vec()
    }

    fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    /// Sends a transmit signal (`U' * T'` entries, time fastest) through the
    /// kernel with optional white noise.
    #[pyo3(signature = (tx, noise_variance = 0.0, seed = 0))]
    fn apply(&self, tx: Vec<Complex64>, noise_variance: f64, seed: u64) -> PyResult<Vec<Complex64>> {
        let d = self.0.dims();
        let tx = signal(d.n_tx_space, d.n_tx_time, tx)?;
        let r = apply_kernel(&self.0, &tx, noise_variance, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
        Ok(r.into_vec())
    }

    fn __repr__(&self) -> String {
        let (u, t, up, tp) = self.dims();
        format!("ChannelKernel(U={u}, T={t}, U'={up}, T'={tp})")
    }
}

/// Dual eigenfunctions and singular values of a kernel.
#[pyclass(name = "EigenSystem", module = "hogmt_py")]
struct PyEigen(hogmt::EigenSystem);

#[pymethods]
impl PyEigen {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        hogmt::io::load_eigensystem(&path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        hogmt::io::save_eigensystem(&self.0, &path).map_err(err)
    }

    #[getter]
    fn n_total(&self) -> usize {
        self.0.n_total()
    }

    #[getter]
    fn n_kept(&self) -> usize {
        self.0.n_kept()
    }

    #[getter]
    fn sigmas(&self) -> Vec<f64> {
        self.0.sigmas().to_vec()
    }

    fn psi(&self, n: usize) -> PyResult<Vec<Complex64>> {
        self.check(n)?;
        Ok(self.0.psi(n).to_vec())
    }

    fn phi(&self, n: usize) -> PyResult<Vec<Complex64>> {
        self.check(n)?;
        Ok(self.0.phi(n).to_vec())
    }

    fn truncated(&self, keep: &str) -> PyResult<Self> {
        let t = hogmt::Truncation::parse(keep).map_err(err)?;
        self.0.truncated(t).map(Self).map_err(err)
    }

    fn orthonormality_defect(&self) -> f64 {
        self.0.orthonormality_defect()
    }

    fn duality_residual(&self, kernel: &PyKernel) -> PyResult<f64> {
        hogmt::verify_duality(&kernel.0, &self.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("EigenSystem(N={}, kept={})", self.0.n_total(), self.0.n_kept())
    }
}

impl PyEigen {
    fn check(&self, n: usize) -> PyResult<()> {
        if n >= self.0.n_total() {
            return Err(PyValueError::new_err(format!("index {n} out of range 0..{}", self.0.n_total())));
        }
        Ok(())
    }
}

/// Decomposes a kernel; `keep` is `count:<fraction>` or `energy:<fraction>`.
#[pyfunction]
#[pyo3(signature = (kernel, keep = "count:1"))]
fn decompose(kernel: &PyKernel, keep: &str) -> PyResult<PyEigen> {
    let t = hogmt::Truncation::parse(keep).map_err(err)?;
    hogmt::decompose(&kernel.0, t).map(PyEigen).map_err(err)
}

/// Precodes a data signal on the receive grid and returns the transmit signal.
#[pyfunction]
#[pyo3(signature = (data, eig, normalize_power = false))]
fn precode(data: Vec<Complex64>, eig: &PyEigen, normalize_power: bool) -> PyResult<Vec<Complex64>> {
    let d = eig.0.dims();
    let s = signal(d.n_rx_space, d.n_rx_time, data)?;
    let opts = PrecodeOptions {
        normalize_power,
        ..PrecodeOptions::default()
    };
    hogmt_precode(&s, &eig.0, &opts).map(|p| p.tx_signal.into_vec()).map_err(err)
}

/// Eigenwave multiplexing: symbols on the strongest kept eigenfunctions.
#[pyfunction]
fn mem_modulate(symbols: Vec<Complex64>, eig: &PyEigen) -> PyResult<Vec<Complex64>> {
    let frame = modem::SymbolFrame {
        constellation: Constellation::Qam16,
        symbols,
        bits: Vec::new(),
        gray_coded: true,
    };
    modem::mem_modulate(&frame, &eig.0).map(|m| m.tx_signal.into_vec()).map_err(err)
}

/// Matched-filter outputs for the first `n_carriers` kept eigenfunctions.
#[pyfunction]
fn mem_demodulate(received: Vec<Complex64>, eig: &PyEigen, n_carriers: usize) -> PyResult<Vec<Complex64>> {
    let d = eig.0.dims();
    let r = signal(d.n_rx_space, d.n_rx_time, received)?;
    let carriers: Vec<usize> = (0..n_carriers).collect();
    modem::mem_demodulate(&r, &eig.0, &carriers).map_err(err)
}

#[pyfunction]
fn qam_map(bits: Vec<u8>, constellation: &str) -> PyResult<Vec<Complex64>> {
    let c: Constellation = constellation.parse().map_err(err)?;
    modem::qam_map(&bits, c).map(|f| f.symbols).map_err(err)
}

#[pyfunction]
fn qam_demap(symbols: Vec<Complex64>, constellation: &str) -> PyResult<Vec<u32>> {
    let c: Constellation = constellation.parse().map_err(err)?;
    Ok(modem::qam_demap(&symbols, c).into_iter().map(u32::from).collect())
}

/// Exact Gray square-QAM bit error rate in AWGN at `snr_db` (Es/N0).
#[pyfunction]
fn awgn_ber(constellation: &str, snr_db: f64) -> PyResult<f64> {
    let c: Constellation = constellation.parse().map_err(err)?;
    Ok(modem::awgn_ber(c, 10f64.powf(snr_db / 10.0)))
}

/// Runs every sweep of a TOML configuration and returns one dict per curve.
#[pyfunction]
#[pyo3(signature = (config_toml, threads = None))]
fn run_sweeps<'py>(py: Python<'py>, config_toml: &str, threads: Option<usize>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let doc = hogmt::io::parse_config(config_toml, "<python>").map_err(err)?;
    let cmp = py.detach(|| sim::compare_schemes(&doc.sweeps, threads)).map_err(err)?;
    cmp.results
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("label", &r.label)?;
            d.set_item("scheme", r.scheme.name())?;
            d.set_item("constellation", r.constellation.name())?;
            d.set_item("config_hash", &r.config_hash)?;
            d.set_item("seed", r.seed)?;
            d.set_item("snr_db", r.points.iter().map(|p| p.snr_db).collect::<Vec<_>>())?;
            d.set_item("bits", r.points.iter().map(|p| p.bits).collect::<Vec<_>>())?;
            d.set_item("bit_errors", r.points.iter().map(|p| p.bit_errors).collect::<Vec<_>>())?;
            d.set_item("ber", r.points.iter().map(|p| p.ber).collect::<Vec<_>>())?;
            d.set_item("se", r.points.iter().map(|p| p.standard_error).collect::<Vec<_>>())?;
            d.set_item(
                "throughput",
                r.points.iter().map(|p| p.throughput_bits_per_frame).collect::<Vec<_>>(),
            )?;
            d.set_item("csv", hogmt::io::result_csv(r))?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn hogmt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyEigen>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(precode, m)?)?;
    m.add_function(wrap_pyfunction!(mem_modulate, m)?)?;
    m.add_function(wrap_pyfunction!(mem_demodulate, m)?)?;
    m.add_function(wrap_pyfunction!(qam_map, m)?)?;
    m.add_function(wrap_pyfunction!(qam_demap, m)?)?;
    m.add_function(wrap_pyfunction!(awgn_ber, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweeps, m)?)?;
    Ok(())
}
