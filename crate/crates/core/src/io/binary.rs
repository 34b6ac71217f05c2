//! Little-endian kernel (`HGK1`) and eigensystem (`HGE1`) files.
//!
//! ```text
//! HGK1  magic[4] U T U' T' (u32)  sample_period (f64)  entries (re, im f64)
//! HGE1  magic[4] N n_kept U T U' T' (u32)  sigmas[N] (f64)
//!       psi rows[N x U*T] (re, im f64)  phi rows[N x U'*T'] (re, im f64)
//! ```
//!
//! Kernel entries are row-major with `u` slowest and `t'` fastest.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::chankernel::{ChannelKernel, KernelDims};
use crate::error::{Error, Result};
use crate::hogmt::EigenSystem;

pub const KERNEL_MAGIC: &[u8; 4] = b"HGK1";
pub const EIGEN_MAGIC: &[u8; 4] = b"HGE1";

fn push_u32(out: &mut Vec<u8>, x: usize) -> Result<()> {
    let v = u32::try_from(x).map_err(|_| Error::Format(format!("dimension {x} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_complex(out: &mut Vec<u8>, data: &[Complex64]) {
    for z in data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

fn push_dims(out: &mut Vec<u8>, d: KernelDims) -> Result<()> {
    for x in [d.n_rx_space, d.n_rx_time, d.n_tx_space, d.n_tx_time] {
        push_u32(out, x)?;
    }
    Ok(())
}

pub fn kernel_to_bytes(k: &ChannelKernel) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(28 + 16 * k.as_slice().len());
    out.extend_from_slice(KERNEL_MAGIC);
    push_dims(&mut out, k.dims())?;
    out.extend_from_slice(&k.sample_period().to_le_bytes());
    push_complex(&mut out, k.as_slice());
    Ok(out)
}

pub fn eigensystem_to_bytes(e: &EigenSystem) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(EIGEN_MAGIC);
    push_u32(&mut out, e.n_total())?;
    push_u32(&mut out, e.n_kept())?;
    push_dims(&mut out, e.dims())?;
    for s in e.sigmas() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    push_complex(&mut out, e.psi_rows());
    push_complex(&mut out, e.phi_rows());
    Ok(out)
}

/// Bounds-checked little-endian reader.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!(
                "file truncated while reading {what}: need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len().saturating_sub(self.pos)
            ))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != want {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn dims(&mut self) -> Result<KernelDims> {
        let u = self.u32("U")?;
        let t = self.u32("T")?;
        let up = self.u32("U'")?;
        let tp = self.u32("T'")?;
        Ok(KernelDims::new(u, t, up, tp))
    }

    /// Checks that `count` entries of `width` bytes remain before reading,
    /// so a corrupt header cannot trigger a huge allocation.
    fn reserve(&self, count: usize, width: usize, what: &str) -> Result<()> {
        let need = count
            .checked_mul(width)
            .ok_or_else(|| Error::Format(format!("{what} size overflows")))?;
        let have = self.buf.len() - self.pos;
        if need > have {
            return Err(Error::Format(format!(
                "file truncated: {what} needs {need} bytes, {have} remain"
            )));
        }
        Ok(())
    }

    fn complex(&mut self, count: usize, what: &str) -> Result<Vec<Complex64>> {
        self.reserve(count, 16, what)?;
        (0..count)
            .map(|_| Ok(Complex64::new(self.f64(what)?, self.f64(what)?)))
            .collect()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn checked_len(d: KernelDims) -> Result<(usize, usize, usize)> {
    let overflow = || Error::Format(format!("dimensions {d:?} overflow"));
    let rx = d.n_rx_space.checked_mul(d.n_rx_time).ok_or_else(overflow)?;
    let tx = d.n_tx_space.checked_mul(d.n_tx_time).ok_or_else(overflow)?;
    let all = rx.checked_mul(tx).ok_or_else(overflow)?;
    if all == 0 {
        return Err(Error::Format(format!("zero-sized dimensions {d:?}")));
    }
    Ok((rx, tx, all))
}

pub fn kernel_from_bytes(buf: &[u8]) -> Result<ChannelKernel> {
    let mut r = Reader { buf, pos: 0 };
    r.magic(KERNEL_MAGIC)?;
    let dims = r.dims()?;
    let (_, _, len) = checked_len(dims)?;
    let ts = r.f64("sample period")?;
    let data = r.complex(len, "kernel entries")?;
    r.finish()?;
    ChannelKernel::new(dims, ts, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn eigensystem_from_bytes(buf: &[u8]) -> Result<EigenSystem> {
    let mut r = Reader { buf, pos: 0 };
    r.magic(EIGEN_MAGIC)?;
    let n_total = r.u32("N")?;
    let n_kept = r.u32("n_kept")?;
    let dims = r.dims()?;
    let (rx, tx, _) = checked_len(dims)?;
    if n_total != rx.min(tx) {
        return Err(Error::Format(format!(
            "N = {n_total} does not match min(U*T, U'*T') = {}",
            rx.min(tx)
        )));
    }
    r.reserve(n_total, 8, "singular values")?;
    let sigmas = (0..n_total)
        .map(|_| r.f64("singular values"))
        .collect::<Result<Vec<_>>>()?;
    let psi_len = n_total.checked_mul(rx).ok_or_else(|| Error::Format("psi size overflows".into()))?;
    let phi_len = n_total.checked_mul(tx).ok_or_else(|| Error::Format("phi size overflows".into()))?;
    let psi = r.complex(psi_len, "psi rows")?;
    let phi = r.complex(phi_len, "phi rows")?;
    r.finish()?;
    EigenSystem::from_parts(dims, sigmas, psi, phi, n_kept).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_kernel(k: &ChannelKernel, path: &Path) -> Result<()> {
    super::write_atomic(path, &kernel_to_bytes(k)?)
}

pub fn load_kernel(path: &Path) -> Result<ChannelKernel> {
    kernel_from_bytes(&read(path)?)
}

pub fn save_eigensystem(e: &EigenSystem, path: &Path) -> Result<()> {
    super::write_atomic(path, &eigensystem_to_bytes(e)?)
}

pub fn load_eigensystem(path: &Path) -> Result<EigenSystem> {
    eigensystem_from_bytes(&read(path)?)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
