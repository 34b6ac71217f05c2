//! Eigen-decomposition of non-stationary MU-MIMO channel kernels and the
//! waveforms built on it.
//!
//! * [`chankernel`]: 4-D kernels `k(u,t; u',t')`, synthetic realizations and
//!   channel application.
//! * [`hogmt`]: decomposition into dual orthonormal space-time
//!   eigenfunctions.
//! * [`precoder`]: eigenfunction precoding and per-slice baselines.
//! * [`modem`]: QAM, eigenwave multiplexing and OFDM/OTFS baselines.
//! * [`sim`]: deterministic Monte-Carlo BER sweeps.
//! * [`io`]: binary kernel/eigensystem files, configs and CSV reports.
//! * [`cli`]: the `hogmt` command-line tool.

pub mod chankernel;
pub mod cli;
pub mod error;
pub mod hogmt;
pub mod io;
pub mod linalg;
pub mod modem;
pub mod precoder;
pub mod sim;

pub use chankernel::{ChannelKernel, KernelDims, SpaceTimeSignal};
pub use error::{Error, Result};
pub use hogmt::{decompose, unfold, verify_duality, EigenSystem, Truncation};
