//! Decomposition of a 4-D kernel into dual 2-D eigenfunction pairs.
//!
//! On the discrete grid the kernel is a linear map between the flattened
//! transmit domain (`u'*T' + t'`) and the flattened receive domain
//! (`u*T + t`). Its singular triples give
//!
//! ```text
//! k(u,t; u',t') = sum_n sigma_n psi_n(u,t) phi_n(u',t')
//! sum_{u',t'} k(u,t; u',t') conj(phi_n(u',t')) = sigma_n psi_n(u,t)
//! ```
//!
//! with `psi_n` the left singular vectors and `phi_n` the *conjugated* right
//! singular vectors, so that sending `conj(phi_n)` through the channel
//! delivers `sigma_n psi_n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chankernel::{ChannelKernel, KernelDims};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Index mapping from a `(space, time)` grid to a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlattenOrder {
    /// `index = space * n_time + time`
    SpaceMajor,
}

/// How many eigenfunction pairs to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "fraction", rename_all = "kebab-case")]
pub enum Truncation {
    /// Keep `ceil(fraction * N)` pairs with the largest singular values.
    Count(f64),
    /// Keep the shortest prefix carrying `fraction` of `sum sigma^2`.
    Energy(f64),
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Count(1.0)
    }
}

impl Truncation {
    pub fn full() -> Self {
        Truncation::Count(1.0)
    }

    pub fn fraction(&self) -> f64 {
        match *self {
            Truncation::Count(f) | Truncation::Energy(f) => f,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fraction();
        if f > 0.0 && f <= 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "truncation fraction must lie in (0, 1], got {f}"
            )))
        }
    }

    /// Number of pairs kept out of `sigmas` (sorted descending).
    pub fn kept_count(&self, sigmas: &[f64]) -> usize {
        let n = sigmas.len();
        if n == 0 {
            return 0;
        }
        match *self {
            Truncation::Count(rho) => {
                let x = rho * n as f64;
                let r = x.round();
                // 0.7 * 10 must keep 7, not 8.
                let k = if (x - r).abs() <= 1e-9 * n as f64 { r } else { x.ceil() };
                (k as usize).clamp(1, n)
            }
            Truncation::Energy(eta) => {
                let total: f64 = sigmas.iter().map(|s| s * s).sum();
                let target = eta * total * (1.0 - 1e-12);
                let mut acc = 0.0;
                for (i, s) in sigmas.iter().enumerate() {
                    acc += s * s;
                    if acc >= target {
                        return i + 1;
                    }
                }
                n
            }
        }
    }

    /// Parses `count:0.99`, `energy:0.95` or `full`.
    pub fn parse(s: &str) -> Result<Self> {
        let t = match s.split_once(':') {
            None if s == "full" => Truncation::full(),
            Some(("count", f)) => Truncation::Count(parse_fraction(f)?),
            Some(("energy", f)) => Truncation::Energy(parse_fraction(f)?),
            _ => {
                return Err(Error::Config(format!(
                    "truncation must be `full`, `count:<fraction>` or `energy:<fraction>`, got `{s}`"
                )))
            }
        };
        t.validate()?;
        Ok(t)
    }
}

impl std::fmt::Display for Truncation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Truncation::Count(x) => write!(f, "count:{x}"),
            Truncation::Energy(x) => write!(f, "energy:{x}"),
        }
    }
}

fn parse_fraction(f: &str) -> Result<f64> {
    f.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid fraction `{f}`")))
}

/// Ordered singular triples `(sigma_n, psi_n, phi_n)` of a kernel.
///
/// All `n_total` triples are stored; the first `n_kept` are the ones in use.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    dims: KernelDims,
    sigmas: Vec<f64>,
    /// `n_total` rows of length `U*T`.
    psi: Vec<Complex64>,
    /// `n_total` rows of length `U'*T'`.
    phi: Vec<Complex64>,
    n_kept: usize,
    flatten_order: FlattenOrder,
}

impl EigenSystem {
    pub fn from_parts(
        dims: KernelDims,
        sigmas: Vec<f64>,
        psi: Vec<Complex64>,
        phi: Vec<Complex64>,
        n_kept: usize,
    ) -> Result<Self> {
        let n_total = dims.rx_len().min(dims.tx_len());
        if sigmas.len() != n_total
            || psi.len() != n_total * dims.rx_len()
            || phi.len() != n_total * dims.tx_len()
        {
            return Err(Error::Dimension(format!(
                "eigensystem arrays do not match N = {n_total} for {dims:?}"
            )));
        }
        if n_kept > n_total {
            return Err(Error::Dimension(format!("n_kept {n_kept} exceeds N = {n_total}")));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || sigmas.windows(2).any(|w| w[0] < w[1])
        {
            return Err(Error::Numeric(
                "singular values must be finite, non-negative and descending".into(),
            ));
        }
        if psi.iter().chain(&phi).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("eigenfunctions contain non-finite values".into()));
        }
        Ok(Self {
            dims,
            sigmas,
            psi,
            phi,
            n_kept,
            flatten_order: FlattenOrder::SpaceMajor,
        })
    }

    pub fn dims(&self) -> KernelDims {
        self.dims
    }

    pub fn n_total(&self) -> usize {
        self.sigmas.len()
    }

    pub fn n_kept(&self) -> usize {
        self.n_kept
    }

    pub fn flatten_order(&self) -> FlattenOrder {
        self.flatten_order
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn kept_sigmas(&self) -> &[f64] {
        &self.sigmas[..self.n_kept]
    }

    pub fn sigma(&self, n: usize) -> f64 {
        self.sigmas[n]
    }

    /// Receive-side eigenfunction `psi_n`, flattened `u*T + t`.
    pub fn psi(&self, n: usize) -> &[Complex64] {
        let l = self.dims.rx_len();
        &self.psi[n * l..(n + 1) * l]
    }

    /// Transmit-side eigenfunction `phi_n`, flattened `u'*T' + t'`.
    pub fn phi(&self, n: usize) -> &[Complex64] {
        let l = self.dims.tx_len();
        &self.phi[n * l..(n + 1) * l]
    }

    pub fn psi_rows(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn phi_rows(&self) -> &[Complex64] {
        &self.phi
    }

    /// Same triples with a different kept count.
    pub fn truncated(&self, keep: Truncation) -> Result<Self> {
        keep.validate()?;
        let mut out = self.clone();
        out.n_kept = keep.kept_count(&self.sigmas);
        Ok(out)
    }

    /// Kept `psi_n` as the columns of a `U*T x n_kept` matrix.
    pub fn psi_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.dims.rx_len(), self.n_kept, |r, n| self.psi(n)[r])
    }

    /// Kept `phi_n` as the columns of a `U'*T' x n_kept` matrix.
    pub fn phi_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.dims.tx_len(), self.n_kept, |r, n| self.phi(n)[r])
    }

    /// `sum_{kept} sigma_n psi_n conj(phi_n)^H`, which equals
    /// `sum sigma_n psi_n phi_n^T` on the unfolded grid.
    pub fn reconstruct(&self) -> CMatrix {
        let mut psi = self.psi_matrix();
        for n in 0..self.n_kept {
            psi.column_mut(n).scale_mut(self.sigmas[n]);
        }
        psi * self.phi_matrix().transpose()
    }

    pub fn dropped_energy(&self) -> f64 {
        self.sigmas[self.n_kept..].iter().map(|s| s * s).sum()
    }

    /// Largest deviation from identity over the kept `psi` and `phi` Gram
    /// matrices.
    pub fn orthonormality_defect(&self) -> f64 {
        linalg::gram_defect(&self.psi_matrix()).max(linalg::gram_defect(&self.phi_matrix()))
    }
}

/// `M[(u*T + t), (u'*T' + t')] = k[u,t,u',t']`.
pub fn unfold(kernel: &ChannelKernel) -> CMatrix {
    let d = kernel.dims();
    CMatrix::from_row_slice(d.rx_len(), d.tx_len(), kernel.as_slice())
}

/// Singular decomposition of the unfolded kernel, truncated per `keep`.
pub fn decompose(kernel: &ChannelKernel, keep: Truncation) -> Result<EigenSystem> {
    keep.validate()?;
    let m = unfold(kernel);
    let svd = linalg::svd(&m)?;
    let dims = kernel.dims();
    let n_total = svd.rank_k();
    let (rx, tx) = (dims.rx_len(), dims.tx_len());

    let mut psi = Vec::with_capacity(n_total * rx);
    let mut phi = Vec::with_capacity(n_total * tx);
    for n in 0..n_total {
        psi.extend(svd.u.column(n).iter().copied());
        phi.extend(svd.v.column(n).iter().map(|z| z.conj()));
    }
    let n_kept = keep.kept_count(&svd.sigma);
    EigenSystem::from_parts(dims, svd.sigma, psi, phi, n_kept)
}

/// `max_n ||M conj(phi_n) - sigma_n psi_n|| / max(sigma_n, eps)` over kept
/// pairs, with `eps = 1e-12 sigma_1`.
pub fn verify_duality(kernel: &ChannelKernel, eig: &EigenSystem) -> Result<f64> {
    if kernel.dims() != eig.dims() {
        return Err(Error::Dimension(format!(
            "kernel {:?} and eigensystem {:?} differ",
            kernel.dims(),
            eig.dims()
        )));
    }
    let d = kernel.dims();
    let floor = eig.sigmas.first().copied().unwrap_or(0.0) * 1e-12;
    let eps = if floor > 0.0 { floor } else { f64::MIN_POSITIVE };
    let rows = kernel.as_slice().chunks_exact(d.tx_len());
    let mut worst = 0.0f64;
    let conj_phi: Vec<Vec<Complex64>> = (0..eig.n_kept)
        .map(|n| eig.phi(n).iter().map(|z| z.conj()).collect())
        .collect();
    let mut resid = vec![0.0f64; eig.n_kept];
    for (r, row) in rows.enumerate() {
        for (n, cp) in conj_phi.iter().enumerate() {
            let y: Complex64 = row.iter().zip(cp).map(|(k, x)| k * x).sum();
            resid[n] += (y - eig.sigmas[n] * eig.psi(n)[r]).norm_sqr();
        }
    }
    for (n, r2) in resid.iter().enumerate() {
        worst = worst.max(r2.sqrt() / eig.sigmas[n].max(eps));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chankernel::{complex_gaussian, KernelDims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(dims: KernelDims, seed: u64) -> ChannelKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.len()).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        ChannelKernel::new(dims, 1.0, data).unwrap()
    }

    #[test]
    fn unfold_identity_and_single_user() {
        let k = ChannelKernel::identity(2, 3, 1.0).unwrap();
        assert_eq!(unfold(&k), CMatrix::identity(6, 6));
        let k = random_kernel(KernelDims::new(1, 3, 1, 4), 1);
        let m = unfold(&k);
        for t in 0..3 {
            for tp in 0..4 {
                assert_eq!(m[(t, tp)], k.get(0, t, 0, tp));
            }
        }
    }

    #[test]
    fn identity_decomposition() {
        let k = ChannelKernel::identity(1, 4, 1.0).unwrap();
        let e = decompose(&k, Truncation::full()).unwrap();
        assert_eq!(e.sigmas(), &[1.0; 4]);
        assert_eq!(e.n_kept(), 4);
        let err = linalg::frobenius(&(e.reconstruct() - unfold(&k)));
        assert!(err < 1e-14);
        assert!(verify_duality(&k, &e).unwrap() < 1e-14);
    }

    #[test]
    fn rank_one_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = KernelDims::square(2, 2, 3);
        let a: Vec<Complex64> = (0..6).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let b: Vec<Complex64> = (0..6).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let na = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nb = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut data = Vec::new();
        for x in &a {
            for y in &b {
                data.push(2.0 * x / na * y / nb);
            }
        }
        let k = ChannelKernel::new(dims, 1.0, data).unwrap();
        let e = decompose(&k, Truncation::full()).unwrap();
        assert!((e.sigma(0) - 2.0).abs() < 1e-13);
        assert!(e.sigmas()[1..].iter().all(|s| *s < 1e-13));
        assert!(e.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn truncation_policies() {
        assert_eq!(Truncation::Count(1.0).kept_count(&[3.0, 2.0, 1.0]), 3);
        assert_eq!(Truncation::Energy(0.8).kept_count(&[2.0, 1.0, 1.0]), 2);
        assert_eq!(Truncation::Energy(1.0).kept_count(&[2.0, 1.0, 1.0]), 3);
        assert_eq!(Truncation::Count(0.7).kept_count(&[1.0; 10]), 7);
        assert_eq!(Truncation::Count(0.99).kept_count(&[1.0; 320]), 317);
        assert_eq!(Truncation::Count(0.01).kept_count(&[1.0; 4]), 1);
        assert!(Truncation::Count(0.0).validate().is_err());
        assert!(Truncation::Energy(1.5).validate().is_err());
    }

    #[test]
    fn parse_truncation() {
        assert_eq!(Truncation::parse("count:0.99").unwrap(), Truncation::Count(0.99));
        assert_eq!(Truncation::parse("energy:0.5").unwrap(), Truncation::Energy(0.5));
        assert_eq!(Truncation::parse("full").unwrap(), Truncation::full());
        assert!(Truncation::parse("count:2").is_err());
        assert!(Truncation::parse("bogus").is_err());
        for t in [Truncation::Count(0.99), Truncation::Energy(0.3), Truncation::full()] {
            assert_eq!(Truncation::parse(&t.to_string()).unwrap(), t);
        }
    }

    #[test]
    fn duality_negative_control() {
        let k = random_kernel(KernelDims::square(2, 2, 3), 4);
        let e = decompose(&k, Truncation::full()).unwrap();
        assert!(verify_duality(&k, &e).unwrap() < 1e-12);
        let mut phi = e.phi_rows().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let v: Vec<Complex64> = (0..6).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (i, z) in v.iter().enumerate() {
            phi[i] = z / nv;
        }
        let broken = EigenSystem::from_parts(
            e.dims(),
            e.sigmas().to_vec(),
            e.psi_rows().to_vec(),
            phi,
            e.n_kept(),
        )
        .unwrap();
        assert!(verify_duality(&k, &broken).unwrap() > 0.1);
    }

    #[test]
    fn dims_mismatch() {
        let k = random_kernel(KernelDims::square(1, 1, 3), 4);
        let e = decompose(&ChannelKernel::identity(1, 4, 1.0).unwrap(), Truncation::full()).unwrap();
        assert!(verify_duality(&k, &e).is_err());
    }

    #[test]
    fn non_square_unfolding() {
        let k = random_kernel(KernelDims::new(2, 3, 1, 4), 8);
        let e = decompose(&k, Truncation::full()).unwrap();
        assert_eq!(e.n_total(), 4);
        let err = linalg::frobenius(&(e.reconstruct() - unfold(&k))) / linalg::frobenius(&unfold(&k));
        assert!(err < 1e-13);
    }
}
