//! Channel kinematics: thresholds and the diagonal momentum matrix `K(k)`.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Channel count and ordered threshold energies.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSystem {
    thresholds: Vec<f64>,
}

impl ChannelSystem {
    /// The first threshold must be exactly zero and the list nondecreasing.
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidInput("at least one channel is required".into()));
        }
        if thresholds[0] != 0.0 {
            return Err(Error::InvalidInput(format!("lowest threshold must be 0, got {}", thresholds[0])));
        }
        if thresholds.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidInput("thresholds must be finite".into()));
        }
        if thresholds.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("thresholds must be nondecreasing".into()));
        }
        Ok(Self { thresholds })
    }

    /// `n` channels with no thresholds.
    pub fn degenerate(n: usize) -> Self {
        Self { thresholds: alloc::vec![0.0; n.max(1)] }
    }

    pub fn n_channels(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Distinct positive thresholds as `(channel index, sqrt(eps))`, first
    /// occurrence of each value.
    pub fn threshold_momenta(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (j, &e) in self.thresholds.iter().enumerate() {
            if e > 0.0 && out.last().map_or(true, |&(i, _)| self.thresholds[i] != e) {
                out.push((j, e.sqrt()));
            }
        }
        out
    }

    pub fn highest_threshold(&self) -> f64 {
        *self.thresholds.last().unwrap()
    }

    pub fn momenta(&self, k: Complex64) -> Result<ChannelMomenta> {
        channel_momenta(self, k)
    }
}

/// Channel momenta `k_j` at an incident momentum on the physical sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMomenta {
    pub k: Complex64,
    pub kj: Vec<Complex64>,
}

impl ChannelMomenta {
    /// `k / k_j` for every channel; the `0/0` case of a zero-threshold channel
    /// at `k = 0` is the limit 1.
    pub fn derivative_weights(&self, thresholds: &[f64]) -> Result<Vec<Complex64>> {
        self.kj
            .iter()
            .zip(thresholds)
            .enumerate()
            .map(|(j, (&kj, &e))| {
                if kj == Complex64::new(0.0, 0.0) {
                    if e == 0.0 {
                        Ok(Complex64::new(1.0, 0.0))
                    } else {
                        Err(Error::AtThreshold { channel: j, k: self.k.re })
                    }
                } else {
                    Ok(self.k / kj)
                }
            })
            .collect()
    }

    pub fn k_matrix(&self) -> CMat {
        CMat::from_diag(&self.kj)
    }

    pub fn n_channels(&self) -> usize {
        self.kj.len()
    }
}

/// Evaluates `k_j` on the real axis or the positive imaginary axis.
pub fn channel_momenta(sys: &ChannelSystem, k: Complex64) -> Result<ChannelMomenta> {
    let kj = if k.im == 0.0 {
        let kr = k.re;
        let k2 = kr * kr;
        sys.thresholds
            .iter()
            .map(|&e| {
                if e == 0.0 {
                    Complex64::new(kr, 0.0)
                } else if k2 >= e {
                    Complex64::new(kr.signum() * (k2 - e).sqrt(), 0.0)
                } else {
                    Complex64::new(0.0, (e - k2).sqrt())
                }
            })
            .collect()
    } else if k.re == 0.0 && k.im > 0.0 {
        let kappa = k.im;
        sys.thresholds
            .iter()
            .map(|&e| if e == 0.0 { k } else { Complex64::new(0.0, (kappa * kappa + e).sqrt()) })
            .collect()
    } else {
        return Err(Error::OffAxisMomentum { re: k.re, im: k.im });
    };
    Ok(ChannelMomenta { k, kj })
}

/// `max |R^T K - K R|`, zero for exact reflection data.
pub fn reflection_symmetry_residual(r: &CMat, km: &ChannelMomenta) -> Result<f64> {
    let n = km.n_channels();
    if r.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: r.dim() });
    }
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let d = r[(j, i)] * km.kj[j] - km.kj[i] * r[(i, j)];
            worst = worst.max(d.norm());
        }
    }
    Ok(worst)
}
