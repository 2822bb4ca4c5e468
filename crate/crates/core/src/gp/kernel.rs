use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Hyperparameters of the squared-exponential kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    length_scale: f64,
    signal_std: f64,
}

impl KernelParams {
    pub fn new(length_scale: f64, signal_std: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return invalid(format!("length scale must be positive, got {length_scale}"));
        }
        if !(signal_std > 0.0 && signal_std.is_finite()) {
            return invalid(format!("signal std must be positive, got {signal_std}"));
        }
        Ok(Self { length_scale, signal_std })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn signal_std(&self) -> f64 {
        self.signal_std
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_std * self.signal_std
    }
}

/// `σ_f² · exp(−(t − t')² / (2 l²))`
#[inline]
pub fn rbf_kernel(t: f64, t_prime: f64, p: &KernelParams) -> f64 {
    let d = (t - t_prime) / p.length_scale;
    p.signal_variance() * (-0.5 * d * d).exp()
}

pub(crate) fn gram(a: &[f64], b: &[f64], p: &KernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| rbf_kernel(a[i], b[j], p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let p = KernelParams::new(0.7, 1.0).unwrap();
        assert_eq!(rbf_kernel(3.2, 3.2, &p), 1.0);
        assert!((rbf_kernel(0.0, 0.7, &p) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((rbf_kernel(0.0, 0.7, &p) - 0.6065).abs() < 1e-4);
        assert_eq!(rbf_kernel(0.0, 1e6, &p), 0.0);
    }

    #[test]
    fn kernel_is_symmetric_and_stationary() {
        let p = KernelParams::new(0.3, 2.0).unwrap();
        assert_eq!(rbf_kernel(0.1, 0.9, &p), rbf_kernel(0.9, 0.1, &p));
        assert!((rbf_kernel(0.1, 0.4, &p) - rbf_kernel(5.1, 5.4, &p)).abs() < 1e-12);
        assert_eq!(rbf_kernel(1.0, 1.0, &p), 4.0);
    }

    #[test]
    fn params_validated() {
        assert!(KernelParams::new(0.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, -1.0).is_err());
        assert!(KernelParams::new(f64::NAN, 1.0).is_err());
    }
}
