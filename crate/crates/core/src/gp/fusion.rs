//! Product of independent Gaussian predictions with diagonal covariances.

use super::model::PosteriorPrediction;
use crate::error::{invalid, Error, Result};

/// Elementwise product `N(μᵈ, Σᵈ)·N(μᵛ, Σᵛ)`:
/// `μ = Σᵛ(Σᵈ+Σᵛ)⁻¹μᵈ + Σᵈ(Σᵈ+Σᵛ)⁻¹μᵛ`, `Σ = Σᵈ(Σᵈ+Σᵛ)⁻¹Σᵛ`.
///
/// An infinite variance marks an uninformative factor. A zero variance is a
/// hard constraint; two hard constraints must agree.
pub fn gaussian_product(a: &PosteriorPrediction, b: &PosteriorPrediction) -> Result<PosteriorPrediction> {
    if a.len() != b.len() {
        return invalid(format!("cannot fuse predictions of length {} and {}", a.len(), b.len()));
    }
    let mut mean = Vec::with_capacity(a.len());
    let mut var = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let (m, v) = product_1d(a.mean[i], a.var[i], b.mean[i], b.var[i])
            .map_err(|e| match e {
                Error::InconsistentConstraint(msg) => Error::InconsistentConstraint(format!("at index {i}: {msg}")),
                other => other,
            })?;
        mean.push(m);
        var.push(v);
    }
    Ok(PosteriorPrediction { mean, var, cov: None })
}

pub(crate) fn product_1d(ma: f64, va: f64, mb: f64, vb: f64) -> Result<(f64, f64)> {
    if va.is_nan() || vb.is_nan() || va < 0.0 || vb < 0.0 {
        return invalid("variances must be nonnegative");
    }
    match (va, vb) {
        (a, b) if a == 0.0 && b == 0.0 => {
            if ma == mb {
                Ok((ma, 0.0))
            } else {
                Err(Error::InconsistentConstraint(format!("hard constraints {ma} and {mb} disagree")))
            }
        }
        (a, _) if a == 0.0 => Ok((ma, 0.0)),
        (_, b) if b == 0.0 => Ok((mb, 0.0)),
        (a, b) if a.is_infinite() && b.is_infinite() => Ok((0.5 * (ma + mb), f64::INFINITY)),
        (a, _) if a.is_infinite() => Ok((mb, vb)),
        (_, b) if b.is_infinite() => Ok((ma, va)),
        (a, b) => {
            let s = a + b;
            Ok(((b * ma + a * mb) / s, a * b / s))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(m: &[f64], v: &[f64]) -> PosteriorPrediction {
        PosteriorPrediction::new(m.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn scalar_product() {
        let r = gaussian_product(&p(&[0.0], &[1.0]), &p(&[2.0], &[1.0])).unwrap();
        assert_eq!(r.mean, vec![1.0]);
        assert_eq!(r.var, vec![0.5]);
    }

    #[test]
    fn limits() {
        let r = gaussian_product(&p(&[0.3], &[0.2]), &p(&[5.0], &[f64::INFINITY])).unwrap();
        assert_eq!((r.mean[0], r.var[0]), (0.3, 0.2));
        let r = gaussian_product(&p(&[0.3], &[0.2]), &p(&[5.0], &[1e-300])).unwrap();
        assert!((r.mean[0] - 5.0).abs() < 1e-12 && r.var[0] < 1e-299);
        let r = gaussian_product(&p(&[0.3], &[0.2]), &p(&[5.0], &[0.0])).unwrap();
        assert_eq!((r.mean[0], r.var[0]), (5.0, 0.0));
    }

    #[test]
    fn conflicting_hard_constraints() {
        assert!(matches!(
            gaussian_product(&p(&[0.0, 1.0], &[1.0, 0.0]), &p(&[0.0, 2.0], &[1.0, 0.0])),
            Err(Error::InconsistentConstraint(_))
        ));
        assert!(gaussian_product(&p(&[1.0], &[0.0]), &p(&[1.0], &[0.0])).is_ok());
        assert!(gaussian_product(&p(&[1.0], &[0.0]), &p(&[1.0, 2.0], &[0.0, 1.0])).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_precision_additive(ma in -5.0f64..5.0, mb in -5.0f64..5.0, va in 1e-3f64..10.0, vb in 1e-3f64..10.0) {
            let ab = gaussian_product(&p(&[ma], &[va]), &p(&[mb], &[vb])).unwrap();
            let ba = gaussian_product(&p(&[mb], &[vb]), &p(&[ma], &[va])).unwrap();
            prop_assert!((ab.mean[0] - ba.mean[0]).abs() < 1e-12);
            prop_assert!((ab.var[0] - ba.var[0]).abs() < 1e-15);
            prop_assert!((1.0 / ab.var[0] - (1.0 / va + 1.0 / vb)).abs() <= 1e-10 * (1.0 / ab.var[0]));
            prop_assert!(ab.var[0] <= va.min(vb));
        }
    }
}
