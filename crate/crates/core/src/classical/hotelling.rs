use std::collections::BTreeMap;

use super::{check_alpha, chi2_outcome};
use crate::bnp::TestOutcome;
use crate::error::{domain, Result};
use crate::numerics::sym_inverse;
use crate::sample::Sample;

/// n(ȳ − θ₀)ᵀ Σ̂⁻¹ (ȳ − θ₀) with the 1/n covariance, referred to χ²_k.
pub fn hotelling_one_sample(data: &Sample, theta0: &[f64], alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if theta0.len() != data.dim() {
        return domain(format!("theta0 has dimension {} but data has {}", theta0.len(), data.dim()));
    }
    if data.len() <= data.dim() {
        return domain("Hotelling test needs n > k");
    }
    let precision = sym_inverse(&data.covariance(), 0.0)?;
    let d: Vec<f64> = data.mean().iter().zip(theta0).map(|(m, t)| m - t).collect();
    let statistic = data.len() as f64 * precision.quad_form(&d).max(0.0);
    chi2_outcome("hotelling".to_string(), statistic, data.dim(), alpha, BTreeMap::new())
}

/// (ȳ₁ − ȳ₂)ᵀ (Σ̂₁/n₁ + Σ̂₂/n₂)⁻¹ (ȳ₁ − ȳ₂), referred to χ²_k.
pub fn hotelling_two_sample(data1: &Sample, data2: &Sample, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if data1.dim() != data2.dim() {
        return domain(format!("samples have dimensions {} and {}", data1.dim(), data2.dim()));
    }
    if data1.len() <= data1.dim() || data2.len() <= data2.dim() {
        return domain("Hotelling test needs n₁, n₂ > k");
    }
    let pooled = data1
        .covariance()
        .scaled(1.0 / data1.len() as f64)
        .add(&data2.covariance().scaled(1.0 / data2.len() as f64));
    let precision = sym_inverse(&pooled, 0.0)?;
    let d: Vec<f64> = data1.mean().iter().zip(data2.mean()).map(|(a, b)| a - b).collect();
    let statistic = precision.quad_form(&d).max(0.0);
    chi2_outcome("hotelling".to_string(), statistic, data1.dim(), alpha, BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::DistributionSpec;
    use crate::seed::SeedStream;

    #[test]
    fn zero_at_the_mean() {
        let data = Sample::from_rows(&[[1.0, 2.0], [3.0, 1.0], [2.0, 4.0], [0.0, 1.0]]).unwrap();
        let out = hotelling_one_sample(&data, &data.mean(), 0.05).unwrap();
        assert!(out.statistic.abs() < 1e-20);
        assert_eq!(out.p_value, Some(1.0));
        let same = hotelling_two_sample(&data, &data, 0.05).unwrap();
        assert_eq!(same.statistic, 0.0);
    }

    #[test]
    fn hand_computed_statistic() {
        let data = Sample::from_rows(&[[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]).unwrap();
        // ȳ = (1, 1); Σ̂ = [[2/3, 0], [0, 2]]; Q = 3 (1·1.5 + 1·0.5) = 6
        let out = hotelling_one_sample(&data, &[0.0, 0.0], 0.05).unwrap();
        assert!((out.statistic - 6.0).abs() < 1e-12);
        assert!(out.reject);
        assert!((out.p_value.unwrap() - (-3.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let line = Sample::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert!(hotelling_one_sample(&line, &[0.0, 0.0], 0.05).is_err());
        assert!(hotelling_one_sample(&line, &[0.0], 0.05).is_err());
        let data = DistributionSpec::standard_gaussian(3).sample(10, &mut SeedStream::new(1).rng()).unwrap();
        assert!(hotelling_two_sample(&data, &line, 0.05).is_err());
    }
}
