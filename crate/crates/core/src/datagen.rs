//! Generators for the simulation families: multivariate Gaussian,
//! multivariate t, and a Gaussian-copula multivariate gamma.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{domain, Error, Result};
use crate::numerics::{gamma_quantile, gamma_quantile_upper, normal_cdf, SymMatrix};
use crate::sample::Sample;
use crate::spatial::{spatial_median, SolverOptions};

#[derive(Clone, Debug, PartialEq)]
pub enum DistributionSpec {
    /// N(location, scatter).
    Mvn { location: Vec<f64>, scatter: SymMatrix },
    /// location + L z / √(w/ν), z ~ N(0, I), w ~ χ²_ν, L Lᵀ = scatter.
    Mvt { location: Vec<f64>, scatter: SymMatrix, dof: f64 },
    /// Ga(shape, rate) marginals joined by a Gaussian copula with
    /// correlation matrix `correlation`, then rigidly shifted.
    GammaCopula { shape: f64, rate: f64, correlation: SymMatrix, shift: Vec<f64> },
}

fn check_pd(m: &SymMatrix, what: &str) -> Result<DMatrix<f64>> {
    m.cholesky().map_err(|_| Error::Domain(format!("{what} must be positive definite")))
}

fn check_dims(location: &[f64], m: &SymMatrix) -> Result<()> {
    if location.len() != m.dim() || location.is_empty() {
        return domain(format!("location has dimension {} but matrix has {}", location.len(), m.dim()));
    }
    if location.iter().any(|x| !x.is_finite()) {
        return domain("location must be finite");
    }
    Ok(())
}

impl DistributionSpec {
    pub fn mvn(location: Vec<f64>, scatter: SymMatrix) -> Result<Self> {
        check_dims(&location, &scatter)?;
        check_pd(&scatter, "scatter")?;
        Ok(Self::Mvn { location, scatter })
    }

    pub fn mvt(location: Vec<f64>, scatter: SymMatrix, dof: f64) -> Result<Self> {
        check_dims(&location, &scatter)?;
        check_pd(&scatter, "scatter")?;
        if !(dof >= 1.0 && dof.is_finite()) {
            return domain(format!("t degrees of freedom must be ≥ 1, got {dof}"));
        }
        Ok(Self::Mvt { location, scatter, dof })
    }

    pub fn gamma_copula(shape: f64, rate: f64, correlation: SymMatrix, shift: Vec<f64>) -> Result<Self> {
        check_dims(&shift, &correlation)?;
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return domain(format!("gamma shape and rate must be positive, got ({shape}, {rate})"));
        }
        if (0..correlation.dim()).any(|i| (correlation.get(i, i) - 1.0).abs() > 1e-12) {
            return domain("copula matrix must have unit diagonal");
        }
        check_pd(&correlation, "copula correlation")?;
        Ok(Self::GammaCopula { shape, rate, correlation, shift })
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self::Mvn { location: vec![0.0; dim], scatter: SymMatrix::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Mvn { location, .. } | Self::Mvt { location, .. } => location.len(),
            Self::GammaCopula { shift, .. } => shift.len(),
        }
    }

    /// Same family moved rigidly by `offset`.
    pub fn shifted(&self, offset: &[f64]) -> Self {
        let add = |v: &[f64]| v.iter().zip(offset).map(|(a, b)| a + b).collect::<Vec<f64>>();
        match self {
            Self::Mvn { location, scatter } => Self::Mvn { location: add(location), scatter: scatter.clone() },
            Self::Mvt { location, scatter, dof } => Self::Mvt { location: add(location), scatter: scatter.clone(), dof: *dof },
            Self::GammaCopula { shape, rate, correlation, shift } => {
                Self::GammaCopula { shape: *shape, rate: *rate, correlation: correlation.clone(), shift: add(shift) }
            }
        }
    }

    /// n iid draws; a pure function of (self, n, rng state).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        match self {
            Self::Mvn { location, scatter } => sample_mvn(location, scatter, n, rng),
            Self::Mvt { location, scatter, dof } => sample_mvt(location, scatter, *dof, n, rng),
            Self::GammaCopula { shape, rate, correlation, shift } => {
                sample_gamma_copula(*shape, *rate, correlation, shift, n, rng)
            }
        }
    }

    /// Spatial median of the distribution: exact for the elliptical
    /// families, estimated from `mc_size` draws otherwise.
    pub fn spatial_median<R: Rng + ?Sized>(&self, mc_size: usize, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Self::Mvn { location, .. } | Self::Mvt { location, .. } => Ok(location.clone()),
            Self::GammaCopula { .. } => {
                let draws = self.sample(mc_size, rng)?;
                let sol = spatial_median(&draws, &SolverOptions { tol: 1e-9, max_iter: 100_000 })?;
                if !sol.converged {
                    return Err(Error::Convergence { iterations: sol.iterations, residual: sol.residual });
                }
                Ok(sol.location)
            }
        }
    }
}

fn correlated_normals<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..=i).map(|j| factor[(i, j)] * z[j]).sum();
    }
}

pub fn sample_mvn<R: Rng + ?Sized>(location: &[f64], scatter: &SymMatrix, n: usize, rng: &mut R) -> Result<Sample> {
    check_dims(location, scatter)?;
    let factor = check_pd(scatter, "scatter")?;
    let k = location.len();
    let mut values = vec![0.0; n * k];
    let mut z = vec![0.0; k];
    for row in values.chunks_exact_mut(k) {
        correlated_normals(&factor, rng, &mut z, row);
        row.iter_mut().zip(location).for_each(|(x, m)| *x += m);
    }
    Sample::new(values, k)
}

pub fn sample_mvt<R: Rng + ?Sized>(location: &[f64], scatter: &SymMatrix, dof: f64, n: usize, rng: &mut R) -> Result<Sample> {
    check_dims(location, scatter)?;
    let factor = check_pd(scatter, "scatter")?;
    let chi = ChiSquared::new(dof).map_err(|e| Error::Domain(format!("t degrees of freedom: {e}")))?;
    let k = location.len();
    let mut values = vec![0.0; n * k];
    let mut z = vec![0.0; k];
    for row in values.chunks_exact_mut(k) {
        correlated_normals(&factor, rng, &mut z, row);
        let w: f64 = chi.sample(rng);
        // w = 0 has probability zero but would produce infinities
        let scale = (dof / w.max(f64::MIN_POSITIVE)).sqrt();
        row.iter_mut().zip(location).for_each(|(x, m)| *x = m + *x * scale);
    }
    Sample::new(values, k)
}

pub fn sample_gamma_copula<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    correlation: &SymMatrix,
    shift: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Sample> {
    let spec = DistributionSpec::gamma_copula(shape, rate, correlation.clone(), shift.to_vec())?;
    let DistributionSpec::GammaCopula { correlation, .. } = &spec else { unreachable!() };
    let factor = check_pd(correlation, "copula correlation")?;
    let k = shift.len();
    let mut values = vec![0.0; n * k];
    let mut z = vec![0.0; k];
    let mut g = vec![0.0; k];
    for row in values.chunks_exact_mut(k) {
        correlated_normals(&factor, rng, &mut z, &mut g);
        for j in 0..k {
            // quantile from the tail nearer to zero keeps u away from 1
            let q = if g[j] > 0.0 {
                gamma_quantile_upper(shape, rate, normal_cdf(-g[j]))?
            } else {
                gamma_quantile(shape, rate, normal_cdf(g[j]))?
            };
            row[j] = q + shift[j];
        }
    }
    Sample::new(values, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gamma_cdf, normal_cdf};
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn column(s: &Sample, j: usize) -> Vec<f64> {
        s.rows().map(|r| r[j]).collect()
    }

    fn ks_against(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.total_cmp(b));
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max((f - (i as f64 + 1.0) / n).abs())
            })
            .fold(0.0, f64::max)
    }

    fn median(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.total_cmp(b));
        let n = xs.len();
        if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) }
    }

    #[test]
    fn mvn_moments() {
        let n = 100_000;
        let theta = [0.5, -1.0];
        let s = sample_mvn(&theta, &SymMatrix::identity(2), n, &mut rng(1)).unwrap();
        let mean = s.mean();
        for j in 0..2 {
            assert!((mean[j] - theta[j]).abs() < 3.0 / (n as f64).sqrt());
        }
        let cov = s.covariance();
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov.get(i, j) - target).abs() < 0.02);
            }
        }
    }

    #[test]
    fn correlated_mvn_covariance() {
        let sigma = SymMatrix::from_rows(&[[2.0, 0.6], [0.6, 0.5]]).unwrap();
        let s = sample_mvn(&[0.0, 0.0], &sigma, 100_000, &mut rng(2)).unwrap();
        let cov = s.covariance();
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            assert!((cov.get(i, j) - sigma.get(i, j)).abs() < 0.03, "{i}{j}");
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = DistributionSpec::mvt(vec![1.0, 2.0], SymMatrix::identity(2), 1.0).unwrap();
        let a = spec.sample(50, &mut rng(3)).unwrap();
        let b = spec.sample(50, &mut rng(3)).unwrap();
        assert_eq!(a, b);
        let not_pd = SymMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(DistributionSpec::mvn(vec![0.0, 0.0], not_pd.clone()).is_err());
        assert!(DistributionSpec::mvt(vec![0.0, 0.0], SymMatrix::identity(2), 0.5).is_err());
        assert!(DistributionSpec::gamma_copula(2.0, 1.0, SymMatrix::diagonal(&[2.0, 1.0]), vec![0.0, 0.0]).is_err());
        assert!(DistributionSpec::gamma_copula(2.0, 1.0, not_pd, vec![0.0, 0.0]).is_err());
        assert!(DistributionSpec::gamma_copula(0.0, 1.0, SymMatrix::identity(2), vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn t_with_huge_dof_is_gaussian() {
        let s = sample_mvt(&[0.0, 0.0], &SymMatrix::identity(2), 1e6, 100_000, &mut rng(4)).unwrap();
        for j in 0..2 {
            assert!(ks_against(column(&s, j), normal_cdf) < 0.01);
        }
    }

    #[test]
    fn cauchy_medians() {
        let theta = [0.3, -0.2];
        let n = 10_000;
        let s = sample_mvt(&theta, &SymMatrix::identity(2), 1.0, n, &mut rng(5)).unwrap();
        for j in 0..2 {
            // Cauchy marginal: IQR 2, median sd ≈ π/(2√n)
            let m = median(column(&s, j));
            assert!((m - theta[j]).abs() < 3.0 * 1.2 * 2.0 / (n as f64).sqrt());
        }
        let sm = spatial_median(&s, &SolverOptions::default()).unwrap().location;
        assert!((sm[0] - theta[0]).hypot(sm[1] - theta[1]) < 0.05);
        // marginal of a bivariate t₁ is standard Cauchy
        let ks = ks_against(column(&s, 0).iter().map(|x| x - theta[0]).collect(), |x| 0.5 + x.atan() / std::f64::consts::PI);
        assert!(ks < 0.02);
    }

    #[test]
    fn spatial_signs_uniform_on_circle() {
        let n = 100_000;
        for spec in [
            DistributionSpec::standard_gaussian(2),
            DistributionSpec::mvt(vec![0.0, 0.0], SymMatrix::identity(2), 1.0).unwrap(),
        ] {
            let s = spec.sample(n, &mut rng(6)).unwrap();
            let (mut cx, mut cy) = (0.0, 0.0);
            for r in s.rows() {
                let norm = r[0].hypot(r[1]);
                cx += r[0] / norm;
                cy += r[1] / norm;
            }
            // Rayleigh: 2 n R̄² ~ χ²₂, 1% critical value 9.21
            let rbar_sq = (cx * cx + cy * cy) / (n as f64).powi(2);
            assert!(2.0 * n as f64 * rbar_sq < 9.21);
        }
    }

    #[test]
    fn gamma_marginals_and_independence() {
        let n = 100_000;
        let (shape, rate) = (2.0, 1.0);
        let s = sample_gamma_copula(shape, rate, &SymMatrix::identity(2), &[0.0, 0.0], n, &mut rng(7)).unwrap();
        for j in 0..2 {
            let ks = ks_against(column(&s, j), |x| gamma_cdf(x, shape, rate));
            assert!(ks < 0.01, "KS {ks}");
        }
        let cov = s.covariance();
        let corr = cov.get(0, 1) / (cov.get(0, 0) * cov.get(1, 1)).sqrt();
        assert!(corr.abs() < 3.0 / (n as f64).sqrt());

        let other = sample_gamma_copula(0.7, 2.5, &SymMatrix::identity(2), &[0.0, 0.0], n, &mut rng(8)).unwrap();
        assert!(ks_against(column(&other, 1), |x| gamma_cdf(x, 0.7, 2.5)) < 0.01);
    }

    #[test]
    fn gamma_copula_correlation_and_shift() {
        let v = SymMatrix::from_rows(&[[1.0, 0.7], [0.7, 1.0]]).unwrap();
        let s = sample_gamma_copula(2.0, 1.0, &v, &[1.0, 1.0], 20_000, &mut rng(9)).unwrap();
        assert!(s.rows().all(|r| r[0] >= 1.0 && r[1] >= 1.0));
        let cov = s.covariance();
        assert!(cov.get(0, 1) / (cov.get(0, 0) * cov.get(1, 1)).sqrt() > 0.5);
        assert!(ks_against(column(&s, 0).iter().map(|x| x - 1.0).collect(), |x| gamma_cdf(x, 2.0, 1.0)) < 0.02);
    }

    #[test]
    fn shifted_and_centered() {
        let spec = DistributionSpec::gamma_copula(2.0, 1.0, SymMatrix::identity(2), vec![0.0, 0.0]).unwrap();
        let med = spec.spatial_median(200_000, &mut rng(10)).unwrap();
        // each coordinate's median is near the Ga(2,1) median 1.678; the spatial median sits nearby
        assert!(med.iter().all(|m| (1.3..2.0).contains(m)), "{med:?}");
        let centered = spec.shifted(&[-med[0], -med[1]]);
        let s = centered.sample(100_000, &mut rng(11)).unwrap();
        let sm = spatial_median(&s, &SolverOptions::default()).unwrap().location;
        assert!(sm[0].hypot(sm[1]) < 0.03);
        assert_eq!(DistributionSpec::standard_gaussian(3).shifted(&[1.0, 2.0, 3.0]).spatial_median(0, &mut rng(0)).unwrap(), vec![1.0, 2.0, 3.0]);
    }
}
