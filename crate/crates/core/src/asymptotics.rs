//! Sign-covariance and curvature matrices of the spatial median, and local
//! asymptotic power of the Bayesian nonparametric tests under contiguous
//! alternatives θ₀ + h/√n.

use nalgebra::DMatrix;

use crate::datagen::DistributionSpec;
use crate::error::{domain, Error, Result};
use crate::numerics::{chi2_quantile, noncentral_chi2_sf, sym_inverse, SymMatrix};
use crate::sample::{add_outer, norm, Sample};
use crate::seed::StreamRng;
use crate::spatial::{spatial_median, SolverOptions};

/// Points closer than this to θ are dropped from the U and V averages.
pub const SKIP_RADIUS: f64 = 1e-12;

/// U = E[u uᵀ] and V = E[‖Y − θ‖⁻¹(I − u uᵀ)] with u = (Y − θ)/‖Y − θ‖.
#[derive(Clone, Debug)]
pub struct SandwichPair {
    pub u: SymMatrix,
    pub v: SymMatrix,
    pub mc_size: usize,
    pub theta: Vec<f64>,
    /// Observations skipped for lying at θ.
    pub skipped: usize,
}

impl SandwichPair {
    /// V⁻¹ U V⁻¹, the asymptotic covariance of √n(θ̂ − θ).
    pub fn sandwich(&self) -> Result<SymMatrix> {
        let vinv = sym_inverse(&self.v, 0.0)?;
        let m = vinv.as_matrix() * self.u.as_matrix() * vinv.as_matrix();
        SymMatrix::new(m)
    }
}

struct Accumulator {
    k: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    used: usize,
    skipped: usize,
}

impl Accumulator {
    fn new(k: usize) -> Self {
        Self { k, u: vec![0.0; k * k], v: vec![0.0; k * k], used: 0, skipped: 0 }
    }

    /// Adds one observation and returns its unit direction, if any.
    fn push(&mut self, y: &[f64], theta: &[f64], dir: &mut [f64]) -> bool {
        for j in 0..self.k {
            dir[j] = y[j] - theta[j];
        }
        let r = norm(dir);
        if r <= SKIP_RADIUS {
            self.skipped += 1;
            return false;
        }
        dir.iter_mut().for_each(|d| *d /= r);
        add_outer(1.0, dir, &mut self.u);
        add_outer(-1.0 / r, dir, &mut self.v);
        for j in 0..self.k {
            self.v[j * self.k + j] += 1.0 / r;
        }
        self.used += 1;
        true
    }

    fn finish(self, theta: &[f64]) -> Result<SandwichPair> {
        if self.used == 0 {
            return Err(Error::Domain("every observation coincides with θ; U and V are undefined".into()));
        }
        let c = 1.0 / self.used as f64;
        let scale = |m: Vec<f64>| SymMatrix::from_row_major(self.k, m.into_iter().map(|x| x * c).collect());
        Ok(SandwichPair {
            u: scale(self.u)?,
            v: scale(self.v)?,
            mc_size: self.used + self.skipped,
            theta: theta.to_vec(),
            skipped: self.skipped,
        })
    }
}

/// Empirical U and V of a sample about θ.
pub fn estimate_sandwich_sample(sample: &Sample, theta: &[f64]) -> Result<SandwichPair> {
    if theta.len() != sample.dim() {
        return domain("theta and sample dimensions differ");
    }
    if sample.len() <= sample.dim() {
        return domain(format!("sandwich estimation needs n > k (n = {}, k = {})", sample.len(), sample.dim()));
    }
    let mut acc = Accumulator::new(sample.dim());
    let mut dir = vec![0.0; sample.dim()];
    for y in sample.rows() {
        acc.push(y, theta, &mut dir);
    }
    acc.finish(theta)
}

/// U and V about the sample's own spatial median.
pub fn plug_in_sandwich(sample: &Sample) -> Result<SandwichPair> {
    let theta = spatial_median(sample, &SolverOptions::default())?.location;
    estimate_sandwich_sample(sample, &theta)
}

/// A parametric location family with a sampler, score ℓ̇_θ and Fisher
/// information I_θ. The spatial median of the member at θ must be θ.
pub trait LocationModel: Sync {
    fn dim(&self) -> usize;
    fn sample_at(&self, theta: &[f64], n: usize, rng: &mut StreamRng) -> Result<Sample>;
    fn score(&self, theta: &[f64], y: &[f64]) -> Vec<f64>;
    fn fisher(&self, theta: &[f64]) -> SymMatrix;
}

/// N(θ, Σ): ℓ̇ = Σ⁻¹(y − θ), I = Σ⁻¹.
#[derive(Clone, Debug)]
pub struct GaussianLocation {
    scatter: SymMatrix,
    precision: SymMatrix,
}

impl GaussianLocation {
    pub fn new(scatter: SymMatrix) -> Result<Self> {
        let precision = sym_inverse(&scatter, 0.0)?;
        Ok(Self { scatter, precision })
    }
}

impl LocationModel for GaussianLocation {
    fn dim(&self) -> usize {
        self.scatter.dim()
    }

    fn sample_at(&self, theta: &[f64], n: usize, rng: &mut StreamRng) -> Result<Sample> {
        DistributionSpec::mvn(theta.to_vec(), self.scatter.clone())?.sample(n, rng)
    }

    fn score(&self, theta: &[f64], y: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = y.iter().zip(theta).map(|(a, b)| a - b).collect();
        self.precision.mul_vec(&d)
    }

    fn fisher(&self, _theta: &[f64]) -> SymMatrix {
        self.precision.clone()
    }
}

/// Elliptical t with ν degrees of freedom: ℓ̇ = (ν + k)/(ν + q) Σ⁻¹(y − θ)
/// with q the Mahalanobis² of y, and I = (ν + k)/(ν + k + 2) Σ⁻¹.
#[derive(Clone, Debug)]
pub struct TLocation {
    scatter: SymMatrix,
    precision: SymMatrix,
    dof: f64,
}

impl TLocation {
    pub fn new(scatter: SymMatrix, dof: f64) -> Result<Self> {
        if !(dof > 0.0 && dof.is_finite()) {
            return domain(format!("t degrees of freedom must be positive, got {dof}"));
        }
        let precision = sym_inverse(&scatter, 0.0)?;
        Ok(Self { scatter, precision, dof })
    }
}

impl LocationModel for TLocation {
    fn dim(&self) -> usize {
        self.scatter.dim()
    }

    fn sample_at(&self, theta: &[f64], n: usize, rng: &mut StreamRng) -> Result<Sample> {
        DistributionSpec::mvt(theta.to_vec(), self.scatter.clone(), self.dof)?.sample(n, rng)
    }

    fn score(&self, theta: &[f64], y: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = y.iter().zip(theta).map(|(a, b)| a - b).collect();
        let pd = self.precision.mul_vec(&d);
        let q: f64 = pd.iter().zip(&d).map(|(a, b)| a * b).sum();
        let w = (self.dof + self.dim() as f64) / (self.dof + q);
        pd.into_iter().map(|x| w * x).collect()
    }

    fn fisher(&self, _theta: &[f64]) -> SymMatrix {
        let k = self.dim() as f64;
        self.precision.scaled((self.dof + k) / (self.dof + k + 2.0))
    }
}

/// Monte Carlo U and V of a model member at θ.
pub fn estimate_sandwich_model(
    model: &dyn LocationModel,
    theta: &[f64],
    mc_size: usize,
    rng: &mut StreamRng,
) -> Result<SandwichPair> {
    Ok(PowerTerms::estimate(model, theta, mc_size, rng)?.sandwich)
}

/// Everything the local power formulas need at θ₀: the sandwich Σ = V⁻¹UV⁻¹
/// and the linear map A = −V⁻¹ E[u ℓ̇ᵀ] I⁻¹ taking h to the drift δ = A h.
#[derive(Clone, Debug)]
pub struct PowerTerms {
    pub sandwich: SandwichPair,
    pub covariance: SymMatrix,
    pub drift_map: DMatrix<f64>,
}

impl PowerTerms {
    pub const MIN_MC: usize = 1000;

    pub fn estimate(model: &dyn LocationModel, theta0: &[f64], mc_size: usize, rng: &mut StreamRng) -> Result<Self> {
        let k = model.dim();
        if theta0.len() != k {
            return domain("theta0 and model dimensions differ");
        }
        if mc_size < Self::MIN_MC {
            return domain(format!("model Monte Carlo size must be at least {}", Self::MIN_MC));
        }
        let draws = model.sample_at(theta0, mc_size, rng)?;
        let mut acc = Accumulator::new(k);
        let mut dir = vec![0.0; k];
        let mut cross = DMatrix::<f64>::zeros(k, k);
        for y in draws.rows() {
            if acc.push(y, theta0, &mut dir) {
                let s = model.score(theta0, y);
                for i in 0..k {
                    for j in 0..k {
                        cross[(i, j)] += dir[i] * s[j];
                    }
                }
            }
        }
        let used = acc.used.max(1) as f64;
        let sandwich = acc.finish(theta0)?;
        cross /= used;
        let vinv = sym_inverse(&sandwich.v, 0.0)?;
        let iinv = sym_inverse(&model.fisher(theta0), 0.0)?;
        let drift_map = -(vinv.as_matrix() * cross * iinv.as_matrix());
        let covariance = sandwich.sandwich()?;
        Ok(Self { sandwich, covariance, drift_map })
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn drift(&self, h: &[f64]) -> Vec<f64> {
        (&self.drift_map * nalgebra::DVector::from_column_slice(h)).iter().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalPower {
    pub power: f64,
    pub drift: Vec<f64>,
    pub noncentrality: f64,
    pub critical_value: f64,
}

fn power_from(drift: Vec<f64>, cov: &SymMatrix, alpha: f64) -> Result<LocalPower> {
    let k = drift.len();
    let critical_value = chi2_quantile(k, alpha)?;
    let noncentrality = sym_inverse(cov, 0.0)?.quad_form(&drift).max(0.0);
    let power = noncentral_chi2_sf(critical_value, k, noncentrality)?;
    Ok(LocalPower { power, drift, noncentrality, critical_value })
}

fn check_h(h: &[f64], k: usize, alpha: f64) -> Result<()> {
    if h.len() != k {
        return domain("h and model dimensions differ");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

impl PowerTerms {
    /// 1 − F(χ²_{k;α}; k, δᵀΣ⁻¹δ) with δ = A h.
    pub fn one_sample_power(&self, h: &[f64], alpha: f64) -> Result<LocalPower> {
        check_h(h, self.dim(), alpha)?;
        power_from(self.drift(h), &self.covariance, alpha)
    }
}

/// Two-sample power with n₁/n → λ and sample j at θ₀ + h_j/√n_j:
/// δ = λ^{-1/2} A₁h₁ − (1 − λ)^{-1/2} A₂h₂ and Σ = Σ₁/λ + Σ₂/(1 − λ).
pub fn two_sample_power(terms1: &PowerTerms, terms2: &PowerTerms, h1: &[f64], h2: &[f64], lambda: f64, alpha: f64) -> Result<LocalPower> {
    let k = terms1.dim();
    if terms2.dim() != k {
        return domain("models have different dimensions");
    }
    check_h(h1, k, alpha)?;
    check_h(h2, k, alpha)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return domain(format!("lambda must lie in (0, 1), got {lambda}"));
    }
    let (a, b) = (lambda.sqrt().recip(), (1.0 - lambda).sqrt().recip());
    let drift: Vec<f64> = terms1.drift(h1).iter().zip(terms2.drift(h2)).map(|(x, y)| a * x - b * y).collect();
    let cov = terms1.covariance.scaled(1.0 / lambda).add(&terms2.covariance.scaled(1.0 / (1.0 - lambda)));
    power_from(drift, &cov, alpha)
}

pub fn one_sample_local_power(
    model: &dyn LocationModel,
    theta0: &[f64],
    h: &[f64],
    alpha: f64,
    mc_size: usize,
    rng: &mut StreamRng,
) -> Result<LocalPower> {
    PowerTerms::estimate(model, theta0, mc_size, rng)?.one_sample_power(h, alpha)
}

#[allow(clippy::too_many_arguments)]
pub fn two_sample_local_power(
    model1: &dyn LocationModel,
    model2: &dyn LocationModel,
    theta0: &[f64],
    h1: &[f64],
    h2: &[f64],
    lambda: f64,
    alpha: f64,
    mc_size: usize,
    rng: &mut StreamRng,
) -> Result<LocalPower> {
    let t1 = PowerTerms::estimate(model1, theta0, mc_size, rng)?;
    let t2 = PowerTerms::estimate(model2, theta0, mc_size, rng)?;
    two_sample_power(&t1, &t2, h1, h2, lambda, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn rng(seed: u64) -> StreamRng {
        SeedStream::new(seed).rng()
    }

    fn gauss() -> GaussianLocation {
        GaussianLocation::new(SymMatrix::identity(2)).unwrap()
    }

    #[test]
    fn trace_of_u_is_one() {
        let s = Sample::from_rows(&[[1.0, 2.0], [-3.0, 0.5], [0.2, -0.1], [0.0, 0.0]]).unwrap();
        let p = estimate_sandwich_sample(&s, &[0.0, 0.0]).unwrap();
        assert!((p.u.trace() - 1.0).abs() < 1e-12);
        assert_eq!(p.skipped, 1);
        assert_eq!(p.mc_size, 4);
        let at_theta = Sample::from_rows(&[[1.0, 1.0]; 4]).unwrap();
        assert!(estimate_sandwich_sample(&at_theta, &[1.0, 1.0]).is_err());
        assert!(estimate_sandwich_sample(&Sample::from_rows(&[[1.0, 1.0], [2.0, 0.0]]).unwrap(), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn spherical_u_is_half_identity() {
        let mc = 200_000;
        let p = estimate_sandwich_model(&gauss(), &[0.0, 0.0], mc, &mut rng(1)).unwrap();
        // u₁² for a uniform angle has variance 1/8
        let se = (0.125 / mc as f64).sqrt();
        assert!((p.u.get(0, 0) - 0.5).abs() < 3.0 * se);
        assert!((p.u.get(1, 1) - 0.5).abs() < 3.0 * se);
        assert!(p.u.get(0, 1).abs() < 3.0 * se);
    }

    #[test]
    fn gaussian_v_matches_large_monte_carlo() {
        // independent oracle: plain average of ‖y‖⁻¹(1 − y₁²/‖y‖²)
        let mut r = rng(2);
        let reps = 10_000_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..reps {
            let (a, b): (f64, f64) = (r.sample(StandardNormal), r.sample(StandardNormal));
            let q = a * a + b * b;
            let x = (1.0 - a * a / q) / q.sqrt();
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / reps as f64;
        let oracle_se = ((sum_sq / reps as f64 - mean * mean) / reps as f64).sqrt();
        let mc = 1_000_000;
        let p = estimate_sandwich_model(&gauss(), &[0.0, 0.0], mc, &mut rng(3)).unwrap();
        // the estimate's own error dominates: its SE is √10 times the oracle's
        let se = oracle_se * ((reps / mc) as f64).sqrt();
        let se_total = (se * se + oracle_se * oracle_se).sqrt();
        assert!((p.v.get(0, 0) - mean).abs() < 3.0 * se_total, "{} vs {mean}", p.v.get(0, 0));
        assert!((p.v.get(1, 1) - mean).abs() < 3.0 * se_total);
        // closed form √(π/2)/2
        assert!((mean - (std::f64::consts::PI / 2.0).sqrt() / 2.0).abs() < 4.0 * oracle_se);
    }

    #[test]
    fn t1_sandwich_is_twice_identity() {
        let t = TLocation::new(SymMatrix::identity(2), 1.0).unwrap();
        let p = estimate_sandwich_model(&t, &[0.0, 0.0], 1_000_000, &mut rng(4)).unwrap();
        let s = p.sandwich().unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 0.03 && (s.get(1, 1) - 2.0).abs() < 0.03 && s.get(0, 1).abs() < 0.03);
    }

    #[test]
    fn scores_and_information() {
        let sigma = SymMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let g = GaussianLocation::new(sigma.clone()).unwrap();
        let t = TLocation::new(sigma.clone(), 3.0).unwrap();
        let theta = [0.5, -0.5];
        let y = [1.2, 0.3];
        // numerical gradient of each log-density as an oracle
        let precision = sym_inverse(&sigma, 0.0).unwrap();
        let q = |th: &[f64]| {
            let d = [y[0] - th[0], y[1] - th[1]];
            precision.quad_form(&d)
        };
        let log_g = |th: &[f64]| -0.5 * q(th);
        let log_t = |th: &[f64]| -(3.0 + 2.0) / 2.0 * (1.0 + q(th) / 3.0).ln();
        for (score, logf) in [(g.score(&theta, &y), &log_g as &dyn Fn(&[f64]) -> f64), (t.score(&theta, &y), &log_t)] {
            for j in 0..2 {
                let mut up = theta;
                let mut dn = theta;
                up[j] += 1e-6;
                dn[j] -= 1e-6;
                let num = (logf(&up) - logf(&dn)) / 2e-6;
                assert!((score[j] - num).abs() < 1e-6, "{} vs {num}", score[j]);
            }
        }
        // Fisher information as the score's Monte Carlo second moment
        let mut r = rng(5);
        let draws = t.sample_at(&theta, 400_000, &mut r).unwrap();
        let mut m = vec![0.0; 4];
        for row in draws.rows() {
            add_outer(1.0 / 400_000.0, &t.score(&theta, row), &mut m);
        }
        let fisher = t.fisher(&theta);
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            assert!((m[i * 2 + j] - fisher.get(i, j)).abs() < 0.02, "{i}{j}");
        }
    }

    #[test]
    fn null_power_is_alpha() {
        let terms = PowerTerms::estimate(&gauss(), &[0.0, 0.0], 10_000, &mut rng(6)).unwrap();
        let p = terms.one_sample_power(&[0.0, 0.0], 0.05).unwrap();
        assert!((p.power - 0.05).abs() < 1e-8);
        let p2 = two_sample_power(&terms, &terms, &[0.0, 0.0], &[0.0, 0.0], 0.4, 0.05).unwrap();
        assert!((p2.power - 0.05).abs() < 1e-8);
    }

    #[test]
    fn gaussian_drift_is_minus_h() {
        let terms = PowerTerms::estimate(&gauss(), &[0.0, 0.0], 1_000_000, &mut rng(7)).unwrap();
        let d = terms.drift(&[2.0, -2.0]);
        assert!((d[0] + 2.0).abs() < 0.01 && (d[1] - 2.0).abs() < 0.01, "{d:?}");
        // noncentrality ‖h‖²/(4/π)
        let p = terms.one_sample_power(&[2.0, -2.0], 0.05).unwrap();
        assert!((p.noncentrality - 8.0 * std::f64::consts::PI / 4.0).abs() < 0.05);
    }

    #[test]
    fn power_monotone_along_ray_and_rotation_coherent() {
        let terms = PowerTerms::estimate(&gauss(), &[0.0, 0.0], 200_000, &mut rng(8)).unwrap();
        let h = [1.0, 0.5];
        let powers: Vec<f64> = [0.0, 0.5, 1.0, 2.0].iter().map(|t| terms.one_sample_power(&[t * h[0], t * h[1]], 0.05).unwrap().power).collect();
        assert!(powers.windows(2).all(|w| w[1] >= w[0]));
        assert!(powers.iter().all(|&p| p >= 0.05 - 1e-8 && p <= 1.0));
        let (c, s) = (0.6_f64, 0.8_f64);
        let rotated = [c * h[0] - s * h[1], s * h[0] + c * h[1]];
        let a = terms.one_sample_power(&h, 0.05).unwrap();
        let b = terms.one_sample_power(&rotated, 0.05).unwrap();
        assert!((a.power - b.power).abs() < 0.01);
        let rd = [c * a.drift[0] - s * a.drift[1], s * a.drift[0] + c * a.drift[1]];
        assert!((rd[0] - b.drift[0]).abs() < 0.02 && (rd[1] - b.drift[1]).abs() < 0.02);
    }

    #[test]
    fn two_sample_swap_symmetry() {
        let g = PowerTerms::estimate(&gauss(), &[0.0, 0.0], 20_000, &mut rng(9)).unwrap();
        let t = PowerTerms::estimate(&TLocation::new(SymMatrix::identity(2), 3.0).unwrap(), &[0.0, 0.0], 20_000, &mut rng(10)).unwrap();
        let (h1, h2) = ([0.5, 0.2], [-1.0, 2.0]);
        let a = two_sample_power(&g, &t, &h1, &h2, 0.3, 0.05).unwrap();
        let b = two_sample_power(&t, &g, &h2, &h1, 0.7, 0.05).unwrap();
        assert!((a.power - b.power).abs() < 1e-12);
        assert!(two_sample_power(&g, &t, &h1, &h2, 1.0, 0.05).is_err());
    }

    #[test]
    fn same_shift_in_both_samples_has_no_power_when_balanced() {
        // equal shifts on the √n_j scale with λ = ½ move both medians alike
        let g = PowerTerms::estimate(&gauss(), &[0.0, 0.0], 20_000, &mut rng(11)).unwrap();
        let p = two_sample_power(&g, &g, &[1.0, 1.0], &[1.0, 1.0], 0.5, 0.05).unwrap();
        assert!((p.power - 0.05).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PowerTerms::estimate(&gauss(), &[0.0, 0.0], 10, &mut rng(0)).is_err());
        assert!(one_sample_local_power(&gauss(), &[0.0], &[1.0], 0.05, 2000, &mut rng(0)).is_err());
        assert!(TLocation::new(SymMatrix::identity(2), 0.0).is_err());
        assert!(GaussianLocation::new(SymMatrix::zeros(2)).is_err());
    }
}
