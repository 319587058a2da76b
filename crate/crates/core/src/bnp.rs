//! Credible regions from posterior spatial-median draws and the one-sample
//! and two-sample Bayesian nonparametric location tests built on them.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dp::{draw_median, Posterior, Truncation};
use crate::error::{domain, Error, Result};
use crate::numerics::{empirical_quantile, sym_inverse, SymMatrix};
use crate::sample::{add_outer, Sample};
use crate::seed::SeedStream;
use crate::spatial::SolverOptions;

/// Ellipsoid {θ : (θ − center)ᵀ S⁻¹ (θ − center) ≤ radius_sq}.
#[derive(Clone, Debug)]
pub struct CredibleRegion {
    pub center: Vec<f64>,
    pub scatter: SymMatrix,
    pub radius_sq: f64,
    pub level: f64,
    pub num_draws: usize,
    /// Ridge added to `scatter` before inversion.
    pub ridge: f64,
    precision: SymMatrix,
}

impl CredibleRegion {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn mahalanobis_sq(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim() {
            return domain(format!("point has dimension {} but region has {}", point.len(), self.dim()));
        }
        let d: Vec<f64> = point.iter().zip(&self.center).map(|(p, c)| p - c).collect();
        Ok(self.precision.quad_form(&d).max(0.0))
    }

    /// Boundary inclusive.
    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        Ok(self.mahalanobis_sq(point)? <= self.radius_sq)
    }

    pub fn precision(&self) -> &SymMatrix {
        &self.precision
    }
}

/// How a singular posterior scatter is handled.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum RidgePolicy {
    /// Invert as is; on failure retry with 1e-10 · trace(S)/k (1e-10 if S = 0).
    #[default]
    Auto,
    Fixed(f64),
}


fn draws_matrix_check(draws: &[Vec<f64>]) -> Result<usize> {
    let k = draws.first().map(Vec::len).unwrap_or(0);
    if k == 0 {
        return domain("credible region needs nonempty draws");
    }
    if draws.len() <= k {
        return domain(format!("credible region needs B ≥ k + 1 draws (B = {}, k = {k})", draws.len()));
    }
    if draws.iter().any(|d| d.len() != k) {
        return domain("draws have inconsistent dimensions");
    }
    Ok(k)
}

fn mean_and_scatter(draws: &[Vec<f64>], k: usize) -> (Vec<f64>, SymMatrix) {
    let b = draws.len() as f64;
    let mut center = vec![0.0; k];
    for d in draws {
        for (c, x) in center.iter_mut().zip(d) {
            *c += x / b;
        }
    }
    let mut acc = vec![0.0; k * k];
    let mut dev = vec![0.0; k];
    for d in draws {
        for j in 0..k {
            dev[j] = d[j] - center[j];
        }
        add_outer(1.0 / b, &dev, &mut acc);
    }
    (center, SymMatrix::from_row_major(k, acc).expect("outer-product sum is symmetric"))
}

fn invert_with_policy(scatter: &SymMatrix, policy: RidgePolicy) -> Result<(SymMatrix, f64)> {
    match policy {
        RidgePolicy::Fixed(ridge) => sym_inverse(scatter, ridge).map(|p| (p, ridge)).map_err(|e| match e {
            Error::Singular(msg) if ridge == 0.0 => {
                Error::Singular(format!("{msg}; posterior scatter is singular, supply a positive ridge"))
            }
            other => other,
        }),
        RidgePolicy::Auto => match sym_inverse(scatter, 0.0) {
            Ok(p) => Ok((p, 0.0)),
            Err(_) => {
                let k = scatter.dim() as f64;
                let tr = scatter.trace();
                let ridge = if tr > 0.0 { 1e-10 * tr / k } else { 1e-10 };
                sym_inverse(scatter, ridge).map(|p| (p, ridge))
            }
        },
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return domain(format!("level must lie in (0, 1), got {level}"));
    }
    Ok(())
}

/// Region with center = draw mean, scatter = (1/B)Σ(θ_b − θ̄)(θ_b − θ̄)ᵀ and
/// radius the ⌈level·B⌉-th smallest per-draw Mahalanobis².
pub fn credible_region(draws: &[Vec<f64>], level: f64, ridge: f64) -> Result<CredibleRegion> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return domain(format!("ridge must be nonnegative, got {ridge}"));
    }
    region_with_policy(draws, level, RidgePolicy::Fixed(ridge))
}

pub fn region_with_policy(draws: &[Vec<f64>], level: f64, policy: RidgePolicy) -> Result<CredibleRegion> {
    check_level(level)?;
    let k = draws_matrix_check(draws)?;
    let (center, scatter) = mean_and_scatter(draws, k);
    let (precision, ridge) = invert_with_policy(&scatter, policy)?;
    let mut region = CredibleRegion { center, scatter, radius_sq: 0.0, level, num_draws: draws.len(), ridge, precision };
    let dists: Vec<f64> = draws.iter().map(|d| region.mahalanobis_sq(d)).collect::<Result<_>>()?;
    region.radius_sq = empirical_quantile(&dists, level)?;
    Ok(region)
}

/// Region for θ(P₁) − θ(P₂) from paired draws: center θ̄₁ − θ̄₂, scatter
/// S₁ + S₂, radius from the per-pair difference distances.
pub fn difference_region(
    draws1: &[Vec<f64>],
    draws2: &[Vec<f64>],
    level: f64,
    policy: RidgePolicy,
) -> Result<CredibleRegion> {
    check_level(level)?;
    let k = draws_matrix_check(draws1)?;
    if draws_matrix_check(draws2)? != k || draws1.len() != draws2.len() {
        return domain("paired draws must share count and dimension");
    }
    let (c1, s1) = mean_and_scatter(draws1, k);
    let (c2, s2) = mean_and_scatter(draws2, k);
    let center: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a - b).collect();
    let scatter = s1.add(&s2);
    let (precision, ridge) = invert_with_policy(&scatter, policy)?;
    let mut region = CredibleRegion { center, scatter, radius_sq: 0.0, level, num_draws: draws1.len(), ridge, precision };
    let dists: Vec<f64> = draws1
        .iter()
        .zip(draws2)
        .map(|(a, b)| {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            region.mahalanobis_sq(&diff)
        })
        .collect::<Result<_>>()?;
    region.radius_sq = empirical_quantile(&dists, level)?;
    Ok(region)
}

/// Outcome of any test in this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct TestOutcome {
    pub method: String,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub p_value: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct BnpConfig {
    /// Posterior draws B.
    pub draws: usize,
    /// Credible level 1 − α.
    pub level: f64,
    pub truncation: Truncation,
    pub ridge: RidgePolicy,
    pub solver: SolverOptions,
}

impl Default for BnpConfig {
    fn default() -> Self {
        Self {
            draws: 1000,
            level: 0.95,
            truncation: Truncation::Auto,
            ridge: RidgePolicy::Auto,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BnpResult {
    pub outcome: TestOutcome,
    pub region: CredibleRegion,
}

/// B posterior median draws; draw b uses `seed.child(b)`.
pub fn posterior_draws(data: &Sample, posterior: &Posterior, config: &BnpConfig, seed: &SeedStream) -> Result<Vec<Vec<f64>>> {
    if config.draws <= data.dim() {
        return domain(format!("need B ≥ k + 1 posterior draws (B = {}, k = {})", config.draws, data.dim()));
    }
    (0..config.draws as u64)
        .into_par_iter()
        .map(|b| draw_median(data, posterior, config.truncation, &config.solver, &mut seed.child(b).rng()))
        .collect()
}

fn method_name(posterior: &Posterior) -> &'static str {
    match posterior {
        Posterior::Dirichlet(_) => "npbayes",
        Posterior::BayesianBootstrap => "npbayes-bootstrap",
    }
}

fn outcome(method: &str, region: &CredibleRegion, point: &[f64], n_atoms: Option<usize>) -> Result<TestOutcome> {
    let statistic = region.mahalanobis_sq(point)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("ridge".to_string(), region.ridge);
    diagnostics.insert("draws".to_string(), region.num_draws as f64);
    if let Some(atoms) = n_atoms {
        diagnostics.insert("truncation_atoms".to_string(), atoms as f64);
    }
    Ok(TestOutcome {
        method: method.to_string(),
        statistic,
        threshold: region.radius_sq,
        reject: statistic > region.radius_sq,
        p_value: None,
        diagnostics,
    })
}

fn atoms_used(posterior: &Posterior, truncation: Truncation, n: usize) -> Option<usize> {
    match posterior {
        Posterior::Dirichlet(p) => Some(truncation.resolve(p.mass(), n)),
        Posterior::BayesianBootstrap => None,
    }
}

/// Rejects H₀: θ(P) = theta0 when theta0 falls outside the credible region.
pub fn one_sample_test(
    data: &Sample,
    theta0: &[f64],
    posterior: &Posterior,
    config: &BnpConfig,
    seed: SeedStream,
) -> Result<BnpResult> {
    if theta0.len() != data.dim() {
        return domain(format!("theta0 has dimension {} but data has {}", theta0.len(), data.dim()));
    }
    let draws = posterior_draws(data, posterior, config, &seed)?;
    let region = region_with_policy(&draws, config.level, config.ridge)?;
    let outcome = outcome(method_name(posterior), &region, theta0, atoms_used(posterior, config.truncation, data.len()))?;
    Ok(BnpResult { outcome, region })
}

/// Rejects H₀: θ(P₁) = θ(P₂). Sample j draws from `seed.child(j)`.
pub fn two_sample_test(
    data1: &Sample,
    data2: &Sample,
    posterior: &Posterior,
    config: &BnpConfig,
    seed: SeedStream,
) -> Result<BnpResult> {
    two_sample_test_with_streams(data1, data2, posterior, config, seed.child(1), seed.child(2))
}

/// As [`two_sample_test`] with explicit per-sample streams.
pub fn two_sample_test_with_streams(
    data1: &Sample,
    data2: &Sample,
    posterior: &Posterior,
    config: &BnpConfig,
    seed1: SeedStream,
    seed2: SeedStream,
) -> Result<BnpResult> {
    if data1.dim() != data2.dim() {
        return domain(format!("samples have dimensions {} and {}", data1.dim(), data2.dim()));
    }
    let draws1 = posterior_draws(data1, posterior, config, &seed1)?;
    let draws2 = posterior_draws(data2, posterior, config, &seed2)?;
    let region = difference_region(&draws1, &draws2, config.level, config.ridge)?;
    let zero = vec![0.0; data1.dim()];
    let mut outcome = outcome(method_name(posterior), &region, &zero, atoms_used(posterior, config.truncation, data1.len()))?;
    if let Some(a2) = atoms_used(posterior, config.truncation, data2.len()) {
        outcome.diagnostics.insert("truncation_atoms_2".to_string(), a2 as f64);
    }
    Ok(BnpResult { outcome, region })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::DPPrior;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn gaussian_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| vec![r.sample(StandardNormal), r.sample(StandardNormal)]).collect()
    }

    fn gaussian_sample(n: usize, seed: u64) -> Sample {
        Sample::from_rows(&gaussian_rows(n, seed)).unwrap()
    }

    #[test]
    fn cross_region() {
        let draws = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let r = credible_region(&draws, 0.95, 0.0).unwrap();
        assert_eq!(r.center, vec![0.0, 0.0]);
        assert!((r.scatter.get(0, 0) - 0.5).abs() < 1e-15 && r.scatter.get(0, 1).abs() < 1e-15);
        assert!((r.radius_sq - 2.0).abs() < 1e-12);
        assert!(r.contains(&[0.0, 0.0]).unwrap());
        // boundary is inclusive
        assert!(r.contains(&[1.0, 0.0]).unwrap());
        assert!(!r.contains(&[1.01, 0.0]).unwrap());
        assert!(r.contains(&[1.0]).is_err());
    }

    #[test]
    fn degenerate_draws() {
        let draws = vec![vec![2.0, 3.0]; 5];
        assert!(matches!(credible_region(&draws, 0.95, 0.0), Err(Error::Singular(_))));
        let r = credible_region(&draws, 0.95, 1e-8).unwrap();
        assert_eq!(r.radius_sq, 0.0);
        assert!(r.contains(&[2.0, 3.0]).unwrap());
        assert!(!r.contains(&[2.0, 3.0 + 1e-9]).unwrap());
        let auto = region_with_policy(&draws, 0.95, RidgePolicy::Auto).unwrap();
        assert_eq!(auto.ridge, 1e-10);
        assert!(credible_region(&draws[..2], 0.95, 1.0).is_err());
        assert!(credible_region(&draws, 1.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_draws_radius_near_chi2_quantile() {
        let draws = gaussian_rows(10_000, 1);
        let r = credible_region(&draws, 0.95, 0.0).unwrap();
        assert!((5.5..=6.5).contains(&r.radius_sq), "{}", r.radius_sq);
    }

    #[test]
    fn radius_attained_by_a_draw() {
        let draws = gaussian_rows(101, 2);
        let r = credible_region(&draws, 0.9, 0.0).unwrap();
        assert!(draws.iter().any(|d| (r.mahalanobis_sq(d).unwrap() - r.radius_sq).abs() < 1e-12));
    }

    #[test]
    fn accepts_region_center() {
        let data = gaussian_sample(60, 3);
        let config = BnpConfig { draws: 200, ..BnpConfig::default() };
        let prior = Posterior::Dirichlet(DPPrior::reference(2));
        let first = one_sample_test(&data, &[0.0, 0.0], &prior, &config, SeedStream::new(4)).unwrap();
        let center = first.region.center.clone();
        let again = one_sample_test(&data, &center, &prior, &config, SeedStream::new(4)).unwrap();
        assert!(!again.outcome.reject);
        assert!(again.outcome.statistic.abs() < 1e-20);
        assert_eq!(again.outcome.reject, again.outcome.statistic > again.outcome.threshold);
        assert_eq!(first.region.radius_sq, again.region.radius_sq);
    }

    #[test]
    fn one_sample_rejects_far_null() {
        let data = gaussian_sample(100, 5);
        let config = BnpConfig { draws: 300, ..BnpConfig::default() };
        let res = one_sample_test(&data, &[1.0, 1.0], &Posterior::BayesianBootstrap, &config, SeedStream::new(6)).unwrap();
        assert!(res.outcome.reject);
        assert!(one_sample_test(&data, &[1.0], &Posterior::BayesianBootstrap, &config, SeedStream::new(6)).is_err());
    }

    #[test]
    fn identical_samples_with_paired_streams() {
        let data = gaussian_sample(50, 7);
        let config = BnpConfig { draws: 200, ..BnpConfig::default() };
        let prior = Posterior::Dirichlet(DPPrior::reference(2));
        let s = SeedStream::new(8);
        let res = two_sample_test_with_streams(&data, &data, &prior, &config, s.clone(), s).unwrap();
        assert_eq!(res.outcome.statistic, 0.0);
        assert!(!res.outcome.reject);
    }

    #[test]
    fn two_sample_detects_large_shift() {
        let a = gaussian_sample(80, 9);
        let b = gaussian_sample(70, 10).translated(&[0.0, 1.5]);
        let config = BnpConfig { draws: 300, ..BnpConfig::default() };
        let res = two_sample_test(&a, &b, &Posterior::BayesianBootstrap, &config, SeedStream::new(11)).unwrap();
        assert!(res.outcome.reject);
        assert!(res.region.center[1] < -1.0);
    }

    #[test]
    fn affine_coherence() {
        let data = gaussian_sample(40, 12);
        let shift = [5.0, -2.0];
        let prior = DPPrior::reference(2);
        let config = BnpConfig { draws: 150, ..BnpConfig::default() };
        for theta0 in [[0.0, 0.0], [0.25, -0.2], [0.4, 0.4]] {
            let a = one_sample_test(&data, &theta0, &Posterior::Dirichlet(prior.clone()), &config, SeedStream::new(13)).unwrap();
            let moved = [theta0[0] + shift[0], theta0[1] + shift[1]];
            let b = one_sample_test(
                &data.translated(&shift),
                &moved,
                &Posterior::Dirichlet(prior.translated(&shift)),
                &config,
                SeedStream::new(13),
            )
            .unwrap();
            assert_eq!(a.outcome.reject, b.outcome.reject);
            assert!((a.outcome.statistic - b.outcome.statistic).abs() < 1e-6 * (1.0 + a.outcome.statistic));
        }
    }

    #[test]
    fn parallelism_does_not_change_draws() {
        let data = gaussian_sample(40, 14);
        let config = BnpConfig { draws: 64, ..BnpConfig::default() };
        let prior = Posterior::Dirichlet(DPPrior::reference(2));
        let seed = SeedStream::new(15);
        let par = posterior_draws(&data, &prior, &config, &seed).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| posterior_draws(&data, &prior, &config, &seed)).unwrap();
        assert_eq!(par, seq);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn radius_monotone_in_level(seed in 0u64..1000, b in 3usize..80) {
            let draws = gaussian_rows(b, seed);
            let lo = credible_region(&draws, 0.90, 0.0).unwrap();
            let hi = credible_region(&draws, 0.99, 0.0).unwrap();
            prop_assert!(hi.radius_sq >= lo.radius_sq);
            prop_assert_eq!(lo.center, hi.center);
        }

        #[test]
        fn scatter_is_psd(seed in 0u64..1000, b in 3usize..50) {
            let draws = gaussian_rows(b, seed);
            let (_, s) = mean_and_scatter(&draws, 2);
            let (vals, _) = s.eigen();
            prop_assert!(vals[0] >= -1e-12);
        }
    }
}
