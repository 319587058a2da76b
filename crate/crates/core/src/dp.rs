//! Posterior sampling for the spatial-median functional under a Dirichlet
//! process prior, by truncated stick-breaking, and under its noninformative
//! limit, the Bayesian bootstrap.

use nalgebra::DMatrix;
use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::numerics::SymMatrix;
use crate::sample::Sample;
use crate::spatial::{weighted_spatial_median, SolverOptions, WeightedPointSet};

/// Expected residual stick mass targeted by [`Truncation::Auto`].
pub const AUTO_RESIDUAL_MASS: f64 = 1e-4;

#[derive(Clone, Debug)]
pub enum BaseMeasure {
    Gaussian {
        mean: Vec<f64>,
        covariance: SymMatrix,
        factor: DMatrix<f64>,
    },
}

impl BaseMeasure {
    pub fn gaussian(mean: Vec<f64>, covariance: SymMatrix) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return domain("base-measure mean and covariance dimensions differ");
        }
        let factor = covariance
            .cholesky()
            .map_err(|_| Error::Domain("base-measure covariance must be positive definite".into()))?;
        Ok(Self::Gaussian { mean, covariance, factor })
    }

    /// N(0, variance · I).
    pub fn isotropic_gaussian(dim: usize, variance: f64) -> Result<Self> {
        Self::gaussian(vec![0.0; dim], SymMatrix::identity(dim).scaled(variance))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn translated(&self, offset: &[f64]) -> Self {
        match self {
            Self::Gaussian { mean, covariance, factor } => Self::Gaussian {
                mean: mean.iter().zip(offset).map(|(a, b)| a + b).collect(),
                covariance: covariance.clone(),
                factor: factor.clone(),
            },
        }
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        match self {
            Self::Gaussian { mean, factor, .. } => {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for (i, o) in out.iter_mut().enumerate() {
                    *o = mean[i] + (0..=i).map(|j| factor[(i, j)] * z[j]).sum::<f64>();
                }
            }
        }
    }
}

/// DP(M·G): concentration mass M and base measure G.
#[derive(Clone, Debug)]
pub struct DPPrior {
    mass: f64,
    base: BaseMeasure,
}

impl DPPrior {
    pub fn new(mass: f64, base: BaseMeasure) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return domain(format!("DP mass must be positive, got {mass}"));
        }
        Ok(Self { mass, base })
    }

    /// M = 2 with base N(0, 10·I).
    pub fn reference(dim: usize) -> Self {
        Self::new(2.0, BaseMeasure::isotropic_gaussian(dim, 10.0).expect("positive variance"))
            .expect("positive mass")
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    pub fn translated(&self, offset: &[f64]) -> Self {
        Self { mass: self.mass, base: self.base.translated(offset) }
    }
}

/// Which posterior the spatial-median draws come from.
#[derive(Clone, Debug)]
pub enum Posterior {
    Dirichlet(DPPrior),
    /// The M → 0 limit DP(n·Pₙ), sampled by exponential reweighting.
    BayesianBootstrap,
}

impl Posterior {
    pub fn translated(&self, offset: &[f64]) -> Self {
        match self {
            Self::Dirichlet(p) => Self::Dirichlet(p.translated(offset)),
            Self::BayesianBootstrap => Self::BayesianBootstrap,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Truncation {
    /// ⌈(M + n + 1)·ln(10⁴)⌉ atoms.
    #[default]
    Auto,
    Fixed(usize),
}

impl Truncation {
    pub fn resolve(&self, mass: f64, n: usize) -> usize {
        match *self {
            Self::Auto => auto_truncation(mass, n),
            Self::Fixed(atoms) => atoms.max(1),
        }
    }
}

/// Truncation level whose expected residual stick mass under Be(1, M + n)
/// breaks stays below [`AUTO_RESIDUAL_MASS`].
pub fn auto_truncation(mass: f64, n: usize) -> usize {
    ((mass + n as f64 + 1.0) * (1.0 / AUTO_RESIDUAL_MASS).ln()).ceil() as usize
}

/// Wⱼ = Vⱼ ∏_{l<j}(1 − V_l) with Vⱼ ~ Be(1, concentration) and V_N = 1.
pub fn stick_break_weights<R: Rng + ?Sized>(n_atoms: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    assert!(n_atoms >= 1, "at least one atom");
    let mut weights = Vec::with_capacity(n_atoms);
    let mut remaining = 1.0_f64;
    let mut assigned = 0.0_f64;
    for _ in 0..n_atoms - 1 {
        // Be(1, c) by inversion: V = 1 − U^{1/c}
        let u: f64 = rng.sample(Open01);
        let v = -(u.ln() / concentration).exp_m1();
        let w = v * remaining;
        remaining *= 1.0 - v;
        assigned += w;
        weights.push(w);
    }
    // V_N = 1 hands the leftover stick to the last atom
    weights.push((1.0 - assigned).max(0.0));
    weights
}

enum Atom {
    Data(usize),
    Base,
}

fn draw_atom<R: Rng + ?Sized>(base_prob: f64, n: usize, rng: &mut R) -> Atom {
    let u: f64 = rng.sample(Open01);
    if u < base_prob {
        Atom::Base
    } else {
        Atom::Data(rng.random_range(0..n))
    }
}

fn check_data(data: &Sample, prior: &DPPrior) -> Result<()> {
    if data.is_empty() {
        return domain("posterior sampling needs at least one observation");
    }
    if prior.base.dim() != data.dim() {
        return domain(format!(
            "base measure has dimension {} but data has {}",
            prior.base.dim(),
            data.dim()
        ));
    }
    Ok(())
}

/// N atoms, each from G with probability M/(M + n) and otherwise a uniformly
/// chosen data row.
pub fn draw_posterior_atoms<R: Rng + ?Sized>(
    n_atoms: usize,
    data: &Sample,
    prior: &DPPrior,
    rng: &mut R,
) -> Result<Sample> {
    check_data(data, prior)?;
    let k = data.dim();
    let n = data.len();
    let base_prob = prior.mass / (prior.mass + n as f64);
    let mut values = vec![0.0; n_atoms * k];
    let mut z = vec![0.0; k];
    for atom in values.chunks_exact_mut(k) {
        match draw_atom(base_prob, n, rng) {
            Atom::Base => prior.base.sample_into(rng, &mut z, atom),
            Atom::Data(i) => atom.copy_from_slice(data.row(i)),
        }
    }
    Sample::new(values, k)
}

/// One truncated posterior random measure, with atoms that repeat a data row
/// merged into a single weighted point.
pub fn draw_posterior_measure<R: Rng + ?Sized>(
    data: &Sample,
    prior: &DPPrior,
    truncation: Truncation,
    rng: &mut R,
) -> Result<WeightedPointSet> {
    check_data(data, prior)?;
    let k = data.dim();
    let n = data.len();
    let n_atoms = truncation.resolve(prior.mass, n);
    let weights = stick_break_weights(n_atoms, prior.mass + n as f64, rng);
    let base_prob = prior.mass / (prior.mass + n as f64);

    let mut row_weight = vec![0.0; n];
    let mut base_points = Vec::new();
    let mut base_weights = Vec::new();
    let mut z = vec![0.0; k];
    let mut point = vec![0.0; k];
    for &w in &weights {
        match draw_atom(base_prob, n, rng) {
            Atom::Base => {
                prior.base.sample_into(rng, &mut z, &mut point);
                base_points.extend_from_slice(&point);
                base_weights.push(w);
            }
            Atom::Data(i) => row_weight[i] += w,
        }
    }
    let mut values = Vec::with_capacity((n + base_weights.len()) * k);
    let mut merged = Vec::with_capacity(n + base_weights.len());
    for (i, &w) in row_weight.iter().enumerate() {
        if w > 0.0 {
            values.extend_from_slice(data.row(i));
            merged.push(w);
        }
    }
    values.extend_from_slice(&base_points);
    merged.extend_from_slice(&base_weights);
    WeightedPointSet::new(Sample::new(values, k)?, merged)
}

fn check_median_preconditions(data: &Sample) -> Result<()> {
    if data.len() < data.dim() + 1 {
        return domain(format!(
            "posterior median draws need n ≥ k + 1 (n = {}, k = {})",
            data.len(),
            data.dim()
        ));
    }
    Ok(())
}

fn solve_draw(ps: &WeightedPointSet, opts: &SolverOptions) -> Result<Vec<f64>> {
    let sol = weighted_spatial_median(ps, opts);
    if !sol.converged {
        return Err(Error::Convergence { iterations: sol.iterations, residual: sol.residual });
    }
    Ok(sol.location)
}

/// One posterior draw θ(P) with P from the truncated DP posterior.
pub fn draw_posterior_median<R: Rng + ?Sized>(
    data: &Sample,
    prior: &DPPrior,
    truncation: Truncation,
    opts: &SolverOptions,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_median_preconditions(data)?;
    let ps = draw_posterior_measure(data, prior, truncation, rng)?;
    solve_draw(&ps, opts)
}

/// Flat Dirichlet weights: iid standard exponentials normalized to sum 1.
pub fn bayesian_bootstrap_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            -u.ln()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Spatial median of the data under caller-supplied weights.
pub fn bootstrap_median_with_weights(data: &Sample, weights: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    check_median_preconditions(data)?;
    let ps = WeightedPointSet::new(data.clone(), weights.to_vec())?;
    solve_draw(&ps, opts)
}

/// One Bayesian-bootstrap draw of the spatial median.
pub fn draw_bootstrap_median<R: Rng + ?Sized>(data: &Sample, opts: &SolverOptions, rng: &mut R) -> Result<Vec<f64>> {
    let weights = bayesian_bootstrap_weights(data.len(), rng);
    bootstrap_median_with_weights(data, &weights, opts)
}

/// One draw from whichever posterior is selected.
pub fn draw_median<R: Rng + ?Sized>(
    data: &Sample,
    posterior: &Posterior,
    truncation: Truncation,
    opts: &SolverOptions,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match posterior {
        Posterior::Dirichlet(prior) => draw_posterior_median(data, prior, truncation, opts, rng),
        Posterior::BayesianBootstrap => draw_bootstrap_median(data, opts, rng),
    }
}
