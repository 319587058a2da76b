use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;

use super::{at_least, check_alpha, chi2_outcome, monte_carlo_pvalue, ResamplingMode, ScoreKind, EXACT_LIMIT};
use crate::bnp::TestOutcome;
use crate::error::{domain, Error, Result};
use crate::numerics::SymMatrix;
use crate::sample::{add_outer, Sample};
use crate::seed::SeedStream;
use crate::spatial::{add_sign_of_difference, spatial_median, spatial_sign, SolverOptions};

/// Z = H(Y − h) with pooled scores of Z centered and with scatter ∝ I.
#[derive(Clone, Debug)]
pub struct Standardization {
    /// H, normalized to unit determinant.
    pub transform: DMatrix<f64>,
    /// h.
    pub shift: Vec<f64>,
    pub standardized: Sample,
    pub scores: Sample,
    pub iterations: usize,
    /// ‖(1/n) Σ T(Zᵢ)‖.
    pub location_residual: f64,
    /// max |k Σ TTᵀ / Σ‖T‖² − I| entrywise.
    pub scatter_residual: f64,
}

/// Scores of a pooled sample: signs about the origin, or spatial ranks
/// against the pooled sample itself.
pub fn pooled_scores(z: &Sample, kind: ScoreKind) -> Result<Sample> {
    let k = z.dim();
    match kind {
        ScoreKind::Sign => Sample::new(z.rows().flat_map(spatial_sign).collect(), k),
        ScoreKind::Rank => {
            let n = z.len();
            let mut out = vec![0.0; n * k];
            let scale = 1.0 / n as f64;
            let mut tmp = vec![0.0; k];
            for i in 0..n {
                for j in i + 1..n {
                    tmp.iter_mut().for_each(|t| *t = 0.0);
                    add_sign_of_difference(z.row(i), z.row(j), scale, &mut tmp);
                    for c in 0..k {
                        out[i * k + c] += tmp[c];
                        out[j * k + c] -= tmp[c];
                    }
                }
            }
            Sample::new(out, k)
        }
        ScoreKind::SignedRank => domain("signed-rank scores are one-sample only"),
    }
}

/// Sign scores with points within a relative 1e-12 of the origin scored 0,
/// plus how many such points there are.
fn snapped_signs(z: &Sample) -> Result<(Sample, usize)> {
    let scale = z.rows().map(crate::sample::norm).fold(0.0, f64::max);
    let snap = 1e-12 * (1.0 + scale);
    let mut at_origin = 0;
    let mut values = Vec::with_capacity(z.len() * z.dim());
    for row in z.rows() {
        if crate::sample::norm(row) <= snap {
            at_origin += 1;
            values.extend(std::iter::repeat_n(0.0, z.dim()));
        } else {
            values.extend(spatial_sign(row));
        }
    }
    Ok((Sample::new(values, z.dim())?, at_origin))
}

fn scores_for(z: &Sample, kind: ScoreKind) -> Result<(Sample, usize)> {
    match kind {
        ScoreKind::Sign => snapped_signs(z),
        _ => Ok((pooled_scores(z, kind)?, 0)),
    }
}

fn apply(data: &Sample, transform: &DMatrix<f64>, shift: &[f64]) -> Result<Sample> {
    let k = data.dim();
    let mut out = Vec::with_capacity(data.len() * k);
    for row in data.rows() {
        let d = DVector::from_iterator(k, row.iter().zip(shift).map(|(y, h)| y - h));
        out.extend((transform * d).iter());
    }
    Sample::new(out, k)
}

/// Location and scatter residuals, and the normalized scatter k ΣTTᵀ/Σ‖T‖².
/// `at_origin` points sitting at the origin may absorb up to their share of
/// the score mean, as in the optimality condition of the spatial median.
fn residuals(scores: &Sample, at_origin: usize) -> (f64, f64, SymMatrix) {
    let k = scores.dim();
    let n = scores.len() as f64;
    let mut mean = vec![0.0; k];
    let mut acc = vec![0.0; k * k];
    let mut total = 0.0;
    for t in scores.rows() {
        mean.iter_mut().zip(t).for_each(|(m, x)| *m += x / n);
        add_outer(1.0, t, &mut acc);
        total += t.iter().map(|x| x * x).sum::<f64>();
    }
    let c = if total > 0.0 { k as f64 / total } else { 0.0 };
    acc.iter_mut().for_each(|v| *v *= c);
    let scatter = SymMatrix::from_row_major(k, acc).expect("outer-product sum is symmetric");
    let mut off = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            off = off.max((scatter.get(i, j) - target).abs());
        }
    }
    let slack = at_origin as f64 / n;
    ((crate::sample::norm(&mean) - slack).max(0.0), off, scatter)
}

fn unit_determinant(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = m.nrows() as f64;
    let det = m.determinant();
    if !(det > 0.0 && det.is_finite()) {
        return Err(Error::Singular("inner standardization transform became singular".into()));
    }
    Ok(m / det.powf(1.0 / k))
}

/// Alternating fixed point from H = I, h = 0: a scatter step H ← C^{-1/2}H
/// (rescaled to det 1) and, for sign scores, a shift step moving h to the
/// spatial median of the current Z. Rank scores are translation invariant,
/// so h stays 0 for them.
pub fn inner_standardize_two_sample(
    data1: &Sample,
    data2: &Sample,
    kind: ScoreKind,
    tol: f64,
    max_iter: usize,
) -> Result<Standardization> {
    let pooled = pooled_input(data1, data2, kind)?;
    let k = pooled.dim();
    let needs_shift = kind == ScoreKind::Sign;
    let solver = SolverOptions { tol: (0.01 * tol).max(1e-14), ..SolverOptions::default() };
    let mut transform = DMatrix::<f64>::identity(k, k);
    let mut shift = vec![0.0; k];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let z = apply(&pooled, &transform, &shift)?;
        let (scores, at_origin) = scores_for(&z, kind)?;
        let (loc, scat, scatter) = residuals(&scores, at_origin);
        let loc = if needs_shift { loc } else { 0.0 };
        if loc <= tol && scat <= tol {
            return Ok(Standardization {
                transform,
                shift,
                standardized: z,
                scores,
                iterations,
                location_residual: loc,
                scatter_residual: scat,
            });
        }
        if iterations >= max_iter {
            return Err(Error::Convergence { iterations, residual: loc.max(scat) });
        }
        if scat > tol {
            if !scatter.is_positive_definite() {
                return Err(Error::Singular("pooled score scatter is singular; data are degenerate".into()));
            }
            let root_inv = scatter.spectral_map(|x| 1.0 / x.sqrt());
            transform = unit_determinant(root_inv.as_matrix() * transform)?;
        }
        if needs_shift {
            let z = apply(&pooled, &transform, &shift)?;
            let center = spatial_median(&z, &solver)?.location;
            let inverse = transform
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Singular("inner standardization transform became singular".into()))?;
            let dh = inverse * DVector::from_column_slice(&center);
            shift.iter_mut().zip(dh.iter()).for_each(|(h, d)| *h += d);
        }
    }
}

fn pooled_input(data1: &Sample, data2: &Sample, kind: ScoreKind) -> Result<Sample> {
    if data1.dim() != data2.dim() {
        return domain(format!("samples have dimensions {} and {}", data1.dim(), data2.dim()));
    }
    if kind == ScoreKind::SignedRank {
        return domain("signed-rank scores are one-sample only");
    }
    let k = data1.dim();
    if data1.len() <= k || data2.len() <= k {
        return domain(format!("two-sample score test needs n₁, n₂ > k (got {}, {}, k = {k})", data1.len(), data2.len()));
    }
    data1.concat(data2)
}

/// Scores ordered as data1 then data2, with or without inner standardization.
/// Without it the pooled sample is whitened by its covariance and centered at
/// the spatial median of the whitened points.
fn two_sample_scores(data1: &Sample, data2: &Sample, kind: ScoreKind, standardize: bool) -> Result<(Sample, BTreeMap<String, f64>)> {
    let mut diag = BTreeMap::new();
    if standardize {
        let st = inner_standardize_two_sample(data1, data2, kind, 1e-8, 1000)?;
        diag.insert("iterations".to_string(), st.iterations as f64);
        diag.insert("location_residual".to_string(), st.location_residual);
        diag.insert("scatter_residual".to_string(), st.scatter_residual);
        return Ok((st.scores, diag));
    }
    let pooled = pooled_input(data1, data2, kind)?;
    let cov = pooled.covariance();
    if !cov.is_positive_definite() {
        return Err(Error::Singular("pooled covariance is singular".into()));
    }
    let whiten = cov.spectral_map(|x| 1.0 / x.sqrt());
    let white = apply(&pooled, whiten.as_matrix(), &vec![0.0; pooled.dim()])?;
    let center = spatial_median(&white, &SolverOptions::default())?.location;
    let z = white.translated(&center.iter().map(|c| -c).collect::<Vec<_>>());
    Ok((scores_for(&z, kind)?.0, diag))
}

/// k Σⱼ nⱼ‖m̄ⱼ‖² / ((1/n)ΣΣ‖T‖²) where the first `n1` rows of `scores` form
/// group 1.
pub fn two_sample_q_squared(scores: &Sample, n1: usize) -> f64 {
    let k = scores.dim();
    let n = scores.len();
    let mut s1 = vec![0.0; k];
    let mut total = vec![0.0; k];
    let mut sq = 0.0;
    for (i, t) in scores.rows().enumerate() {
        if i < n1 {
            s1.iter_mut().zip(t).for_each(|(a, x)| *a += x);
        }
        total.iter_mut().zip(t).for_each(|(a, x)| *a += x);
        sq += t.iter().map(|x| x * x).sum::<f64>();
    }
    labelled_q(&s1, &total, n1, n, sq / n as f64)
}

fn labelled_q(s1: &[f64], total: &[f64], n1: usize, n: usize, denom: f64) -> f64 {
    if denom <= 0.0 {
        return 0.0;
    }
    let n2 = n - n1;
    let mut num = 0.0;
    for (a, t) in s1.iter().zip(total) {
        let b = t - a;
        // nⱼ‖m̄ⱼ‖² = ‖sⱼ‖²/nⱼ
        num += a * a / n1 as f64 + b * b / n2 as f64;
    }
    s1.len() as f64 * num / denom
}

pub fn two_sample_score_test(data1: &Sample, data2: &Sample, kind: ScoreKind, standardize: bool, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let (scores, diag) = two_sample_scores(data1, data2, kind, standardize)?;
    let q = two_sample_q_squared(&scores, data1.len());
    chi2_outcome(kind.name().to_string(), q, data1.dim(), alpha, diag)
}

/// Label-permutation p-value. Scores come from the pooled standardization,
/// which does not depend on the labels, so they are computed once.
pub fn permutation_pvalue(data1: &Sample, data2: &Sample, kind: ScoreKind, perms: usize, seed: SeedStream) -> Result<f64> {
    permutation_pvalue_with(data1, data2, kind, perms, ResamplingMode::Auto, seed)
}

fn binomial(n: usize, r: usize) -> Option<u64> {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

pub fn permutation_pvalue_with(
    data1: &Sample,
    data2: &Sample,
    kind: ScoreKind,
    perms: usize,
    mode: ResamplingMode,
    seed: SeedStream,
) -> Result<f64> {
    if perms == 0 {
        return domain("at least one permutation is required");
    }
    let (scores, _) = two_sample_scores(data1, data2, kind, true)?;
    let (n1, n) = (data1.len(), scores.len());
    let k = scores.dim();
    let mut total = vec![0.0; k];
    let mut sq = 0.0;
    for t in scores.rows() {
        total.iter_mut().zip(t).for_each(|(a, x)| *a += x);
        sq += t.iter().map(|x| x * x).sum::<f64>();
    }
    let denom = sq / n as f64;
    let observed = two_sample_q_squared(&scores, n1);
    let stat_of = |members: &mut dyn Iterator<Item = usize>| {
        let mut s1 = vec![0.0; k];
        for i in members {
            s1.iter_mut().zip(scores.row(i)).for_each(|(a, x)| *a += x);
        }
        labelled_q(&s1, &total, n1, n, denom)
    };
    let assignments = binomial(n, n1);
    let exact = match mode {
        ResamplingMode::Exact => true,
        ResamplingMode::MonteCarlo => false,
        ResamplingMode::Auto => assignments.is_some_and(|c| c <= EXACT_LIMIT),
    };
    if exact {
        let total_count = assignments.filter(|&c| c <= 1 << 24).ok_or_else(|| {
            Error::Domain(format!("exact enumeration of C({n}, {n1}) label assignments is infeasible"))
        })?;
        let mut combo: Vec<usize> = (0..n1).collect();
        let mut count = 0u64;
        loop {
            if at_least(stat_of(&mut combo.iter().copied()), observed) {
                count += 1;
            }
            // next combination in lexicographic order
            let Some(i) = (0..n1).rev().find(|&i| combo[i] < n - n1 + i) else { break };
            combo[i] += 1;
            for j in i + 1..n1 {
                combo[j] = combo[j - 1] + 1;
            }
        }
        return Ok(count as f64 / total_count as f64);
    }
    Ok(monte_carlo_pvalue(observed, perms, &seed, |rng| {
        let chosen = sample_indices(rng, n, n1);
        stat_of(&mut chosen.into_iter())
    }))
}
