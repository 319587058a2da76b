use std::collections::BTreeMap;

use rand::Rng;

use super::{at_least, check_alpha, chi2_outcome, monte_carlo_pvalue, ResamplingMode, ScoreKind, EXACT_LIMIT};
use crate::bnp::TestOutcome;
use crate::error::{domain, Result};
use crate::numerics::{sym_inverse, SymMatrix};
use crate::sample::{add_outer, Sample};
use crate::seed::SeedStream;
use crate::spatial::{spatial_sign, spatial_signed_rank};

/// Q² = n m̄ᵀ Σ̂⁻¹ m̄ with m̄ and Σ̂ = (1/n)Σ TᵢTᵢᵀ from the scores.
#[derive(Clone, Debug)]
pub struct ScoreStatistic {
    pub q_sq: f64,
    pub scores: Sample,
    pub precision: SymMatrix,
}

/// Scores T(Yᵢ − θ₀). In one sample, pooled spatial ranks of the centered
/// data always average to zero, so `Rank` uses signed ranks.
pub fn one_sample_scores(data: &Sample, theta0: &[f64], kind: ScoreKind) -> Result<Sample> {
    if theta0.len() != data.dim() {
        return domain(format!("theta0 has dimension {} but data has {}", theta0.len(), data.dim()));
    }
    let centered = data.translated(&theta0.iter().map(|t| -t).collect::<Vec<_>>());
    let mut values = Vec::with_capacity(data.len() * data.dim());
    match kind {
        ScoreKind::Sign => {
            for row in centered.rows() {
                values.extend(spatial_sign(row));
            }
        }
        ScoreKind::Rank | ScoreKind::SignedRank => {
            for row in centered.rows() {
                values.extend(spatial_signed_rank(row, &centered)?);
            }
        }
    }
    Sample::new(values, data.dim())
}

fn second_moment(scores: &Sample) -> SymMatrix {
    let k = scores.dim();
    let mut acc = vec![0.0; k * k];
    let c = 1.0 / scores.len() as f64;
    for t in scores.rows() {
        add_outer(c, t, &mut acc);
    }
    SymMatrix::from_row_major(k, acc).expect("outer-product sum is symmetric")
}

pub fn score_statistic(data: &Sample, theta0: &[f64], kind: ScoreKind) -> Result<ScoreStatistic> {
    if data.len() <= data.dim() {
        return domain(format!("score statistic needs n > k (n = {}, k = {})", data.len(), data.dim()));
    }
    let scores = one_sample_scores(data, theta0, kind)?;
    let precision = sym_inverse(&second_moment(&scores), 0.0)?;
    let sum: Vec<f64> = column_sums(&scores);
    let q_sq = precision.quad_form(&sum).max(0.0) / scores.len() as f64;
    Ok(ScoreStatistic { q_sq, scores, precision })
}

fn column_sums(s: &Sample) -> Vec<f64> {
    let mut out = vec![0.0; s.dim()];
    for row in s.rows() {
        out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
    }
    out
}

/// One-sample score test with the χ²_k approximation.
pub fn one_sample_score_test(data: &Sample, theta0: &[f64], kind: ScoreKind, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let st = score_statistic(data, theta0, kind)?;
    chi2_outcome(kind.name().to_string(), st.q_sq, data.dim(), alpha, BTreeMap::new())
}

/// Conditional p-value under directional symmetry: flipping Yᵢ − θ₀ flips
/// its sign and signed-rank score and leaves Σ̂ unchanged.
pub fn sign_flip_pvalue(data: &Sample, theta0: &[f64], kind: ScoreKind, flips: usize, seed: SeedStream) -> Result<f64> {
    sign_flip_pvalue_with(data, theta0, kind, flips, ResamplingMode::Auto, seed)
}

pub fn sign_flip_pvalue_with(
    data: &Sample,
    theta0: &[f64],
    kind: ScoreKind,
    flips: usize,
    mode: ResamplingMode,
    seed: SeedStream,
) -> Result<f64> {
    if flips == 0 {
        return domain("at least one sign flip is required");
    }
    let st = score_statistic(data, theta0, kind)?;
    let n = st.scores.len();
    let k = st.scores.dim();
    let flipped_stat = |signs: &dyn Fn(usize) -> bool| {
        let mut sum = vec![0.0; k];
        for (i, t) in st.scores.rows().enumerate() {
            let s = if signs(i) { -1.0 } else { 1.0 };
            sum.iter_mut().zip(t).for_each(|(o, x)| *o += s * x);
        }
        st.precision.quad_form(&sum) / n as f64
    };
    let patterns = if n < 63 { Some(1u64 << n) } else { None };
    let exact = match mode {
        ResamplingMode::Exact => true,
        ResamplingMode::MonteCarlo => false,
        ResamplingMode::Auto => patterns.is_some_and(|p| p <= EXACT_LIMIT),
    };
    if exact {
        let Some(total) = patterns.filter(|&p| p <= 1 << 24) else {
            return domain(format!("exact enumeration of 2^{n} sign patterns is infeasible"));
        };
        let count = (0..total).filter(|&m| at_least(flipped_stat(&|i| (m >> i) & 1 == 1), st.q_sq)).count();
        return Ok(count as f64 / total as f64);
    }
    Ok(monte_carlo_pvalue(st.q_sq, flips, &seed, |rng| {
        let signs: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        flipped_stat(&|i| signs[i])
    }))
}
