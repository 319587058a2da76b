//! Frequentist comparators: spatial sign, rank and signed-rank score tests
//! with chi-square or resampling p-values, inner standardization for the
//! two-sample problem, and a chi-square Hotelling variant.

mod hotelling;
mod one_sample;
mod two_sample;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bnp::TestOutcome;
use crate::error::{Error, Result};
use crate::numerics::{chi2_quantile, chi2_sf};
use crate::seed::SeedStream;

pub use hotelling::{hotelling_one_sample, hotelling_two_sample};
pub use one_sample::{
    one_sample_score_test, one_sample_scores, score_statistic, sign_flip_pvalue, sign_flip_pvalue_with,
    ScoreStatistic,
};
pub use two_sample::{
    inner_standardize_two_sample, permutation_pvalue, permutation_pvalue_with, pooled_scores,
    two_sample_q_squared, two_sample_score_test, Standardization,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Sign,
    Rank,
    SignedRank,
}

impl ScoreKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sign => "sign",
            Self::Rank => "rank",
            Self::SignedRank => "signed_rank",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign" => Ok(Self::Sign),
            "rank" => Ok(Self::Rank),
            "signed_rank" | "signed-rank" => Ok(Self::SignedRank),
            other => Err(Error::Config(format!("unknown score kind `{other}`"))),
        }
    }
}

/// Default number of random sign flips or label permutations.
pub const DEFAULT_RESAMPLES: usize = 2000;

/// Exhaustive enumeration is used when the number of patterns is at most this.
pub const EXACT_LIMIT: u64 = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResamplingMode {
    /// Exact when the pattern count is at most [`EXACT_LIMIT`], else Monte Carlo.
    #[default]
    Auto,
    MonteCarlo,
    Exact,
}

/// Upper-tail χ²_k probability of `q_sq`.
pub fn chi2_pvalue(q_sq: f64, k: usize) -> f64 {
    if q_sq <= 0.0 {
        1.0
    } else {
        chi2_sf(q_sq, k)
    }
}

/// Ties with the observed statistic, up to rounding, count as exceedances.
pub(crate) fn at_least(value: f64, observed: f64) -> bool {
    value >= observed - 1e-10 * (1.0 + observed.abs())
}

const BATCH: usize = 256;

/// (count + 1)/(resamples + 1) where `count` draws of `stat` reach `observed`.
/// Batch b draws from `seed.child(b)`, so the result does not depend on scheduling.
pub(crate) fn monte_carlo_pvalue<F>(observed: f64, resamples: usize, seed: &SeedStream, stat: F) -> f64
where
    F: Fn(&mut crate::seed::StreamRng) -> f64 + Sync,
{
    let batches = resamples.div_ceil(BATCH);
    let count: usize = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.child(b as u64).rng();
            let size = BATCH.min(resamples - b * BATCH);
            (0..size).filter(|_| at_least(stat(&mut rng), observed)).count()
        })
        .sum();
    (count + 1) as f64 / (resamples + 1) as f64
}

pub(crate) fn chi2_outcome(method: String, statistic: f64, k: usize, alpha: f64, diagnostics: BTreeMap<String, f64>) -> Result<TestOutcome> {
    let threshold = chi2_quantile(k, alpha)?;
    let p_value = chi2_pvalue(statistic, k);
    Ok(TestOutcome { method, statistic, threshold, reject: statistic > threshold, p_value: Some(p_value), diagnostics })
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}
