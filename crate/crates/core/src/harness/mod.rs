//! Study configuration, power studies, single-dataset testing and the
//! theoretical-versus-empirical power comparison behind the CLI.

mod compare;
mod config;
mod power;
mod single;

pub use compare::{run_power_comparison, ComparisonRow, ComparisonTable};
pub use config::{
    DistributionConfig, Method, NamedDistribution, PriorConfig, StudyConfig, StudyFile, StudyKind, FULL_SCALE_REPLICATIONS,
};
pub use power::{resolve_distributions, run_power_study, PowerCell, PowerRow, PowerTable};
pub use single::{parse_sample, read_sample, run_single_test, run_single_two_sample, MethodReport, SingleOptions, SingleReport};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SPATIAL_BNP_WORKERS";

/// Explicit request, else the environment variable, else all cores.
pub fn resolve_workers(requested: Option<usize>) -> usize {
    requested
        .filter(|&w| w > 0)
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&w: &usize| w > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub(crate) fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> crate::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

pub(crate) fn format_vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

/// Standard error of a binomial proportion.
pub(crate) fn binomial_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}
