use std::fmt::Write as _;

use rayon::prelude::*;

use super::config::{Method, StudyConfig, StudyKind};
use super::power::{one_sample_reject, resolve_distributions, tally, two_sample_reject, Outcome};
use super::{binomial_se, format_vector, resolve_workers, with_workers};
use crate::asymptotics::{two_sample_power, GaussianLocation, LocationModel, PowerTerms, TLocation};
use crate::datagen::DistributionSpec;
use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::seed::SeedStream;

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub h: String,
    pub method: String,
    pub theoretical: f64,
    pub noncentrality: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ComparisonTable {
    pub distribution: String,
    pub rows: Vec<ComparisonRow>,
    pub replications: usize,
    pub seed: u64,
    pub config_echo: String,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("distribution,h,method,theoretical,noncentrality,empirical,std_error,error\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},\"{}\",{},{:.6},{:.6},{:.6},{:.6},{}",
                self.distribution,
                r.h,
                r.method,
                r.theoretical,
                r.noncentrality,
                r.empirical,
                r.std_error,
                r.error.as_deref().map(|e| format!("\"{}\"", e.replace('"', "'"))).unwrap_or_default()
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| h | method | theoretical | empirical (se) |\n|---|---|---|---|\n");
        for r in &self.rows {
            let emp = match &r.error {
                Some(e) => format!("ERROR: {e}"),
                None => format!("{:.3} ({:.3})", r.empirical, r.std_error),
            };
            let _ = writeln!(out, "| {} | {} | {:.3} | {} |", r.h, r.method, r.theoretical, emp);
        }
        let _ = writeln!(out, "\ndistribution: {}, replications: {}, seed: {}", self.distribution, self.replications, self.seed);
        out
    }
}

fn model_of(spec: &DistributionSpec) -> Result<Box<dyn LocationModel>> {
    match spec {
        DistributionSpec::Mvn { scatter, .. } => Ok(Box::new(GaussianLocation::new(scatter.clone())?)),
        DistributionSpec::Mvt { scatter, dof, .. } => Ok(Box::new(TLocation::new(scatter.clone(), *dof)?)),
        DistributionSpec::GammaCopula { .. } => Err(Error::Config("power curves need an mvn or mvt distribution".into())),
    }
}

fn scaled(h: &[f64], n: usize) -> Vec<f64> {
    let c = 1.0 / (n as f64).sqrt();
    h.iter().map(|x| x * c).collect()
}

/// Theoretical local power next to empirical rejection rates at θ₀ + h/√n
/// (two samples: sample j at θ₀ + hⱼ/√nⱼ, λ = n₁/(n₁ + n₂)).
pub fn run_power_comparison(config: &StudyConfig) -> Result<ComparisonTable> {
    if config.file.kind != StudyKind::PowerCurve {
        return Err(Error::Config("the power comparison needs kind = \"power_curve\"".into()));
    }
    let dist = resolve_distributions(config)?.remove(0);
    let model = model_of(&dist.spec)?;
    let theta0 = dist.config.location.clone().unwrap_or_else(|| vec![0.0; config.dim]);
    let root = SeedStream::new(config.file.seed).named(&dist.name);
    let terms = PowerTerms::estimate(model.as_ref(), &theta0, config.file.mc_size, &mut root.named("power-terms").rng())?;
    let alpha = config.file.alpha;
    let reps = config.file.replications;
    let two = config.is_two_sample();
    let grid: Vec<(String, Vec<Vec<f64>>)> = if two {
        config.file.h_pairs.iter().map(|[a, b]| (format!("{} & {}", format_vector(a), format_vector(b)), vec![a.clone(), b.clone()])).collect()
    } else {
        config.file.h.iter().map(|h| (format_vector(h), vec![h.clone()])).collect()
    };
    let workers = resolve_workers(config.file.workers);
    with_workers(workers, || {
        let mut rows = Vec::new();
        for (label, hs) in &grid {
            let theory = if two {
                let (n1, n2) = (config.file.n1.expect("validated"), config.file.n2.expect("validated"));
                let lambda = n1 as f64 / (n1 + n2) as f64;
                two_sample_power(&terms, &terms, &hs[0], &hs[1], lambda, alpha)?
            } else {
                terms.one_sample_power(&hs[0], alpha)?
            };
            let cell_stream = root.named(label);
            for &method in &config.methods {
                let outcomes: Vec<Outcome> = (0..reps as u64)
                    .into_par_iter()
                    .map(|r| replicate(config, &dist.spec, &theta0, hs, method, cell_stream.child(r)).map_err(|e| e.to_string()))
                    .collect();
                let cell = tally(method.name(), &outcomes);
                rows.push(ComparisonRow {
                    h: label.clone(),
                    method: method.name().to_string(),
                    theoretical: theory.power,
                    noncentrality: theory.noncentrality,
                    empirical: cell.proportion,
                    std_error: binomial_se(cell.proportion, reps),
                    error: cell.error,
                });
            }
        }
        Ok(ComparisonTable {
            distribution: dist.name.clone(),
            rows,
            replications: reps,
            seed: config.file.seed,
            config_echo: config.to_toml(),
        })
    })?
}

fn replicate(
    config: &StudyConfig,
    spec: &DistributionSpec,
    theta0: &[f64],
    hs: &[Vec<f64>],
    method: Method,
    stream: SeedStream,
) -> Result<bool> {
    let data_stream = stream.named("data");
    if hs.len() == 1 {
        let n = config.file.n.expect("validated");
        let data = spec.shifted(&scaled(&hs[0], n)).sample(n, &mut data_stream.rng())?;
        one_sample_reject(config, method, &data, theta0, stream.named(method.name()))
    } else {
        let sizes = [config.file.n1.expect("validated"), config.file.n2.expect("validated")];
        let data: Vec<Sample> = (0..2)
            .map(|j| spec.shifted(&scaled(&hs[j], sizes[j])).sample(sizes[j], &mut data_stream.child(j as u64 + 1).rng()))
            .collect::<Result<_>>()?;
        two_sample_reject(config, method, &data[0], &data[1], stream.named(method.name()))
    }
}
