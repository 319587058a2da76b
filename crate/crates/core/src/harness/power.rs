use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Method, NamedDistribution, StudyConfig, StudyKind};
use super::{binomial_se, format_vector, resolve_workers, with_workers};
use crate::bnp::{one_sample_test, two_sample_test};
use crate::classical::{hotelling_one_sample, hotelling_two_sample, one_sample_score_test, two_sample_score_test, ScoreKind};
use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::seed::SeedStream;

/// One replication's decision, or the error text.
pub(crate) type Outcome = std::result::Result<bool, String>;

const DEFAULT_CENTER_DRAWS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PowerCell {
    pub method: String,
    pub rejections: usize,
    pub replications: usize,
    pub proportion: f64,
    pub std_error: f64,
    /// Set when any replication failed; the counts are then meaningless.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerRow {
    pub distribution: String,
    pub location: String,
    pub cells: Vec<PowerCell>,
}

#[derive(Clone, Debug)]
pub struct PowerTable {
    pub methods: Vec<String>,
    pub rows: Vec<PowerRow>,
    pub seed: u64,
    pub replications: usize,
    /// Effective study file; feeding it back reproduces the table.
    pub config_echo: String,
    pub wall_time_secs: f64,
}

impl PowerTable {
    pub fn cell(&self, distribution: &str, location: &str, method: &str) -> Option<&PowerCell> {
        self.rows
            .iter()
            .find(|r| r.distribution == distribution && r.location == location)?
            .cells
            .iter()
            .find(|c| c.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("distribution,location,method,rejections,replications,proportion,std_error,error\n");
        for row in &self.rows {
            for c in &row.cells {
                let _ = writeln!(
                    out,
                    "{},\"{}\",{},{},{},{:.6},{:.6},{}",
                    row.distribution,
                    row.location,
                    c.method,
                    c.rejections,
                    c.replications,
                    c.proportion,
                    c.std_error,
                    c.error.as_deref().map(|e| format!("\"{}\"", e.replace('"', "'"))).unwrap_or_default()
                );
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| distribution | location | {} |", self.methods.join(" | "));
        let _ = writeln!(out, "|---|---|{}", "---|".repeat(self.methods.len()));
        for row in &self.rows {
            let cells: Vec<String> = row
                .cells
                .iter()
                .map(|c| match &c.error {
                    Some(_) => "ERROR".to_string(),
                    None => format!("{:.3} ({:.3})", c.proportion, c.std_error),
                })
                .collect();
            let _ = writeln!(out, "| {} | {} | {} |", row.distribution, row.location, cells.join(" | "));
        }
        let _ = writeln!(out, "\nreplications: {}, seed: {}, wall time: {:.1}s", self.replications, self.seed, self.wall_time_secs);
        for row in &self.rows {
            for c in &row.cells {
                if let Some(e) = &c.error {
                    let _ = writeln!(out, "error in {} / {} / {}: {e}", row.distribution, row.location, c.method);
                }
            }
        }
        out
    }
}

/// Builds each distribution so that its spatial median is the null location:
/// elliptical families are centered by construction, gamma families are
/// shifted by a Monte Carlo estimate of their spatial median.
pub fn resolve_distributions(config: &StudyConfig) -> Result<Vec<NamedDistribution>> {
    let root = SeedStream::new(config.file.seed);
    config
        .file
        .distributions
        .iter()
        .map(|d| {
            let raw = d.spec(config.dim)?;
            let null = d.location.clone().unwrap_or_else(|| vec![0.0; config.dim]);
            let spec = match raw {
                crate::datagen::DistributionSpec::GammaCopula { .. } => {
                    let draws = d.center_draws.unwrap_or(DEFAULT_CENTER_DRAWS);
                    let median = raw.spatial_median(draws, &mut root.named(&d.name).named("center").rng())?;
                    let offset: Vec<f64> = null.iter().zip(&median).map(|(a, m)| a - m).collect();
                    raw.shifted(&offset)
                }
                other => other,
            };
            Ok(NamedDistribution { name: d.name.clone(), spec, config: d.clone() })
        })
        .collect()
}

fn null_of(d: &NamedDistribution, dim: usize) -> Vec<f64> {
    d.config.location.clone().unwrap_or_else(|| vec![0.0; dim])
}

fn score_kind(m: Method) -> Option<ScoreKind> {
    match m {
        Method::Sign => Some(ScoreKind::Sign),
        Method::Rank => Some(ScoreKind::Rank),
        Method::SignedRank => Some(ScoreKind::SignedRank),
        _ => None,
    }
}

pub(crate) fn one_sample_reject(config: &StudyConfig, method: Method, data: &Sample, theta0: &[f64], stream: SeedStream) -> Result<bool> {
    let alpha = config.file.alpha;
    if let Some(posterior) = config.posterior(method) {
        return Ok(one_sample_test(data, theta0, &posterior, &config.bnp_config(), stream)?.outcome.reject);
    }
    if let Some(kind) = score_kind(method) {
        return Ok(one_sample_score_test(data, theta0, kind, alpha)?.reject);
    }
    Ok(hotelling_one_sample(data, theta0, alpha)?.reject)
}

pub(crate) fn two_sample_reject(config: &StudyConfig, method: Method, a: &Sample, b: &Sample, stream: SeedStream) -> Result<bool> {
    let alpha = config.file.alpha;
    if let Some(posterior) = config.posterior(method) {
        return Ok(two_sample_test(a, b, &posterior, &config.bnp_config(), stream)?.outcome.reject);
    }
    if let Some(kind) = score_kind(method) {
        return Ok(two_sample_score_test(a, b, kind, true, alpha)?.reject);
    }
    Ok(hotelling_two_sample(a, b, alpha)?.reject)
}

/// Collapses per-replication outcomes into a cell; the first failing
/// replication (by index) names the error.
pub(crate) fn tally(method: &str, outcomes: &[Outcome]) -> PowerCell {
    let replications = outcomes.len();
    let error = outcomes.iter().enumerate().find_map(|(i, o)| o.as_ref().err().map(|e| format!("replication {i}: {e}")));
    let rejections = outcomes.iter().filter(|o| matches!(o, Ok(true))).count();
    let proportion = rejections as f64 / replications as f64;
    PowerCell {
        method: method.to_string(),
        rejections,
        replications,
        proportion,
        std_error: binomial_se(proportion, replications),
        error,
    }
}

struct Cell {
    distribution: usize,
    label: String,
    shifts: Vec<Vec<f64>>,
}

/// Rejection rates for every (distribution, location, method). Replication r
/// of a cell draws its data from hash(distribution, location, r) and each
/// method gets its own substream of that, so the table depends only on the
/// study file and seed.
pub fn run_power_study(config: &StudyConfig) -> Result<PowerTable> {
    if config.file.kind == StudyKind::PowerCurve {
        return Err(Error::Config("power-curve studies run through the power comparison".into()));
    }
    let start = Instant::now();
    let dists = resolve_distributions(config)?;
    let cells: Vec<Cell> = (0..dists.len())
        .flat_map(|d| {
            let list: Vec<(String, Vec<Vec<f64>>)> = match config.file.kind {
                StudyKind::OneSample => config.file.locations.iter().map(|l| (format_vector(l), vec![l.clone()])).collect(),
                _ => config
                    .file
                    .location_pairs
                    .iter()
                    .map(|[a, b]| (format!("{} & {}", format_vector(a), format_vector(b)), vec![a.clone(), b.clone()]))
                    .collect(),
            };
            list.into_iter().map(move |(label, shifts)| Cell { distribution: d, label, shifts })
        })
        .collect();

    let root = SeedStream::new(config.file.seed);
    let reps = config.file.replications;
    let workers = resolve_workers(config.file.workers);
    let rows = with_workers(workers, || {
        cells
            .iter()
            .map(|cell| {
                let dist = &dists[cell.distribution];
                let cell_stream = root.named(&dist.name).named(&cell.label);
                let per_rep: Vec<Vec<Outcome>> = (0..reps as u64)
                    .into_par_iter()
                    .map(|r| run_replication(config, dist, &cell.shifts, cell_stream.child(r)))
                    .collect();
                let cells = config
                    .methods
                    .iter()
                    .enumerate()
                    .map(|(m, method)| {
                        let outcomes: Vec<Outcome> = per_rep.iter().map(|o| o[m].clone()).collect();
                        tally(method.name(), &outcomes)
                    })
                    .collect();
                PowerRow { distribution: dist.name.clone(), location: cell.label.clone(), cells }
            })
            .collect()
    })?;
    Ok(PowerTable {
        methods: config.methods.iter().map(|m| m.name().to_string()).collect(),
        rows,
        seed: config.file.seed,
        replications: reps,
        config_echo: config.to_toml(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn run_replication(config: &StudyConfig, dist: &NamedDistribution, shifts: &[Vec<f64>], stream: SeedStream) -> Vec<Outcome> {
    let null = null_of(dist, config.dim);
    let data: Result<Vec<Sample>> = if shifts.len() == 1 {
        let n = config.file.n.expect("validated");
        dist.spec.shifted(&shifts[0]).sample(n, &mut stream.named("data").rng()).map(|s| vec![s])
    } else {
        let sizes = [config.file.n1.expect("validated"), config.file.n2.expect("validated")];
        (0..2)
            .map(|j| dist.spec.shifted(&shifts[j]).sample(sizes[j], &mut stream.named("data").child(j as u64 + 1).rng()))
            .collect()
    };
    let data = match data {
        Ok(d) => d,
        Err(e) => return config.methods.iter().map(|_| Err(e.to_string())).collect(),
    };
    config
        .methods
        .iter()
        .map(|&m| {
            let s = stream.named(m.name());
            let decision = if data.len() == 1 {
                one_sample_reject(config, m, &data[0], &null, s)
            } else {
                two_sample_reject(config, m, &data[0], &data[1], s)
            };
            decision.map_err(|e| e.to_string())
        })
        .collect()
}
