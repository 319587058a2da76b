use std::fmt;
use std::io::Read;
use std::path::Path;

use super::config::{Method, PriorConfig};
use crate::bnp::{one_sample_test, two_sample_test, BnpConfig, CredibleRegion, TestOutcome};
use crate::classical::{
    hotelling_one_sample, hotelling_two_sample, one_sample_score_test, sign_flip_pvalue, two_sample_score_test, ScoreKind,
};
use crate::dp::{BaseMeasure, DPPrior, Posterior, Truncation};
use crate::error::{domain, Error, Result};
use crate::numerics::SymMatrix;
use crate::sample::Sample;
use crate::seed::SeedStream;

/// Headerless CSV of reals, one observation per row; `header` skips the
/// first line. Errors name the offending line.
pub fn parse_sample<R: Read>(reader: R, header: bool) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut dim: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match dim {
            None => dim = Some(record.len()),
            Some(k) if k != record.len() => {
                return Err(Error::Parse { line, message: format!("expected {k} fields, found {}", record.len()) });
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("`{field}` is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("`{field}` is not finite") });
            }
            values.push(v);
        }
    }
    match dim {
        Some(k) => Sample::new(values, k),
        None => domain("data file has no observations"),
    }
}

pub fn read_sample(path: &Path, header: bool) -> Result<Sample> {
    let file = std::fs::File::open(path)?;
    parse_sample(std::io::BufReader::new(file), header)
}

#[derive(Clone, Debug)]
pub struct SingleOptions {
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub seed: u64,
    pub prior: PriorConfig,
    /// Also report a sign-flip p-value for one-sample score methods.
    pub flips: Option<usize>,
}

impl Default for SingleOptions {
    fn default() -> Self {
        Self { methods: vec![Method::NpBayes], alpha: 0.05, seed: 1, prior: PriorConfig::default(), flips: None }
    }
}

impl SingleOptions {
    fn bnp(&self) -> BnpConfig {
        BnpConfig {
            draws: self.prior.draws,
            level: 1.0 - self.alpha,
            truncation: self.prior.truncation.map_or(Truncation::Auto, Truncation::Fixed),
            ..BnpConfig::default()
        }
    }

    fn posterior(&self, method: Method, dim: usize) -> Result<Option<Posterior>> {
        Ok(match method {
            Method::NpBayes => {
                let mean = self.prior.base_mean.clone().unwrap_or_else(|| vec![0.0; dim]);
                if mean.len() != dim {
                    return domain("base-measure mean has the wrong dimension");
                }
                let base = BaseMeasure::gaussian(mean, SymMatrix::identity(dim).scaled(self.prior.base_variance))?;
                Some(Posterior::Dirichlet(DPPrior::new(self.prior.mass, base)?))
            }
            Method::Bootstrap => Some(Posterior::BayesianBootstrap),
            _ => None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct MethodReport {
    pub method: Method,
    pub result: std::result::Result<(TestOutcome, Option<CredibleRegion>), String>,
}

#[derive(Clone, Debug)]
pub struct SingleReport {
    pub n: Vec<usize>,
    pub dim: usize,
    pub reports: Vec<MethodReport>,
}

impl SingleReport {
    pub fn any_failed(&self) -> bool {
        self.reports.iter().any(|r| r.result.is_err())
    }

    pub fn outcome(&self, method: Method) -> Option<&TestOutcome> {
        self.reports.iter().find(|r| r.method == method)?.result.as_ref().ok().map(|(o, _)| o)
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

impl fmt::Display for SingleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.n.iter().map(|n| n.to_string()).collect();
        writeln!(f, "n = {}, k = {}", sizes.join(" / "), self.dim)?;
        for r in &self.reports {
            writeln!(f, "method: {}", r.method.name())?;
            match &r.result {
                Err(e) => writeln!(f, "  error: {e}")?,
                Ok((o, region)) => {
                    writeln!(f, "  statistic: {:.6}", o.statistic)?;
                    writeln!(f, "  threshold: {:.6}", o.threshold)?;
                    if let Some(p) = o.p_value {
                        writeln!(f, "  p_value: {p:.6}")?;
                    }
                    for (k, v) in &o.diagnostics {
                        writeln!(f, "  {k}: {v}")?;
                    }
                    writeln!(f, "  decision: {}", if o.reject { "reject" } else { "accept" })?;
                    if let Some(region) = region {
                        writeln!(f, "  region.center: {}", fmt_vec(&region.center))?;
                        let rows: Vec<String> = region.scatter.to_rows().iter().map(|r| fmt_vec(r)).collect();
                        writeln!(f, "  region.scatter: [{}]", rows.join(", "))?;
                        writeln!(f, "  region.radius_sq: {:.6}", region.radius_sq)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn score_kind(m: Method) -> Option<ScoreKind> {
    match m {
        Method::Sign => Some(ScoreKind::Sign),
        Method::Rank => Some(ScoreKind::Rank),
        Method::SignedRank => Some(ScoreKind::SignedRank),
        _ => None,
    }
}

fn check_size(data: &Sample) -> Result<()> {
    if data.len() < data.dim() + 1 {
        return domain(format!("need at least k + 1 = {} observations, found {}", data.dim() + 1, data.len()));
    }
    Ok(())
}

pub fn run_single_test(data: &Sample, theta0: &[f64], options: &SingleOptions) -> Result<SingleReport> {
    check_size(data)?;
    if theta0.len() != data.dim() {
        return domain(format!("theta0 has {} coordinates but the data have {}", theta0.len(), data.dim()));
    }
    let root = SeedStream::new(options.seed);
    let mut reports = Vec::new();
    for &method in &options.methods {
        let stream = root.named(method.name());
        let result = (|| -> Result<(TestOutcome, Option<CredibleRegion>)> {
            if let Some(posterior) = options.posterior(method, data.dim())? {
                let r = one_sample_test(data, theta0, &posterior, &options.bnp(), stream)?;
                return Ok((r.outcome, Some(r.region)));
            }
            if let Some(kind) = score_kind(method) {
                let mut o = one_sample_score_test(data, theta0, kind, options.alpha)?;
                if let Some(flips) = options.flips {
                    let p = sign_flip_pvalue(data, theta0, kind, flips.max(1), stream)?;
                    o.diagnostics.insert("sign_flip_p_value".to_string(), p);
                }
                return Ok((o, None));
            }
            Ok((hotelling_one_sample(data, theta0, options.alpha)?, None))
        })();
        reports.push(MethodReport { method, result: result.map_err(|e| e.to_string()) });
    }
    Ok(SingleReport { n: vec![data.len()], dim: data.dim(), reports })
}

pub fn run_single_two_sample(data1: &Sample, data2: &Sample, options: &SingleOptions) -> Result<SingleReport> {
    check_size(data1)?;
    check_size(data2)?;
    if data1.dim() != data2.dim() {
        return domain(format!("the files have {} and {} columns", data1.dim(), data2.dim()));
    }
    let root = SeedStream::new(options.seed);
    let mut reports = Vec::new();
    for &method in &options.methods {
        let stream = root.named(method.name());
        let result = (|| -> Result<(TestOutcome, Option<CredibleRegion>)> {
            if let Some(posterior) = options.posterior(method, data1.dim())? {
                let r = two_sample_test(data1, data2, &posterior, &options.bnp(), stream)?;
                return Ok((r.outcome, Some(r.region)));
            }
            if let Some(kind) = score_kind(method) {
                return Ok((two_sample_score_test(data1, data2, kind, true, options.alpha)?, None));
            }
            Ok((hotelling_two_sample(data1, data2, options.alpha)?, None))
        })();
        reports.push(MethodReport { method, result: result.map_err(|e| e.to_string()) });
    }
    Ok(SingleReport { n: vec![data1.len(), data2.len()], dim: data1.dim(), reports })
}
