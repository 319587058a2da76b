use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bnp::BnpConfig;
use crate::datagen::DistributionSpec;
use crate::dp::{BaseMeasure, DPPrior, Posterior, Truncation};
use crate::error::{Error, Result};
use crate::numerics::SymMatrix;

/// Replications used when `--full-scale` is requested.
pub const FULL_SCALE_REPLICATIONS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    OneSample,
    TwoSample,
    PowerCurve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Dirichlet-process posterior credible region.
    NpBayes,
    /// Bayesian-bootstrap posterior credible region.
    Bootstrap,
    Sign,
    Rank,
    SignedRank,
    Hotelling,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NpBayes => "npbayes",
            Self::Bootstrap => "bootstrap",
            Self::Sign => "sign",
            Self::Rank => "rank",
            Self::SignedRank => "signed_rank",
            Self::Hotelling => "hotelling",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "npbayes" => Self::NpBayes,
            "bootstrap" | "npbayes-bootstrap" => Self::Bootstrap,
            "sign" => Self::Sign,
            "rank" => Self::Rank,
            "signed_rank" | "signed-rank" => Self::SignedRank,
            "hotelling" => Self::Hotelling,
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        })
    }
}

fn default_replications() -> usize {
    500
}
fn default_alpha() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    1
}
fn default_mc_size() -> usize {
    1_000_000
}
fn default_mass() -> f64 {
    2.0
}
fn default_base_variance() -> f64 {
    10.0
}
fn default_draws() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Base-measure mean; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_mean: Option<Vec<f64>>,
    /// Base-measure covariance is this times the identity.
    #[serde(default = "default_base_variance")]
    pub base_variance: f64,
    /// Posterior draws B.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Stick-breaking atoms; automatic when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { mass: default_mass(), base_mean: None, base_variance: default_base_variance(), draws: default_draws(), truncation: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub name: String,
    /// `mvn`, `mvt` or `gamma`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Draws used to locate a gamma family's spatial median for re-centering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_draws: Option<usize>,
}

/// The study file as written, after command-line overrides. Serializing it
/// reproduces the study exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub kind: StudyKind,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub methods: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub prior: PriorConfig,
    pub distributions: Vec<DistributionConfig>,
    /// One-sample studies: shifts of the truth away from the null location.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub locations: Vec<Vec<f64>>,
    /// Two-sample studies: (shift of sample 1, shift of sample 2) pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub location_pairs: Vec<[Vec<f64>; 2]>,
    /// Power curves: local alternatives h (one sample, shift h/√n).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h: Vec<Vec<f64>>,
    /// Power curves: (h₁, h₂) pairs (two samples, shifts hⱼ/√nⱼ).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h_pairs: Vec<[Vec<f64>; 2]>,
    /// Monte Carlo size for the theoretical power terms.
    #[serde(default = "default_mc_size")]
    pub mc_size: usize,
}

#[derive(Clone, Debug)]
pub struct NamedDistribution {
    pub name: String,
    /// Centered so that its spatial median is the null location.
    pub spec: DistributionSpec,
    pub config: DistributionConfig,
}

/// A validated study.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub file: StudyFile,
    pub methods: Vec<Method>,
    pub dim: usize,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<SymMatrix> {
    SymMatrix::from_rows(rows).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn cfg<T>(r: Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(format!("{what}: {other}")),
    })
}

impl DistributionConfig {
    pub fn dim(&self) -> Option<usize> {
        self.dim
            .or(self.location.as_ref().map(Vec::len))
            .or(self.scatter.as_ref().map(Vec::len))
            .or(self.correlation.as_ref().map(Vec::len))
    }

    /// The raw family, before any re-centering.
    pub fn spec(&self, dim: usize) -> Result<DistributionSpec> {
        let what = format!("distribution `{}`", self.name);
        let location = self.location.clone().unwrap_or_else(|| vec![0.0; dim]);
        let scatter = match &self.scatter {
            Some(rows) => matrix(rows, &what)?,
            None => SymMatrix::identity(dim),
        };
        match self.family.as_str() {
            "mvn" | "gaussian" => cfg(DistributionSpec::mvn(location, scatter), &what),
            "mvt" | "t" => {
                let dof = self.dof.ok_or_else(|| Error::Config(format!("{what}: mvt needs `dof`")))?;
                cfg(DistributionSpec::mvt(location, scatter, dof), &what)
            }
            "gamma" | "gamma_copula" => {
                let correlation = match &self.correlation {
                    Some(rows) => matrix(rows, &what)?,
                    None => SymMatrix::identity(dim),
                };
                cfg(
                    DistributionSpec::gamma_copula(self.shape.unwrap_or(2.0), self.rate.unwrap_or(1.0), correlation, location),
                    &what,
                )
            }
            other => Err(Error::Config(format!("{what}: unknown family `{other}`"))),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: StudyFile = toml::from_str(text).map_err(|e| Error::Config(format!("study file: {e}")))?;
        Self::new(file)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("study file serializes")
    }

    pub fn new(file: StudyFile) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        if file.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(file.alpha > 0.0 && file.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", file.alpha));
        }
        if file.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        let methods = file.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
        if file.distributions.is_empty() {
            return bad("at least one distribution is required".into());
        }
        let dim = file.distributions[0].dim().unwrap_or(2);
        for d in &file.distributions {
            if d.dim().unwrap_or(dim) != dim {
                return bad(format!("distribution `{}` has a different dimension", d.name));
            }
            d.spec(dim)?;
        }
        if file.prior.mass <= 0.0 || file.prior.base_variance <= 0.0 {
            return bad("prior mass and base variance must be positive".into());
        }
        if file.prior.draws <= dim {
            return bad(format!("prior.draws must exceed the dimension {dim}"));
        }
        let check_vecs = |vs: &[Vec<f64>], what: &str| -> Result<()> {
            if vs.iter().any(|v| v.len() != dim) {
                return Err(Error::Config(format!("every entry of `{what}` must have {dim} coordinates")));
            }
            Ok(())
        };
        let two = matches!(file.kind, StudyKind::TwoSample) || !file.h_pairs.is_empty();
        match file.kind {
            StudyKind::OneSample => {
                if file.locations.is_empty() {
                    return bad("one-sample studies need `locations`".into());
                }
                check_vecs(&file.locations, "locations")?;
            }
            StudyKind::TwoSample => {
                if file.location_pairs.is_empty() {
                    return bad("two-sample studies need `location_pairs`".into());
                }
                for [a, b] in &file.location_pairs {
                    check_vecs(&[a.clone(), b.clone()], "location_pairs")?;
                }
            }
            StudyKind::PowerCurve => {
                if file.h.is_empty() == file.h_pairs.is_empty() {
                    return bad("power curves need exactly one of `h` and `h_pairs`".into());
                }
                check_vecs(&file.h, "h")?;
                for [a, b] in &file.h_pairs {
                    check_vecs(&[a.clone(), b.clone()], "h_pairs")?;
                }
                if methods.iter().any(|m| !matches!(m, Method::NpBayes | Method::Bootstrap)) {
                    return bad("power curves support only the npbayes and bootstrap methods".into());
                }
                if !matches!(file.distributions[0].family.as_str(), "mvn" | "gaussian" | "mvt" | "t") {
                    return bad("power curves need an mvn or mvt distribution".into());
                }
                if file.mc_size < crate::asymptotics::PowerTerms::MIN_MC {
                    return bad(format!("mc_size must be at least {}", crate::asymptotics::PowerTerms::MIN_MC));
                }
            }
        }
        if two {
            if methods.contains(&Method::SignedRank) {
                return bad("signed_rank is a one-sample method".into());
            }
            if file.n1.is_none() || file.n2.is_none() {
                return bad("two-sample studies need `n1` and `n2`".into());
            }
            if file.n1.unwrap() <= dim || file.n2.unwrap() <= dim {
                return bad("n1 and n2 must exceed the dimension".into());
            }
        } else {
            match file.n {
                Some(n) if n > dim => {}
                _ => return bad("one-sample studies need `n` larger than the dimension".into()),
            }
        }
        if let Some(mean) = &file.prior.base_mean {
            check_vecs(std::slice::from_ref(mean), "prior.base_mean")?;
        }
        Ok(Self { file, methods, dim })
    }

    pub fn is_two_sample(&self) -> bool {
        matches!(self.file.kind, StudyKind::TwoSample) || !self.file.h_pairs.is_empty()
    }

    pub fn prior(&self) -> DPPrior {
        let mean = self.file.prior.base_mean.clone().unwrap_or_else(|| vec![0.0; self.dim]);
        let base = BaseMeasure::gaussian(mean, SymMatrix::identity(self.dim).scaled(self.file.prior.base_variance))
            .expect("validated base measure");
        DPPrior::new(self.file.prior.mass, base).expect("validated mass")
    }

    pub fn posterior(&self, method: Method) -> Option<Posterior> {
        match method {
            Method::NpBayes => Some(Posterior::Dirichlet(self.prior())),
            Method::Bootstrap => Some(Posterior::BayesianBootstrap),
            _ => None,
        }
    }

    pub fn bnp_config(&self) -> BnpConfig {
        BnpConfig {
            draws: self.file.prior.draws,
            level: 1.0 - self.file.alpha,
            truncation: self.file.prior.truncation.map_or(Truncation::Auto, Truncation::Fixed),
            ..BnpConfig::default()
        }
    }

    pub fn with_replications(mut self, replications: usize) -> Result<Self> {
        self.file.replications = replications;
        Self::new(self.file)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.file.seed = seed;
        self
    }
}
