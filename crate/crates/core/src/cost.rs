//! Median normalization and the weighted scalar cost.

use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{format_config, DesignError, DesignSpace, SystemConfig};
use crate::mapping::WorkloadSpec;
use crate::ppac::{evaluate, ModelConstants, PpacError, PpacReport};

/// Sample size of the default normalization basis.
pub const DEFAULT_BASIS_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum CostError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Ppac(#[from] PpacError),
    #[error("argmin over an empty set of configurations")]
    Empty,
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("invalid normalization basis: {0}")]
    Basis(String),
    #[error("{0}")]
    Io(String),
}

/// Weights on normalized energy, area, latency and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl Profile {
    /// The four named application profiles.
    pub const TABLE: [(&'static str, [f64; 4]); 4] = [
        ("Balance", [1.0, 1.0, 1.0, 1.0]),
        ("Mobile", [0.8, 0.2, 0.1, 0.1]),
        ("Automotive", [0.1, 0.1, 0.7, 0.7]),
        ("Wearables", [0.6, 0.6, 0.1, 0.1]),
    ];

    pub fn new(name: impl Into<String>, w: [f64; 4]) -> Result<Self, CostError> {
        let name = name.into();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CostError::Profile(format!("weights of `{name}` must be finite and >= 0, got {w:?}")));
        }
        Ok(Profile {
            name,
            alpha: w[0],
            beta: w[1],
            gamma: w[2],
            theta: w[3],
        })
    }

    pub fn named(name: &str) -> Option<Profile> {
        Self::TABLE
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|&(n, w)| Profile::new(n, w).expect("table weights are valid"))
    }

    pub fn all() -> Vec<Profile> {
        Self::TABLE.iter().map(|&(n, w)| Profile::new(n, w).expect("valid")).collect()
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.theta]
    }

    pub fn scaled(&self, c: f64) -> Result<Profile, CostError> {
        Profile::new(format!("{}x{c}", self.name), self.weights().map(|w| w * c))
    }

    pub fn is_zero(&self) -> bool {
        self.weights().iter().all(|&w| w == 0.0)
    }

    /// Optimizers need something to minimize.
    pub fn check_optimizable(&self) -> Result<(), CostError> {
        if self.is_zero() {
            return Err(CostError::Profile(format!("profile `{}` has all-zero weights", self.name)));
        }
        Ok(())
    }
}

impl FromStr for Profile {
    type Err = CostError;

    /// A table name, or four comma-separated weights.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(p) = Profile::named(s.trim()) {
            return Ok(p);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() == 4 {
            let mut w = [0.0; 4];
            for (slot, p) in w.iter_mut().zip(&parts) {
                *slot = p
                    .parse()
                    .map_err(|_| CostError::Profile(format!("`{s}`: `{p}` is not a number")))?;
            }
            return Profile::new(format!("custom({})", parts.join(",")), w);
        }
        let names: Vec<&str> = Self::TABLE.iter().map(|(n, _)| *n).collect();
        Err(CostError::Profile(format!(
            "`{s}` is neither one of {} nor four comma-separated weights",
            names.join(", ")
        )))
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}, {}, {}, {})", self.name, self.alpha, self.beta, self.gamma, self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medians {
    pub energy_j: f64,
    pub area_mm2: f64,
    pub latency_s: f64,
    pub cost_usd: f64,
}

impl Medians {
    pub fn as_array(&self) -> [f64; 4] {
        [self.energy_j, self.area_mm2, self.latency_s, self.cost_usd]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationBasis {
    pub workload: String,
    pub n: usize,
    pub seed: u64,
    pub medians: Medians,
}

/// Median of `values`; the mean of the two middle elements for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

impl NormalizationBasis {
    pub fn new(workload: impl Into<String>, n: usize, seed: u64, medians: Medians) -> Result<Self, CostError> {
        let b = NormalizationBasis {
            workload: workload.into(),
            n,
            seed,
            medians,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.n == 0 {
            return Err(CostError::Basis("sample size is 0".into()));
        }
        if self.medians.as_array().iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(CostError::Basis(format!("medians must be positive: {:?}", self.medians)));
        }
        Ok(())
    }

    /// Metrics divided by their medians, `[E, A, L, C]`.
    pub fn normalize(&self, report: &PpacReport) -> [f64; 4] {
        let m = self.medians.as_array();
        let r = report.metrics();
        [r[0] / m[0], r[1] / m[1], r[2] / m[2], r[3] / m[3]]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("basis serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|e| CostError::Io(format!("{}: {e}", path.display())))?;
        let b: NormalizationBasis =
            serde_json::from_str(&text).map_err(|e| CostError::Basis(format!("{}: {e}", path.display())))?;
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<(), CostError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CostError::Io(format!("{}: {e}", dir.display())))?;
        }
        std::fs::write(path, self.to_json() + "\n").map_err(|e| CostError::Io(format!("{}: {e}", path.display())))
    }

    /// Cache file for a (workload, n, seed) basis inside `dir`.
    pub fn cache_path(dir: &Path, workload: &str, n: usize, seed: u64) -> PathBuf {
        let safe: String = workload
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        dir.join(format!("basis-{safe}-n{n}-s{seed}.json"))
    }
}

/// Evaluates `n` uniform samples of `space` and records the per-metric medians.
pub fn compute_basis(
    wl: &WorkloadSpec,
    space: &DesignSpace,
    consts: &ModelConstants,
    n: usize,
    seed: u64,
) -> Result<NormalizationBasis, CostError> {
    if n == 0 {
        return Err(CostError::Basis("sample size is 0".into()));
    }
    let sample = space.sample_uniform(n, seed)?;
    let reports: Vec<[f64; 4]> = sample
        .par_iter()
        .map(|cfg| evaluate(wl, cfg, consts).map(|r| r.metrics()))
        .collect::<Result<_, _>>()?;
    let col = |i: usize| median(&mut reports.iter().map(|r| r[i]).collect::<Vec<_>>());
    let medians = Medians {
        energy_j: col(0),
        area_mm2: col(1),
        latency_s: col(2),
        cost_usd: col(3),
    };
    NormalizationBasis::new(wl.name.clone(), n, seed, medians)
}

/// Loads the cached basis in `dir` when present and matching, otherwise
/// computes and stores it.
pub fn load_or_compute_basis(
    dir: &Path,
    wl: &WorkloadSpec,
    space: &DesignSpace,
    consts: &ModelConstants,
    n: usize,
    seed: u64,
) -> Result<NormalizationBasis, CostError> {
    let path = NormalizationBasis::cache_path(dir, &wl.name, n, seed);
    if let Ok(b) = NormalizationBasis::load(&path) {
        if b.workload == wl.name && b.n == n && b.seed == seed {
            return Ok(b);
        }
    }
    let b = compute_basis(wl, space, consts, n, seed)?;
    b.save(&path)?;
    Ok(b)
}

pub fn weighted_cost(report: &PpacReport, basis: &NormalizationBasis, p: &Profile) -> f64 {
    weighted_sum(&basis.normalize(report), p)
}

pub fn weighted_sum(normalized: &[f64; 4], p: &Profile) -> f64 {
    p.weights().iter().zip(normalized).map(|(w, x)| w * x).sum()
}

/// Total order on (cost, config): lower cost first, ties by canonical string.
pub fn compare_candidates(a: (&SystemConfig, f64), b: (&SystemConfig, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| format_config(a.0).cmp(&format_config(b.0)))
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub config: SystemConfig,
    pub report: PpacReport,
    pub normalized: [f64; 4],
    pub cost: f64,
}

/// Everything needed to turn a configuration into its weighted cost.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub workload: WorkloadSpec,
    pub consts: Arc<ModelConstants>,
    pub basis: NormalizationBasis,
    pub profile: Profile,
}

impl Evaluator {
    pub fn new(workload: WorkloadSpec, consts: Arc<ModelConstants>, basis: NormalizationBasis, profile: Profile) -> Self {
        Evaluator {
            workload,
            consts,
            basis,
            profile,
        }
    }

    pub fn evaluate(&self, cfg: &SystemConfig) -> Result<Evaluation, CostError> {
        let report = evaluate(&self.workload, cfg, &self.consts)?;
        let normalized = self.basis.normalize(&report);
        Ok(Evaluation {
            config: cfg.clone(),
            cost: weighted_sum(&normalized, &self.profile),
            normalized,
            report,
        })
    }

    pub fn cost(&self, cfg: &SystemConfig) -> Result<f64, CostError> {
        Ok(self.evaluate(cfg)?.cost)
    }

    /// Lowest-cost configuration of the stream, ties broken by canonical string.
    pub fn argmin_over<I>(&self, configs: I) -> Result<(SystemConfig, f64), CostError>
    where
        I: IntoIterator<Item = SystemConfig>,
    {
        let mut best: Option<(SystemConfig, f64)> = None;
        for cfg in configs {
            let c = self.cost(&cfg)?;
            let replace = match &best {
                None => true,
                Some((b, bc)) => compare_candidates((&cfg, c), (b, *bc)) == Ordering::Less,
            };
            if replace {
                best = Some((cfg, c));
            }
        }
        best.ok_or(CostError::Empty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_profiles() {
        assert_eq!(Profile::named("mobile").unwrap().weights(), [0.8, 0.2, 0.1, 0.1]);
        assert_eq!(Profile::all().len(), 4);
        let p: Profile = "0.5, 0, 0, 0.5".parse().unwrap();
        assert_eq!(p.weights(), [0.5, 0.0, 0.0, 0.5]);
        assert!("1,2,3".parse::<Profile>().is_err());
        assert!("-1,0,0,0".parse::<Profile>().is_err());
        assert!(Profile::new("z", [0.0; 4]).unwrap().check_optimizable().is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [7.0]), 7.0);
    }

    #[test]
    fn weighted_sum_forced_arithmetic() {
        let bal = Profile::named("Balance").unwrap();
        assert_eq!(weighted_sum(&[1.0; 4], &bal), 4.0);
        let mob = Profile::named("Mobile").unwrap();
        assert!((weighted_sum(&[2.0, 1.0, 1.0, 1.0], &mob) - 2.0).abs() < 1e-12);
        assert_eq!(weighted_sum(&[3.0, 5.0, 7.0, 9.0], &Profile::new("z", [0.0; 4]).unwrap()), 0.0);
    }

    #[test]
    fn basis_rejects_nonpositive_medians() {
        let m = Medians {
            energy_j: 1.0,
            area_mm2: 0.0,
            latency_s: 1.0,
            cost_usd: 1.0,
        };
        assert!(NormalizationBasis::new("w", 1, 0, m).is_err());
    }
}
