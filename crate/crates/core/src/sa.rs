//! Simulated annealing over the feasible space and the (T0, rate) grid sweep.

use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cost::{CostError, Evaluator};
use crate::design_space::{
    format_config, DesignError, DesignSpace, DrawFixes, Integration, PackageSpec, SystemConfig,
    REJECTION_BUDGET,
};

/// Attempts `neighbor` makes before giving up and returning the input.
pub const NEIGHBOR_RETRIES: usize = 50;

#[derive(Debug, Error)]
pub enum SaError {
    #[error("invalid annealing settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaSettings {
    pub t0: f64,
    pub t_final: f64,
    pub rate: f64,
    pub moves_per_temp: usize,
    pub seed: u64,
    pub eval_budget: usize,
    /// Cost differences are multiplied by this before the acceptance test, so
    /// temperatures are in units of `1 / cost_scale` of normalized cost.
    pub cost_scale: f64,
}

impl Default for SaSettings {
    fn default() -> Self {
        SaSettings {
            t0: 4000.0,
            t_final: 1.0,
            rate: 0.99,
            moves_per_temp: 50,
            seed: 0,
            eval_budget: 100_000,
            cost_scale: 1e4,
        }
    }
}

impl SaSettings {
    pub fn validate(&self) -> Result<(), SaError> {
        let bad = |m: String| Err(SaError::Settings(m));
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return bad(format!("t_final must be > 0, got {}", self.t_final));
        }
        if !(self.t0.is_finite() && self.t0 > self.t_final) {
            return bad(format!("t0 ({}) must exceed t_final ({})", self.t0, self.t_final));
        }
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return bad(format!("rate must lie in (0, 1), got {}", self.rate));
        }
        if self.moves_per_temp == 0 {
            return bad("moves_per_temp must be >= 1".into());
        }
        if self.eval_budget == 0 {
            return bad("eval_budget must be >= 1".into());
        }
        if !(self.cost_scale.is_finite() && self.cost_scale > 0.0) {
            return bad(format!("cost_scale must be > 0, got {}", self.cost_scale));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("t0={} rate={:.2}", self.t0, self.rate)
    }
}

/// The field a neighbor move changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Dimension {
    Count,
    Array,
    Node,
    Sram,
    Order,
    Dataflow,
    SplitK,
    DataSharing,
    Integration,
    Interconnect,
    Memory,
    Protocol,
    Topology,
}

impl Dimension {
    pub const ALL: [Dimension; 13] = [
        Dimension::Count,
        Dimension::Array,
        Dimension::Node,
        Dimension::Sram,
        Dimension::Order,
        Dimension::Dataflow,
        Dimension::SplitK,
        Dimension::DataSharing,
        Dimension::Integration,
        Dimension::Interconnect,
        Dimension::Memory,
        Dimension::Protocol,
        Dimension::Topology,
    ];
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Outcome of one `neighbor` call; `dimension` is `None` for a null move.
#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub config: SystemConfig,
    pub dimension: Option<Dimension>,
}

fn pick_other<T: Copy + PartialEq, R: Rng + ?Sized>(values: &[T], current: T, rng: &mut R) -> Option<T> {
    let others: Vec<T> = values.iter().copied().filter(|v| *v != current).collect();
    others.choose(rng).copied()
}

/// Single-field perturbation within `space`, with repair of dependent fields.
///
/// Package moves pick among the legal packages for the chiplet count that
/// differ in the chosen field; fields that depend on it (links after an
/// integration change, protocols after an interconnect change) are resampled.
pub fn neighbor<R: Rng + ?Sized>(cfg: &SystemConfig, space: &DesignSpace, rng: &mut R) -> Move {
    let mut packages: HashMap<usize, Vec<PackageSpec>> = HashMap::new();
    for _ in 0..NEIGHBOR_RETRIES {
        let dim = *Dimension::ALL.choose(rng).expect("non-empty");
        if let Some(next) = mutate(cfg, dim, space, &mut packages, rng) {
            if next != *cfg && space.contains(&next).is_feasible() {
                return Move {
                    config: next,
                    dimension: Some(dim),
                };
            }
        }
    }
    Move {
        config: cfg.clone(),
        dimension: None,
    }
}

fn mutate<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    dim: Dimension,
    space: &DesignSpace,
    packages: &mut HashMap<usize, Vec<PackageSpec>>,
    rng: &mut R,
) -> Option<SystemConfig> {
    let ax = space.axes();
    let mut next = cfg.clone();
    let count = cfg.count();
    let mut legal = |n: usize| -> Vec<PackageSpec> { packages.entry(n).or_insert_with(|| ax.packages_for(n)).clone() };
    let pkg = cfg.package;

    match dim {
        Dimension::Count => {
            let n = pick_other(&ax.counts, count, rng)?;
            let last = *next.chiplets.last().expect("at least one chiplet");
            next.chiplets.resize(n, last);
            let options = legal(n);
            if !options.contains(&pkg) {
                let tiers: [&dyn Fn(&PackageSpec) -> bool; 3] = [
                    &|p| p.integration == pkg.integration && p.memory == pkg.memory && p.topology == pkg.topology,
                    &|p| p.memory == pkg.memory,
                    &|_| true,
                ];
                let pick = tiers.iter().find_map(|keep| {
                    let c: Vec<&PackageSpec> = options.iter().filter(|p| keep(p)).collect();
                    c.choose(rng).map(|p| **p)
                })?;
                next.package = pick;
            }
        }
        Dimension::Array | Dimension::Node | Dimension::Sram => {
            let i = if ax.homogeneous { 0 } else { rng.gen_range(0..count) };
            let mut chip = next.chiplets[i];
            match dim {
                Dimension::Array => chip.array_dim = pick_other(&ax.arrays, chip.array_dim, rng)?,
                Dimension::Node => chip.tech_node = pick_other(&ax.nodes, chip.tech_node, rng)?,
                _ => chip.sram_kb = pick_other(&ax.srams, chip.sram_kb, rng)?,
            }
            if ax.homogeneous {
                next.chiplets.fill(chip);
            } else {
                next.chiplets[i] = chip;
            }
        }
        Dimension::Order => next.mapping.order = pick_other(&ax.orders, cfg.mapping.order, rng)?,
        Dimension::Dataflow => next.mapping.dataflow = pick_other(&ax.dataflows, cfg.mapping.dataflow, rng)?,
        Dimension::SplitK => next.mapping.split_k = pick_other(&ax.split_k, cfg.mapping.split_k, rng)?,
        Dimension::DataSharing => {
            next.mapping.data_sharing = pick_other(&ax.data_sharing, cfg.mapping.data_sharing, rng)?
        }
        Dimension::Memory => next.package.memory = pick_other(&ax.memories, pkg.memory, rng)?,
        Dimension::Topology => next.package.topology = pick_other(&ax.topologies, pkg.topology, rng)?,
        Dimension::Integration | Dimension::Interconnect | Dimension::Protocol => {
            let options = legal(count);
            let same_rest = |p: &PackageSpec| p.memory == pkg.memory && p.topology == pkg.topology;
            let interconnects = |p: &PackageSpec| (p.interconnect, p.lateral.map(|l| l.interconnect));
            let protocols = |p: &PackageSpec| (p.protocol, p.lateral.map(|l| l.protocol));
            let candidates: Vec<&PackageSpec> = match dim {
                Dimension::Integration => {
                    let c: Vec<&PackageSpec> = options
                        .iter()
                        .filter(|p| p.integration != pkg.integration && same_rest(p))
                        .collect();
                    if c.is_empty() {
                        options.iter().filter(|p| p.integration != pkg.integration).collect()
                    } else {
                        c
                    }
                }
                Dimension::Interconnect => {
                    let base = options.iter().filter(|p| {
                        p.integration == pkg.integration && same_rest(p) && interconnects(p) != interconnects(&pkg)
                    });
                    let keep_proto: Vec<&PackageSpec> = base.clone().filter(|p| protocols(p) == protocols(&pkg)).collect();
                    if keep_proto.is_empty() {
                        base.collect()
                    } else {
                        keep_proto
                    }
                }
                _ => options
                    .iter()
                    .filter(|p| {
                        p.integration == pkg.integration
                            && same_rest(p)
                            && interconnects(p) == interconnects(&pkg)
                            && protocols(p) != protocols(&pkg)
                    })
                    .collect(),
            };
            let pick = **candidates.choose(rng)?;
            next.package = pick;
        }
    }
    if next.count() == 1 && next.package.integration != Integration::Mono2D {
        return None;
    }
    Some(next)
}

/// Metropolis rule: always accept improvements, otherwise accept with
/// probability `exp(-delta / t)`.
pub fn metropolis_accept<R: Rng + ?Sized>(delta: f64, t: f64, rng: &mut R) -> bool {
    if delta <= 0.0 {
        return true;
    }
    rng.gen::<f64>() < (-delta / t).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaRecord {
    pub eval_idx: usize,
    pub temperature: f64,
    pub cost: f64,
    pub accepted: bool,
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaTrace {
    pub settings: SaSettings,
    pub records: Vec<SaRecord>,
    /// Best cost after each record.
    pub best_so_far: Vec<f64>,
    pub best_config: SystemConfig,
    pub best_cost: f64,
    pub best_eval_idx: usize,
    pub null_moves: usize,
    pub wall_clock_s: f64,
    pub time_to_best_s: f64,
}

impl SaTrace {
    pub fn evaluations(&self) -> usize {
        self.records.len()
    }

    /// Trace as CSV with columns `eval_idx,temperature,cost,accepted,config`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["eval_idx", "temperature", "cost", "accepted", "config"]).expect("in-memory");
        for r in &self.records {
            w.write_record([
                r.eval_idx.to_string(),
                r.temperature.to_string(),
                r.cost.to_string(),
                r.accepted.to_string(),
                r.config.clone(),
            ])
            .expect("in-memory");
        }
        String::from_utf8(w.into_inner().expect("in-memory")).expect("utf8")
    }

    /// Zeroes wall-clock fields so traces compare byte-for-byte.
    pub fn strip_timing(&mut self) {
        self.wall_clock_s = 0.0;
        self.time_to_best_s = 0.0;
    }
}

/// One annealing chain, strictly sequential and deterministic for a fixed seed.
pub fn anneal(ev: &Evaluator, space: &DesignSpace, settings: &SaSettings) -> Result<SaTrace, SaError> {
    settings.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut cache: HashMap<SystemConfig, f64> = HashMap::new();
    let mut cost_of = |cfg: &SystemConfig| -> Result<f64, SaError> {
        if let Some(&c) = cache.get(cfg) {
            return Ok(c);
        }
        let c = ev.cost(cfg)?;
        cache.insert(cfg.clone(), c);
        Ok(c)
    };

    let (mut current, _) = space.draw_feasible(&mut rng, DrawFixes::default(), REJECTION_BUDGET)?;
    let mut current_cost = cost_of(&current)?;
    let mut t = settings.t0;
    let mut records = vec![SaRecord {
        eval_idx: 0,
        temperature: t,
        cost: current_cost,
        accepted: true,
        config: format_config(&current),
    }];
    let mut best_so_far = vec![current_cost];
    let mut best_config = current.clone();
    let mut best_cost = current_cost;
    let mut best_eval_idx = 0;
    let mut time_to_best_s = start.elapsed().as_secs_f64();
    let mut null_moves = 0;

    'outer: while t >= settings.t_final {
        for _ in 0..settings.moves_per_temp {
            if records.len() >= settings.eval_budget {
                break 'outer;
            }
            let mv = neighbor(&current, space, &mut rng);
            let eval_idx = records.len();
            let (cost, accepted) = match mv.dimension {
                None => {
                    null_moves += 1;
                    (current_cost, false)
                }
                Some(_) => {
                    let c = cost_of(&mv.config)?;
                    let accepted = metropolis_accept((c - current_cost) * settings.cost_scale, t, &mut rng);
                    (c, accepted)
                }
            };
            records.push(SaRecord {
                eval_idx,
                temperature: t,
                cost,
                accepted,
                config: format_config(&mv.config),
            });
            if cost < best_cost {
                best_cost = cost;
                best_config = mv.config.clone();
                best_eval_idx = eval_idx;
                time_to_best_s = start.elapsed().as_secs_f64();
            }
            best_so_far.push(best_cost);
            if accepted && mv.dimension.is_some() {
                current = mv.config;
                current_cost = cost;
            }
        }
        t *= settings.rate;
    }
    Ok(SaTrace {
        settings: settings.clone(),
        records,
        best_so_far,
        best_config,
        best_cost,
        best_eval_idx,
        null_moves,
        wall_clock_s: start.elapsed().as_secs_f64(),
        time_to_best_s,
    })
}

/// Initial temperatures 4000, 4500, ..., 10000.
pub fn default_t0_range() -> Vec<f64> {
    (0..13).map(|i| 4000.0 + 500.0 * f64::from(i)).collect()
}

/// Cooling rates 0.70, 0.71, ..., 0.99.
pub fn default_rate_range() -> Vec<f64> {
    (70..=99).map(|r| f64::from(r) / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub t0: f64,
    pub rate: f64,
    pub best_cost: f64,
    pub best_config: String,
    pub evaluations: usize,
    pub runtime_s: f64,
}

/// One chain per (t0, rate) pair, run in parallel and returned in
/// t0-major, rate-minor order. Every chain uses `base.seed`.
pub fn grid_sweep(
    ev: &Evaluator,
    space: &DesignSpace,
    base: &SaSettings,
    t0s: &[f64],
    rates: &[f64],
) -> Result<Vec<GridPoint>, SaError> {
    if t0s.is_empty() || rates.is_empty() {
        return Err(SaError::Settings("grid ranges must be non-empty".into()));
    }
    let settings: Vec<SaSettings> = t0s
        .iter()
        .flat_map(|&t0| {
            rates.iter().map(move |&rate| SaSettings {
                t0,
                rate,
                ..base.clone()
            })
        })
        .collect();
    settings
        .par_iter()
        .map(|s| {
            let tr = anneal(ev, space, s)?;
            Ok(GridPoint {
                t0: s.t0,
                rate: s.rate,
                best_cost: tr.best_cost,
                best_config: format_config(&tr.best_config),
                evaluations: tr.evaluations(),
                runtime_s: tr.time_to_best_s,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_thirteen_by_thirty() {
        let t0 = default_t0_range();
        let r = default_rate_range();
        assert_eq!((t0.len(), r.len()), (13, 30));
        assert_eq!((t0[0], t0[12]), (4000.0, 10000.0));
        assert_eq!((r[0], r[29]), (0.70, 0.99));
    }

    #[test]
    fn settings_validation() {
        assert!(SaSettings::default().validate().is_ok());
        for bad in [
            SaSettings { rate: 1.0, ..Default::default() },
            SaSettings { t0: 0.5, ..Default::default() },
            SaSettings { moves_per_temp: 0, ..Default::default() },
            SaSettings { t_final: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn metropolis_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(metropolis_accept(-1.0, 1e-9, &mut rng));
        assert!(metropolis_accept(0.0, 1e-9, &mut rng));
        assert!((0..1000).all(|_| !metropolis_accept(1.0, 1e-6, &mut rng)));
    }
}
