//! The configuration space: typed encoding, shorthands, feasibility, enumeration
//! and sampling.

mod feasibility;
mod shorthand;
mod types;

use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feasibility::{
    check_feasible, rules, structural_violations, Blacklist, BlacklistRule, FieldPath, Matcher, RawRule,
    Verdict, BUNDLED_BLACKLIST,
};
pub use shorthand::{
    format_chiplet, format_config, format_mapping, format_package, format_protocol, parse_chiplet,
    parse_chiplet_list, parse_config, parse_mapping, parse_package, parse_package_with_protocol,
    parse_protocols,
};
pub use types::*;

/// Total draws `sample_uniform` may spend before declaring the space over-constrained.
pub const REJECTION_BUDGET: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("malformed {what} `{text}`: expected {expected}")]
    Malformed {
        what: &'static str,
        text: String,
        expected: &'static str,
    },
    #[error("{field} value `{token}` is not one of {allowed}")]
    OutOfSet {
        field: &'static str,
        token: String,
        allowed: String,
    },
    #[error("integration {integration}: {detail}")]
    IntegrationMismatch { integration: String, detail: String },
    #[error("chiplet count {0} outside 1..=6")]
    ChipletCount(usize),
    #[error("invalid blacklist: {0}")]
    Blacklist(String),
    #[error("restriction on {0} is empty or not a subset of the allowed values")]
    Restriction(&'static str),
    #[error("no feasible configuration after {0} draws; the design space is over-constrained")]
    RejectionBudget(u64),
}

/// Die area lookup used by the stacking rule. Implemented by the PPAC constants.
pub trait DieArea: Send + Sync {
    fn die_area_mm2(&self, chip: &ChipletSpec) -> f64;
}

impl<F> DieArea for F
where
    F: Fn(&ChipletSpec) -> f64 + Send + Sync,
{
    fn die_area_mm2(&self, chip: &ChipletSpec) -> f64 {
        self(chip)
    }
}

/// Per-dimension subsets requested by the user. `None` keeps the full set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Restriction {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrays: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub srams: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<Order>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataflows: Option<Vec<Dataflow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_k: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_sharing: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrations: Option<Vec<Integration>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interconnects: Option<Vec<Interconnect>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocols: Option<Vec<Protocol>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memories: Option<Vec<Memory>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topologies: Option<Vec<Topology>>,
    /// Replicate one chiplet type across every position.
    pub homogeneous: bool,
}

impl Restriction {
    pub fn is_unrestricted(&self) -> bool {
        *self == Restriction::default()
    }
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_unrestricted() {
            return f.write_str("full");
        }
        let json = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&json)
    }
}

/// Resolved allowed values for every dimension, each in canonical order.
///
/// `interconnects`/`protocols` list the values allowed on real links; the
/// monolithic `NA` link is implied by 2D and never listed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axes {
    pub counts: Vec<usize>,
    pub arrays: Vec<u32>,
    pub nodes: Vec<u32>,
    pub srams: Vec<u32>,
    pub orders: Vec<Order>,
    pub dataflows: Vec<Dataflow>,
    pub split_k: Vec<bool>,
    pub data_sharing: Vec<bool>,
    pub integrations: Vec<Integration>,
    pub interconnects: Vec<Interconnect>,
    pub protocols: Vec<Protocol>,
    pub memories: Vec<Memory>,
    pub topologies: Vec<Topology>,
    pub homogeneous: bool,
}

impl Axes {
    pub fn full() -> Self {
        Axes {
            counts: (1..=MAX_CHIPLETS).collect(),
            arrays: ARRAY_DIMS.to_vec(),
            nodes: TECH_NODES.to_vec(),
            srams: SRAM_KBS.to_vec(),
            orders: Order::ALL.to_vec(),
            dataflows: Dataflow::ALL.to_vec(),
            split_k: vec![false, true],
            data_sharing: vec![false, true],
            integrations: Integration::ALL.to_vec(),
            interconnects: Interconnect::ALL.iter().copied().filter(|&i| i != Interconnect::NA).collect(),
            protocols: Protocol::ALL.iter().copied().filter(|&p| p != Protocol::NA).collect(),
            memories: Memory::ALL.to_vec(),
            topologies: Topology::ALL.to_vec(),
            homogeneous: false,
        }
    }

    pub fn chiplet_types(&self) -> Vec<ChipletSpec> {
        let mut out = Vec::new();
        for &a in &self.arrays {
            for &t in &self.nodes {
                for &s in &self.srams {
                    out.push(ChipletSpec {
                        array_dim: a,
                        tech_node: t,
                        sram_kb: s,
                    });
                }
            }
        }
        out
    }

    pub fn mappings(&self) -> Vec<MappingSpec> {
        let mut out = Vec::new();
        for &order in &self.orders {
            for &dataflow in &self.dataflows {
                for &split_k in &self.split_k {
                    for &data_sharing in &self.data_sharing {
                        out.push(MappingSpec {
                            order,
                            dataflow,
                            split_k,
                            data_sharing,
                        });
                    }
                }
            }
        }
        out
    }

    fn links(&self, legal: impl Fn(&Link) -> bool) -> Vec<Link> {
        self.interconnects
            .iter()
            .cartesian_product(self.protocols.iter())
            .map(|(&i, &p)| Link::new(i, p))
            .filter(legal)
            .collect()
    }

    /// Link-compatible packages for a chiplet count, in canonical order.
    pub fn packages_for(&self, count: usize) -> Vec<PackageSpec> {
        let lateral = self.links(Link::is_lateral_legal);
        let vertical = self.links(Link::is_vertical_legal);
        let mut out = Vec::new();
        for &integration in &self.integrations {
            let link_sets: Vec<(Link, Option<Link>)> = match integration {
                Integration::Mono2D if count == 1 => vec![(Link::NONE, None)],
                Integration::Lateral2_5D if count >= 2 => lateral.iter().map(|&l| (l, None)).collect(),
                Integration::Stacked3D if count >= 2 => vertical.iter().map(|&l| (l, None)).collect(),
                Integration::Hybrid if count >= 3 => vertical
                    .iter()
                    .cartesian_product(lateral.iter())
                    .map(|(&v, &l)| (v, Some(l)))
                    .collect(),
                _ => Vec::new(),
            };
            for (primary, second) in link_sets {
                for &memory in &self.memories {
                    for &topology in &self.topologies {
                        if integration == Integration::Mono2D && topology != Topology::Ring {
                            continue;
                        }
                        out.push(PackageSpec {
                            integration,
                            interconnect: primary.interconnect,
                            protocol: primary.protocol,
                            lateral: second,
                            memory,
                            topology,
                        });
                    }
                }
            }
        }
        out
    }

    /// Whether every field of `cfg` lies in these axes.
    pub fn admits(&self, cfg: &SystemConfig) -> bool {
        let p = &cfg.package;
        let m = &cfg.mapping;
        let link_ok = |l: &Link| {
            (*l == Link::NONE && p.integration == Integration::Mono2D)
                || (self.interconnects.contains(&l.interconnect) && self.protocols.contains(&l.protocol))
        };
        self.counts.contains(&cfg.count())
            && (!self.homogeneous || cfg.is_homogeneous())
            && cfg.chiplets.iter().all(|c| {
                self.arrays.contains(&c.array_dim) && self.nodes.contains(&c.tech_node) && self.srams.contains(&c.sram_kb)
            })
            && self.orders.contains(&m.order)
            && self.dataflows.contains(&m.dataflow)
            && self.split_k.contains(&m.split_k)
            && self.data_sharing.contains(&m.data_sharing)
            && self.integrations.contains(&p.integration)
            && p.links().iter().all(link_ok)
            && self.memories.contains(&p.memory)
            && self.topologies.contains(&p.topology)
    }
}

fn subset<T: Copy + PartialEq>(field: &'static str, full: &[T], req: &Option<Vec<T>>) -> Result<Vec<T>, DesignError> {
    match req {
        None => Ok(full.to_vec()),
        Some(v) => {
            if v.is_empty() || v.iter().any(|x| !full.contains(x)) {
                return Err(DesignError::Restriction(field));
            }
            // canonical order, deduplicated
            Ok(full.iter().copied().filter(|x| v.contains(x)).collect())
        }
    }
}

/// Values pinned by a constrained draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DrawFixes {
    pub count: Option<usize>,
    pub integration: Option<Integration>,
    pub dataflow: Option<Dataflow>,
}

/// The feasible set: allowed values per dimension plus the rules that prune them.
#[derive(Clone)]
pub struct DesignSpace {
    axes: Axes,
    restriction: Restriction,
    blacklist: Arc<Blacklist>,
    areas: Arc<dyn DieArea>,
}

impl fmt::Debug for DesignSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DesignSpace")
            .field("restriction", &self.restriction.to_string())
            .field("blacklist_rules", &self.blacklist.rules().len())
            .finish()
    }
}

impl DesignSpace {
    pub fn new(blacklist: Blacklist, areas: Arc<dyn DieArea>) -> Self {
        DesignSpace {
            axes: Axes::full(),
            restriction: Restriction::default(),
            blacklist: Arc::new(blacklist),
            areas,
        }
    }

    /// Narrows the space. Every requested subset must lie inside the full set.
    pub fn restrict(&self, r: &Restriction) -> Result<DesignSpace, DesignError> {
        let full = Axes::full();
        let axes = Axes {
            counts: subset("counts", &full.counts, &r.counts)?,
            arrays: subset("arrays", &full.arrays, &r.arrays)?,
            nodes: subset("nodes", &full.nodes, &r.nodes)?,
            srams: subset("srams", &full.srams, &r.srams)?,
            orders: subset("orders", &full.orders, &r.orders)?,
            dataflows: subset("dataflows", &full.dataflows, &r.dataflows)?,
            split_k: subset("split_k", &full.split_k, &r.split_k)?,
            data_sharing: subset("data_sharing", &full.data_sharing, &r.data_sharing)?,
            integrations: subset("integrations", &full.integrations, &r.integrations)?,
            interconnects: subset("interconnects", &full.interconnects, &r.interconnects)?,
            protocols: subset("protocols", &full.protocols, &r.protocols)?,
            memories: subset("memories", &full.memories, &r.memories)?,
            topologies: subset("topologies", &full.topologies, &r.topologies)?,
            homogeneous: r.homogeneous,
        };
        Ok(DesignSpace {
            axes,
            restriction: r.clone(),
            blacklist: Arc::clone(&self.blacklist),
            areas: Arc::clone(&self.areas),
        })
    }

    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    pub fn restriction(&self) -> &Restriction {
        &self.restriction
    }

    pub fn blacklist(&self) -> &Blacklist {
        &self.blacklist
    }

    pub fn die_areas(&self, cfg: &SystemConfig) -> Vec<f64> {
        cfg.chiplets.iter().map(|c| self.areas.die_area_mm2(c)).collect()
    }

    /// Structural rules plus blacklist.
    pub fn check(&self, cfg: &SystemConfig) -> Verdict {
        check_feasible(cfg, &self.blacklist, &self.die_areas(cfg))
    }

    /// Feasible and inside this (possibly restricted) space.
    pub fn contains(&self, cfg: &SystemConfig) -> Verdict {
        let verdict = self.check(cfg);
        if self.axes.admits(cfg) {
            return verdict;
        }
        let mut v = verdict.violations().to_vec();
        v.push(rules::OUTSIDE_SPACE.to_string());
        Verdict::Infeasible(v)
    }

    fn chiplet_lists(&self, count: usize) -> Box<dyn Iterator<Item = Vec<ChipletSpec>> + '_> {
        let types = self.axes.chiplet_types();
        if self.axes.homogeneous || count == 1 {
            Box::new(types.into_iter().map(move |t| vec![t; count]))
        } else {
            Box::new((0..count).map(|_| types.clone().into_iter()).multi_cartesian_product())
        }
    }

    /// Every feasible configuration exactly once, in lexicographic order of
    /// (count, chiplet list, mapping, package).
    pub fn enumerate(&self) -> impl Iterator<Item = SystemConfig> + '_ {
        let mappings = self.axes.mappings();
        self.axes
            .counts
            .iter()
            .flat_map(move |&count| {
                let packages = self.axes.packages_for(count);
                let mappings = mappings.clone();
                self.chiplet_lists(count).flat_map(move |chips| {
                    let packages = packages.clone();
                    mappings.clone().into_iter().flat_map(move |mapping| {
                        let chips = chips.clone();
                        packages.clone().into_iter().map(move |package| SystemConfig {
                            chiplets: chips.clone(),
                            mapping,
                            package,
                        })
                    })
                })
            })
            .filter(move |cfg| self.check(cfg).is_feasible())
    }

    /// One unconditioned draw: each dimension uniform over its allowed values.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, fixes: DrawFixes) -> SystemConfig {
        let ax = &self.axes;
        let count = fixes.count.unwrap_or_else(|| *ax.counts.choose(rng).expect("non-empty"));
        let draw_chip = |rng: &mut R| ChipletSpec {
            array_dim: *ax.arrays.choose(rng).expect("non-empty"),
            tech_node: *ax.nodes.choose(rng).expect("non-empty"),
            sram_kb: *ax.srams.choose(rng).expect("non-empty"),
        };
        let chiplets = if ax.homogeneous {
            vec![draw_chip(rng); count]
        } else {
            (0..count).map(|_| draw_chip(rng)).collect()
        };
        let mapping = MappingSpec {
            order: *ax.orders.choose(rng).expect("non-empty"),
            dataflow: fixes.dataflow.unwrap_or_else(|| *ax.dataflows.choose(rng).expect("non-empty")),
            split_k: *ax.split_k.choose(rng).expect("non-empty"),
            data_sharing: *ax.data_sharing.choose(rng).expect("non-empty"),
        };
        let integration = fixes
            .integration
            .unwrap_or_else(|| *ax.integrations.choose(rng).expect("non-empty"));
        let draw_link = |rng: &mut R| {
            Link::new(
                *ax.interconnects.choose(rng).expect("non-empty"),
                *ax.protocols.choose(rng).expect("non-empty"),
            )
        };
        let (primary, lateral) = match integration {
            Integration::Mono2D => (Link::NONE, None),
            Integration::Hybrid => (draw_link(rng), Some(draw_link(rng))),
            _ => (draw_link(rng), None),
        };
        let package = PackageSpec {
            integration,
            interconnect: primary.interconnect,
            protocol: primary.protocol,
            lateral,
            memory: *ax.memories.choose(rng).expect("non-empty"),
            topology: *ax.topologies.choose(rng).expect("non-empty"),
        };
        SystemConfig {
            chiplets,
            mapping,
            package,
        }
    }

    /// Rejection-samples one feasible configuration, spending at most `budget` draws.
    pub fn draw_feasible<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        fixes: DrawFixes,
        budget: u64,
    ) -> Result<(SystemConfig, u64), DesignError> {
        for used in 1..=budget {
            let cfg = self.draw(rng, fixes);
            if self.check(&cfg).is_feasible() {
                return Ok((cfg, used));
            }
        }
        Err(DesignError::RejectionBudget(budget))
    }

    /// `n` feasible configurations by per-dimension uniform draws with rejection.
    /// Deterministic for a fixed seed.
    pub fn sample_uniform(&self, n: usize, seed: u64) -> Result<Vec<SystemConfig>, DesignError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut remaining = REJECTION_BUDGET;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let (cfg, used) = self
                .draw_feasible(&mut rng, DrawFixes::default(), remaining)
                .map_err(|_| DesignError::RejectionBudget(REJECTION_BUDGET))?;
            remaining -= used;
            out.push(cfg);
        }
        Ok(out)
    }
}
