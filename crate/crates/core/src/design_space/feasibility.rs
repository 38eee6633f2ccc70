//! Structural feasibility rules and the JSON blacklist.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::*;
use super::DesignError;

/// Rule ids for the compiled-in structural rules.
pub mod rules {
    pub const UC3_REQUIRES_3D: &str = "uc3-requires-3d";
    pub const HYBRID_MIN_CHIPLETS: &str = "hybrid-needs-three-chiplets";
    pub const STACK_ORDER: &str = "larger-die-on-smaller";
    pub const SINGLE_CHIPLET_2D: &str = "single-chiplet-is-2d";
    pub const MONOLITHIC_TOPOLOGY: &str = "monolithic-topology-is-ring";
    pub const LINK_COMPATIBILITY: &str = "link-compatibility";
    pub const MIN_SRAM: &str = "sram-below-minimum";
    pub const CHIPLET_COUNT: &str = "chiplet-count";
    pub const CLOSED_SET: &str = "value-outside-closed-set";
    pub const BLACKLIST_MALFORMED: &str = "blacklist-malformed";
    pub const OUTSIDE_SPACE: &str = "outside-design-space";
}

/// Outcome of a feasibility check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    /// Violated rule ids, structural rules first, in a stable order.
    Infeasible(Vec<String>),
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible)
    }

    pub fn violations(&self) -> &[String] {
        match self {
            Verdict::Feasible => &[],
            Verdict::Infeasible(v) => v,
        }
    }

    pub fn violates(&self, rule_id: &str) -> bool {
        self.violations().iter().any(|v| v == rule_id)
    }

    pub(crate) fn from_violations(v: Vec<String>) -> Self {
        if v.is_empty() {
            Verdict::Feasible
        } else {
            Verdict::Infeasible(v)
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Feasible => f.write_str("feasible"),
            Verdict::Infeasible(v) => write!(f, "infeasible: {}", v.join(", ")),
        }
    }
}

/// Field addressed by a blacklist matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldPath {
    ChipletCount,
    ArrayDim,
    TechNode,
    SramKb,
    Order,
    Dataflow,
    SplitK,
    DataSharing,
    Integration,
    Interconnect,
    Protocol,
    Memory,
    Topology,
}

impl FieldPath {
    pub const ALL: [(&'static str, FieldPath); 13] = [
        ("chiplets.count", FieldPath::ChipletCount),
        ("chiplets.array_dim", FieldPath::ArrayDim),
        ("chiplets.tech_node", FieldPath::TechNode),
        ("chiplets.sram_kb", FieldPath::SramKb),
        ("mapping.order", FieldPath::Order),
        ("mapping.dataflow", FieldPath::Dataflow),
        ("mapping.split_k", FieldPath::SplitK),
        ("mapping.data_sharing", FieldPath::DataSharing),
        ("package.integration", FieldPath::Integration),
        ("package.interconnect", FieldPath::Interconnect),
        ("package.protocol", FieldPath::Protocol),
        ("package.memory", FieldPath::Memory),
        ("package.topology", FieldPath::Topology),
    ];

    pub fn parse(path: &str) -> Option<FieldPath> {
        Self::ALL.iter().find(|(p, _)| *p == path).map(|(_, f)| *f)
    }
}

/// Typed equality predicate over one field of a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    ChipletCount(usize),
    /// Matches when any chiplet has this array size.
    ArrayDim(u32),
    TechNode(u32),
    SramKb(u32),
    Order(Order),
    Dataflow(Dataflow),
    SplitK(bool),
    DataSharing(bool),
    Integration(Integration),
    /// Link matchers must all hold on the same link.
    Interconnect(Interconnect),
    Protocol(Protocol),
    Memory(Memory),
    Topology(Topology),
}

impl Matcher {
    fn compile(path: FieldPath, value: &serde_json::Value) -> Result<Matcher, String> {
        let text = match value {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => if *b { "1" } else { "0" }.to_string(),
            other => return Err(format!("unsupported matcher value {other}")),
        };
        let bool_of = |t: &str| match t {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            _ => Err(format!("expected a boolean, got `{t}`")),
        };
        let num = |t: &str| t.parse::<u32>().map_err(|_| format!("expected an integer, got `{t}`"));
        let e = |err: DesignError| err.to_string();
        Ok(match path {
            FieldPath::ChipletCount => {
                let n = num(&text)? as usize;
                if !(1..=MAX_CHIPLETS).contains(&n) {
                    return Err(format!("chiplet count {n} outside 1..={MAX_CHIPLETS}"));
                }
                Matcher::ChipletCount(n)
            }
            FieldPath::ArrayDim => {
                let v = num(&text)?;
                check_member("array_dim", v, &ARRAY_DIMS).map_err(e)?;
                Matcher::ArrayDim(v)
            }
            FieldPath::TechNode => {
                let v = num(&text)?;
                check_member("tech_node", v, &TECH_NODES).map_err(e)?;
                Matcher::TechNode(v)
            }
            FieldPath::SramKb => {
                let v = num(&text)?;
                check_member("sram_kb", v, &SRAM_KBS).map_err(e)?;
                Matcher::SramKb(v)
            }
            FieldPath::Order => Matcher::Order(text.parse().map_err(e)?),
            FieldPath::Dataflow => Matcher::Dataflow(text.parse().map_err(e)?),
            FieldPath::SplitK => Matcher::SplitK(bool_of(&text)?),
            FieldPath::DataSharing => Matcher::DataSharing(bool_of(&text)?),
            FieldPath::Integration => Matcher::Integration(text.parse().map_err(e)?),
            FieldPath::Interconnect => Matcher::Interconnect(text.parse().map_err(e)?),
            FieldPath::Protocol => Matcher::Protocol(text.parse().map_err(e)?),
            FieldPath::Memory => Matcher::Memory(text.parse().map_err(e)?),
            FieldPath::Topology => Matcher::Topology(text.parse().map_err(e)?),
        })
    }

    fn matches_config(&self, cfg: &SystemConfig) -> bool {
        let any_chip = |f: &dyn Fn(&ChipletSpec) -> bool| cfg.chiplets.iter().any(f);
        match *self {
            Matcher::ChipletCount(n) => cfg.count() == n,
            Matcher::ArrayDim(v) => any_chip(&|c| c.array_dim == v),
            Matcher::TechNode(v) => any_chip(&|c| c.tech_node == v),
            Matcher::SramKb(v) => any_chip(&|c| c.sram_kb == v),
            Matcher::Order(v) => cfg.mapping.order == v,
            Matcher::Dataflow(v) => cfg.mapping.dataflow == v,
            Matcher::SplitK(v) => cfg.mapping.split_k == v,
            Matcher::DataSharing(v) => cfg.mapping.data_sharing == v,
            Matcher::Integration(v) => cfg.package.integration == v,
            Matcher::Memory(v) => cfg.package.memory == v,
            Matcher::Topology(v) => cfg.package.topology == v,
            Matcher::Interconnect(_) | Matcher::Protocol(_) => true,
        }
    }

    fn matches_link(&self, link: &Link) -> bool {
        match *self {
            Matcher::Interconnect(v) => link.interconnect == v,
            Matcher::Protocol(v) => link.protocol == v,
            _ => true,
        }
    }
}

/// One conjunctive rule: the configuration is illegal when every matcher holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlacklistRule {
    pub rule_id: String,
    pub matchers: Vec<Matcher>,
    pub message: String,
}

impl BlacklistRule {
    pub fn matches(&self, cfg: &SystemConfig) -> bool {
        if !self.matchers.iter().all(|m| m.matches_config(cfg)) {
            return false;
        }
        let link_matchers: Vec<&Matcher> = self
            .matchers
            .iter()
            .filter(|m| matches!(m, Matcher::Interconnect(_) | Matcher::Protocol(_)))
            .collect();
        link_matchers.is_empty()
            || cfg
                .package
                .links()
                .iter()
                .any(|l| link_matchers.iter().all(|m| m.matches_link(l)))
    }
}

/// On-disk form of a blacklist entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRule {
    pub rule_id: String,
    pub when: BTreeMap<String, serde_json::Value>,
    pub message: String,
}

/// The rule set loaded from `BLACKLIST.json`.
///
/// A malformed file yields a poisoned blacklist that rejects everything, so a
/// broken rules file can never widen the feasible set.
#[derive(Debug, Clone, Default)]
pub struct Blacklist {
    rules: Vec<BlacklistRule>,
    source: String,
    poisoned: Option<String>,
}

pub const BUNDLED_BLACKLIST: &str = include_str!("../../assets/BLACKLIST.json");

impl Blacklist {
    pub fn empty() -> Self {
        Blacklist {
            rules: Vec::new(),
            source: "[]\n".to_string(),
            poisoned: None,
        }
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_BLACKLIST).expect("bundled blacklist is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, DesignError> {
        let raw: Vec<RawRule> =
            serde_json::from_str(text).map_err(|e| DesignError::Blacklist(e.to_string()))?;
        let mut seen = HashSet::new();
        let mut rules = Vec::with_capacity(raw.len());
        for r in raw {
            if !seen.insert(r.rule_id.clone()) {
                return Err(DesignError::Blacklist(format!("duplicate rule_id `{}`", r.rule_id)));
            }
            if r.when.is_empty() {
                return Err(DesignError::Blacklist(format!("rule `{}` has no matchers", r.rule_id)));
            }
            let mut matchers = Vec::with_capacity(r.when.len());
            for (path, value) in &r.when {
                let field = FieldPath::parse(path).ok_or_else(|| {
                    DesignError::Blacklist(format!("rule `{}`: unknown path `{path}`", r.rule_id))
                })?;
                let m = Matcher::compile(field, value)
                    .map_err(|e| DesignError::Blacklist(format!("rule `{}`, `{path}`: {e}", r.rule_id)))?;
                matchers.push(m);
            }
            rules.push(BlacklistRule {
                rule_id: r.rule_id,
                matchers,
                message: r.message,
            });
        }
        Ok(Blacklist {
            rules,
            source: text.to_string(),
            poisoned: None,
        })
    }

    /// Loads a rules file, failing closed: any read or parse error produces a
    /// blacklist that rejects every configuration with a diagnostic.
    pub fn load_fail_closed(path: &Path) -> Self {
        let loaded = std::fs::read_to_string(path)
            .map_err(|e| DesignError::Blacklist(format!("{}: {e}", path.display())))
            .and_then(|text| Self::from_json(&text));
        match loaded {
            Ok(b) => b,
            Err(e) => Blacklist {
                rules: Vec::new(),
                source: String::new(),
                poisoned: Some(e.to_string()),
            },
        }
    }

    pub fn rules(&self) -> &[BlacklistRule] {
        &self.rules
    }

    /// Original JSON text, as copied into run directories.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn diagnostic(&self) -> Option<&str> {
        self.poisoned.as_deref()
    }

    fn violations(&self, cfg: &SystemConfig, out: &mut Vec<String>) {
        if self.poisoned.is_some() {
            out.push(rules::BLACKLIST_MALFORMED.to_string());
            return;
        }
        out.extend(self.rules.iter().filter(|r| r.matches(cfg)).map(|r| r.rule_id.clone()));
    }
}

/// Violations of the compiled-in rules. `areas` holds one die area per chiplet (mm²).
pub fn structural_violations(cfg: &SystemConfig, areas: &[f64]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |id: &str| {
        if !out.iter().any(|v| v == id) {
            out.push(id.to_string());
        }
    };
    let pkg = &cfg.package;
    let n = cfg.count();

    if n == 0 || n > MAX_CHIPLETS {
        push(rules::CHIPLET_COUNT);
    }
    for c in &cfg.chiplets {
        if ChipletSpec::new(c.array_dim, c.tech_node, c.sram_kb).is_err() {
            push(rules::CLOSED_SET);
        }
    }

    // (a) UCIe-3D only on stacked packages
    let uses_uc3 = pkg.links().iter().any(|l| l.protocol == Protocol::UC3);
    if uses_uc3 && !matches!(pkg.integration, Integration::Stacked3D | Integration::Hybrid) {
        push(rules::UC3_REQUIRES_3D);
    }
    // (b)
    if pkg.integration == Integration::Hybrid && n < 3 {
        push(rules::HYBRID_MIN_CHIPLETS);
    }
    // (c) stacks are bottom-first; area must not grow going up
    if areas.len() == n {
        for stack in cfg.stacks() {
            if stack.windows(2).any(|w| areas[w[1]] > areas[w[0]]) {
                push(rules::STACK_ORDER);
            }
        }
    }
    // (d) one die <=> monolithic; monolithic has no topology choice
    if (n == 1) != (pkg.integration == Integration::Mono2D) {
        push(rules::SINGLE_CHIPLET_2D);
    }
    if pkg.integration == Integration::Mono2D && pkg.topology != Topology::Ring {
        push(rules::MONOLITHIC_TOPOLOGY);
    }
    // (e)
    let links_ok = match pkg.integration {
        Integration::Mono2D => pkg.primary_link() == Link::NONE && pkg.lateral.is_none(),
        Integration::Lateral2_5D => pkg.primary_link().is_lateral_legal() && pkg.lateral.is_none(),
        Integration::Stacked3D => pkg.primary_link().is_vertical_legal() && pkg.lateral.is_none(),
        Integration::Hybrid => {
            pkg.primary_link().is_vertical_legal() && pkg.lateral.is_some_and(|l| l.is_lateral_legal())
        }
    };
    if !links_ok {
        push(rules::LINK_COMPATIBILITY);
    }
    // (f)
    if cfg.chiplets.iter().any(|c| c.sram_kb < min_sram_kb(c.array_dim)) {
        push(rules::MIN_SRAM);
    }
    out
}

/// Full feasibility check: structural rules, then the blacklist.
pub fn check_feasible(cfg: &SystemConfig, blacklist: &Blacklist, areas: &[f64]) -> Verdict {
    let mut v = structural_violations(cfg, areas);
    blacklist.violations(cfg, &mut v);
    Verdict::from_violations(v)
}
