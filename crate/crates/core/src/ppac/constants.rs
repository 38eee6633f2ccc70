use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PpacError;
use crate::design_space::{
    ChipletSpec, DieArea, Integration, Interconnect, Memory, Protocol, Topology, TECH_NODES,
};

pub const BUNDLED_CONSTANTS: &str = include_str!("../../assets/constants.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConstants {
    pub freq_ghz: f64,
    pub mac_pj: f64,
    pub sram_pj_per_byte: f64,
    pub pe_area_mm2: f64,
    pub sram_area_mm2_per_kb: f64,
    pub defect_density_per_mm2: f64,
    pub wafer_cost_usd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConstants {
    pub bw_gbps: f64,
    pub dram_pj_per_byte: f64,
    pub cost_usd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterconnectConstants {
    pub bump_pitch_um: f64,
    pub pj_per_byte: f64,
    pub link_cost_usd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConstants {
    pub lane_rate_gbps: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConstants {
    pub package_base_cost_usd: f64,
    pub whitespace_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConstants {
    pub bw_derate: f64,
}

/// Every coefficient used by the PPAC models, keyed by the closed-set value it
/// applies to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConstants {
    pub version: String,
    pub nodes: BTreeMap<u32, NodeConstants>,
    pub memories: BTreeMap<Memory, MemoryConstants>,
    pub interconnects: BTreeMap<Interconnect, InterconnectConstants>,
    pub protocols: BTreeMap<Protocol, ProtocolConstants>,
    pub integrations: BTreeMap<Integration, IntegrationConstants>,
    pub topologies: BTreeMap<Topology, TopologyConstants>,
    pub logic_overhead_factor: f64,
    pub bond_yield: f64,
    /// Fraction of area bumps usable as signal lanes in a vertical bond.
    pub bump_utilization: f64,
    /// Bump rows along each die edge in a lateral link.
    pub lane_rows: u32,
    pub sram_bytes_per_mac: f64,
    /// Clustering parameter of the negative-binomial yield model.
    pub yield_alpha: f64,
    pub wafer_diameter_mm: f64,
}

fn positive(what: String, v: f64) -> Result<(), PpacError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(PpacError::Constants(format!("{what} must be positive and finite, got {v}")))
    }
}

fn unit_interval(what: String, v: f64) -> Result<(), PpacError> {
    positive(what.clone(), v)?;
    if v <= 1.0 {
        Ok(())
    } else {
        Err(PpacError::Constants(format!("{what} must lie in (0, 1], got {v}")))
    }
}

fn require<K: Ord + std::fmt::Display, V>(table: &BTreeMap<K, V>, name: &str, keys: impl IntoIterator<Item = K>) -> Result<(), PpacError> {
    for k in keys {
        if !table.contains_key(&k) {
            return Err(PpacError::Constants(format!("{name} table is missing `{k}`")));
        }
    }
    Ok(())
}

impl ModelConstants {
    pub fn from_json(text: &str) -> Result<Self, PpacError> {
        let c: ModelConstants = serde_json::from_str(text).map_err(|e| PpacError::Constants(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PpacError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PpacError::Constants(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_CONSTANTS).expect("bundled constants are valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constants serialize")
    }

    pub fn validate(&self) -> Result<(), PpacError> {
        require(&self.nodes, "nodes", TECH_NODES)?;
        require(&self.memories, "memories", Memory::ALL.iter().copied())?;
        require(&self.interconnects, "interconnects", Interconnect::LATERAL.into_iter().chain(Interconnect::VERTICAL))?;
        require(&self.protocols, "protocols", Protocol::LATERAL.into_iter().chain(Protocol::VERTICAL))?;
        require(&self.integrations, "integrations", Integration::ALL.iter().copied())?;
        require(&self.topologies, "topologies", Topology::ALL.iter().copied())?;
        for (k, n) in &self.nodes {
            for (f, v) in [
                ("freq_ghz", n.freq_ghz),
                ("mac_pj", n.mac_pj),
                ("sram_pj_per_byte", n.sram_pj_per_byte),
                ("pe_area_mm2", n.pe_area_mm2),
                ("sram_area_mm2_per_kb", n.sram_area_mm2_per_kb),
                ("defect_density_per_mm2", n.defect_density_per_mm2),
                ("wafer_cost_usd", n.wafer_cost_usd),
            ] {
                positive(format!("nodes.{k}.{f}"), v)?;
            }
        }
        for (k, m) in &self.memories {
            positive(format!("memories.{k}.bw_gbps"), m.bw_gbps)?;
            positive(format!("memories.{k}.dram_pj_per_byte"), m.dram_pj_per_byte)?;
            positive(format!("memories.{k}.cost_usd"), m.cost_usd)?;
        }
        for (k, i) in &self.interconnects {
            positive(format!("interconnects.{k}.bump_pitch_um"), i.bump_pitch_um)?;
            positive(format!("interconnects.{k}.pj_per_byte"), i.pj_per_byte)?;
            positive(format!("interconnects.{k}.link_cost_usd"), i.link_cost_usd)?;
        }
        for (k, p) in &self.protocols {
            positive(format!("protocols.{k}.lane_rate_gbps"), p.lane_rate_gbps)?;
            unit_interval(format!("protocols.{k}.efficiency"), p.efficiency)?;
        }
        for (k, i) in &self.integrations {
            positive(format!("integrations.{k}.package_base_cost_usd"), i.package_base_cost_usd)?;
            if !(i.whitespace_factor.is_finite() && i.whitespace_factor >= 1.0) {
                return Err(PpacError::Constants(format!(
                    "integrations.{k}.whitespace_factor must be >= 1, got {}",
                    i.whitespace_factor
                )));
            }
        }
        for (k, t) in &self.topologies {
            unit_interval(format!("topologies.{k}.bw_derate"), t.bw_derate)?;
        }
        positive("logic_overhead_factor".into(), self.logic_overhead_factor)?;
        unit_interval("bond_yield".into(), self.bond_yield)?;
        unit_interval("bump_utilization".into(), self.bump_utilization)?;
        positive("lane_rows".into(), f64::from(self.lane_rows))?;
        positive("sram_bytes_per_mac".into(), self.sram_bytes_per_mac)?;
        positive("yield_alpha".into(), self.yield_alpha)?;
        positive("wafer_diameter_mm".into(), self.wafer_diameter_mm)?;
        Ok(())
    }

    pub fn node(&self, tech_node: u32) -> &NodeConstants {
        &self.nodes[&tech_node]
    }

    pub fn memory(&self, m: Memory) -> &MemoryConstants {
        &self.memories[&m]
    }

    pub fn interconnect(&self, i: Interconnect) -> &InterconnectConstants {
        &self.interconnects[&i]
    }

    pub fn protocol(&self, p: Protocol) -> &ProtocolConstants {
        &self.protocols[&p]
    }

    pub fn integration(&self, i: Integration) -> &IntegrationConstants {
        &self.integrations[&i]
    }

    pub fn topology(&self, t: Topology) -> &TopologyConstants {
        &self.topologies[&t]
    }
}

impl DieArea for ModelConstants {
    fn die_area_mm2(&self, chip: &ChipletSpec) -> f64 {
        super::chiplet_area(chip, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_round_trips() {
        let c = ModelConstants::bundled();
        assert_eq!(ModelConstants::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut c = ModelConstants::bundled();
        c.bond_yield = 1.5;
        assert!(c.validate().is_err());
        let mut c = ModelConstants::bundled();
        c.integrations.get_mut(&Integration::Mono2D).unwrap().whitespace_factor = 0.9;
        assert!(c.validate().is_err());
        let mut c = ModelConstants::bundled();
        c.nodes.remove(&10);
        assert!(c.validate().is_err());
        let mut c = ModelConstants::bundled();
        c.memories.get_mut(&Memory::HBM3).unwrap().bw_gbps = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = BUNDLED_CONSTANTS.replace("\"bond_yield\"", "\"bond_yeild\"");
        assert!(ModelConstants::from_json(&text).is_err());
        let text = BUNDLED_CONSTANTS.replace("\"HBM3\"", "\"HBM9\"");
        assert!(ModelConstants::from_json(&text).is_err());
    }
}
