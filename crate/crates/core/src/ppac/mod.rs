//! Closed-form latency, energy, area and manufacturing-cost models.

mod constants;

use serde::Serialize;
use thiserror::Error;

use crate::design_space::{ChipletSpec, Dataflow, Integration, Link, SystemConfig};
use crate::mapping::{map_workload, ChipletWork, MappingResult, WorkloadSpec};

pub use constants::{
    IntegrationConstants, InterconnectConstants, MemoryConstants, ModelConstants, NodeConstants,
    ProtocolConstants, TopologyConstants, BUNDLED_CONSTANTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpacError {
    #[error("invalid model constants: {0}")]
    Constants(String),
    #[error("a {0} package has no die-to-die link")]
    NoD2dLink(Integration),
    #[error("die of {area_mm2:.1} mm^2 does not fit on a {wafer_mm} mm wafer")]
    Unmanufacturable { area_mm2: f64, wafer_mm: f64 },
}

/// Cycles for one chiplet's tile on an `A x A` systolic array.
pub fn compute_cycles(work: &ChipletWork, chip: &ChipletSpec, dataflow: Dataflow) -> u64 {
    if work.is_idle() {
        return 0;
    }
    let a = u64::from(chip.array_dim);
    let (m, k, n) = (work.m, work.k, work.n);
    let (outer, inner, stream) = match dataflow {
        Dataflow::OS => (m, n, k),
        Dataflow::WS => (k, n, m),
        Dataflow::IS => (k, m, n),
    };
    outer.div_ceil(a) * inner.div_ceil(a) * (2 * a + stream - 2)
}

pub fn chiplet_area(chip: &ChipletSpec, consts: &ModelConstants) -> f64 {
    let node = consts.node(chip.tech_node);
    let logic = chip.pe_count() as f64 * node.pe_area_mm2;
    let sram = f64::from(chip.sram_kb) * node.sram_area_mm2_per_kb;
    (logic + sram) * consts.logic_overhead_factor
}

pub fn chiplet_areas(cfg: &SystemConfig, consts: &ModelConstants) -> Vec<f64> {
    cfg.chiplets.iter().map(|c| chiplet_area(c, consts)).collect()
}

fn link_bytes_per_s(lanes: f64, link: Link, cfg: &SystemConfig, consts: &ModelConstants) -> f64 {
    let proto = consts.protocol(link.protocol);
    let derate = consts.topology(cfg.package.topology).bw_derate;
    lanes * proto.lane_rate_gbps * 1e9 * proto.efficiency * derate / 8.0
}

/// Signal lanes of a vertical bond across a face of `area_mm2`.
pub fn vertical_lanes(area_mm2: f64, pitch_um: f64, utilization: f64) -> f64 {
    (area_mm2 * 1e6 / (pitch_um * pitch_um)).floor() * utilization
}

/// Signal lanes along the edge of a square die of `area_mm2`.
pub fn lateral_lanes(area_mm2: f64, pitch_um: f64, rows: u32) -> f64 {
    let perimeter_um = 4.0 * area_mm2.sqrt() * 1000.0;
    (perimeter_um / pitch_um).floor() * f64::from(rows)
}

fn min_of(it: impl Iterator<Item = f64>) -> Option<f64> {
    it.fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
}

/// Die-to-die bandwidth in bytes per second.
///
/// Vertical bonds are limited by the smallest die in any stack, lateral links
/// by the smallest edge among placed dies (a stack is placed by its base die).
/// With both kinds present the slower one wins.
pub fn d2d_bandwidth(cfg: &SystemConfig, areas: &[f64], consts: &ModelConstants) -> Result<f64, PpacError> {
    let pkg = &cfg.package;
    if pkg.integration == Integration::Mono2D {
        return Err(PpacError::NoD2dLink(pkg.integration));
    }
    let stacks = cfg.stacks();
    let mut bws = Vec::new();
    if let Some(link) = pkg.vertical_link() {
        let min_area = min_of(stacks.iter().filter(|s| s.len() > 1).flatten().map(|&i| areas[i]));
        if let Some(a) = min_area {
            let lanes = vertical_lanes(a, consts.interconnect(link.interconnect).bump_pitch_um, consts.bump_utilization);
            bws.push(link_bytes_per_s(lanes, link, cfg, consts));
        }
    }
    if let Some(link) = pkg.lateral_link() {
        if stacks.len() > 1 {
            let base = stacks.iter().map(|s| s.iter().map(|&i| areas[i]).fold(0.0, f64::max));
            let a = min_of(base).expect("at least two stacks");
            let lanes = lateral_lanes(a, consts.interconnect(link.interconnect).bump_pitch_um, consts.lane_rows);
            bws.push(link_bytes_per_s(lanes, link, cfg, consts));
        }
    }
    min_of(bws.into_iter()).ok_or(PpacError::NoD2dLink(pkg.integration))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyBreakdown {
    pub per_chiplet_s: Vec<f64>,
    pub compute_s: f64,
    pub d2d_s: f64,
    pub write_s: f64,
    pub d2d_bytes_per_s: Option<f64>,
}

pub fn system_latency(
    cfg: &SystemConfig,
    mapping: &MappingResult,
    areas: &[f64],
    consts: &ModelConstants,
) -> Result<(f64, LatencyBreakdown), PpacError> {
    let bw = consts.memory(cfg.package.memory).bw_gbps * 1e9;
    let per_chiplet_s: Vec<f64> = mapping
        .work
        .iter()
        .map(|w| {
            let chip = &cfg.chiplets[w.chiplet];
            let cycles = compute_cycles(w, chip, cfg.mapping.dataflow) as f64;
            cycles / (consts.node(chip.tech_node).freq_ghz * 1e9) + w.dram_read_bytes() as f64 / bw
        })
        .collect();
    let compute_s = per_chiplet_s.iter().copied().fold(0.0, f64::max);
    let write_s = mapping.work.iter().map(|w| w.dram_write_bytes).max().unwrap_or(0) as f64 / bw;
    let (d2d_s, d2d_bytes_per_s) = if cfg.count() > 1 {
        let link_bw = d2d_bandwidth(cfg, areas, consts)?;
        (mapping.total_d2d_bytes as f64 / link_bw, Some(link_bw))
    } else {
        (0.0, None)
    };
    let b = LatencyBreakdown {
        per_chiplet_s,
        compute_s,
        d2d_s,
        write_s,
        d2d_bytes_per_s,
    };
    Ok((compute_s + d2d_s + write_s, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub dram_j: f64,
    pub mac_j: f64,
    pub sram_j: f64,
    pub d2d_j: f64,
}

impl EnergyBreakdown {
    pub fn compute_j(&self) -> f64 {
        self.mac_j + self.sram_j
    }
}

/// Energy per byte moved across the package's links (the costlier link for
/// mixed packages).
pub fn d2d_pj_per_byte(cfg: &SystemConfig, consts: &ModelConstants) -> f64 {
    if cfg.package.integration == Integration::Mono2D {
        return 0.0;
    }
    cfg.package
        .links()
        .iter()
        .map(|l| consts.interconnect(l.interconnect).pj_per_byte)
        .fold(0.0, f64::max)
}

pub fn system_energy(cfg: &SystemConfig, mapping: &MappingResult, consts: &ModelConstants) -> (f64, EnergyBreakdown) {
    let dram_pj = consts.memory(cfg.package.memory).dram_pj_per_byte;
    let mut b = EnergyBreakdown {
        dram_j: 0.0,
        mac_j: 0.0,
        sram_j: 0.0,
        d2d_j: 0.0,
    };
    for w in &mapping.work {
        let node = consts.node(cfg.chiplets[w.chiplet].tech_node);
        let macs = w.macs as f64;
        b.dram_j += (w.dram_read_bytes() + w.dram_write_bytes) as f64 * dram_pj * 1e-12;
        b.mac_j += macs * node.mac_pj * 1e-12;
        b.sram_j += macs * consts.sram_bytes_per_mac * node.sram_pj_per_byte * 1e-12;
    }
    if mapping.total_d2d_bytes > 0 {
        b.d2d_j = mapping.total_d2d_bytes as f64 * d2d_pj_per_byte(cfg, consts) * 1e-12;
    }
    (b.dram_j + b.mac_j + b.sram_j + b.d2d_j, b)
}

/// Bounding box `(width, height)` of squares of the given sides, placed by
/// recursive balanced bipartition with alternating cut direction.
pub fn bipartition_floorplan(sides: &[f64]) -> (f64, f64) {
    fn place(sides: &[f64], horizontal: bool) -> (f64, f64) {
        if let [s] = sides {
            return (*s, *s);
        }
        let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut load = [0.0, 0.0];
        for &s in sides {
            let g = usize::from(load[1] < load[0]);
            groups[g].push(s);
            load[g] += s * s;
        }
        let (w0, h0) = place(&groups[0], !horizontal);
        let (w1, h1) = place(&groups[1], !horizontal);
        if horizontal {
            (w0 + w1, h0.max(h1))
        } else {
            (w0.max(w1), h0 + h1)
        }
    }
    if sides.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = sides.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    place(&sorted, true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaBreakdown {
    pub chiplet_mm2: Vec<f64>,
    pub bounding_box_mm: (f64, f64),
    pub whitespace_factor: f64,
}

/// Package footprint in mm^2.
pub fn system_area(cfg: &SystemConfig, areas: &[f64], consts: &ModelConstants) -> (f64, AreaBreakdown) {
    let ws = consts.integration(cfg.package.integration).whitespace_factor;
    let bases: Vec<f64> = cfg
        .stacks()
        .iter()
        .map(|s| s.iter().map(|&i| areas[i]).fold(0.0, f64::max))
        .collect();
    let bbox = match cfg.package.integration {
        Integration::Mono2D | Integration::Stacked3D => {
            let side = bases.iter().copied().fold(0.0, f64::max).sqrt();
            (side, side)
        }
        Integration::Lateral2_5D | Integration::Hybrid => {
            let sides: Vec<f64> = bases.iter().map(|a| a.sqrt()).collect();
            bipartition_floorplan(&sides)
        }
    };
    let b = AreaBreakdown {
        chiplet_mm2: areas.to_vec(),
        bounding_box_mm: bbox,
        whitespace_factor: ws,
    };
    (bbox.0 * bbox.1 * ws, b)
}

/// Negative-binomial die yield.
pub fn die_yield(area_mm2: f64, defect_density_per_mm2: f64, alpha: f64) -> f64 {
    (1.0 + area_mm2 * defect_density_per_mm2 / alpha).powf(-alpha)
}

/// Gross dies per wafer, `pi r^2 / A - pi d / sqrt(2A)`, rounded down.
pub fn dies_per_wafer(area_mm2: f64, wafer_diameter_mm: f64) -> Result<u64, PpacError> {
    let r = wafer_diameter_mm / 2.0;
    let gross = std::f64::consts::PI * r * r / area_mm2
        - std::f64::consts::PI * wafer_diameter_mm / (2.0 * area_mm2).sqrt();
    if !(gross >= 1.0) {
        return Err(PpacError::Unmanufacturable {
            area_mm2,
            wafer_mm: wafer_diameter_mm,
        });
    }
    Ok(gross.floor() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub die_usd: Vec<f64>,
    pub die_yield: Vec<f64>,
    pub package_usd: f64,
    pub memory_usd: f64,
}

pub fn die_cost(chip: &ChipletSpec, area_mm2: f64, consts: &ModelConstants) -> Result<(f64, f64), PpacError> {
    let node = consts.node(chip.tech_node);
    let y = die_yield(area_mm2, node.defect_density_per_mm2, consts.yield_alpha);
    let dpw = dies_per_wafer(area_mm2, consts.wafer_diameter_mm)?;
    Ok((node.wafer_cost_usd / dpw as f64 / y, y))
}

/// Package cost: base cost plus per-link cost, inflated by the bond yield over
/// every link.
pub fn package_cost(cfg: &SystemConfig, consts: &ModelConstants) -> f64 {
    let base = consts.integration(cfg.package.integration).package_base_cost_usd;
    let stacks = cfg.stacks();
    let mut link_usd = 0.0;
    if let Some(v) = cfg.package.vertical_link() {
        let bonds: usize = stacks.iter().map(|s| s.len().saturating_sub(1)).sum();
        link_usd += bonds as f64 * consts.interconnect(v.interconnect).link_cost_usd;
    }
    if let Some(l) = cfg.package.lateral_link() {
        link_usd += stacks.len().saturating_sub(1) as f64 * consts.interconnect(l.interconnect).link_cost_usd;
    }
    base + link_usd / consts.bond_yield.powi(cfg.link_count() as i32)
}

pub fn mfg_cost(cfg: &SystemConfig, areas: &[f64], consts: &ModelConstants) -> Result<(f64, CostBreakdown), PpacError> {
    let mut die_usd = Vec::with_capacity(areas.len());
    let mut die_yield = Vec::with_capacity(areas.len());
    for (chip, &a) in cfg.chiplets.iter().zip(areas) {
        let (c, y) = die_cost(chip, a, consts)?;
        die_usd.push(c);
        die_yield.push(y);
    }
    let b = CostBreakdown {
        package_usd: package_cost(cfg, consts),
        memory_usd: consts.memory(cfg.package.memory).cost_usd,
        die_usd,
        die_yield,
    };
    Ok((b.die_usd.iter().sum::<f64>() + b.package_usd + b.memory_usd, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpacBreakdown {
    pub latency: LatencyBreakdown,
    pub energy: EnergyBreakdown,
    pub area: AreaBreakdown,
    pub cost: CostBreakdown,
    pub total_d2d_bytes: u64,
    pub total_dram_read_bytes: u64,
}

/// Raw metrics of one (workload, configuration) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpacReport {
    pub latency_s: f64,
    pub energy_j: f64,
    pub area_mm2: f64,
    pub mfg_cost_usd: f64,
    pub breakdown: PpacBreakdown,
}

impl PpacReport {
    /// `[energy, area, latency, cost]`, the order the weighted cost uses.
    pub fn metrics(&self) -> [f64; 4] {
        [self.energy_j, self.area_mm2, self.latency_s, self.mfg_cost_usd]
    }
}

/// Evaluates a configuration against an already computed mapping.
pub fn evaluate_mapped(cfg: &SystemConfig, mapping: &MappingResult, consts: &ModelConstants) -> Result<PpacReport, PpacError> {
    let areas = chiplet_areas(cfg, consts);
    let (latency_s, latency) = system_latency(cfg, mapping, &areas, consts)?;
    let (energy_j, energy) = system_energy(cfg, mapping, consts);
    let (area_mm2, area) = system_area(cfg, &areas, consts);
    let (mfg_cost_usd, cost) = mfg_cost(cfg, &areas, consts)?;
    Ok(PpacReport {
        latency_s,
        energy_j,
        area_mm2,
        mfg_cost_usd,
        breakdown: PpacBreakdown {
            latency,
            energy,
            area,
            cost,
            total_d2d_bytes: mapping.total_d2d_bytes,
            total_dram_read_bytes: mapping.total_dram_read_bytes(),
        },
    })
}

pub fn evaluate(wl: &WorkloadSpec, cfg: &SystemConfig, consts: &ModelConstants) -> Result<PpacReport, PpacError> {
    evaluate_mapped(cfg, &map_workload(wl, cfg), consts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_space::{parse_chiplet, parse_config};

    fn work(m: u64, k: u64, n: u64) -> ChipletWork {
        ChipletWork {
            chiplet: 0,
            m,
            k,
            n,
            macs: m * k * n,
            input_read_bytes: 0,
            weight_read_bytes: 0,
            dram_write_bytes: 0,
            d2d_send_bytes: 0,
        }
    }

    #[test]
    fn cycles_closed_form() {
        let chip = parse_chiplet("64-7-256").unwrap();
        assert_eq!(compute_cycles(&work(64, 768, 64), &chip, Dataflow::OS), 894);
        for &df in Dataflow::ALL {
            assert_eq!(compute_cycles(&work(64, 64, 64), &chip, df), 3 * 64 - 2);
        }
        assert_eq!(compute_cycles(&work(65, 10, 130), &chip, Dataflow::OS), 2 * 3 * (128 + 10 - 2));
        assert_eq!(compute_cycles(&work(65, 10, 130), &chip, Dataflow::WS), 3 * (128 + 65 - 2));
        assert_eq!(compute_cycles(&work(65, 10, 130), &chip, Dataflow::IS), 2 * (128 + 130 - 2));
    }

    #[test]
    fn four_equal_dies_form_a_square() {
        let (w, h) = bipartition_floorplan(&[3.0; 4]);
        assert_eq!((w, h), (6.0, 6.0));
        let (w, h) = bipartition_floorplan(&[2.0]);
        assert_eq!((w, h), (2.0, 2.0));
        let (w, h) = bipartition_floorplan(&[2.0, 2.0]);
        assert_eq!((w, h), (4.0, 2.0));
    }

    #[test]
    fn hybrid_bond_has_sixteen_times_microbump_lanes() {
        let a = 20.0;
        assert_eq!(vertical_lanes(a, 10.0, 0.5), 16.0 * vertical_lanes(a, 40.0, 0.5));
    }

    #[test]
    fn two_d_has_no_link() {
        let c = ModelConstants::bundled();
        let cfg = parse_config("1|64-7-256|0-OS-0|0|2D-NA-DDR5|NA|ring").unwrap();
        assert!(matches!(d2d_bandwidth(&cfg, &[1.0], &c), Err(PpacError::NoD2dLink(_))));
    }

    #[test]
    fn giant_die_is_unmanufacturable() {
        assert!(dies_per_wafer(80_000.0, 300.0).is_err());
        assert_eq!(dies_per_wafer(100.0, 300.0).unwrap(), 640);
    }

    #[test]
    fn yield_shape() {
        assert_eq!(die_yield(0.0, 0.001, 3.0), 1.0);
        assert!(die_yield(100.0, 0.001, 3.0) > die_yield(200.0, 0.001, 3.0));
    }
}
