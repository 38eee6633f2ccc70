//! GEMM partitioning across chiplets and the DRAM / die-to-die traffic it implies.
//!
//! Operand naming: `A` is the `m x k` input panel, `B` the `k x n` weight
//! panel, `C` the `m x n` output. Inputs are int8, accumulation and outputs fp32.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{ChipletSpec, Dataflow, MappingSpec, Order, SystemConfig};

pub const INPUT_BYTES: u64 = 1;
pub const ACC_BYTES: u64 = 4;
pub const OUTPUT_BYTES: u64 = 4;

pub const BUNDLED_WORKLOADS: &str = include_str!("../assets/workloads.json");

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("workload `{0}`: dimensions must be >= 1")]
    ZeroDim(String),
    #[error("unknown workload `{0}` (expected a name from the workload file or an m,k,n triple)")]
    Unknown(String),
    #[error("workload file: {0}")]
    File(String),
}

/// A GEMM `C[m,n] = A[m,k] * B[k,n]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub name: String,
    pub m: u64,
    pub k: u64,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
}

impl WorkloadSpec {
    pub fn new(name: impl Into<String>, m: u64, k: u64, n: u64) -> Result<Self, WorkloadError> {
        let name = name.into();
        if m == 0 || k == 0 || n == 0 {
            return Err(WorkloadError::ZeroDim(name));
        }
        Ok(WorkloadSpec {
            name,
            m,
            k,
            n,
            benchmark: None,
        })
    }

    pub fn macs(&self) -> u64 {
        self.m * self.k * self.n
    }

    /// Reads a JSON array of `{"name", "m", "k", "n"}` objects.
    pub fn load_all(text: &str) -> Result<Vec<WorkloadSpec>, WorkloadError> {
        let all: Vec<WorkloadSpec> = serde_json::from_str(text).map_err(|e| WorkloadError::File(e.to_string()))?;
        for w in &all {
            if w.m == 0 || w.k == 0 || w.n == 0 {
                return Err(WorkloadError::ZeroDim(w.name.clone()));
            }
        }
        Ok(all)
    }

    pub fn load_file(path: &Path) -> Result<Vec<WorkloadSpec>, WorkloadError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorkloadError::File(format!("{}: {e}", path.display())))?;
        Self::load_all(&text)
    }

    /// The six bundled benchmark GEMMs.
    pub fn bundled() -> Vec<WorkloadSpec> {
        Self::load_all(BUNDLED_WORKLOADS).expect("bundled workloads are valid")
    }

    /// Resolves a name from `known` or an explicit `m,k,n` triple.
    pub fn resolve(spec: &str, known: &[WorkloadSpec]) -> Result<WorkloadSpec, WorkloadError> {
        if let Some(w) = known.iter().find(|w| w.name.eq_ignore_ascii_case(spec)) {
            return Ok(w.clone());
        }
        let dims: Vec<&str> = spec.split(',').map(str::trim).collect();
        if let [m, k, n] = dims[..] {
            if let (Ok(m), Ok(k), Ok(n)) = (m.parse(), k.parse(), n.parse()) {
                return WorkloadSpec::new(format!("gemm-{m}x{k}x{n}"), m, k, n);
            }
        }
        Err(WorkloadError::Unknown(spec.to_string()))
    }
}

/// The tile of work one chiplet performs, with its traffic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ChipletWork {
    /// Position of the chiplet in the configuration's list.
    pub chiplet: usize,
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub macs: u64,
    /// DRAM bytes read for the `A` operand.
    pub input_read_bytes: u64,
    /// DRAM bytes read for the `B` operand.
    pub weight_read_bytes: u64,
    pub dram_write_bytes: u64,
    pub d2d_send_bytes: u64,
}

impl ChipletWork {
    pub fn dram_read_bytes(&self) -> u64 {
        self.input_read_bytes + self.weight_read_bytes
    }

    pub fn is_idle(&self) -> bool {
        self.macs == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingResult {
    /// One entry per chiplet, in configuration list order.
    pub work: Vec<ChipletWork>,
    /// Chiplet that receives partial sums and forwards shared operands: the
    /// first in allocation order.
    pub root: usize,
    pub total_d2d_bytes: u64,
    pub shared_dram_savings_bytes: u64,
}

impl MappingResult {
    pub fn total_dram_read_bytes(&self) -> u64 {
        self.work.iter().map(ChipletWork::dram_read_bytes).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.work.iter().map(|w| w.macs).sum()
    }
}

/// Chiplet indices in allocation order: by array area, largest first for
/// descending, smallest first for ascending. Ties go to the larger SRAM, then
/// the finer node, then list position, so the assignment depends only on the
/// multiset of chiplets.
pub fn allocation_order(chiplets: &[ChipletSpec], order: Order) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..chiplets.len()).collect();
    idx.sort_by(|&a, &b| {
        let by_area = chiplets[a].pe_count().cmp(&chiplets[b].pe_count());
        let by_area = if order == Order::Descending { by_area.reverse() } else { by_area };
        by_area
            .then(chiplets[b].sram_kb.cmp(&chiplets[a].sram_kb))
            .then(chiplets[a].tech_node.cmp(&chiplets[b].tech_node))
            .then(a.cmp(&b))
    });
    idx
}

/// Splits `total` proportionally to `weights`; the remainder goes one unit at a
/// time to the earliest entries.
fn proportional_split(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u64 = weights.iter().sum();
    let mut parts: Vec<u64> = weights
        .iter()
        .map(|&w| ((u128::from(total) * u128::from(w)) / u128::from(sum)) as u64)
        .collect();
    let assigned: u64 = parts.iter().sum();
    for p in parts.iter_mut().take((total - assigned) as usize) {
        *p += 1;
    }
    parts
}

/// Partitions the GEMM over the chiplets and fills in per-chiplet DRAM traffic.
///
/// Without split-K, `N` is divided in proportion to array area; every chiplet
/// needs the whole `A` panel. With split-K, `K` is divided evenly, every
/// chiplet covers the full `m x n` output, and each non-root chiplet sends its
/// fp32 partial sums to the root (the first chiplet in allocation order), which
/// alone writes `C` to DRAM.
pub fn partition(wl: &WorkloadSpec, cfg: &SystemConfig) -> MappingResult {
    let chips = &cfg.chiplets;
    let ranked = allocation_order(chips, cfg.mapping.order);
    let root = ranked[0];
    let split_k = cfg.mapping.split_k && chips.len() > 1;

    let shares = if split_k {
        proportional_split(wl.k, &vec![1; ranked.len()])
    } else {
        let weights: Vec<u64> = ranked.iter().map(|&i| chips[i].pe_count()).collect();
        proportional_split(wl.n, &weights)
    };

    let mut work: Vec<Option<ChipletWork>> = vec![None; chips.len()];
    for (&i, &share) in ranked.iter().zip(&shares) {
        let (m, k, n) = if split_k { (wl.m, share, wl.n) } else { (wl.m, wl.k, share) };
        let mut w = ChipletWork {
            chiplet: i,
            m,
            k,
            n,
            macs: m * k * n,
            input_read_bytes: 0,
            weight_read_bytes: 0,
            dram_write_bytes: 0,
            d2d_send_bytes: 0,
        };
        if w.macs > 0 {
            let t = dram_traffic(&w, &chips[i], &cfg.mapping);
            w.input_read_bytes = t.input_read_bytes;
            w.weight_read_bytes = t.weight_read_bytes;
            w.dram_write_bytes = t.write_bytes;
            if split_k && i != root {
                w.dram_write_bytes = 0;
                w.d2d_send_bytes = wl.m * wl.n * ACC_BYTES;
            }
        }
        work[i] = Some(w);
    }
    let work: Vec<ChipletWork> = work.into_iter().map(|w| w.expect("every chiplet ranked")).collect();
    let total_d2d_bytes = work.iter().map(|w| w.d2d_send_bytes).sum();
    MappingResult {
        work,
        root,
        total_d2d_bytes,
        shared_dram_savings_bytes: 0,
    }
}

/// DRAM traffic of one chiplet's tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DramTraffic {
    pub input_read_bytes: u64,
    pub weight_read_bytes: u64,
    pub write_bytes: u64,
    /// Chosen block sizes (rows of `A`, columns of `B`).
    pub block: (u64, u64),
}

impl DramTraffic {
    pub fn read_bytes(&self) -> u64 {
        self.input_read_bytes + self.weight_read_bytes
    }
}

/// Whether an `bm x bn` output block with its `A`/`B` panels fits in `sram_bytes`.
pub fn block_fits(bm: u64, bn: u64, k: u64, sram_bytes: u64) -> bool {
    bm * k * INPUT_BYTES + k * bn * INPUT_BYTES + bm * bn * ACC_BYTES <= sram_bytes
}

fn block_reads(m: u64, k: u64, n: u64, bm: u64, bn: u64) -> (u64, u64) {
    (m * k * INPUT_BYTES * n.div_ceil(bn), k * n * INPUT_BYTES * m.div_ceil(bm))
}

/// Blocked-reuse DRAM model.
///
/// Blocks are multiples of the array size. Among blocks that fit, the one with
/// the fewest DRAM reads wins; ties go to the dataflow's stationary operand
/// (OS: largest `bm*bn`, WS: largest `bn`, IS: largest `bm`). If not even an
/// `A x A` block fits, the array-sized block is used anyway.
pub fn dram_traffic(work: &ChipletWork, chip: &ChipletSpec, mapping: &MappingSpec) -> DramTraffic {
    let (m, k, n) = (work.m, work.k, work.n);
    let a = u64::from(chip.array_dim);
    let sram = chip.sram_bytes();
    let bm_cap = m.div_ceil(a) * a;
    let bn_cap = n.div_ceil(a) * a;

    let priority = |bm: u64, bn: u64| match mapping.dataflow {
        Dataflow::OS => (bm * bn, bm),
        Dataflow::WS => (bn, bm),
        Dataflow::IS => (bm, bn),
    };

    let mut best: Option<((u64, u64), u64, (u64, u64))> = None;
    let mut bm = a;
    while bm <= bm_cap {
        let fixed = bm * k * INPUT_BYTES;
        if fixed < sram {
            let per_col = k * INPUT_BYTES + bm * ACC_BYTES;
            let bn_max = ((sram - fixed) / per_col / a * a).min(bn_cap);
            if bn_max >= a {
                let (ir, wr) = block_reads(m, k, n, bm, bn_max);
                let total = ir + wr;
                let better = match best {
                    None => true,
                    Some((_, t, _)) if total < t => true,
                    Some((_, t, (pbm, pbn))) => total == t && priority(bm, bn_max) > priority(pbm, pbn),
                };
                if better {
                    best = Some(((ir, wr), total, (bm, bn_max)));
                }
            }
        }
        bm += a;
    }
    let ((ir, wr), _, block) = best.unwrap_or_else(|| (block_reads(m, k, n, a, a), 0, (a, a)));
    DramTraffic {
        input_read_bytes: ir,
        weight_read_bytes: wr,
        write_bytes: m * n * OUTPUT_BYTES,
        block,
    }
}

/// Broadcast of the shared input panel.
///
/// Without split-K every chiplet reads the same `A` panel; with sharing on,
/// only the root reads it from DRAM and forwards each other chiplet's `A`
/// stream over die-to-die links. Under split-K the operand slices are
/// disjoint, so nothing is shared.
pub fn apply_data_sharing(mut result: MappingResult, mapping: &MappingSpec) -> MappingResult {
    let active = result.work.iter().filter(|w| !w.is_idle()).count();
    if !mapping.data_sharing || mapping.split_k || active < 2 {
        return result;
    }
    let root = result.root;
    let mut forwarded = 0;
    for w in result.work.iter_mut().filter(|w| w.chiplet != root) {
        forwarded += w.input_read_bytes;
        w.input_read_bytes = 0;
    }
    result.work[root].d2d_send_bytes += forwarded;
    result.total_d2d_bytes += forwarded;
    result.shared_dram_savings_bytes += forwarded;
    result
}

/// `partition` followed by `apply_data_sharing`.
pub fn map_workload(wl: &WorkloadSpec, cfg: &SystemConfig) -> MappingResult {
    apply_data_sharing(partition(wl, cfg), &cfg.mapping)
}
