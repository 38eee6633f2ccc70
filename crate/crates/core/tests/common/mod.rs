#![allow(dead_code)]

use std::sync::Arc;

use chiplet_dse::cost::{compute_basis, Evaluator, Profile};
use chiplet_dse::design_space::{Blacklist, DesignSpace, Interconnect, Memory, Protocol, Restriction, Topology};
use chiplet_dse::mapping::WorkloadSpec;
use chiplet_dse::ppac::ModelConstants;

pub fn consts() -> Arc<ModelConstants> {
    Arc::new(ModelConstants::bundled())
}

pub fn full_space(consts: &Arc<ModelConstants>) -> DesignSpace {
    DesignSpace::new(Blacklist::bundled(), consts.clone())
}

/// Homogeneous 7 nm subspace of 14,256 feasible configurations.
pub fn small_restriction() -> Restriction {
    Restriction {
        arrays: Some(vec![64, 96, 128]),
        nodes: Some(vec![7]),
        srams: Some(vec![256, 512, 1024]),
        interconnects: Some(vec![Interconnect::RDL, Interconnect::EMIB, Interconnect::HybridBond]),
        protocols: Some(vec![Protocol::UCS, Protocol::UCA, Protocol::UC3]),
        memories: Some(vec![Memory::DDR5, Memory::HBM3]),
        topologies: Some(vec![Topology::Ring]),
        homogeneous: true,
        ..Default::default()
    }
}

pub fn workload(name: &str) -> WorkloadSpec {
    WorkloadSpec::resolve(name, &WorkloadSpec::bundled()).unwrap()
}

pub struct Fixture {
    pub full: DesignSpace,
    pub space: DesignSpace,
    pub ev: Evaluator,
}

/// Evaluator over `small_restriction`, normalized with `basis_n` samples of the full space.
pub fn fixture(wl: &str, profile: &str, basis_n: usize) -> Fixture {
    let c = consts();
    let full = full_space(&c);
    let space = full.restrict(&small_restriction()).unwrap();
    let wl = workload(wl);
    let basis = compute_basis(&wl, &full, &c, basis_n, 1).unwrap();
    let ev = Evaluator::new(wl, c, basis, Profile::named(profile).unwrap());
    Fixture { full, space, ev }
}
