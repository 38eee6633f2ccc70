//! Typed encoding of a system configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DesignError;

/// Systolic array sizes (PEs per side).
pub const ARRAY_DIMS: [u32; 5] = [64, 96, 128, 160, 192];
/// Technology nodes in nm.
pub const TECH_NODES: [u32; 3] = [7, 10, 14];
/// On-chip SRAM capacities in KB.
pub const SRAM_KBS: [u32; 6] = [256, 512, 768, 1024, 1536, 2048];
pub const MAX_CHIPLETS: usize = 6;

/// Declares a closed enumeration with a canonical spelling and optional aliases.
macro_rules! closed_enum {
    (
        $(#[$meta:meta])*
        $name:ident, $field:literal {
            $($variant:ident => $canon:literal $(| $alias:literal)*),+ $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(
                #[serde(rename = $canon)]
                $variant,
            )+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $canon),+
                }
            }

            pub(crate) fn allowed() -> String {
                let names: Vec<&str> = Self::ALL.iter().map(|v| v.as_str()).collect();
                format!("{{{}}}", names.join(", "))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = DesignError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($canon $(| $alias)* => Ok($name::$variant),)+
                    _ => Err(DesignError::OutOfSet {
                        field: $field,
                        token: s.to_string(),
                        allowed: Self::allowed(),
                    }),
                }
            }
        }
    };
}

closed_enum! {
    /// Order in which GEMM tiles are handed to chiplets.
    Order, "order" {
        Descending => "0" | "descending",
        Ascending => "1" | "ascending",
    }
}

closed_enum! {
    Dataflow, "dataflow" {
        OS => "OS",
        WS => "WS",
        IS => "IS",
    }
}

closed_enum! {
    Integration, "integration" {
        Mono2D => "2D",
        Lateral2_5D => "2.5D",
        Stacked3D => "3D",
        Hybrid => "2.5D+3D",
    }
}

closed_enum! {
    /// Physical die-to-die link technology.
    Interconnect, "interconnect" {
        NA => "NA",
        RDL => "RDL",
        EMIB => "EMIB",
        PassiveInterposer => "Pass" | "PassiveInterposer",
        ActiveInterposer => "Acti" | "ActiveInterposer",
        Microbump => "uB" | "µB" | "μB" | "Microbump",
        HybridBond => "HB" | "HybridBond",
    }
}

closed_enum! {
    Memory, "memory" {
        DDR4 => "DDR4",
        DDR5 => "DDR5",
        HBM2 => "HBM2",
        HBM3 => "HBM3",
    }
}

closed_enum! {
    /// Die-to-die signaling protocol.
    Protocol, "protocol" {
        NA => "NA" | "---",
        UCS => "UCS",
        UCA => "UCA",
        UC3 => "UC3",
        AIB => "AIB",
        BoW => "BoW",
    }
}

closed_enum! {
    Topology, "topology" {
        Ring => "ring",
        Mesh => "mesh",
        Star => "star",
    }
}

impl Interconnect {
    /// Interconnects usable between side-by-side dies.
    pub const LATERAL: [Interconnect; 4] = [
        Interconnect::RDL,
        Interconnect::EMIB,
        Interconnect::PassiveInterposer,
        Interconnect::ActiveInterposer,
    ];
    /// Interconnects usable between stacked dies.
    pub const VERTICAL: [Interconnect; 2] = [Interconnect::Microbump, Interconnect::HybridBond];

    pub fn is_lateral(self) -> bool {
        Self::LATERAL.contains(&self)
    }

    pub fn is_vertical(self) -> bool {
        Self::VERTICAL.contains(&self)
    }
}

impl Protocol {
    pub const LATERAL: [Protocol; 4] = [Protocol::UCS, Protocol::UCA, Protocol::AIB, Protocol::BoW];
    pub const VERTICAL: [Protocol; 1] = [Protocol::UC3];
}

/// One chiplet type: array size, node and SRAM buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChipletSpec {
    pub array_dim: u32,
    pub tech_node: u32,
    pub sram_kb: u32,
}

impl ChipletSpec {
    /// Builds a chiplet, rejecting values outside the closed sets.
    pub fn new(array_dim: u32, tech_node: u32, sram_kb: u32) -> Result<Self, DesignError> {
        check_member("array_dim", array_dim, &ARRAY_DIMS)?;
        check_member("tech_node", tech_node, &TECH_NODES)?;
        check_member("sram_kb", sram_kb, &SRAM_KBS)?;
        Ok(ChipletSpec {
            array_dim,
            tech_node,
            sram_kb,
        })
    }

    pub fn pe_count(&self) -> u64 {
        u64::from(self.array_dim) * u64::from(self.array_dim)
    }

    pub fn sram_bytes(&self) -> u64 {
        u64::from(self.sram_kb) * 1024
    }

    /// Every chiplet type in the full space, in lexicographic (array, node, sram) order.
    pub fn all() -> Vec<ChipletSpec> {
        let mut out = Vec::with_capacity(ARRAY_DIMS.len() * TECH_NODES.len() * SRAM_KBS.len());
        for &a in &ARRAY_DIMS {
            for &t in &TECH_NODES {
                for &s in &SRAM_KBS {
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
}

pub(crate) fn check_member(field: &'static str, value: u32, set: &[u32]) -> Result<(), DesignError> {
    if set.contains(&value) {
        Ok(())
    } else {
        let names: Vec<String> = set.iter().map(u32::to_string).collect();
        Err(DesignError::OutOfSet {
            field,
            token: value.to_string(),
            allowed: format!("{{{}}}", names.join(", ")),
        })
    }
}

/// Smallest allowed SRAM that holds one `A x A` tile of 4-byte accumulators.
pub fn min_sram_kb(array_dim: u32) -> u32 {
    let need_kb = (4 * u64::from(array_dim) * u64::from(array_dim)).div_ceil(1024);
    SRAM_KBS
        .iter()
        .copied()
        .find(|&s| u64::from(s) >= need_kb)
        .unwrap_or(SRAM_KBS[SRAM_KBS.len() - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MappingSpec {
    pub order: Order,
    pub dataflow: Dataflow,
    pub split_k: bool,
    pub data_sharing: bool,
}

/// A die-to-die link: physical interconnect plus the protocol riding on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub interconnect: Interconnect,
    pub protocol: Protocol,
}

impl Link {
    pub const NONE: Link = Link {
        interconnect: Interconnect::NA,
        protocol: Protocol::NA,
    };

    pub fn new(interconnect: Interconnect, protocol: Protocol) -> Self {
        Link {
            interconnect,
            protocol,
        }
    }

    /// Whether this pairing is legal between side-by-side dies.
    pub fn is_lateral_legal(&self) -> bool {
        if !self.interconnect.is_lateral() || !Protocol::LATERAL.contains(&self.protocol) {
            return false;
        }
        // UCIe advanced needs a fine-pitch bridge or interposer.
        !(self.protocol == Protocol::UCA && self.interconnect == Interconnect::RDL)
    }

    /// Whether this pairing is legal between stacked dies.
    pub fn is_vertical_legal(&self) -> bool {
        self.interconnect.is_vertical() && Protocol::VERTICAL.contains(&self.protocol)
    }
}

/// Packaging choice.
///
/// `interconnect`/`protocol` describe the primary link: the lateral link for
/// 2.5D, the vertical link for 3D and 2.5D+3D. `lateral` carries the second,
/// between-stack link and is present only for 2.5D+3D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PackageSpec {
    pub integration: Integration,
    pub interconnect: Interconnect,
    pub protocol: Protocol,
    pub lateral: Option<Link>,
    pub memory: Memory,
    pub topology: Topology,
}

impl PackageSpec {
    pub fn primary_link(&self) -> Link {
        Link::new(self.interconnect, self.protocol)
    }

    /// Link between stacked dies, if the package stacks.
    pub fn vertical_link(&self) -> Option<Link> {
        match self.integration {
            Integration::Stacked3D | Integration::Hybrid => Some(self.primary_link()),
            _ => None,
        }
    }

    /// Link between side-by-side dies or stacks, if any.
    pub fn lateral_link(&self) -> Option<Link> {
        match self.integration {
            Integration::Lateral2_5D => Some(self.primary_link()),
            Integration::Hybrid => self.lateral,
            _ => None,
        }
    }

    /// All links in the package; a monolithic package reports the single `NA/NA` link.
    pub fn links(&self) -> Vec<Link> {
        let mut out = vec![self.primary_link()];
        if let Some(l) = self.lateral {
            out.push(l);
        }
        out
    }
}

/// The full configuration vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Chiplets in list order; for stacked packages the first die is the bottom.
    pub chiplets: Vec<ChipletSpec>,
    pub mapping: MappingSpec,
    pub package: PackageSpec,
}

impl SystemConfig {
    pub fn count(&self) -> usize {
        self.chiplets.len()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.chiplets.windows(2).all(|w| w[0] == w[1])
    }

    /// Groups of list indices that form one vertical stack, bottom first.
    ///
    /// 3D stacks every die; 2.5D+3D pairs consecutive dies into two-high
    /// stacks (an odd die stands alone); 2D and 2.5D keep each die separate.
    pub fn stacks(&self) -> Vec<Vec<usize>> {
        let n = self.chiplets.len();
        match self.package.integration {
            Integration::Stacked3D => vec![(0..n).collect()],
            Integration::Hybrid => (0..n)
                .collect::<Vec<_>>()
                .chunks(2)
                .map(|c| c.to_vec())
                .collect(),
            Integration::Mono2D | Integration::Lateral2_5D => (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Number of die-to-die bonds or links needed to connect every die.
    pub fn link_count(&self) -> usize {
        self.chiplets.len().saturating_sub(1)
    }
}

impl fmt::Display for SystemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::shorthand::format_config(self))
    }
}

impl FromStr for SystemConfig {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        super::shorthand::parse_config(s)
    }
}
