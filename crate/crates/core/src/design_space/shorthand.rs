//! Shorthand strings (`A-T-S`, `O-D-K`, `I-P-M`) and the canonical long form.
//!
//! The canonical form of a configuration is
//! `<count>|<A-T-S>;...|<O-D-K>|<share>|<I-P-M>|<proto>|<topo>`, for example
//! `1|64-7-512|1-IS-1|0|2D-NA-DDR5|NA|ring`. 2.5D+3D packages write both
//! links vertical-first: `2.5D+3D-HB/RDL-HBM3` with protocol `UC3/UCS`.

use super::types::*;
use super::DesignError;

fn malformed(what: &'static str, text: &str, expected: &'static str) -> DesignError {
    DesignError::Malformed {
        what,
        text: text.to_string(),
        expected,
    }
}

fn parse_u32(field: &'static str, token: &str) -> Result<u32, DesignError> {
    token.parse::<u32>().map_err(|_| DesignError::OutOfSet {
        field,
        token: token.to_string(),
        allowed: "an unsigned integer".to_string(),
    })
}

fn parse_flag(field: &'static str, token: &str) -> Result<bool, DesignError> {
    match token {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(DesignError::OutOfSet {
            field,
            token: token.to_string(),
            allowed: "{0, 1}".to_string(),
        }),
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Parses `A-T-S`, e.g. `64-7-512`.
pub fn parse_chiplet(text: &str) -> Result<ChipletSpec, DesignError> {
    let parts: Vec<&str> = text.trim().split('-').collect();
    let [a, t, s] = parts[..] else {
        return Err(malformed("chiplet", text, "A-T-S"));
    };
    ChipletSpec::new(
        parse_u32("array_dim", a)?,
        parse_u32("tech_node", t)?,
        parse_u32("sram_kb", s)?,
    )
}

pub fn format_chiplet(chip: &ChipletSpec) -> String {
    format!("{}-{}-{}", chip.array_dim, chip.tech_node, chip.sram_kb)
}

/// Parses a comma-separated chiplet list where `xN` marks N replicas,
/// e.g. `96-7-512, 64-7-256 x3`.
pub fn parse_chiplet_list(text: &str) -> Result<Vec<ChipletSpec>, DesignError> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        let (spec, reps) = match item.rsplit_once(|c: char| c.is_whitespace()) {
            Some((spec, rep)) if rep.starts_with('x') => {
                let n = rep[1..]
                    .parse::<usize>()
                    .map_err(|_| malformed("chiplet list", text, "A-T-S[ xN], ..."))?;
                (spec.trim(), n)
            }
            _ => (item, 1),
        };
        let chip = parse_chiplet(spec)?;
        out.extend(std::iter::repeat_n(chip, reps));
    }
    if out.is_empty() || out.len() > MAX_CHIPLETS {
        return Err(DesignError::ChipletCount(out.len()));
    }
    Ok(out)
}

/// Parses `O-D-K`, e.g. `1-OS-0`. Data sharing is not part of the shorthand and defaults to off.
pub fn parse_mapping(text: &str) -> Result<MappingSpec, DesignError> {
    let parts: Vec<&str> = text.trim().split('-').collect();
    let [o, d, k] = parts[..] else {
        return Err(malformed("mapping", text, "O-D-K"));
    };
    let order = match o {
        "0" => Order::Descending,
        "1" => Order::Ascending,
        _ => {
            return Err(DesignError::OutOfSet {
                field: "order",
                token: o.to_string(),
                allowed: "{0, 1}".to_string(),
            })
        }
    };
    Ok(MappingSpec {
        order,
        dataflow: d.parse()?,
        split_k: parse_flag("split_k", k)?,
        data_sharing: false,
    })
}

pub fn format_mapping(m: &MappingSpec) -> String {
    format!("{}-{}-{}", m.order.as_str(), m.dataflow, flag(m.split_k))
}

/// Splits `I-P-M`. The integration token itself contains no `-`, so a plain split works
/// even for `2.5D+3D-HB/RDL-HBM3`.
fn split_ipm(text: &str) -> Result<(Integration, Vec<Interconnect>, Memory), DesignError> {
    let parts: Vec<&str> = text.trim().split('-').collect();
    let [i, p, m] = parts[..] else {
        return Err(malformed("package", text, "I-P-M"));
    };
    let integration: Integration = i.parse()?;
    let interconnects = p
        .split('/')
        .map(str::parse::<Interconnect>)
        .collect::<Result<Vec<_>, _>>()?;
    Ok((integration, interconnects, m.parse()?))
}

fn mismatch(integration: Integration, detail: &str) -> DesignError {
    DesignError::IntegrationMismatch {
        integration: integration.to_string(),
        detail: detail.to_string(),
    }
}

/// Parses `I-P-M` with an explicit protocol column (`UC3`, `UC3/S`, `---`, ...).
pub fn parse_package_with_protocol(ipm: &str, proto: &str) -> Result<PackageSpec, DesignError> {
    let (integration, interconnects, memory) = split_ipm(ipm)?;
    let protocols = parse_protocols(proto)?;
    build_package(integration, &interconnects, &protocols, memory, Topology::Ring)
}

/// Parses `I-P-M`, e.g. `2.5D-RDL-DDR5`. Topology defaults to ring and the
/// protocol to the default for each link (UCS lateral, UC3 vertical).
pub fn parse_package(text: &str) -> Result<PackageSpec, DesignError> {
    let (integration, interconnects, memory) = split_ipm(text)?;
    let protocols: Vec<Protocol> = match integration {
        Integration::Mono2D => vec![Protocol::NA],
        Integration::Lateral2_5D => vec![Protocol::UCS],
        Integration::Stacked3D => vec![Protocol::UC3],
        Integration::Hybrid => vec![Protocol::UC3, Protocol::UCS],
    };
    build_package(integration, &interconnects, &protocols, memory, Topology::Ring)
}

fn build_package(
    integration: Integration,
    interconnects: &[Interconnect],
    protocols: &[Protocol],
    memory: Memory,
    topology: Topology,
) -> Result<PackageSpec, DesignError> {
    let links = if integration == Integration::Hybrid { 2 } else { 1 };
    if interconnects.len() != links {
        return Err(mismatch(integration, &format!("expects {links} interconnect(s)")));
    }
    if protocols.len() != links {
        return Err(mismatch(integration, &format!("expects {links} protocol(s)")));
    }
    let has_na = interconnects.contains(&Interconnect::NA) || protocols.contains(&Protocol::NA);
    match integration {
        Integration::Mono2D if interconnects[0] != Interconnect::NA || protocols[0] != Protocol::NA => {
            return Err(mismatch(integration, "a monolithic package has no die-to-die link (NA)"));
        }
        Integration::Mono2D => {}
        _ if has_na => {
            return Err(mismatch(integration, "multi-die packages need a real interconnect and protocol"));
        }
        _ => {}
    }
    Ok(PackageSpec {
        integration,
        interconnect: interconnects[0],
        protocol: protocols[0],
        lateral: (links == 2).then(|| Link::new(interconnects[1], protocols[1])),
        memory,
        topology,
    })
}

/// Parses a protocol column: `UC3`, `NA`, `---`, or `UC3/UCS` (second token may be
/// abbreviated to its UCIe suffix, as in `UC3/S`).
pub fn parse_protocols(text: &str) -> Result<Vec<Protocol>, DesignError> {
    let text = text.trim();
    let mut out = Vec::new();
    for (idx, tok) in text.split('/').enumerate() {
        let tok = tok.trim();
        let p = match (idx, tok) {
            (1.., "S") => Protocol::UCS,
            (1.., "A") => Protocol::UCA,
            (1.., "3") => Protocol::UC3,
            _ => tok.parse()?,
        };
        out.push(p);
    }
    Ok(out)
}

pub fn format_package(p: &PackageSpec) -> String {
    let ic = match p.lateral {
        Some(l) => format!("{}/{}", p.interconnect, l.interconnect),
        None => p.interconnect.to_string(),
    };
    format!("{}-{}-{}", p.integration, ic, p.memory)
}

pub fn format_protocol(p: &PackageSpec) -> String {
    match p.lateral {
        Some(l) => format!("{}/{}", p.protocol, l.protocol),
        None => p.protocol.to_string(),
    }
}

/// Canonical serialization; [`parse_config`] inverts it.
pub fn format_config(cfg: &SystemConfig) -> String {
    let chips: Vec<String> = cfg.chiplets.iter().map(format_chiplet).collect();
    format!(
        "{}|{}|{}|{}|{}|{}|{}",
        cfg.chiplets.len(),
        chips.join(";"),
        format_mapping(&cfg.mapping),
        flag(cfg.mapping.data_sharing),
        format_package(&cfg.package),
        format_protocol(&cfg.package),
        cfg.package.topology,
    )
}

/// Parses the canonical long form. Checks syntax and closed sets, not feasibility.
pub fn parse_config(text: &str) -> Result<SystemConfig, DesignError> {
    let fields: Vec<&str> = text.trim().split('|').collect();
    let [count, chips, odk, share, ipm, proto, topo] = fields[..] else {
        return Err(malformed(
            "config",
            text,
            "<count>|<A-T-S>;...|<O-D-K>|<share>|<I-P-M>|<proto>|<topo>",
        ));
    };
    let count: usize = count.parse().map_err(|_| malformed("config", text, "numeric chiplet count"))?;
    let chiplets = chips
        .split(';')
        .map(parse_chiplet)
        .collect::<Result<Vec<_>, _>>()?;
    if chiplets.len() != count {
        return Err(malformed("config", text, "chiplet count matching the chiplet list"));
    }
    if count == 0 || count > MAX_CHIPLETS {
        return Err(DesignError::ChipletCount(count));
    }
    let mut mapping = parse_mapping(odk)?;
    mapping.data_sharing = parse_flag("data_sharing", share)?;
    let (integration, interconnects, memory) = split_ipm(ipm)?;
    let protocols = parse_protocols(proto)?;
    let package = build_package(integration, &interconnects, &protocols, memory, topo.parse()?)?;
    Ok(SystemConfig {
        chiplets,
        mapping,
        package,
    })
}
