//! Reference best-configuration rows as parse / format fixtures.

use std::collections::BTreeSet;
use std::time::Instant;

use chiplet_dse::design_space::{
    format_chiplet, format_config, format_mapping, format_package, format_protocol, parse_chiplet, parse_chiplet_list,
    parse_config, parse_mapping, parse_package, parse_package_with_protocol, SystemConfig,
};

include!("common/table_rows.rs");

fn row_config(&(count, chips, odk, ipm, proto): &(usize, &str, &str, &str, &str)) -> SystemConfig {
    let chiplets = parse_chiplet_list(chips).unwrap();
    assert_eq!(chiplets.len(), count, "{chips}");
    let mapping = parse_mapping(odk).unwrap();
    let package = parse_package_with_protocol(ipm, proto).unwrap();
    SystemConfig {
        chiplets,
        mapping,
        package,
    }
}

#[test]
fn every_table_cell_round_trips() {
    let start = Instant::now();
    let mut chips = BTreeSet::new();
    let mut odk = BTreeSet::new();
    let mut ipm = BTreeSet::new();
    for &(_, c, m, p, _) in &ROWS {
        chips.insert(c);
        odk.insert(m);
        ipm.insert(p);
    }
    for cell in &chips {
        let list = parse_chiplet_list(cell).unwrap();
        for item in cell.split(',') {
            let ats = item.split_whitespace().next().unwrap();
            assert_eq!(format_chiplet(&parse_chiplet(ats).unwrap()), ats);
        }
        let expanded: Vec<String> = list.iter().map(format_chiplet).collect();
        assert_eq!(parse_chiplet_list(&expanded.join(", ")).unwrap(), list, "{cell}");
    }
    for s in &odk {
        assert_eq!(format_mapping(&parse_mapping(s).unwrap()), *s);
    }
    for s in &ipm {
        let p = parse_package(s).unwrap();
        assert_eq!(parse_package(&format_package(&p)).unwrap(), p, "{s}");
        if !s.contains('µ') {
            assert_eq!(format_package(&p), *s);
        }
    }
    let distinct = chips.len() + odk.len() + ipm.len();
    println!("{} A-T-S cells, {} O-D-K, {} I-P-M: {distinct} fixtures", chips.len(), odk.len(), ipm.len());
    assert!(distinct >= 40, "{distinct}");
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn every_row_round_trips_as_a_full_configuration() {
    let start = Instant::now();
    let mut canon = BTreeSet::new();
    for row in &ROWS {
        let cfg = row_config(row);
        let text = format_config(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg, "{text}");
        assert_eq!(format_config(&back), text);
        assert_eq!(format_protocol(&cfg.package), format_protocol(&back.package));
        canon.insert(text);
    }
    assert_eq!(canon.len(), 39);
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn hybrid_rows_expand_the_protocol_suffix() {
    let cfg = row_config(&ROWS[16]);
    assert_eq!(format_package(&cfg.package), "2.5D+3D-HB/RDL-HBM3");
    assert_eq!(format_protocol(&cfg.package), "UC3/UCS");
}
